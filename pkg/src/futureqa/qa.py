"""Question-answering heads over time-aware KG representations.

Three scoring heads, one per question family:

  * entity prediction: real part of a three-way product of the aligned
    subject rep, the encoded question, and the conjugated aligned
    candidate rep, swept over all entities;
  * yes/unknown: a four-way product adding the encoded answer word;
  * fact reasoning: a four-way product over the choice's entity reps,
    the encoded question+choice pair, and a fused query vector built
    from the question's aligned entity reps and the pair encoding.

Alignment heads are affine + tanh on the 2d real view; the fusion map
is affine. Cross-entropy per family; KG reps stay frozen while the
encoder and heads train. Gradients are hand-derived and checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import ComplexVec, conjugate, expand3_re, expand4_re
from .embeddings import NumericError, TrainConfig, _log_softmax, _softmax
from .encoder import (EncoderParams, TokenVocab, _forward_ids, backward_ids,
                      build_token_vocab, init_encoder, load_encoder,
                      load_token_vocab, save_encoder, save_token_vocab)
from .forecaster import TimeAwareReps
from .questions import EPQ1, EPQ2, FRQ, YUQ, Question

FAMILIES = ("ep", "yu", "fr")


def family_of(qtype: str) -> str:
    return {EPQ1: "ep", EPQ2: "ep", YUQ: "yu", FRQ: "fr"}[qtype]


@dataclass
class QAHeads:
    ep_W: np.ndarray
    ep_b: np.ndarray
    yu_W: np.ndarray
    yu_b: np.ndarray
    fr_W: np.ndarray
    fr_b: np.ndarray
    f_W: np.ndarray   # fusion: (2d, 6d)
    f_b: np.ndarray

    def family_arrays(self, family: str) -> dict[str, np.ndarray]:
        out = {"head_W": getattr(self, f"{family}_W"),
               "head_b": getattr(self, f"{family}_b")}
        if family == "fr":
            out["f_W"] = self.f_W
            out["f_b"] = self.f_b
        return out


def init_heads(dim: int, rng: np.random.Generator, scale: float = 0.02) -> QAHeads:
    """Alignment heads start near half the identity (tanh stays in its
    linear range), so the incoming representation geometry is preserved
    until training decides otherwise. The fusion map starts by passing
    the question+choice encoding through its middle block."""
    two_d = 2 * dim

    def near_identity():
        return 0.5 * np.eye(two_d) + rng.normal(0.0, scale, (two_d, two_d))

    ep_W, yu_W, fr_W = near_identity(), near_identity(), near_identity()
    # Fusion: pass the question+choice encoding through, and feed the
    # question's entity blocks in as match detectors. The scoring slot
    # holding the fused vector is unconjugated while the choice-object
    # slot is conjugated, so the object block enters as-is and the
    # subject block enters conjugated (negated imaginary half).
    f_W = rng.normal(0.0, scale, (two_d, 6 * dim))
    f_W[:, two_d:2 * two_d] += 0.5 * np.eye(two_d)
    conj = np.eye(two_d)
    conj[dim:, dim:] *= -1.0
    f_W[:, :two_d] += 0.3 * conj
    f_W[:, 2 * two_d:] += 0.3 * np.eye(two_d)
    zeros = np.zeros(two_d)
    return QAHeads(ep_W, zeros.copy(), yu_W, zeros.copy(), fr_W, zeros.copy(),
                   f_W, zeros.copy())


@dataclass
class QAModel:
    token_vocab: TokenVocab
    encoders: dict[str, EncoderParams]   # one per family, trained separately
    heads: QAHeads
    dim: int


@dataclass
class Prediction:
    qtype: str
    scores: np.ndarray
    answer: int | str
    rank: int | None = None
    used_fallback: bool = False


def _rv(v: ComplexVec) -> np.ndarray:
    return np.concatenate([v.re, v.im], axis=-1)


def _cvec(rv: np.ndarray) -> ComplexVec:
    d = rv.shape[-1] // 2
    return ComplexVec(rv[..., :d], rv[..., d:])


def _head(W: np.ndarray, b: np.ndarray, rv: np.ndarray) -> np.ndarray:
    return np.tanh(rv @ W.T + b)


def _grad_pair(dout_c: np.ndarray) -> np.ndarray:
    """Complex cotangent (dL/dre + i dL/dim) to real-view gradient."""
    return np.concatenate([np.real(dout_c), np.imag(dout_c)], axis=-1)


def _check_t(reps: TimeAwareReps, t: int) -> None:
    if t not in reps.per_t:
        raise ValueError(f"no time-aware representations at timestamp {t}")


class _EntityMatrixCache:
    """Per-timestamp entity matrices; valid because reps are frozen."""

    def __init__(self, reps: TimeAwareReps):
        self.reps = reps
        self._cache: dict[int, np.ndarray] = {}

    def get(self, t: int) -> np.ndarray:
        if t not in self._cache:
            self._cache[t] = self.reps.entity_matrix(t)
        return self._cache[t]


def _encode_cached(vocab: TokenVocab, enc: EncoderParams, ids: np.ndarray):
    out, cache = _forward_ids(ids, enc)
    return _cvec(out), cache


class _Dropout:
    """Train-time text regularization: token dropout plus inverted
    dropout on the encoded vector.

    Dropping whole tokens (never the leading classifier token) keeps
    the model from keying answers to entity/date token combinations;
    the output mask decorrelates the remaining dimensions. Scores see
    the masked vector and the encoder cotangent is masked symmetrically
    on the way back.
    """

    def __init__(self, rng: np.random.Generator | None, p: float,
                 token_p: float = 0.0):
        self.rng = rng
        self.p = p
        self.token_p = token_p

    def mask(self, n: int) -> np.ndarray | None:
        if self.rng is None or self.p <= 0.0:
            return None
        return (self.rng.random(n) >= self.p) / (1.0 - self.p)

    def thin_ids(self, ids: np.ndarray) -> np.ndarray:
        if self.rng is None or self.token_p <= 0.0:
            return ids
        keep = self.rng.random(ids.size) >= self.token_p
        keep[0] = True   # classifier token always stays
        return ids[keep]


_NO_DROPOUT = _Dropout(None, 0.0)


def _apply_mask(out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return out if mask is None else out * mask


_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}")


class _DateShuffle:
    """Train-time nuisance augmentation: rewrite rendered dates in the
    question text with random dates drawn from the training questions.

    The timestamp annotation (and with it the representation lookup)
    stays untouched; only the surface text changes. This removes the
    date tokens' information content during training, so label
    conflicts must be resolved by relation and entity features.
    """

    def __init__(self, rng: np.random.Generator | None, pool: list[str]):
        self.rng = rng
        self.pool = pool

    @staticmethod
    def collect_pool(questions: list[Question]) -> list[str]:
        dates = set()
        for q in questions:
            dates.update(_DATE_RE.findall(q.text))
        return sorted(dates)

    def rewrite(self, text: str) -> str:
        if self.rng is None or not self.pool:
            return text
        return _DATE_RE.sub(
            lambda m: self.pool[int(self.rng.integers(len(self.pool)))], text)


_NO_SHUFFLE = _DateShuffle(None, [])


# ---------------------------------------------------------------------------
# Scoring (forward only)
# ---------------------------------------------------------------------------

def score_epq(q: Question, reps: TimeAwareReps, model: QAModel,
              matrices: _EntityMatrixCache | None = None) -> np.ndarray:
    """Scores over all entities for a 1-hop or 2-hop entity question."""
    if q.qtype not in (EPQ1, EPQ2):
        raise ValueError(f"not an entity-prediction question: {q.qtype}")
    _check_t(reps, q.t_q)
    H = (matrices or _EntityMatrixCache(reps)).get(q.t_q)
    heads = model.heads
    p_rv = _head(heads.ep_W, heads.ep_b, H[q.entities[0]])
    cand_rv = _head(heads.ep_W, heads.ep_b, H)
    h_q = _cvec(_forward_ids(model.token_vocab.ids(q.text), model.encoders["ep"])[0])
    return expand3_re(_cvec(p_rv), h_q, conjugate(_cvec(cand_rv)))


def score_yuq(q: Question, reps: TimeAwareReps, model: QAModel) -> tuple[float, float]:
    """(score_yes, score_unknown) for a yes/unknown question."""
    if q.qtype != YUQ:
        raise ValueError(f"not a yes/unknown question: {q.qtype}")
    if len(q.entities) != 2:
        raise ValueError("yes/unknown question needs two annotated entities")
    _check_t(reps, q.t_q)
    heads = model.heads
    enc = model.encoders["yu"]
    vocab = model.token_vocab
    p_s = _cvec(_head(heads.yu_W, heads.yu_b, _rv(reps.entity(q.entities[0], q.t_q))))
    p_o = _cvec(_head(heads.yu_W, heads.yu_b, _rv(reps.entity(q.entities[1], q.t_q))))
    h_q = _cvec(_forward_ids(vocab.ids(q.text), enc)[0])
    scores = []
    for word in ("yes", "unknown"):
        h_x = _cvec(_forward_ids(vocab.ids(word), enc)[0])
        scores.append(float(expand4_re(p_s, h_q, conjugate(p_o), h_x)))
    return scores[0], scores[1]


def score_frq(q: Question, reps: TimeAwareReps, model: QAModel
              ) -> tuple[np.ndarray, bool]:
    """(scores over the 4 choices, base-embedding fallback flag)."""
    if q.qtype != FRQ:
        raise ValueError(f"not a fact-reasoning question: {q.qtype}")
    _check_t(reps, q.t_q)
    heads = model.heads
    enc = model.encoders["fr"]
    vocab = model.token_vocab
    p_sq = _head(heads.fr_W, heads.fr_b, _rv(reps.entity(q.entities[0], q.t_q)))
    p_oq = _head(heads.fr_W, heads.fr_b, _rv(reps.entity(q.entities[1], q.t_q)))
    scores = np.zeros(len(q.choices))
    fallback = False
    for i, ch in enumerate(q.choices):
        fallback |= not (reps.has_exact(ch.s, ch.t) and reps.has_exact(ch.o, ch.t))
        pc_s = _cvec(_head(heads.fr_W, heads.fr_b, _rv(reps.entity(ch.s, ch.t))))
        pc_o = _cvec(_head(heads.fr_W, heads.fr_b, _rv(reps.entity(ch.o, ch.t))))
        h_qc = _cvec(_forward_ids(vocab.pair_ids(q.text, ch.text), enc)[0])
        cat = np.concatenate([p_sq, _rv(h_qc), p_oq])
        h_fused = _cvec(heads.f_W @ cat + heads.f_b)
        scores[i] = float(expand4_re(pc_s, h_qc, conjugate(pc_o), h_fused))
    return scores, fallback


def predict(q: Question, reps: TimeAwareReps, model: QAModel,
            matrices: _EntityMatrixCache | None = None) -> Prediction:
    """Argmax prediction; ties resolve to the lowest candidate index."""
    if q.qtype in (EPQ1, EPQ2):
        scores = score_epq(q, reps, model, matrices)
        best = int(np.argmax(scores))
        rank = rank_of_scores(scores, int(q.answer))
        return Prediction(q.qtype, scores, best, rank)
    if q.qtype == YUQ:
        s_yes, s_unk = score_yuq(q, reps, model)
        answer = "yes" if s_yes >= s_unk else "unknown"
        return Prediction(q.qtype, np.array([s_yes, s_unk]), answer)
    scores, fallback = score_frq(q, reps, model)
    return Prediction(q.qtype, scores, int(np.argmax(scores)),
                      used_fallback=fallback)


def rank_of_scores(scores: np.ndarray, answer: int) -> int:
    target = scores[answer]
    return 1 + int(np.sum(scores > target)) + int(np.sum(scores[:answer] == target))


# ---------------------------------------------------------------------------
# Losses and gradients
# ---------------------------------------------------------------------------

def _zero_grads(enc: EncoderParams, head_arrays: dict[str, np.ndarray]):
    grads = {k: np.zeros_like(v) for k, v in enc.param_arrays().items()}
    for k, v in head_arrays.items():
        grads[k] = np.zeros_like(v)
    return grads


def _tanh_head_back(dP_rv, P_rv, U_rv, grads, key_w="head_W", key_b="head_b"):
    """Backprop through tanh(U @ W.T + b); no gradient into U (frozen)."""
    dA = dP_rv * (1.0 - P_rv * P_rv)
    if dA.ndim == 1:
        grads[key_w] += np.outer(dA, U_rv)
        grads[key_b] += dA
    else:
        grads[key_w] += dA.T @ U_rv
        grads[key_b] += dA.sum(axis=0)


def loss_grads_ep(questions: list[Question], reps: TimeAwareReps, model: QAModel,
                  want_grads: bool = True,
                  matrices: _EntityMatrixCache | None = None,
                  dropout: _Dropout = _NO_DROPOUT,
                  augment: "_DateShuffle" = _NO_SHUFFLE):
    """Mean cross-entropy over entity candidates, with gradients for the
    entity head and its encoder."""
    heads = model.heads
    enc = model.encoders["ep"]
    vocab = model.token_vocab
    matrices = matrices or _EntityMatrixCache(reps)
    grads = _zero_grads(enc, heads.family_arrays("ep")) if want_grads else None
    total = 0.0
    B = len(questions)
    for q in questions:
        _check_t(reps, q.t_q)
        H = matrices.get(q.t_q)
        u_s = H[q.entities[0]]
        p_rv = _head(heads.ep_W, heads.ep_b, u_s)
        cand_rv = _head(heads.ep_W, heads.ep_b, H)
        h_q_out, enc_cache = _forward_ids(
            dropout.thin_ids(vocab.ids(augment.rewrite(q.text))), enc)
        q_mask = dropout.mask(h_q_out.shape[0])
        h_q_out = _apply_mask(h_q_out, q_mask)

        P = _cvec(p_rv).to_complex()
        Hq = _cvec(h_q_out).to_complex()
        Qc = _cvec(cand_rv).to_complex()
        scores = np.real((P * Hq) @ np.conj(Qc).T)
        logp = _log_softmax(scores[None, :])[0]
        total += -logp[int(q.answer)]
        if not want_grads:
            continue
        dphi = _softmax(scores[None, :])[0]
        dphi[int(q.answer)] -= 1.0
        dphi /= B

        weighted = dphi @ Qc                    # sum_e dphi_e Qc_e
        dP = np.conj(Hq) * weighted
        dHq = np.conj(P) * weighted
        dQc = dphi[:, None] * (P * Hq)[None, :]
        _tanh_head_back(_grad_pair(dP), p_rv, u_s, grads)
        _tanh_head_back(_grad_pair(dQc), cand_rv, H, grads)
        backward_ids(enc_cache, _apply_mask(_grad_pair(dHq), q_mask), enc, grads)
    return total / B, grads


def loss_grads_yu(questions: list[Question], reps: TimeAwareReps, model: QAModel,
                  want_grads: bool = True, dropout: _Dropout = _NO_DROPOUT,
                  augment: "_DateShuffle" = _NO_SHUFFLE):
    """Mean cross-entropy over {yes, unknown} with gradients."""
    heads = model.heads
    enc = model.encoders["yu"]
    vocab = model.token_vocab
    grads = _zero_grads(enc, heads.family_arrays("yu")) if want_grads else None
    yes_out, yes_cache = _forward_ids(vocab.ids("yes"), enc)
    unk_out, unk_cache = _forward_ids(vocab.ids("unknown"), enc)
    x_masks = [dropout.mask(yes_out.shape[0]), dropout.mask(unk_out.shape[0])]
    yes_out = _apply_mask(yes_out, x_masks[0])
    unk_out = _apply_mask(unk_out, x_masks[1])
    Hx = [_cvec(yes_out).to_complex(), _cvec(unk_out).to_complex()]
    d_hx = [np.zeros_like(Hx[0]), np.zeros_like(Hx[1])]
    total = 0.0
    B = len(questions)
    for q in questions:
        _check_t(reps, q.t_q)
        u_s = _rv(reps.entity(q.entities[0], q.t_q))
        u_o = _rv(reps.entity(q.entities[1], q.t_q))
        ps_rv = _head(heads.yu_W, heads.yu_b, u_s)
        po_rv = _head(heads.yu_W, heads.yu_b, u_o)
        h_q_out, enc_cache = _forward_ids(
            dropout.thin_ids(vocab.ids(augment.rewrite(q.text))), enc)
        q_mask = dropout.mask(h_q_out.shape[0])
        h_q_out = _apply_mask(h_q_out, q_mask)
        Ps, Po = _cvec(ps_rv).to_complex(), _cvec(po_rv).to_complex()
        Hq = _cvec(h_q_out).to_complex()
        base3 = Ps * Hq * np.conj(Po)
        scores = np.array([np.real(base3 @ Hx[0]), np.real(base3 @ Hx[1])])
        target = 0 if q.answer == "yes" else 1
        logp = _log_softmax(scores[None, :])[0]
        total += -logp[target]
        if not want_grads:
            continue
        dphi = _softmax(scores[None, :])[0]
        dphi[target] -= 1.0
        dphi /= B

        dPs = np.zeros_like(Ps)
        dHq = np.zeros_like(Hq)
        dPo_conjslot = np.zeros_like(Po)
        for x in (0, 1):
            rest_s = Hq * np.conj(Po) * Hx[x]
            dPs += dphi[x] * np.conj(rest_s)
            dHq += dphi[x] * np.conj(Ps * np.conj(Po) * Hx[x])
            dPo_conjslot += dphi[x] * np.conj(Ps * Hq * Hx[x])
            d_hx[x] += dphi[x] * np.conj(base3)
        dPo = np.conj(dPo_conjslot)
        _tanh_head_back(_grad_pair(dPs), ps_rv, u_s, grads)
        _tanh_head_back(_grad_pair(dPo), po_rv, u_o, grads)
        backward_ids(enc_cache, _apply_mask(_grad_pair(dHq), q_mask), enc, grads)
    if want_grads:
        backward_ids(yes_cache, _apply_mask(_grad_pair(d_hx[0]), x_masks[0]),
                     enc, grads)
        backward_ids(unk_cache, _apply_mask(_grad_pair(d_hx[1]), x_masks[1]),
                     enc, grads)
    return total / B, grads


def loss_grads_fr(questions: list[Question], reps: TimeAwareReps, model: QAModel,
                  want_grads: bool = True, dropout: _Dropout = _NO_DROPOUT,
                  augment: "_DateShuffle" = _NO_SHUFFLE):
    """Mean cross-entropy over the four choices with gradients for the
    fact-reasoning head, the fusion map, and its encoder."""
    heads = model.heads
    enc = model.encoders["fr"]
    vocab = model.token_vocab
    d = model.dim
    grads = _zero_grads(enc, heads.family_arrays("fr")) if want_grads else None
    total = 0.0
    B = len(questions)
    for q in questions:
        _check_t(reps, q.t_q)
        u_sq = _rv(reps.entity(q.entities[0], q.t_q))
        u_oq = _rv(reps.entity(q.entities[1], q.t_q))
        psq_rv = _head(heads.fr_W, heads.fr_b, u_sq)
        poq_rv = _head(heads.fr_W, heads.fr_b, u_oq)

        n_c = len(q.choices)
        per_choice = []
        scores = np.zeros(n_c)
        for i, ch in enumerate(q.choices):
            u_cs = _rv(reps.entity(ch.s, ch.t))
            u_co = _rv(reps.entity(ch.o, ch.t))
            pcs_rv = _head(heads.fr_W, heads.fr_b, u_cs)
            pco_rv = _head(heads.fr_W, heads.fr_b, u_co)
            # Choice dates are evidence (recency ordering); only the
            # question's own rendered date is nuisance.
            qc_out, qc_cache = _forward_ids(
                dropout.thin_ids(vocab.pair_ids(augment.rewrite(q.text),
                                                ch.text)), enc)
            qc_mask = dropout.mask(qc_out.shape[0])
            qc_out = _apply_mask(qc_out, qc_mask)
            cat = np.concatenate([psq_rv, qc_out, poq_rv])
            fused_rv = heads.f_W @ cat + heads.f_b
            Pcs, Pco = _cvec(pcs_rv).to_complex(), _cvec(pco_rv).to_complex()
            Hqc = _cvec(qc_out).to_complex()
            Hf = _cvec(fused_rv).to_complex()
            scores[i] = np.real((Pcs * Hqc * np.conj(Pco)) @ Hf)
            per_choice.append((u_cs, u_co, pcs_rv, pco_rv, qc_cache, qc_mask,
                               cat, Pcs, Pco, Hqc, Hf))
        target = int(q.answer)
        logp = _log_softmax(scores[None, :])[0]
        total += -logp[target]
        if not want_grads:
            continue
        dphi = _softmax(scores[None, :])[0]
        dphi[target] -= 1.0
        dphi /= B

        dpsq_rv = np.zeros_like(psq_rv)
        dpoq_rv = np.zeros_like(poq_rv)
        for i, (u_cs, u_co, pcs_rv, pco_rv, qc_cache, qc_mask, cat,
                Pcs, Pco, Hqc, Hf) in enumerate(per_choice):
            g = dphi[i]
            dPcs = g * np.conj(Hqc * np.conj(Pco) * Hf)
            dHqc = g * np.conj(Pcs * np.conj(Pco) * Hf)
            dPco = np.conj(g * np.conj(Pcs * Hqc * Hf))
            dHf = g * np.conj(Pcs * Hqc * np.conj(Pco))
            dHf_rv = _grad_pair(dHf)
            grads["f_W"] += np.outer(dHf_rv, cat)
            grads["f_b"] += dHf_rv
            dcat = heads.f_W.T @ dHf_rv
            dpsq_rv += dcat[:2 * d]
            dHqc_rv = _grad_pair(dHqc) + dcat[2 * d:4 * d]
            dpoq_rv += dcat[4 * d:]
            _tanh_head_back(_grad_pair(dPcs), pcs_rv, u_cs, grads)
            _tanh_head_back(_grad_pair(dPco), pco_rv, u_co, grads)
            backward_ids(qc_cache, _apply_mask(dHqc_rv, qc_mask), enc, grads)
        _tanh_head_back(dpsq_rv, psq_rv, u_sq, grads)
        _tanh_head_back(dpoq_rv, poq_rv, u_oq, grads)
    return total / B, grads


_LOSS_FNS = {"ep": loss_grads_ep, "yu": loss_grads_yu, "fr": loss_grads_fr}


def loss_ep(questions, reps, model) -> float:
    return loss_grads_ep(questions, reps, model, want_grads=False)[0]


def loss_yu(questions, reps, model) -> float:
    return loss_grads_yu(questions, reps, model, want_grads=False)[0]


def loss_fr(questions, reps, model) -> float:
    return loss_grads_fr(questions, reps, model, want_grads=False)[0]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def build_qa_token_vocab(questions_by_family: dict[str, list[Question]],
                         surface_forms: list[str] | None = None) -> TokenVocab:
    texts = ["yes", "unknown"]
    for qs in questions_by_family.values():
        for q in qs:
            texts.append(q.text)
            if q.choices:
                texts.extend(c.text for c in q.choices)
    texts.extend(surface_forms or [])
    return build_token_vocab(texts)


def init_qa_model(token_vocab: TokenVocab, dim: int, seed: int) -> QAModel:
    rng = np.random.default_rng(seed)
    heads = init_heads(dim, rng)
    encoders = {fam: init_encoder(len(token_vocab), dim, rng) for fam in FAMILIES}
    return QAModel(token_vocab, encoders, heads, dim)


def train_qa(questions_by_family: dict[str, list[Question]], reps: TimeAwareReps,
             cfg: TrainConfig, token_vocab: TokenVocab | None = None,
             per_family: dict[str, TrainConfig] | None = None,
             valid_by_family: dict[str, list[Question]] | None = None,
             valid_every: int = 5
             ) -> tuple[QAModel, dict[str, list[float]]]:
    """Train each family separately: its encoder plus its own head(s).

    KG representations stay frozen throughout. `per_family` overrides
    the shared config for individual families (the families respond to
    different regularization, as usual for this model family). When
    validation questions are supplied, the family keeps the parameters
    of its best validation epoch (checked every `valid_every` epochs)
    instead of the last one. Returns the trained model and a per-family
    epoch loss curve.
    """
    if cfg.dim != reps.dim:
        raise ValueError(f"config dim {cfg.dim} != representation dim {reps.dim}")
    if token_vocab is None:
        token_vocab = build_qa_token_vocab(questions_by_family)
    model = init_qa_model(token_vocab, cfg.dim, cfg.seed)
    curves: dict[str, list[float]] = {}
    matrices = _EntityMatrixCache(reps)
    from .optim import Adam

    for fam in FAMILIES:
        questions = questions_by_family.get(fam, [])
        if not questions:
            continue
        fam_cfg = (per_family or {}).get(fam, cfg)
        if fam_cfg.dim != cfg.dim:
            raise ValueError("per-family dim must match the representation dim")
        fam_offset = {"ep": 1, "yu": 2, "fr": 3}[fam]
        rng = np.random.default_rng(fam_cfg.seed + fam_offset)
        drop = _Dropout(np.random.default_rng(fam_cfg.seed + 100 + fam_offset),
                        fam_cfg.dropout, token_p=fam_cfg.token_dropout)
        if fam_cfg.date_shuffle:
            augment = _DateShuffle(
                np.random.default_rng(fam_cfg.seed + 200 + fam_offset),
                _DateShuffle.collect_pool(questions))
        else:
            augment = _NO_SHUFFLE
        params = dict(model.encoders[fam].param_arrays())
        params.update(model.heads.family_arrays(fam))
        head_init = {k: v.copy() for k, v in model.heads.family_arrays(fam).items()}
        opt = Adam(params, lr=fam_cfg.learning_rate)
        loss_fn = _LOSS_FNS[fam]
        valid = (valid_by_family or {}).get(fam)
        best_metric, best_params = -np.inf, None
        tail_sum, tail_n = None, 0
        curve = []
        for epoch in range(fam_cfg.epochs):
            if fam_cfg.lr_decay:
                frac = epoch / max(fam_cfg.epochs - 1, 1)
                opt.lr = fam_cfg.learning_rate * (
                    0.1 + 0.9 * 0.5 * (1 + np.cos(np.pi * frac)))
            order = rng.permutation(len(questions))
            total = 0.0
            for start in range(0, len(questions), fam_cfg.batch_size):
                batch = [questions[j] for j in order[start:start + fam_cfg.batch_size]]
                if fam == "ep":
                    loss, grads = loss_fn(batch, reps, model, matrices=matrices,
                                          dropout=drop, augment=augment)
                else:
                    loss, grads = loss_fn(batch, reps, model, dropout=drop,
                                          augment=augment)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite {fam} loss at epoch {epoch}")
                total += loss * len(batch)
                if fam_cfg.weight_decay > 0.0:
                    # Token embeddings are the one table big enough to
                    # memorize per-question token combinations.
                    grads["tok_emb"] += fam_cfg.weight_decay * params["tok_emb"]
                if fam_cfg.head_anchor > 0.0:
                    # Keep alignment heads near their geometry-preserving
                    # start unless the data insists otherwise.
                    for key, init in head_init.items():
                        grads[key] += fam_cfg.head_anchor * (params[key] - init)
                opt.step(grads)
            curve.append(total / len(questions))
            last = epoch == fam_cfg.epochs - 1
            if fam_cfg.tail_average and epoch >= fam_cfg.epochs - fam_cfg.tail_average:
                if tail_sum is None:
                    tail_sum = {k: v.copy() for k, v in params.items()}
                else:
                    for k, v in params.items():
                        tail_sum[k] += v
                tail_n += 1
            if valid and (epoch % valid_every == valid_every - 1 or last):
                metric = _valid_metric(fam, valid, reps, model, matrices)
                if metric > best_metric:
                    best_metric = metric
                    best_params = {k: v.copy() for k, v in params.items()}
        if tail_sum is not None:
            for k, v in params.items():
                v[...] = tail_sum[k] / tail_n
        elif best_params is not None:
            for k, v in params.items():
                v[...] = best_params[k]
        curves[fam] = curve
    return model, curves


def _valid_metric(fam: str, valid: list[Question], reps: TimeAwareReps,
                  model: QAModel, matrices: _EntityMatrixCache) -> float:
    """Reciprocal-rank mean for entity questions, accuracy otherwise."""
    values = []
    for q in valid:
        pred = predict(q, reps, model,
                       matrices if q.qtype in (EPQ1, EPQ2) else None)
        if fam == "ep":
            values.append(1.0 / pred.rank)
        else:
            values.append(1.0 if pred.answer == q.answer else 0.0)
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

_HEAD_FIELDS = ("ep_W", "ep_b", "yu_W", "yu_b", "fr_W", "fr_b", "f_W", "f_b")
_HEADS_MAGIC = b"FQHEAD1\n"


def save_qa_model(model: QAModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_token_vocab(model.token_vocab, directory / "tokens.tsv")
    for fam in FAMILIES:
        save_encoder(model.encoders[fam], directory / f"encoder_{fam}.bin")
    import struct
    with open(directory / "heads.bin", "wb") as f:
        f.write(_HEADS_MAGIC)
        f.write(struct.pack("<q", model.dim))
        for name in _HEAD_FIELDS:
            arr = getattr(model.heads, name)
            f.write(struct.pack("<q", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def load_qa_model(directory: str | Path) -> QAModel:
    directory = Path(directory)
    token_vocab = load_token_vocab(directory / "tokens.tsv")
    encoders = {fam: load_encoder(directory / f"encoder_{fam}.bin")
                for fam in FAMILIES}
    import struct
    fields = {}
    with open(directory / "heads.bin", "rb") as f:
        if f.read(len(_HEADS_MAGIC)) != _HEADS_MAGIC:
            raise ValueError(f"{directory}/heads.bin: not a heads checkpoint")
        dim = struct.unpack("<q", f.read(8))[0]
        for name in _HEAD_FIELDS:
            ndim = struct.unpack("<q", f.read(8))[0]
            shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim))
            n = int(np.prod(shape))
            fields[name] = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
    heads = QAHeads(**fields)
    return QAModel(token_vocab, encoders, heads, dim)
