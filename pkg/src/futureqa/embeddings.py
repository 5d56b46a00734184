"""Complex-valued KG embeddings: a static bilinear model over triples
and its temporal extension with timestamp factors.

Both are trained with full-softmax cross-entropy over all entities, in
the object direction and (via the algebraic symmetry of the real part)
the subject direction. Quadruple multiplicity is preserved: one fact,
one training sample.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import ComplexVec, complex_mul, conjugate, re_dot3, re_dot4
from .optim import Adam
from .tkg import TemporalKG


class NumericError(RuntimeError):
    """Training produced a non-finite quantity."""


@dataclass
class TrainConfig:
    dim: int = 100
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-2
    negative_samples: int = 0  # 0 = full softmax over all entities
    reg_weight: float = 0.0
    weight_decay: float = 0.0   # QA training: L2 on token embeddings
    dropout: float = 0.0        # QA training: on encoded text vectors
    token_dropout: float = 0.0  # QA training: drop whole tokens
    date_shuffle: bool = False  # QA training: randomize rendered dates
    head_anchor: float = 0.0    # QA training: L2 pull of heads toward init
    lr_decay: bool = False      # QA training: cosine decay to lr/10
    tail_average: int = 0       # QA training: average params of last k epochs
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("dim, batch_size, learning_rate must be positive")
        if (self.epochs < 0 or self.negative_samples < 0 or self.reg_weight < 0
                or self.weight_decay < 0 or self.head_anchor < 0
                or self.tail_average < 0):
            raise ValueError("epochs, negative_samples, reg_weight, "
                             "weight_decay must be >= 0")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.token_dropout < 1.0:
            raise ValueError("dropout rates must lie in [0, 1)")


@dataclass
class EmbeddingTable:
    """Entity/relation (and optionally timestamp) complex embeddings."""

    entities: ComplexVec
    relations: ComplexVec
    timestamps: ComplexVec | None
    dim: int

    @property
    def is_temporal(self) -> bool:
        return self.timestamps is not None

    def entity_real_view(self) -> np.ndarray:
        """(n_entities, 2d) array: real halves then imaginary halves."""
        return np.concatenate([self.entities.re, self.entities.im], axis=1)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.entities.copy(), self.relations.copy(),
            self.timestamps.copy() if self.timestamps is not None else None,
            self.dim)


def init_table(n_entities: int, n_relations: int, n_timestamps: int | None,
               dim: int, rng: np.random.Generator, scale: float = 0.1) -> EmbeddingTable:
    def draw(n):
        return ComplexVec(rng.normal(0.0, scale, (n, dim)),
                          rng.normal(0.0, scale, (n, dim)))
    timestamps = draw(n_timestamps) if n_timestamps is not None else None
    return EmbeddingTable(draw(n_entities), draw(n_relations), timestamps, dim)


def _row(v: ComplexVec, i: int) -> ComplexVec:
    return ComplexVec(v.re[i], v.im[i])


def complex_score(tbl: EmbeddingTable, s: int, r: int, o: int) -> float:
    """Real part of the triple product with the object conjugated."""
    for idx, bound in ((s, tbl.entities.re.shape[0]), (r, tbl.relations.re.shape[0]),
                       (o, tbl.entities.re.shape[0])):
        if not 0 <= idx < bound:
            raise IndexError(f"id {idx} out of range 0..{bound - 1}")
    return float(re_dot3(_row(tbl.entities, s), _row(tbl.relations, r),
                         conjugate(_row(tbl.entities, o))))


def tcomplex_score(tbl: EmbeddingTable, s: int, r: int, o: int, t: int) -> float:
    """Temporal score: fourth timestamp factor in the product."""
    if tbl.timestamps is None:
        raise ValueError("embedding table has no timestamp factors")
    return float(re_dot4(_row(tbl.entities, s), _row(tbl.relations, r),
                         conjugate(_row(tbl.entities, o)),
                         _row(tbl.timestamps, t)))


def score_objects(tbl: EmbeddingTable, s: np.ndarray, r: np.ndarray,
                  t: np.ndarray | None = None) -> np.ndarray:
    """Scores of every candidate object for a batch of (s, r[, t]) queries.

    Uses Re(x * conj(e)) = <x_rv, e_rv>, so the candidate sweep is one
    matrix product against the entity table's real view.
    """
    x = complex_mul(ComplexVec(tbl.entities.re[s], tbl.entities.im[s]),
                    ComplexVec(tbl.relations.re[r], tbl.relations.im[r]))
    if t is not None:
        if tbl.timestamps is None:
            raise ValueError("temporal query against a static table")
        x = complex_mul(x, ComplexVec(tbl.timestamps.re[t], tbl.timestamps.im[t]))
    x_rv = np.concatenate([x.re, x.im], axis=-1)
    return x_rv @ tbl.entity_real_view().T


def rank_of(scores: np.ndarray, answer: int) -> int:
    """1-based rank of `answer`, ties broken by lower entity id first."""
    target = scores[answer]
    better = int(np.sum(scores > target))
    equal_before = int(np.sum(scores[:answer] == target))
    return 1 + better + equal_before


def rank_query(tbl: EmbeddingTable, s: int, r: int, t: int | None, answer: int,
               mode: str = "raw", known_objects: set[int] | None = None) -> int:
    """Rank the answer among all entities for query (s, r, ?, t).

    mode="time-filtered" removes the other known true objects at
    (s, r, *, t) from the candidate list before ranking.
    """
    t_arr = None if t is None else np.array([t])
    scores = score_objects(tbl, np.array([s]), np.array([r]), t_arr)[0]
    if mode == "time-filtered":
        if known_objects is None:
            raise ValueError("time-filtered mode needs the known true objects")
        for other in known_objects:
            if other != answer:
                scores[other] = -np.inf
    elif mode != "raw":
        raise ValueError(f"unknown mode {mode!r}")
    return rank_of(scores, answer)


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _train(kg: TemporalKG, cfg: TrainConfig, temporal: bool) -> tuple[EmbeddingTable, list[float]]:
    if kg.n_facts == 0:
        raise ValueError("cannot train on an empty KG")
    rng = np.random.default_rng(cfg.seed)
    n_e = kg.vocab.n_entities
    tbl = init_table(n_e, kg.vocab.n_relations,
                     kg.vocab.n_timestamps if temporal else None, cfg.dim, rng)
    params = {
        "ent_re": tbl.entities.re, "ent_im": tbl.entities.im,
        "rel_re": tbl.relations.re, "rel_im": tbl.relations.im,
    }
    if temporal:
        params["ts_re"] = tbl.timestamps.re
        params["ts_im"] = tbl.timestamps.im
    opt = Adam(params, lr=cfg.learning_rate)

    quads = kg.quads
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(quads.shape[0])
        total = 0.0
        for start in range(0, quads.shape[0], cfg.batch_size):
            batch = quads[order[start:start + cfg.batch_size]]
            loss, grads = _batch_loss_and_grads(tbl, batch, temporal, cfg.reg_weight)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {start}")
            total += loss * batch.shape[0]
            opt.step(grads)
        losses.append(total / quads.shape[0])
    return tbl, losses


def _batch_loss_and_grads(tbl: EmbeddingTable, batch: np.ndarray, temporal: bool,
                          reg_weight: float) -> tuple[float, dict[str, np.ndarray]]:
    s, r, o, t = batch[:, 0], batch[:, 1], batch[:, 2], batch[:, 3]
    B = batch.shape[0]
    ent = tbl.entities
    rel = tbl.relations
    e_s = ComplexVec(ent.re[s], ent.im[s])
    e_o = ComplexVec(ent.re[o], ent.im[o])
    w = ComplexVec(rel.re[r], rel.im[r])
    ent_rv = tbl.entity_real_view()

    grads = {k: np.zeros_like(v) for k, v in {
        "ent_re": ent.re, "ent_im": ent.im,
        "rel_re": rel.re, "rel_im": rel.im}.items()}
    if temporal:
        grads["ts_re"] = np.zeros_like(tbl.timestamps.re)
        grads["ts_im"] = np.zeros_like(tbl.timestamps.im)
        tau = ComplexVec(tbl.timestamps.re[t], tbl.timestamps.im[t])

    def ce_direction(x: ComplexVec, targets: np.ndarray):
        """CE over all entities for scores Re(x * conj(candidate))."""
        x_rv = np.concatenate([x.re, x.im], axis=-1)
        scores = x_rv @ ent_rv.T
        logp = _log_softmax(scores)
        loss = -logp[np.arange(B), targets].mean()
        d_scores = _softmax(scores)
        d_scores[np.arange(B), targets] -= 1.0
        d_scores /= B
        dx_rv = d_scores @ ent_rv
        d_ent_rv = d_scores.T @ x_rv
        d = tbl.dim
        grads["ent_re"] += d_ent_rv[:, :d]
        grads["ent_im"] += d_ent_rv[:, d:]
        return loss, ComplexVec(dx_rv[:, :d], dx_rv[:, d:])

    # Object direction: x = e_s * w (* tau)
    x = complex_mul(e_s, w)
    if temporal:
        x = complex_mul(x, tau)
    loss_o, dx = ce_direction(x, o)
    if temporal:
        d_pair = complex_mul(dx, conjugate(tau))
        d_tau = complex_mul(dx, conjugate(complex_mul(e_s, w)))
        np.add.at(grads["ts_re"], t, d_tau.re)
        np.add.at(grads["ts_im"], t, d_tau.im)
    else:
        d_pair = dx
    d_es = complex_mul(d_pair, conjugate(w))
    d_w = complex_mul(d_pair, conjugate(e_s))
    np.add.at(grads["ent_re"], s, d_es.re)
    np.add.at(grads["ent_im"], s, d_es.im)
    np.add.at(grads["rel_re"], r, d_w.re)
    np.add.at(grads["rel_im"], r, d_w.im)

    # Subject direction: score(s') = Re(e_s' * w * conj(e_o) [* tau])
    # = Re(e_s' * y), ranked via conj(y); y = w * conj(e_o) (* tau).
    y = complex_mul(w, conjugate(e_o))
    if temporal:
        y = complex_mul(y, tau)
    loss_s, dcy = ce_direction(conjugate(y), s)
    dy = conjugate(dcy)
    if temporal:
        d_pair = complex_mul(dy, conjugate(tau))
        d_tau = complex_mul(dy, conjugate(complex_mul(w, conjugate(e_o))))
        np.add.at(grads["ts_re"], t, d_tau.re)
        np.add.at(grads["ts_im"], t, d_tau.im)
    else:
        d_pair = dy
    d_w = complex_mul(d_pair, conjugate(conjugate(e_o)))
    d_eo = conjugate(complex_mul(d_pair, conjugate(w)))
    np.add.at(grads["rel_re"], r, d_w.re)
    np.add.at(grads["rel_im"], r, d_w.im)
    np.add.at(grads["ent_re"], o, d_eo.re)
    np.add.at(grads["ent_im"], o, d_eo.im)

    loss = 0.5 * (loss_o + loss_s)
    if reg_weight > 0.0:
        loss += _add_n3_penalty(grads, tbl, batch, temporal, reg_weight)
    return float(loss), grads


def _add_n3_penalty(grads, tbl: EmbeddingTable, batch: np.ndarray, temporal: bool,
                    weight: float) -> float:
    """Nuclear-3-style penalty on the rows touched by the batch."""
    penalty = 0.0
    B = batch.shape[0]
    specs = [("ent", tbl.entities, batch[:, 0]), ("ent", tbl.entities, batch[:, 2]),
             ("rel", tbl.relations, batch[:, 1])]
    if temporal:
        specs.append(("ts", tbl.timestamps, batch[:, 3]))
    for name, table, idx in specs:
        re, im = table.re[idx], table.im[idx]
        mod = np.sqrt(re * re + im * im)
        penalty += weight * mod.__pow__(3).sum() / B
        coef = weight * 3.0 * mod / B
        np.add.at(grads[f"{name}_re"], idx, coef * re)
        np.add.at(grads[f"{name}_im"], idx, coef * im)
    return penalty


def train_static(kg: TemporalKG, cfg: TrainConfig) -> tuple[EmbeddingTable, list[float]]:
    """Train the static model on triples (t dropped, multiplicity kept)."""
    return _train(kg, cfg, temporal=False)


def train_temporal(kg: TemporalKG, cfg: TrainConfig) -> tuple[EmbeddingTable, list[float]]:
    """Train the temporal model with per-timestamp factors."""
    return _train(kg, cfg, temporal=True)


_MAGIC = b"FQEMB1\n"


def save_table(tbl: EmbeddingTable, path: str | Path) -> None:
    """Binary checkpoint: header + float64 LE arrays in
    (entities, relations, timestamps) order, real halves before imaginary."""
    n_t = tbl.timestamps.re.shape[0] if tbl.timestamps is not None else 0
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<4q", tbl.dim, tbl.entities.re.shape[0],
                            tbl.relations.re.shape[0], n_t))
        for vec in (tbl.entities, tbl.relations, tbl.timestamps):
            if vec is None:
                continue
            f.write(vec.re.astype("<f8").tobytes())
            f.write(vec.im.astype("<f8").tobytes())


def load_table(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an embedding checkpoint")
        dim, n_e, n_r, n_t = struct.unpack("<4q", f.read(32))

        def read_vec(n):
            re = np.frombuffer(f.read(8 * n * dim), dtype="<f8").reshape(n, dim)
            im = np.frombuffer(f.read(8 * n * dim), dtype="<f8").reshape(n, dim)
            return ComplexVec(re.copy(), im.copy())

        entities = read_vec(n_e)
        relations = read_vec(n_r)
        timestamps = read_vec(n_t) if n_t else None
    return EmbeddingTable(entities, relations, timestamps, dim)
