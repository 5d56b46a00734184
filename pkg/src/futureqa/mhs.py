"""Multi-hop score propagation over the question-time snapshot.

Scores spread outward from the annotated entity in strict breadth-first
layers: the start scores 1, every other entity 0, and an entity first
reached at hop h receives the mean over its already-visited in-edges of
(gamma * score(source) + psi(source, relation, entity)). Scores freeze
at first visit. Edges are taken in both directions (a fact also yields
an inverse-direction edge), matching how the forecaster defines
neighborhoods.

This consumes the snapshot at the question timestamp itself, so it is a
non-forecasting diagnostic; evaluation keeps it behind an explicit
cheating flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algebra import ComplexVec, conjugate, expand4_re
from .embeddings import EmbeddingTable, _log_softmax, _softmax
from .forecaster import TimeAwareReps
from .optim import Adam

# psi(src, rel, dst, inverse) -> float
PsiFn = Callable[[int, int, int, bool], float]


@dataclass
class MHSConfig:
    hops: int = 2
    gamma: float = 0.5
    psi: str = "product"   # "product" | "neural"

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if not (0.0 < self.gamma):
            raise ValueError("gamma must be positive")


@dataclass
class PropagationResult:
    scores: np.ndarray           # per entity; 0 for unvisited
    visited: list[int]           # sorted, includes the start entity
    hop_of: dict[int, int]
    answer: int | None           # argmax over visited minus start, tie -> lowest id
    edge_trace: list[tuple[int, int, int, bool, int]] | None = None
    # (src, rel, dst, inverse, hop) for every edge that contributed


def _in_edges(snapshot: np.ndarray) -> dict[int, list[tuple[int, int, bool]]]:
    """dst -> sorted distinct (src, rel, inverse) pairs, both directions."""
    edges: dict[int, set[tuple[int, int, bool]]] = {}
    for s, r, o, _ in snapshot:
        s, r, o = int(s), int(r), int(o)
        edges.setdefault(o, set()).add((s, r, False))
        edges.setdefault(s, set()).add((o, r, True))
    return {dst: sorted(pairs) for dst, pairs in edges.items()}


def propagate(snapshot: np.ndarray, s_q: int, n_entities: int, psi: PsiFn,
              cfg: MHSConfig, keep_trace: bool = False) -> PropagationResult:
    """Breadth-first score propagation from s_q over one snapshot."""
    scores = np.zeros(n_entities)
    scores[s_q] = 1.0
    visited = {s_q}
    hop_of = {s_q: 0}
    in_edges = _in_edges(snapshot)
    trace = [] if keep_trace else None
    frontier_source = visited
    for hop in range(1, cfg.hops + 1):
        reachable = sorted(
            e for e, edges in in_edges.items()
            if e not in visited and any(src in visited for src, _, _ in edges))
        if not reachable:
            break
        new_scores = {}
        for e in reachable:
            vals = []
            for src, rel, inv in in_edges[e]:
                if src not in visited:
                    continue
                vals.append(cfg.gamma * scores[src] + psi(src, rel, e, inv))
                if keep_trace:
                    trace.append((src, rel, e, inv, hop))
            new_scores[e] = float(np.mean(vals))
        for e, val in new_scores.items():
            scores[e] = val
            hop_of[e] = hop
        visited.update(new_scores)
    candidates = sorted(visited - {s_q})
    answer = None
    if candidates:
        cand_scores = scores[candidates]
        answer = candidates[int(np.argmax(cand_scores))]
    return PropagationResult(scores, sorted(visited), hop_of, answer, trace)


def psi_const(value: float) -> PsiFn:
    return lambda src, rel, dst, inv: value


def psi_product(reps: TimeAwareReps, t_q: int, question_vec: ComplexVec) -> PsiFn:
    """Four-way real-part product over time-aware reps; inverse edges use
    the conjugated relation vector."""

    def psi(src: int, rel: int, dst: int, inv: bool) -> float:
        h_src = reps.entity(src, t_q)
        h_dst = reps.entity(dst, t_q)
        h_r = reps.relation(rel)
        if inv:
            h_r = conjugate(h_r)
        return float(expand4_re(h_src, h_r, conjugate(h_dst), question_vec))

    return psi


@dataclass
class NeuralPsiParams:
    f1_W: np.ndarray   # (2d, 10d)
    f1_b: np.ndarray
    f2_W: np.ndarray   # (1, 2d)
    f2_b: np.ndarray

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {"f1_W": self.f1_W, "f1_b": self.f1_b,
                "f2_W": self.f2_W, "f2_b": self.f2_b}


def init_neural_psi(dim: int, rng: np.random.Generator, scale: float = 0.1) -> NeuralPsiParams:
    two_d = 2 * dim
    return NeuralPsiParams(
        rng.normal(0.0, scale, (two_d, 10 * dim)), np.zeros(two_d),
        rng.normal(0.0, scale, (1, two_d)), np.zeros(1))


def _rv(v: ComplexVec) -> np.ndarray:
    return np.concatenate([v.re, v.im], axis=-1)


def _psi_neural_input(tables: EmbeddingTable, t_q: int, question_rv: np.ndarray,
                      src: int, rel: int, dst: int, inv: bool) -> np.ndarray:
    def row(vec, i):
        return np.concatenate([vec.re[i], vec.im[i]])

    h_r = row(tables.relations, rel)
    if inv:
        d = tables.dim
        h_r = np.concatenate([h_r[:d], -h_r[d:]])
    return np.concatenate([row(tables.entities, src), h_r,
                           row(tables.entities, dst),
                           row(tables.timestamps, t_q), question_rv])


def psi_neural(tables: EmbeddingTable, t_q: int, question_vec: ComplexVec,
               params: NeuralPsiParams) -> PsiFn:
    """Two-layer scorer over concatenated static-table representations:
    10d -> 2d (ReLU) -> 1."""
    if tables.timestamps is None:
        raise ValueError("neural psi needs a temporal embedding table")
    q_rv = _rv(question_vec)

    def psi(src: int, rel: int, dst: int, inv: bool) -> float:
        x = _psi_neural_input(tables, t_q, q_rv, src, rel, dst, inv)
        hidden = np.maximum(params.f1_W @ x + params.f1_b, 0.0)
        return float((params.f2_W @ hidden)[0] + params.f2_b[0])

    return psi


def train_neural_psi(questions, snapshots: dict[int, np.ndarray], n_entities: int,
                     tables: EmbeddingTable, question_vecs: dict[str, ComplexVec],
                     cfg: MHSConfig, epochs: int = 20, lr: float = 1e-2,
                     seed: int = 0) -> tuple[NeuralPsiParams, list[float]]:
    """Fit the neural psi weights with cross-entropy over visited
    candidates. Questions whose answer is never visited are skipped;
    propagation coefficients are linear in psi, so gradients flow by
    reverse layer traversal."""
    rng = np.random.default_rng(seed)
    params = init_neural_psi(tables.dim, rng)
    opt = Adam(params.param_arrays(), lr=lr)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(questions))
        total, used = 0.0, 0
        for qi in order:
            q = questions[qi]
            psi = psi_neural(tables, q.t_q, question_vecs[q.id], params)
            result = propagate(snapshots[q.t_q], q.entities[0], n_entities, psi,
                               cfg, keep_trace=True)
            answer = int(q.answer)
            candidates = [e for e in result.visited if e != q.entities[0]]
            if answer not in candidates:
                continue
            cand_scores = result.scores[candidates]
            logp = _log_softmax(cand_scores[None, :])[0]
            total += -logp[candidates.index(answer)]
            used += 1
            d_score = np.zeros(n_entities)
            soft = _softmax(cand_scores[None, :])[0]
            soft[candidates.index(answer)] -= 1.0
            d_score[candidates] = soft
            grads = {k: np.zeros_like(v) for k, v in params.param_arrays().items()}
            _backprop_propagation(result, q, psi, params, tables, question_vecs[q.id],
                                  d_score, cfg, grads)
            opt.step(grads)
        losses.append(total / max(used, 1))
    return params, losses


def _backprop_propagation(result: PropagationResult, q, psi, params: NeuralPsiParams,
                          tables: EmbeddingTable, question_vec: ComplexVec,
                          d_score: np.ndarray, cfg: MHSConfig,
                          grads: dict[str, np.ndarray]) -> None:
    by_dst: dict[int, list[tuple[int, int, bool]]] = {}
    for src, rel, dst, inv, _hop in result.edge_trace:
        by_dst.setdefault(dst, []).append((src, rel, inv))
    q_rv = _rv(question_vec)
    max_hop = max(result.hop_of.values(), default=0)
    for hop in range(max_hop, 0, -1):
        layer = [e for e, h in result.hop_of.items() if h == hop]
        for e in sorted(layer):
            if d_score[e] == 0.0:
                continue
            edges = by_dst.get(e, [])
            share = d_score[e] / len(edges)
            for src, rel, inv in edges:
                d_score[src] += cfg.gamma * share
                x = _psi_neural_input(tables, q.t_q, q_rv, src, rel, e, inv)
                pre = params.f1_W @ x + params.f1_b
                hidden = np.maximum(pre, 0.0)
                grads["f2_W"] += share * hidden[None, :]
                grads["f2_b"] += share
                d_hidden = share * params.f2_W[0] * (pre > 0)
                grads["f1_W"] += np.outer(d_hidden, x)
                grads["f1_b"] += d_hidden
