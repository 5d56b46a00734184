"""Forecasting-constrained time-aware entity representations.

The representation of an entity at timestamp t is produced by a gated
recurrent aggregator driven by the w snapshots strictly before t
(default w = 4): each step turns the facts of one snapshot into
incoming messages (with inverse-direction duplicates), transforms them
per relation-direction, mean-aggregates per receiver and blends the
result into the previous state through a learned update gate. Entities
that receive no message in a step carry their state over unchanged, so
anything untouched by the window stays bit-equal to its base embedding.

Nothing at or after t is ever read; `infer_reps` rejects input that
contains such facts instead of trusting the caller.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import ComplexVec, complex_mul, conjugate
from .embeddings import (EmbeddingTable, NumericError, TrainConfig, init_table,
                         _log_softmax, _softmax)
from .optim import Adam
from .tkg import TemporalKG


class LeakageError(RuntimeError):
    """Facts at or after the target timestamp reached the forecaster."""


GATE_KEYS = ("W_z", "U_z", "b_z", "W_c", "U_c", "b_c")


@dataclass
class ForecastParams:
    base: EmbeddingTable           # entity/relation embeddings, no timestamps
    msg: ComplexVec                # (2 * n_relations, d): forward dirs even, inverse odd
    gate: dict[str, np.ndarray]
    window: int = 4

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def dim(self) -> int:
        return self.base.dim

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {
            "ent_re": self.base.entities.re, "ent_im": self.base.entities.im,
            "rel_re": self.base.relations.re, "rel_im": self.base.relations.im,
            "msg_re": self.msg.re, "msg_im": self.msg.im,
        }
        out.update(self.gate)
        return out


def init_params(n_entities: int, n_relations: int, dim: int, window: int,
                rng: np.random.Generator) -> ForecastParams:
    base = init_table(n_entities, n_relations, None, dim, rng)
    # Message transforms start near multiplication by 1, so an initial
    # message is approximately a copy of the sender's state.
    msg = ComplexVec(1.0 + rng.normal(0.0, 0.1, (2 * n_relations, dim)),
                     rng.normal(0.0, 0.1, (2 * n_relations, dim)))
    two_d = 2 * dim
    # Elementwise (diagonal) gate: cross-dimension mixing lives in the
    # complex message transforms, keeping the gate too small to memorize.
    gate = {
        "W_z": rng.normal(0.0, 0.1, two_d),
        "U_z": rng.normal(0.0, 0.1, two_d),
        "b_z": np.ones(two_d),  # bias toward carrying state over
        "W_c": rng.normal(0.0, 0.1, two_d),
        "U_c": 1.0 + rng.normal(0.0, 0.1, two_d),  # candidate starts near the message
        "b_c": np.zeros(two_d),
    }
    return ForecastParams(base, msg, gate, window)


def _snapshot_edges(snap: np.ndarray) -> np.ndarray:
    """Distinct (dst, src, direction) message edges of one snapshot.

    Every fact (s, r, o) sends s->o in direction 2r and o->s in
    direction 2r+1; duplicates collapse, order is lexicographic.
    """
    if snap.shape[0] == 0:
        return np.empty((0, 3), dtype=np.int64)
    fwd = np.stack([snap[:, 2], snap[:, 0], 2 * snap[:, 1]], axis=1)
    inv = np.stack([snap[:, 0], snap[:, 2], 2 * snap[:, 1] + 1], axis=1)
    return np.unique(np.concatenate([fwd, inv]), axis=0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(kg: TemporalKG, params: ForecastParams, t: int, keep_cache: bool):
    """Run the aggregator for target timestamp t.

    Returns (H, updated_ids, caches); H is the (n_entities, 2d) real
    view of the reps at t.
    """
    d = params.dim
    H = np.concatenate([params.base.entities.re, params.base.entities.im], axis=1).copy()
    updated: set[int] = set()
    caches = []
    for tau in range(max(0, t - params.window), t):
        edges = _snapshot_edges(kg.snapshot(tau))
        if edges.shape[0] == 0:
            continue
        dst, src, dirs = edges[:, 0], edges[:, 1], edges[:, 2]
        upd, dst_idx = np.unique(dst, return_inverse=True)
        counts = np.bincount(dst_idx).astype(np.float64)

        h_src = ComplexVec(H[src, :d], H[src, d:])
        c_dir = ComplexVec(params.msg.re[dirs], params.msg.im[dirs])
        msgs = complex_mul(h_src, c_dir)
        m = np.zeros((upd.shape[0], 2 * d))
        np.add.at(m[:, :d], dst_idx, msgs.re)
        np.add.at(m[:, d:], dst_idx, msgs.im)
        m /= counts[:, None]

        u = H[upd]
        a_z = u * params.gate["W_z"] + m * params.gate["U_z"] + params.gate["b_z"]
        a_c = u * params.gate["W_c"] + m * params.gate["U_c"] + params.gate["b_c"]
        z = _sigmoid(a_z)
        g = np.tanh(a_c)
        if keep_cache:
            caches.append({"edges": edges, "upd": upd, "dst_idx": dst_idx,
                           "counts": counts, "h_src_rv": H[src].copy(),
                           "u": u.copy(), "m": m, "z": z, "g": g})
        H[upd] = z * u + (1.0 - z) * g
        updated.update(int(e) for e in upd)
    return H, np.array(sorted(updated), dtype=np.int64), caches


def infer_reps(kg_visible: TemporalKG, params: ForecastParams, t: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """Entity reps at t from the preceding window of snapshots.

    Rejects any input containing a fact at timestamp >= t. Returns the
    (n_entities, 2d) real-view matrix and the sorted ids of entities
    whose state was touched by the window.
    """
    if kg_visible.n_facts and kg_visible.max_timestamp() >= t:
        raise LeakageError(
            f"visible KG contains facts at t >= {t} "
            f"(max fact timestamp {kg_visible.max_timestamp()})")
    H, updated, _ = _forward(kg_visible, params, t, keep_cache=False)
    return H, updated


def _backward(params: ForecastParams, caches, dH: np.ndarray,
              grads: dict[str, np.ndarray]) -> None:
    """Backprop dL/dH(t) through the cached steps into `grads`."""
    d = params.dim
    for cache in reversed(caches):
        upd = cache["upd"]
        u, m, z, g = cache["u"], cache["m"], cache["z"], cache["g"]
        dH_upd = dH[upd]
        dz = dH_upd * (u - g)
        da_z = dz * z * (1.0 - z)
        dg = dH_upd * (1.0 - z)
        da_c = dg * (1.0 - g * g)

        grads["W_z"] += (da_z * u).sum(axis=0)
        grads["U_z"] += (da_z * m).sum(axis=0)
        grads["b_z"] += da_z.sum(axis=0)
        grads["W_c"] += (da_c * u).sum(axis=0)
        grads["U_c"] += (da_c * m).sum(axis=0)
        grads["b_c"] += da_c.sum(axis=0)

        du = dH_upd * z + da_z * params.gate["W_z"] + da_c * params.gate["W_c"]
        dm = da_z * params.gate["U_z"] + da_c * params.gate["U_c"]
        dH[upd] = du

        edges = cache["edges"]
        dst_idx, counts = cache["dst_idx"], cache["counts"]
        src, dirs = edges[:, 1], edges[:, 2]
        dmsg_rv = dm[dst_idx] / counts[dst_idx, None]
        dmsg = ComplexVec(dmsg_rv[:, :d], dmsg_rv[:, d:])
        c_dir = ComplexVec(params.msg.re[dirs], params.msg.im[dirs])
        h_src_rv = cache["h_src_rv"]
        h_src = ComplexVec(h_src_rv[:, :d], h_src_rv[:, d:])

        d_src = complex_mul(dmsg, conjugate(c_dir))
        np.add.at(dH[:, :d], src, d_src.re)
        np.add.at(dH[:, d:], src, d_src.im)
        d_c = complex_mul(dmsg, conjugate(h_src))
        np.add.at(grads["msg_re"], dirs, d_c.re)
        np.add.at(grads["msg_im"], dirs, d_c.im)
    grads["ent_re"] += dH[:, :d]
    grads["ent_im"] += dH[:, d:]


def _loss_at_timestamp(kg: TemporalKG, params: ForecastParams, t: int,
                       want_grads: bool):
    """Cross-entropy over candidate objects for the quads at t."""
    quads = kg.snapshot(t)
    if quads.shape[0] == 0:
        return 0.0, None
    d = params.dim
    H, _, caches = _forward(kg, params, t, keep_cache=want_grads)
    s, r, o = quads[:, 0], quads[:, 1], quads[:, 2]
    B = quads.shape[0]
    h_s = ComplexVec(H[s, :d], H[s, d:])
    w_r = ComplexVec(params.base.relations.re[r], params.base.relations.im[r])
    x = complex_mul(h_s, w_r)
    x_rv = np.concatenate([x.re, x.im], axis=1)
    scores = x_rv @ H.T
    logp = _log_softmax(scores)
    loss = float(-logp[np.arange(B), o].mean())
    if not want_grads:
        return loss, None

    grads = {k: np.zeros_like(v) for k, v in params.param_arrays().items()}
    d_scores = _softmax(scores)
    d_scores[np.arange(B), o] -= 1.0
    d_scores /= B
    dx_rv = d_scores @ H
    dH = d_scores.T @ x_rv
    dx = ComplexVec(dx_rv[:, :d], dx_rv[:, d:])
    d_hs = complex_mul(dx, conjugate(w_r))
    d_wr = complex_mul(dx, conjugate(h_s))
    np.add.at(dH[:, :d], s, d_hs.re)
    np.add.at(dH[:, d:], s, d_hs.im)
    np.add.at(grads["rel_re"], r, d_wr.re)
    np.add.at(grads["rel_im"], r, d_wr.im)
    _backward(params, caches, dH, grads)
    return loss, grads


def train_forecaster(train_kg: TemporalKG, cfg: TrainConfig, window: int = 4,
                     train_base_entities: bool = False
                     ) -> tuple[ForecastParams, list[float]]:
    """Fit the aggregator so reps inferred from facts before t score the
    facts at t highly. Returns params and the per-epoch loss curve.

    Base entity embeddings stay frozen by default: every trainable
    parameter (message transforms, gate, relations) is then global, so
    the model cannot memorize per-pair affinities and must route
    predictive signal through the snapshot messages.
    """
    fact_ts = np.unique(train_kg.quads[:, 3])
    if fact_ts.size < window + 1:
        raise ValueError(
            f"train span has {fact_ts.size} fact timestamps; need >= {window + 1}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(train_kg.vocab.n_entities, train_kg.vocab.n_relations,
                         cfg.dim, window, rng)
    trainable = params.param_arrays()
    if not train_base_entities:
        trainable = {k: v for k, v in trainable.items()
                     if k not in ("ent_re", "ent_im")}
    opt = Adam(trainable, lr=cfg.learning_rate)
    losses: list[float] = []
    counts = {int(t): int(train_kg.snapshot(t).shape[0]) for t in fact_ts}
    total_facts = sum(counts.values())
    for epoch in range(cfg.epochs):
        # Cosine decay to a tenth of the base rate keeps late epochs stable.
        frac = epoch / max(cfg.epochs - 1, 1)
        opt.lr = cfg.learning_rate * (0.1 + 0.9 * 0.5 * (1 + np.cos(np.pi * frac)))
        order = rng.permutation(fact_ts)
        total = 0.0
        for t in order:
            loss, grads = _loss_at_timestamp(train_kg, params, int(t), want_grads=True)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, t={t}")
            total += loss * counts[int(t)]
            opt.step({k: grads[k] for k in trainable})
        losses.append(total / total_facts)
    return params, losses


class TimeAwareReps:
    """Per-(entity, timestamp) representations with a base fallback.

    Only entities touched by a timestamp's window are stored; lookups
    for everything else fall back to the base entity embedding.
    `window_max_t[t]` records the newest fact timestamp that influenced
    the reps at t (-1 when the window was empty), which downstream
    evaluation uses as its leakage guard.
    """

    def __init__(self, base: EmbeddingTable, window: int):
        self.base = base
        self.window = window
        self.per_t: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.window_max_t: dict[int, int] = {}

    @property
    def dim(self) -> int:
        return self.base.dim

    def store(self, t: int, ids: np.ndarray, reps: np.ndarray, max_fact_t: int) -> None:
        self.per_t[t] = (np.asarray(ids, dtype=np.int64), np.asarray(reps, dtype=np.float64))
        self.window_max_t[t] = max_fact_t

    def has_exact(self, e: int, t: int) -> bool:
        entry = self.per_t.get(t)
        return entry is not None and bool(np.isin(e, entry[0]))

    def entity(self, e: int, t: int) -> ComplexVec:
        entry = self.per_t.get(t)
        if entry is not None:
            pos = np.searchsorted(entry[0], e)
            if pos < entry[0].size and entry[0][pos] == e:
                row = entry[1][pos]
                return ComplexVec(row[:self.dim], row[self.dim:])
        return ComplexVec(self.base.entities.re[e], self.base.entities.im[e])

    def entity_matrix(self, t: int) -> np.ndarray:
        """(n_entities, 2d) real view of every entity's rep at t."""
        H = np.concatenate([self.base.entities.re, self.base.entities.im], axis=1).copy()
        entry = self.per_t.get(t)
        if entry is not None:
            H[entry[0]] = entry[1]
        return H

    def relation(self, r: int) -> ComplexVec:
        return ComplexVec(self.base.relations.re[r], self.base.relations.im[r])


def precompute_all(kg: TemporalKG, params: ForecastParams,
                   timestamps: list[int] | None = None) -> TimeAwareReps:
    """One-pass inference for every timestamp (or the given subset).

    Windows may span split boundaries but never reach the target
    timestamp itself: the visible KG handed to each inference is cut
    strictly before t.
    """
    reps = TimeAwareReps(params.base, params.window)
    if timestamps is None:
        timestamps = list(range(kg.vocab.n_timestamps))
    for t in timestamps:
        visible = kg.restrict_before(t)
        H, updated = infer_reps(visible, params, t)
        reps.store(t, updated, H[updated], visible.max_timestamp())
    return reps


_PARAMS_MAGIC = b"FQFOR1\n"


def save_params(params: ForecastParams, path: str | Path) -> None:
    from .embeddings import save_table
    base_path = Path(path)
    with open(base_path, "wb") as f:
        f.write(_PARAMS_MAGIC)
        f.write(struct.pack("<3q", params.dim, params.window,
                            params.msg.re.shape[0]))
        f.write(params.msg.re.astype("<f8").tobytes())
        f.write(params.msg.im.astype("<f8").tobytes())
        for key in GATE_KEYS:
            f.write(params.gate[key].astype("<f8").tobytes())
    save_table(params.base, base_path.with_suffix(base_path.suffix + ".base"))


def load_params(path: str | Path) -> ForecastParams:
    from .embeddings import load_table
    base_path = Path(path)
    base = load_table(base_path.with_suffix(base_path.suffix + ".base"))
    with open(base_path, "rb") as f:
        if f.read(len(_PARAMS_MAGIC)) != _PARAMS_MAGIC:
            raise ValueError(f"{path}: not a forecaster checkpoint")
        dim, window, n_dirs = struct.unpack("<3q", f.read(24))
        two_d = 2 * dim

        def read(shape):
            n = int(np.prod(shape))
            return np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()

        msg = ComplexVec(read((n_dirs, dim)), read((n_dirs, dim)))
        gate = {key: read((two_d,)) for key in GATE_KEYS}
    return ForecastParams(base, msg, gate, window)


_MAGIC = b"FQREP1\n"


def save_reps(reps: TimeAwareReps, path: str | Path) -> None:
    from .embeddings import save_table  # local import to avoid cycle at module load
    base_path = Path(path)
    with open(base_path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<3q", reps.dim, reps.window, len(reps.per_t)))
        for t in sorted(reps.per_t):
            ids, mat = reps.per_t[t]
            f.write(struct.pack("<3q", t, ids.size, reps.window_max_t[t]))
            f.write(ids.astype("<i8").tobytes())
            f.write(mat.astype("<f8").tobytes())
    save_table(reps.base, base_path.with_suffix(base_path.suffix + ".base"))


def load_reps(path: str | Path) -> TimeAwareReps:
    from .embeddings import load_table
    base_path = Path(path)
    base = load_table(base_path.with_suffix(base_path.suffix + ".base"))
    with open(base_path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a reps checkpoint")
        dim, window, n_entries = struct.unpack("<3q", f.read(24))
        reps = TimeAwareReps(base, window)
        for _ in range(n_entries):
            t, k, max_t = struct.unpack("<3q", f.read(24))
            ids = np.frombuffer(f.read(8 * k), dtype="<i8").copy()
            mat = np.frombuffer(f.read(8 * k * 2 * dim), dtype="<f8").reshape(k, 2 * dim).copy()
            reps.store(t, ids, mat, max_t)
    return reps
