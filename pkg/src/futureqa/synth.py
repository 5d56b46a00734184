"""Synthetic event corpus with planted, fully predictable structure.

Three fact populations per day:
  * habitual duos: fixed subjects each emit two facts (two relations,
    two objects) every single day, so future occurrences are inferable
    from any recent window and the per-snapshot rule miner finds the
    relation pairs;
  * trigger/consequence: random (a, b) pairs emit the trigger relation
    at t and deterministically the consequence relation at t+1 - the
    planted rule a forecaster must pick up;
  * light noise over the remaining relations.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

import numpy as np

RELATION_NAMES = ["alert", "assist", "consult", "praise", "visit", "warn",
                  "host", "accuse", "support", "meet"]
TRIGGER_REL = 0       # "alert"
CONSEQUENCE_REL = 1   # "assist"
DUO_RELS = ((2, 3), (4, 5))
NOISE_RELS = (6, 7, 8, 9)


@dataclass
class SynthConfig:
    n_entities: int = 30
    n_days: int = 60
    n_duos: int = 10
    triggers_per_day: int = 2
    noise_per_day: int = 1
    seed: int = 0
    base_date: str = "2021-01-01"

    def __post_init__(self):
        if self.n_entities < 3 * self.n_duos:
            raise ValueError("need 3 entities per habitual duo")
        if self.n_days < 3:
            raise ValueError("need at least 3 days")


def synth_events(cfg: SynthConfig) -> list[str]:
    """Tab-separated event rows, one per fact, dates ascending."""
    rng = np.random.default_rng(cfg.seed)
    base = _dt.date.fromisoformat(cfg.base_date)
    names = [f"entity{i}" for i in range(cfg.n_entities)]

    def day(t):
        return (base + _dt.timedelta(days=int(t))).isoformat()

    duos = []
    for k in range(cfg.n_duos):
        subject = k
        obj_a, obj_b = cfg.n_duos + 2 * k, cfg.n_duos + 2 * k + 1
        rel_a, rel_b = DUO_RELS[k % 2]
        duos.append((subject, rel_a, obj_a, rel_b, obj_b))

    rows = []
    consequences: dict[int, list[tuple[int, int]]] = {}
    for t in range(cfg.n_days):
        for subject, rel_a, obj_a, rel_b, obj_b in duos:
            rows.append((names[subject], RELATION_NAMES[rel_a], names[obj_a], day(t)))
            rows.append((names[subject], RELATION_NAMES[rel_b], names[obj_b], day(t)))
        for a, b in consequences.pop(t, []):
            rows.append((names[a], RELATION_NAMES[CONSEQUENCE_REL], names[b], day(t)))
        if t < cfg.n_days - 1:
            subjects = rng.choice(cfg.n_entities, size=cfg.triggers_per_day,
                                  replace=False)
            for a in subjects:
                b = int(rng.integers(cfg.n_entities - 1))
                if b >= a:
                    b += 1
                rows.append((names[a], RELATION_NAMES[TRIGGER_REL], names[b], day(t)))
                consequences.setdefault(t + 1, []).append((int(a), b))
        for _ in range(cfg.noise_per_day):
            rel = int(rng.choice(NOISE_RELS))
            a = int(rng.integers(cfg.n_entities))
            b = int(rng.integers(cfg.n_entities - 1))
            if b >= a:
                b += 1
            rows.append((names[a], RELATION_NAMES[rel], names[b], day(t)))
    return ["\t".join(row) for row in rows]


def default_boundaries(n_days: int) -> tuple[int, int, int, int]:
    """70/10/20 day split."""
    t1 = int(n_days * 0.7)
    t2 = int(n_days * 0.8)
    return 0, t1, t2, n_days - 1
