"""Question generation over a temporal KG.

Four generators, all template driven:
  * 1-hop entity-prediction questions, one per eligible fact;
  * 2-hop entity-prediction questions from groundings of mined
    subject-sharing relation-pair rules;
  * yes/unknown questions from facts, with the unknown side produced by
    perturbing one slot until the quadruple is absent from the full KG;
  * fact-reasoning multiple-choice questions whose four choices are the
    top, second, median and bottom prior facts under a contribution
    scorer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .tkg import DataError, TemporalKG

EPQ1 = "EPQ1"
EPQ2 = "EPQ2"
YUQ = "YUQ"
FRQ = "FRQ"


@dataclass
class TemplateSet:
    """Text patterns keyed by relation id (or relation pair for 2-hop).

    Slots: {s_q} {o_q} {t_q} for question facts, {s_c} {o_c} {t_c} for
    choice facts. Relations without an entry are skipped by the
    generators.
    """

    one_hop: dict[int, str] = field(default_factory=dict)
    two_hop: dict[tuple[int, int], str] = field(default_factory=dict)
    yuq: dict[int, str] = field(default_factory=dict)
    frq_question: dict[int, str] = field(default_factory=dict)
    frq_choice: dict[int, str] = field(default_factory=dict)


def default_templates(relation_names: list[str],
                      excluded: set[int] | None = None) -> TemplateSet:
    """Generic patterns built from relation surface text."""
    excluded = excluded or set()
    ts = TemplateSet()
    for r, name in enumerate(relation_names):
        if r in excluded:
            continue
        ts.one_hop[r] = f"Who will {{s_q}} {name} on {{t_q}}?"
        ts.yuq[r] = f"Will {{s_q}} {name} {{o_q}} on {{t_q}}?"
        ts.frq_question[r] = f"Why will {{s_q}} {name} {{o_q}} on {{t_q}}?"
        ts.frq_choice[r] = f"{{s_c}} {name} {{o_c}} on {{t_c}}"
    return ts


def add_default_two_hop(ts: TemplateSet, relation_names: list[str],
                        pairs: Iterable[tuple[int, int]]) -> None:
    for r1, r2 in pairs:
        ts.two_hop[(r1, r2)] = (
            f"Who will an entity {relation_names[r2]}, while this entity "
            f"{relation_names[r1]} {{o_q}} on {{t_q}}?")


def save_templates(ts: TemplateSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for kind, table in (("one_hop", ts.one_hop), ("yuq", ts.yuq),
                            ("frq_question", ts.frq_question),
                            ("frq_choice", ts.frq_choice)):
            for r in sorted(table):
                f.write(f"{kind}\t{r}\t{table[r]}\n")
        for (r1, r2) in sorted(ts.two_hop):
            f.write(f"two_hop\t{r1},{r2}\t{ts.two_hop[(r1, r2)]}\n")


def load_templates(path: str | Path) -> TemplateSet:
    ts = TemplateSet()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                kind, key, pattern = line.split("\t", 2)
            except ValueError:
                raise DataError(f"{path}:{line_no}: expected 3 tab fields") from None
            if kind == "two_hop":
                r1, r2 = key.split(",")
                ts.two_hop[(int(r1), int(r2))] = pattern
            else:
                getattr(ts, kind)[int(key)] = pattern
    return ts


@dataclass
class Choice:
    text: str
    s: int
    r: int
    o: int
    t: int


@dataclass
class Question:
    id: str
    qtype: str
    text: str
    entities: list[int]
    t_q: int
    answer: int | str
    choices: list[Choice] | None = None
    provenance: list[tuple[int, int, int, int]] = field(default_factory=list)
    fact: tuple[int, int, int, int] | None = None
    shuffle_perm: list[int] | None = None


@dataclass
class TwoHopRule:
    """(X, r1, m) at t implies (X, r2, n) at t, with confidence =
    supported body groundings / body groundings on the mined snapshot."""

    r1: int
    r2: int
    confidence: float
    t: int


def _fmt(pattern: str, kg: TemporalKG, **slots) -> str:
    names = {}
    for key, value in slots.items():
        if key.startswith("s") or key.startswith("o"):
            names[key] = kg.vocab.entity_names[value]
        else:
            names[key] = kg.vocab.timestamp_labels[value]
    return pattern.format(**names)


def gen_1hop(kg: TemporalKG, templates: TemplateSet, id_prefix: str = "epq1"
             ) -> tuple[list[Question], int]:
    """One entity-prediction question per fact with a template.

    Returns (questions, number of facts skipped for lack of template).
    """
    questions = []
    skipped = 0
    for i, (s, r, o, t) in enumerate(kg.quads):
        pattern = templates.one_hop.get(int(r))
        if pattern is None:
            skipped += 1
            continue
        questions.append(Question(
            id=f"{id_prefix}-{i:06d}", qtype=EPQ1,
            text=_fmt(pattern, kg, s_q=int(s), t_q=int(t)),
            entities=[int(s)], t_q=int(t), answer=int(o),
            provenance=[(int(s), int(r), int(o), int(t))],
            fact=(int(s), int(r), int(o), int(t))))
    return questions, skipped


def _snapshot_set(quads: np.ndarray) -> set[tuple[int, int, int]]:
    return {(int(s), int(r), int(o)) for s, r, o, _ in quads}


def mine_2hop_rules(snapshot: np.ndarray, min_conf: float) -> list[TwoHopRule]:
    """Mine subject-sharing relation-pair rules from one snapshot.

    A body grounding of (r1, r2) is a distinct (X, m) with (X, r1, m)
    present; it is supported when some (X, r2, n) with n != m is also
    present. Rules with confidence strictly above min_conf survive,
    ordered by (r1, r2). Only pairs with r1 != r2 are considered.
    """
    if not (0.0 < min_conf <= 1.0):
        raise ValueError(f"min_conf must be in (0, 1], got {min_conf}")
    facts = _snapshot_set(snapshot)
    t = int(snapshot[0, 3]) if len(snapshot) else -1
    by_subject: dict[int, set[tuple[int, int]]] = {}
    for s, r, o in facts:
        by_subject.setdefault(s, set()).add((r, o))
    relations = sorted({r for _, r, _ in facts})
    rules = []
    for r1 in relations:
        bodies = [(x, m) for x, pairs in by_subject.items() for (r, m) in pairs if r == r1]
        if not bodies:
            continue
        for r2 in relations:
            if r2 == r1:
                continue
            supported = sum(
                1 for x, m in bodies
                if any(r == r2 and n != m for (r, n) in by_subject[x]))
            conf = supported / len(bodies)
            if conf > min_conf:
                rules.append(TwoHopRule(r1, r2, conf, t))
    rules.sort(key=lambda rule: (rule.r1, rule.r2))
    return rules


def ground_2hop(kg: TemporalKG, rules: Iterable[TwoHopRule], templates: TemplateSet,
                id_prefix: str = "epq2") -> tuple[list[Question], int]:
    """Ground curated rules at every timestamp of kg.

    Each distinct grounding (X, r1, m) & (X, r2, n), n != m, yields one
    2-hop question: annotated entity m, answer n, X unannotated.
    """
    pairs = sorted({(rule.r1, rule.r2) for rule in rules})
    questions = []
    skipped_no_template = 0
    counter = 0
    for t in range(kg.vocab.n_timestamps):
        snap = kg.snapshot(t)
        if snap.shape[0] == 0:
            continue
        facts = _snapshot_set(snap)
        by_subject: dict[int, set[tuple[int, int]]] = {}
        for s, r, o in facts:
            by_subject.setdefault(s, set()).add((r, o))
        for r1, r2 in pairs:
            pattern = templates.two_hop.get((r1, r2))
            if pattern is None:
                skipped_no_template += 1
                continue
            for x in sorted(by_subject):
                ms = sorted(m for (r, m) in by_subject[x] if r == r1)
                ns = sorted(n for (r, n) in by_subject[x] if r == r2)
                for m in ms:
                    for n in ns:
                        if n == m:
                            continue
                        questions.append(Question(
                            id=f"{id_prefix}-{counter:06d}", qtype=EPQ2,
                            text=_fmt(pattern, kg, o_q=m, t_q=t),
                            entities=[m], t_q=t, answer=n,
                            provenance=[(x, r1, m, t), (x, r2, n, t)],
                            fact=(x, r2, n, t)))
                        counter += 1
    return questions, skipped_no_template


def gen_yuq(kg: TemporalKG, full_kg: TemporalKG, templates: TemplateSet,
            true_fraction: float = 0.25, seed: int = 0,
            id_prefix: str = "yuq", max_tries: int = 1000
            ) -> tuple[list[Question], int]:
    """Yes/unknown questions from the facts of kg.

    A seeded permutation marks round(true_fraction * n) facts as yes
    questions; the rest get exactly one of {subject, object, relation}
    resampled until the quadruple does not occur anywhere in full_kg.
    Returns (questions, facts given up after max_tries draws).
    """
    if not (0.0 < true_fraction < 1.0):
        raise ValueError(f"true_fraction must be in (0, 1), got {true_fraction}")
    rng = np.random.default_rng(seed)
    existing = {tuple(int(v) for v in q) for q in full_kg.quads}
    n = kg.n_facts
    order = rng.permutation(n)
    n_true = int(round(true_fraction * n))
    is_true = np.zeros(n, dtype=bool)
    is_true[order[:n_true]] = True

    questions = []
    giveups = 0
    n_entities = kg.vocab.n_entities
    n_relations = kg.vocab.n_relations
    for i, (s, r, o, t) in enumerate(kg.quads):
        s, r, o, t = int(s), int(r), int(o), int(t)
        if is_true[i]:
            pattern = templates.yuq.get(r)
            if pattern is None:
                continue
            questions.append(Question(
                id=f"{id_prefix}-{i:06d}", qtype=YUQ,
                text=_fmt(pattern, kg, s_q=s, o_q=o, t_q=t),
                entities=[s, o], t_q=t, answer="yes",
                provenance=[(s, r, o, t)], fact=(s, r, o, t)))
            continue
        placed = False
        for _ in range(max_tries):
            slot = int(rng.integers(3))
            ps, pr, po = s, r, o
            if slot == 0:
                ps = int(rng.integers(n_entities))
            elif slot == 1:
                po = int(rng.integers(n_entities))
            else:
                pr = int(rng.integers(n_relations))
            if (ps, pr, po, t) in existing:
                continue
            pattern = templates.yuq.get(pr)
            if pattern is None:
                continue
            questions.append(Question(
                id=f"{id_prefix}-{i:06d}", qtype=YUQ,
                text=_fmt(pattern, kg, s_q=ps, o_q=po, t_q=t),
                entities=[ps, po], t_q=t, answer="unknown",
                provenance=[(s, r, o, t)], fact=(ps, pr, po, t)))
            placed = True
            break
        if not placed:
            giveups += 1
    return questions, giveups


ContributionScorer = Callable[[tuple[int, int, int, int], tuple[int, int, int, int]], float]


def recency_overlap_scorer(rule_pairs: set[tuple[int, int]] | None = None,
                           lam_t: float = 1.0, lam_e: float = 1.0,
                           lam_r: float = 2.0) -> ContributionScorer:
    """Default contribution heuristic: recency decay + entity overlap +
    a bonus when the prior's relation pairs with the target's in the
    mined rules (prior relation as body, target relation as head)."""
    pairs = rule_pairs or set()

    def score(target, prior):
        s, r, o, t = target
        ps, pr, po, pt = prior
        overlap = len({s, o} & {ps, po})
        bonus = 1.0 if (pr, r) in pairs else 0.0
        return lam_t * float(np.exp(-(t - pt))) + lam_e * overlap + lam_r * bonus

    return score


def gen_frq(kg: TemporalKG, full_kg: TemporalKG, scorer: ContributionScorer,
            templates: TemplateSet, seed: int = 0, id_prefix: str = "frq",
            min_priors: int = 4) -> tuple[list[Question], dict[str, int]]:
    """Fact-reasoning questions for the distinct facts of kg.

    Prior candidates are the distinct full_kg facts strictly before the
    target that share at least one entity with it. Choices are the
    facts ranked top / second / median (lower, descending order) /
    bottom by the scorer; the top one is the answer. Questions are
    dropped when the top prior repeats the target's (s, r, o), when the
    top two scores tie exactly, or when fewer than min_priors priors
    exist. Choice order is shuffled with the permutation recorded.
    """
    rng = np.random.default_rng(seed)
    all_facts = sorted({tuple(int(v) for v in q) for q in full_kg.quads})
    by_entity: dict[int, list[tuple[int, int, int, int]]] = {}
    for fact in all_facts:
        for e in {fact[0], fact[2]}:
            by_entity.setdefault(e, []).append(fact)

    stats = {"too_few_priors": 0, "same_sro_filtered": 0, "tied_top": 0,
             "no_template": 0, "generated": 0}
    questions = []
    targets = sorted({tuple(int(v) for v in q) for q in kg.quads})
    for i, target in enumerate(targets):
        s, r, o, t = target
        if r not in templates.frq_question:
            stats["no_template"] += 1
            continue
        priors = sorted({f for e in {s, o} for f in by_entity.get(e, []) if f[3] < t})
        if len(priors) < min_priors:
            stats["too_few_priors"] += 1
            continue
        scored = sorted(((scorer(target, p), idx) for idx, p in enumerate(priors)),
                        key=lambda pair: (-pair[0], pair[1]))
        if scored[0][0] == scored[1][0]:
            stats["tied_top"] += 1
            continue
        top = priors[scored[0][1]]
        if (top[0], top[1], top[2]) == (s, r, o):
            stats["same_sro_filtered"] += 1
            continue
        m = len(scored)
        picks = [priors[scored[k][1]] for k in (0, 1, m // 2, m - 1)]
        if any(p[1] not in templates.frq_choice for p in picks):
            stats["no_template"] += 1
            continue
        perm = [int(v) for v in rng.permutation(4)]
        shuffled = [picks[k] for k in perm]
        choices = [Choice(text=_fmt(templates.frq_choice[p[1]], kg,
                                    s_c=p[0], o_c=p[2], t_c=p[3]),
                          s=p[0], r=p[1], o=p[2], t=p[3]) for p in shuffled]
        questions.append(Question(
            id=f"{id_prefix}-{i:06d}", qtype=FRQ,
            text=_fmt(templates.frq_question[r], kg, s_q=s, o_q=o, t_q=t),
            entities=[s, o], t_q=t, answer=perm.index(0),
            choices=choices, provenance=[target], fact=target,
            shuffle_perm=perm))
        stats["generated"] += 1
    return questions, stats


def save_questions(questions: Iterable[Question], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in questions:
            record = {
                "id": q.id, "qtype": q.qtype, "text": q.text,
                "entities": q.entities, "t_q": q.t_q, "answer": q.answer,
                "provenance": [list(p) for p in q.provenance],
            }
            if q.fact is not None:
                record["fact"] = list(q.fact)
            if q.choices is not None:
                record["choices"] = [
                    {"text": c.text, "s": c.s, "r": c.r, "o": c.o, "t": c.t}
                    for c in q.choices]
            if q.shuffle_perm is not None:
                record["shuffle_perm"] = q.shuffle_perm
            f.write(json.dumps(record, sort_keys=True) + "\n")


def load_questions(path: str | Path) -> list[Question]:
    questions = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            choices = None
            if "choices" in rec:
                choices = [Choice(**c) for c in rec["choices"]]
            questions.append(Question(
                id=rec["id"], qtype=rec["qtype"], text=rec["text"],
                entities=list(rec["entities"]), t_q=rec["t_q"],
                answer=rec["answer"], choices=choices,
                provenance=[tuple(p) for p in rec["provenance"]],
                fact=tuple(rec["fact"]) if "fact" in rec else None,
                shuffle_perm=rec.get("shuffle_perm")))
    return questions
