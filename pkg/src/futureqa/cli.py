"""Command-line pipeline: raw events -> KG -> embeddings/forecaster ->
questions -> QA training -> evaluation reports.

Every command validates its inputs, runs deterministically under the
given seed, never mutates inputs, and writes a manifest with input and
output hashes next to its outputs.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, forecaster, qa, questions as qgen
from .embeddings import NumericError, TrainConfig, load_table, save_table, train_static, train_temporal
from .manifest import write_manifest
from .mhs import MHSConfig, propagate, psi_product
from .synth import SynthConfig, default_boundaries, synth_events
from .tkg import DataError, SplitBoundaries, TemporalKG, ingest_events, load_kg, save_kg, split

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# Which command produces which artifact, for actionable missing-input errors.
PRODUCERS = {
    "events": "synth (or your event export)",
    "kg": "ingest",
    "splits": "split",
    "tkg-model": "train-tkg",
    "reps": "infer-reps",
    "questions": "genq",
    "qa-model": "train-qa",
}


class ConfigError(ValueError):
    pass


def _require(path: Path, artifact: str) -> Path:
    if not path.exists():
        raise DataError(
            f"missing {artifact} at {path}; produce it with "
            f"`futureqa {PRODUCERS[artifact]}` first")
    return path


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()
    return values


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """File values fill flags the user left at their defaults; explicit
    flags win. Environment variables FUTUREQA_<FLAG> override paths."""
    file_values = _load_config_file(getattr(args, "config", None))
    actions = {action.dest: action for action in parser._actions}
    for key, val in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) == parser.get_default(attr):
            action = actions[attr]
            if isinstance(getattr(args, attr), bool) or isinstance(
                    action.const, bool):
                setattr(args, attr, val.lower() in ("1", "true", "yes"))
            else:
                caster = action.type or str
                setattr(args, attr, caster(val))
    for attr, value in vars(args).items():
        env = os.environ.get(f"FUTUREQA_{attr.upper()}")
        if env and isinstance(value, str) and ("/" in value or value.endswith((".tsv", ".json", ".bin"))):
            setattr(args, attr, env)


def _train_config(args) -> TrainConfig:
    return TrainConfig(dim=args.dim, epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.lr, seed=args.seed)


def _cfg(args) -> dict:
    """Manifest-friendly view of the parsed arguments."""
    return {k: v for k, v in vars(args).items()
            if k != "fn" and (v is None or isinstance(v, (str, int, float, bool)))}


def cmd_synth(args) -> None:
    cfg = SynthConfig(n_entities=args.entities, n_days=args.days,
                      n_duos=args.duos, triggers_per_day=args.triggers,
                      noise_per_day=args.noise, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events = synth_events(cfg)
    (out / "events.tsv").write_text("\n".join(events) + "\n", encoding="utf-8")
    t0, t1, t2, t3 = default_boundaries(cfg.n_days)
    (out / "boundaries.json").write_text(
        json.dumps({"t0": t0, "t1": t1, "t2": t2, "t3": t3}) + "\n")
    write_manifest("synth", _cfg(args), [], [out / "events.tsv", out / "boundaries.json"],
                   out / "synth.manifest.json")
    print(f"wrote {len(events)} events to {out / 'events.tsv'}")


def cmd_ingest(args) -> None:
    events_path = _require(Path(args.events), "events")
    date_range = tuple(args.date_range.split(":")) if args.date_range else None
    with open(events_path, encoding="utf-8") as f:
        vocab, kg = ingest_events(f, date_range)
    save_kg(kg, args.out)
    write_manifest("ingest", _cfg(args), [events_path], [args.out],
                   Path(args.out) / "ingest.manifest.json")
    print(f"ingested {kg.n_facts} facts, {vocab.n_entities} entities, "
          f"{vocab.n_relations} relations, {vocab.n_timestamps} timestamps")


def _resolve_boundary(kg: TemporalKG, value: str) -> int:
    if value.isdigit():
        return int(value)
    return kg.vocab.timestamp_id(value)


def cmd_split(args) -> None:
    kg = load_kg(_require(Path(args.kg), "kg"))
    b = SplitBoundaries(*(_resolve_boundary(kg, v)
                          for v in (args.t0, args.t1, args.t2, args.t3)))
    train, valid, test = split(kg, b)
    out = Path(args.out)
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        save_kg(part, out / name)
    (out / "boundaries.json").write_text(
        json.dumps({"t0": b.t0, "t1": b.t1, "t2": b.t2, "t3": b.t3}) + "\n")
    write_manifest("split", _cfg(args), [args.kg], [out],
                   out / "split.manifest.json")
    print(f"split sizes: train={train.n_facts} valid={valid.n_facts} "
          f"test={test.n_facts}")


def cmd_train_tkg(args) -> None:
    kg = load_kg(_require(Path(args.kg), "splits"))
    cfg = _train_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.model == "static":
        tbl, losses = train_static(kg, cfg)
        save_table(tbl, out)
    elif args.model == "temporal":
        tbl, losses = train_temporal(kg, cfg)
        save_table(tbl, out)
    elif args.model == "forecast":
        params, losses = forecaster.train_forecaster(kg, cfg, window=args.window)
        forecaster.save_params(params, out)
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    write_manifest("train-tkg", _cfg(args), [args.kg], [out],
                   Path(str(out) + ".manifest.json"))
    print(f"trained {args.model} model; loss {losses[0]:.4f} -> {losses[-1]:.4f}"
          if losses else "trained (0 epochs)")


def cmd_infer_reps(args) -> None:
    kg = load_kg(_require(Path(args.kg), "kg"))
    params = forecaster.load_params(_require(Path(args.params), "tkg-model"))
    reps = forecaster.precompute_all(kg, params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    forecaster.save_reps(reps, out)
    write_manifest("infer-reps", _cfg(args), [args.kg, args.params],
                   [out, Path(str(out) + ".base")],
                   Path(str(out) + ".manifest.json"))
    print(f"precomputed reps for {len(reps.per_t)} timestamps")


def cmd_genq(args) -> None:
    full_kg = load_kg(_require(Path(args.kg), "kg"))
    split_kg = load_kg(_require(Path(args.split_kg), "splits"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.templates:
        templates = qgen.load_templates(Path(args.templates))
    else:
        templates = qgen.default_templates(full_kg.vocab.relation_names)

    # Mine per snapshot, then keep only pairs that clear the threshold in
    # at least half of the snapshots where their body relation occurs;
    # one lucky snapshot is not a rule.
    rules = []
    body_snapshots: dict[int, int] = {}
    for t in range(full_kg.vocab.n_timestamps):
        snap = full_kg.snapshot(t)
        if snap.shape[0]:
            for r in set(int(x) for x in snap[:, 1]):
                body_snapshots[r] = body_snapshots.get(r, 0) + 1
            rules.extend(qgen.mine_2hop_rules(snap, args.min_confidence))
    passes: dict[tuple[int, int], int] = {}
    for rule in rules:
        passes[(rule.r1, rule.r2)] = passes.get((rule.r1, rule.r2), 0) + 1
    pairs = sorted(p for p, n in passes.items()
                   if n >= 0.5 * body_snapshots.get(p[0], 1))
    if args.rule_allowlist:
        allowed = set()
        for line in Path(args.rule_allowlist).read_text().splitlines():
            if line.strip():
                r1, r2 = line.split()
                allowed.add((int(r1), int(r2)))
        pairs = [p for p in pairs if p in allowed]
    if not args.templates:
        qgen.add_default_two_hop(templates, full_kg.vocab.relation_names, pairs)
    kept_rules = [rule for rule in rules if (rule.r1, rule.r2) in set(pairs)]

    prefix = args.prefix
    epq1, skipped1 = qgen.gen_1hop(split_kg, templates, id_prefix=f"{prefix}-epq1")
    epq2, _ = qgen.ground_2hop(split_kg, kept_rules, templates,
                               id_prefix=f"{prefix}-epq2")
    yuq, giveups = qgen.gen_yuq(split_kg, full_kg, templates,
                                true_fraction=args.true_fraction, seed=args.seed,
                                id_prefix=f"{prefix}-yuq")
    scorer = qgen.recency_overlap_scorer(set(pairs))
    frq, frq_stats = qgen.gen_frq(split_kg, full_kg, scorer, templates,
                                  seed=args.seed, id_prefix=f"{prefix}-frq")

    qgen.save_questions(epq1, out / "epq1.jsonl")
    qgen.save_questions(epq2, out / "epq2.jsonl")
    qgen.save_questions(yuq, out / "yuq.jsonl")
    qgen.save_questions(frq, out / "frq.jsonl")
    qgen.save_templates(templates, out / "templates.tsv")
    with open(out / "rules.tsv", "w") as f:
        for rule in kept_rules:
            f.write(f"{rule.r1}\t{rule.r2}\t{rule.confidence:.6f}\t{rule.t}\n")
    write_manifest("genq", _cfg(args), [args.kg, args.split_kg], [out],
                   out / "genq.manifest.json")
    print(f"generated: {len(epq1)} 1-hop EPQs ({skipped1} facts skipped), "
          f"{len(epq2)} 2-hop EPQs, {len(yuq)} YUQs ({giveups} given up), "
          f"{len(frq)} FRQs {frq_stats}")


def _load_questions_dir(path: Path) -> dict[str, list]:
    out = {"ep": [], "yu": [], "fr": []}
    for name, fam in (("epq1", "ep"), ("epq2", "ep"), ("yuq", "yu"), ("frq", "fr")):
        f = path / f"{name}.jsonl"
        if f.exists():
            out[fam].extend(qgen.load_questions(f))
    return out


# Per-family training defaults, calibrated on the bundled synthetic corpus.
# Families respond to different regularization: entity prediction wants
# anchored heads and date-shuffled questions, yes/unknown adds decay and
# tail averaging, fact reasoning wants strong encoding dropout with
# validation-selected epochs (choice dates are evidence, so no shuffle).
FAMILY_DEFAULTS = {
    "ep": dict(epochs=40, lr=1e-2, batch_size=64, weight_decay=3e-3,
               dropout=0.0, head_anchor=0.1, date_shuffle=True,
               lr_decay=False, tail_average=0, valid_select=False),
    "yu": dict(epochs=60, lr=1e-2, batch_size=64, weight_decay=1e-3,
               dropout=0.0, head_anchor=0.1, date_shuffle=True,
               lr_decay=True, tail_average=15, valid_select=False),
    "fr": dict(epochs=60, lr=1e-2, batch_size=64, weight_decay=0.0,
               dropout=0.5, head_anchor=0.03, date_shuffle=False,
               lr_decay=True, tail_average=0, valid_select=True),
}


def _family_config(args, fam: str, dim: int) -> TrainConfig:
    def flag(name, default):
        return getattr(args, f"{fam}_{name}", None) if getattr(
            args, f"{fam}_{name}", None) is not None else default

    d = FAMILY_DEFAULTS[fam]
    return TrainConfig(
        dim=dim, epochs=flag("epochs", d["epochs"]),
        batch_size=flag("batch_size", d["batch_size"]),
        learning_rate=flag("lr", d["lr"]),
        weight_decay=flag("weight_decay", d["weight_decay"]),
        dropout=flag("dropout", d["dropout"]),
        head_anchor=flag("anchor", d["head_anchor"]),
        date_shuffle=bool(d["date_shuffle"]),
        lr_decay=bool(d["lr_decay"]),
        tail_average=d["tail_average"],
        seed=flag("seed", args.seed))


def cmd_train_qa(args) -> None:
    reps = forecaster.load_reps(_require(Path(args.reps), "reps"))
    qdir = _require(Path(args.questions), "questions")
    by_family = _load_questions_dir(qdir)
    kg = load_kg(_require(Path(args.kg), "kg"))
    valid_by_family = {}
    if args.valid_questions:
        valid_by_family = _load_questions_dir(Path(args.valid_questions))
    surface = list(kg.vocab.entity_names) + list(kg.vocab.timestamp_labels)
    vocab = qa.build_qa_token_vocab(by_family, surface)

    # Each family is an independent training run (its own init and rng),
    # merged into one bundle at the end.
    merged = None
    curves = {}
    for fam in qa.FAMILIES:
        questions = by_family.get(fam, [])
        if not questions:
            continue
        cfg = _family_config(args, fam, reps.dim)
        use_valid = FAMILY_DEFAULTS[fam]["valid_select"] and fam in valid_by_family
        model, fam_curves = qa.train_qa(
            {fam: questions}, reps, cfg, token_vocab=vocab,
            valid_by_family={fam: valid_by_family[fam]} if use_valid else None)
        curves.update(fam_curves)
        if merged is None:
            merged = model
        else:
            merged.encoders[fam] = model.encoders[fam]
            for key, value in model.heads.family_arrays(fam).items():
                name = f"{fam}_{key[5:]}" if key.startswith("head_") else key
                setattr(merged.heads, name, value)
    if merged is None:
        raise DataError(f"no questions found under {qdir}")
    qa.save_qa_model(merged, args.out)
    write_manifest("train-qa", _cfg(args), [args.reps, args.questions, args.kg],
                   [args.out], Path(args.out) / "train-qa.manifest.json")
    for fam, curve in curves.items():
        print(f"{fam}: loss {curve[0]:.4f} -> {curve[-1]:.4f}")


def cmd_eval(args) -> None:
    reps = forecaster.load_reps(_require(Path(args.reps), "reps"))
    model = qa.load_qa_model(_require(Path(args.model), "qa-model"))
    qdir = _require(Path(args.questions), "questions")
    by_family = _load_questions_dir(qdir)
    all_questions = by_family["ep"] + by_family["yu"] + by_family["fr"]
    # Location-independent echo; absolute paths and hashes go to the manifest.
    report = evaluation.run_benchmark(model, reps, all_questions,
                                      config={"questions": qdir.name,
                                              "model": Path(args.model).name})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    if args.emit_csv:
        Path(str(out) + ".csv").write_text(evaluation.report_to_csv(report))
    write_manifest("eval", _cfg(args), [args.reps, args.model, args.questions],
                   [out], Path(str(out) + ".manifest.json"))
    print(evaluation.render_table(report))
    print(f"wall clock: {report.wall_clock_seconds:.2f}s", file=sys.stderr)


def cmd_mhs(args) -> None:
    if not args.cheating_snapshot:
        raise ConfigError(
            "multi-hop scoring reads the snapshot at the question timestamp; "
            "pass --cheating-snapshot to acknowledge the forecasting violation")
    kg = load_kg(_require(Path(args.kg), "kg"))
    reps = forecaster.load_reps(_require(Path(args.reps), "reps"))
    model = qa.load_qa_model(_require(Path(args.model), "qa-model"))
    qdir = _require(Path(args.questions), "questions")
    eps = _load_questions_dir(qdir)["ep"]
    cfg = MHSConfig(hops=args.hops, gamma=args.gamma, psi="product")
    from .encoder import encode
    ranks = []
    correct = 0
    n_entities = kg.vocab.n_entities
    results = []
    for q in eps:
        h_q = encode(q.text, model.token_vocab, model.encoders["ep"])
        psi = psi_product(reps, q.t_q, h_q)
        res = propagate(kg.snapshot(q.t_q), q.entities[0], n_entities, psi, cfg)
        hit = res.answer == q.answer
        correct += int(hit)
        results.append({"id": q.id, "answer": res.answer, "hit": bool(hit),
                        "visited": len(res.visited)})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": {"hops": cfg.hops, "gamma": cfg.gamma, "psi": cfg.psi,
                          "cheating_snapshot": True},
               "hits@1_among_visited": correct / len(eps) if eps else None,
               "n_questions": len(eps), "results": results}
    out.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    write_manifest("mhs", _cfg(args), [args.kg, args.reps, args.model, args.questions],
                   [out], Path(str(out) + ".manifest.json"))
    print(f"multi-hop scorer: {correct}/{len(eps)} answered at rank 1 "
          f"(cheating snapshot enabled)")


def cmd_data_eff(args) -> None:
    reps = forecaster.load_reps(_require(Path(args.reps), "reps"))
    train_q = _load_questions_dir(_require(Path(args.train_questions), "questions"))
    test_q = _load_questions_dir(_require(Path(args.test_questions), "questions"))
    kg = load_kg(_require(Path(args.kg), "kg"))
    families = args.families.split(",")
    train_q = {fam: qs for fam, qs in train_q.items() if fam in families}
    test_list = [q for fam in families for q in test_q[fam]]
    cfg = TrainConfig(dim=reps.dim, epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, weight_decay=3e-3, head_anchor=0.1,
                      date_shuffle=True, seed=args.seed)
    surface = list(kg.vocab.entity_names) + list(kg.vocab.timestamp_labels)
    vocab = qa.build_qa_token_vocab(train_q, surface)
    fractions = [float(x) for x in args.fractions.split(",")]
    points = evaluation.data_efficiency(train_q, test_list, reps, cfg,
                                        fractions=fractions, seed=args.seed,
                                        token_vocab=vocab)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(points, sort_keys=True, indent=1) + "\n")
    write_manifest("data-eff", _cfg(args),
                   [args.reps, args.train_questions, args.test_questions, args.kg],
                   [out], Path(str(out) + ".manifest.json"))
    for p in points:
        print(f"fraction {p['fraction']}: {p['aggregates'].get('epq_overall')}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="futureqa",
        description="Forecasting question answering over temporal knowledge graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn, sub_parser=p)
        p.add_argument("--config", help="key = value config file; flags override")
        return p

    p = add("synth", cmd_synth, help="generate the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--entities", type=int, default=30)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--duos", type=int, default=10)
    p.add_argument("--triggers", type=int, default=2)
    p.add_argument("--noise", type=int, default=1)

    p = add("ingest", cmd_ingest, help="events.tsv -> KG directory")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--date-range", help="YYYY-MM-DD:YYYY-MM-DD declared range")

    p = add("split", cmd_split, help="partition a KG by temporal boundaries")
    p.add_argument("--kg", required=True)
    p.add_argument("--out", required=True)
    for b in ("t0", "t1", "t2", "t3"):
        p.add_argument(f"--{b}", required=True,
                       help="timestamp id or ISO date label")

    p = add("train-tkg", cmd_train_tkg, help="train embeddings or the forecaster")
    p.add_argument("--kg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["static", "temporal", "forecast"],
                   default="forecast")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--window", type=int, default=4)

    p = add("infer-reps", cmd_infer_reps,
            help="precompute time-aware reps for every timestamp")
    p.add_argument("--kg", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)

    p = add("genq", cmd_genq, help="generate questions for one split")
    p.add_argument("--kg", required=True, help="full KG (absence checks, priors)")
    p.add_argument("--split-kg", required=True, help="split KG providing the facts")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--prefix", default="q")
    p.add_argument("--templates", help="template TSV; default auto-generated")
    p.add_argument("--rule-allowlist", help="file of allowed 'r1 r2' pairs")
    p.add_argument("--min-confidence", type=float, default=0.5)
    p.add_argument("--true-fraction", type=float, default=0.25)

    p = add("train-qa", cmd_train_qa, help="train the QA model per family")
    p.add_argument("--questions", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--valid-questions", help="enables best-epoch selection "
                   "for families configured to use it")
    for fam in ("ep", "yu", "fr"):
        p.add_argument(f"--{fam}-epochs", type=int, dest=f"{fam}_epochs")
        p.add_argument(f"--{fam}-lr", type=float, dest=f"{fam}_lr")
        p.add_argument(f"--{fam}-batch-size", type=int, dest=f"{fam}_batch_size")
        p.add_argument(f"--{fam}-dropout", type=float, dest=f"{fam}_dropout")
        p.add_argument(f"--{fam}-weight-decay", type=float,
                       dest=f"{fam}_weight_decay")
        p.add_argument(f"--{fam}-anchor", type=float, dest=f"{fam}_anchor")
        p.add_argument(f"--{fam}-seed", type=int, dest=f"{fam}_seed")

    p = add("eval", cmd_eval, help="evaluate a trained model on questions")
    p.add_argument("--questions", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-csv", action="store_true")

    p = add("mhs", cmd_mhs, help="multi-hop propagation diagnostic (cheating)")
    p.add_argument("--questions", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--cheating-snapshot", action="store_true")

    p = add("data-eff", cmd_data_eff, help="training-set-size sweep")
    p.add_argument("--train-questions", required=True)
    p.add_argument("--test-questions", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--families", default="ep")
    p.add_argument("--fractions", default="0.1,0.25,0.5,0.75,1.0")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-3)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, args.sub_parser)
        args.fn(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, DataError):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
