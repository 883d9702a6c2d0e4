"""``winprop`` command line: simulate, assemble, train, score, evaluate.

Every output gets a sibling ``*.manifest.json`` recording the resolved
options, input/output digests and tool version; ``winprop replay`` re-runs a
manifest. Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .assembly import (
    CompositionPolicy,
    compose_training_set,
    label_snapshots,
    parse_training_file,
    resolve_sources,
    write_training_csv,
)
from .datastore import (
    DEFAULT_SCHEMA,
    KEY_COLUMNS,
    Quarter,
    SchemaSpec,
    load_quarter,
    outcome_path,
    parse_snapshot_file,
    read_outcomes,
    snapshot_path,
)
from .errors import (
    ConvergenceWarning,
    SchemaMismatchWarning,
    UnmatchedLeadsWarning,
    WinpropError,
)
from .features import EncoderConfig, build_design_matrix, encode, fit_vocabulary, schema_differences
from .metrics import gain_curve, report_csv, scored_rows, seller_baseline, weekly_report
from .model import TrainConfig, dumps_model, load_model, predict_batch, train
from .simgen import GeneratorConfig, generate, write_simulation

STRICT_WARNINGS = (ConvergenceWarning, SchemaMismatchWarning)


# -- helpers -------------------------------------------------------------------

def _quarter(text):
    try:
        return Quarter.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _quarter_list(text):
    return [_quarter(t) for t in text.split(",") if t.strip()]


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _jsonable(value):
    if isinstance(value, Quarter):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _resolved(args):
    skip = {"func", "config", "command"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(path, args, inputs, outputs, extra=None, started=None):
    doc = {
        "command": args.command,
        "config": _resolved(args),
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": {str(p): _digest(p) for p in outputs},
        "tool_version": __version__,
    }
    if extra:
        doc.update(extra)
    if args.timing and started is not None:
        doc["wall_time"] = time.perf_counter() - started
    _write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


def _manifest_path(output):
    return Path(f"{output}.manifest.json")


def _schema(args):
    return SchemaSpec(_names(args.categoricals), _names(args.continuous))


def _infer_schema(text, vocab):
    header = next(csv.reader(io.StringIO(text)), [])
    continuous = set(vocab.continuous_attributes) | {"seller_rating"}
    cats = [h for h in header if h not in KEY_COLUMNS and h not in continuous]
    conts = [h for h in header if h in continuous and h != "seller_rating"]
    optional = [h for h in header if h == "seller_rating"]
    if not conts:
        raise WinpropError("snapshot file has none of the model's continuous columns")
    return SchemaSpec(cats, conts, optional)


def _check_positive(parser, name, value, minimum=0.0, strict=False):
    if value is None:
        return
    if value < minimum or (strict and value == minimum):
        parser.error(f"{name} must be {'>' if strict else '>='} {minimum}, got {value}")


# -- commands --------------------------------------------------------------------

def cmd_simulate(args, parser):
    if args.leads < 1:
        parser.error("--leads must be >= 1")
    if not 0 < args.positive_rate < 1:
        parser.error("--positive-rate must be in (0, 1)")
    _check_positive(parser, "--seller-noise", args.seller_noise)
    if args.seed < 0:
        parser.error("--seed must be >= 0")
    if not args.quarters:
        parser.error("--quarters must name at least one quarter")
    if not 0 <= args.pending_fraction <= 1:
        parser.error("--pending-fraction must be in [0, 1]")
    if not 1 <= args.creation_weeks <= 13:
        parser.error("--creation-weeks must be in 1..13")
    started = time.perf_counter()
    config = GeneratorConfig(
        seed=args.seed,
        leads_per_quarter=args.leads,
        quarters=tuple(args.quarters),
        positive_rate=args.positive_rate,
        seller_rating_noise=args.seller_noise,
        pending_fraction=args.pending_fraction,
        creation_weeks=args.creation_weeks,
    )
    sim = generate(config)
    out = Path(args.out)
    files = [out / f for f in write_simulation(sim, out)]
    write_manifest(out / "simulate.manifest.json", args, [], files, {"generator": config.to_dict()}, started)
    print(f"wrote {len(files)} files to {out}")


def cmd_assemble(args, parser):
    started = time.perf_counter()
    policy = CompositionPolicy(not args.no_seasonality, not args.no_recency, tuple(args.extra_quarters))
    sources = resolve_sources(args.target, policy)
    schema = _schema(args)
    snaps, outs, inputs = {}, {}, []
    for q in sources:
        snaps[q], outs[q] = load_quarter(args.data, q, schema)
        inputs += [snapshot_path(args.data, q), outcome_path(args.data, q)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnmatchedLeadsWarning)
        ts = compose_training_set(args.target, policy, snaps, outs)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    buf = io.StringIO()
    write_training_csv(ts, buf, schema)
    _write_text(args.out, buf.getvalue())
    write_manifest(
        _manifest_path(args.out),
        args,
        inputs,
        [args.out],
        {
            "source_quarters": [str(q) for q in sources],
            "target_quarter": str(args.target),
            "rows": len(ts),
            "positives": ts.n_positive,
        },
        started,
    )
    print(f"{len(ts)} rows from {', '.join(str(q) for q in sources)} -> {args.out}")


def cmd_train(args, parser):
    _check_positive(parser, "--l2", args.l2)
    if args.max_iters < 1:
        parser.error("--max-iters must be >= 1")
    _check_positive(parser, "--tol", args.tol, strict=True)
    if args.min_category_count < 1:
        parser.error("--min-category-count must be >= 1")
    started = time.perf_counter()
    target = None
    train_manifest = _manifest_path(args.train)
    if train_manifest.exists():
        target = json.loads(train_manifest.read_text(encoding="utf-8")).get("target_quarter")
        target = Quarter.parse(target) if target else None
    with open(args.train, "rb") as fh:
        ts = parse_training_file(fh, _schema(args), target)
    enc_cfg = EncoderConfig(tuple(_names(args.interactions)), args.min_category_count)
    vocab = fit_vocabulary(ts, enc_cfg)
    matrix, labels = build_design_matrix(ts.rows, vocab)
    cfg = TrainConfig(l2=args.l2, max_iterations=args.max_iters, tolerance=args.tol, method=args.method)
    model, report = train(
        matrix, labels, cfg, vocab=vocab, source_quarters=ts.source_quarters, target_quarter=target
    )
    _write_text(args.out, dumps_model(model))
    report_path = args.report or f"{args.out}.report.json"
    _write_text(report_path, json.dumps(report.to_dict(args.timing), indent=1, sort_keys=True) + "\n")
    write_manifest(_manifest_path(args.out), args, [args.train], [args.out, report_path], None, started)
    state = "converged" if report.converged else "NOT converged"
    print(f"{state} after {report.iterations} iterations, loss {report.losses[-1]:.6f} -> {args.out}")


def cmd_score(args, parser):
    started = time.perf_counter()
    model = load_model(args.model)
    text = Path(args.snapshots).read_text(encoding="utf-8-sig")
    snaps = parse_snapshot_file(io.StringIO(text), _infer_schema(text, model.vocab))
    problems = sorted({p for s in snaps for p in schema_differences(model.vocab, s)})
    if problems:
        warnings.warn(
            "snapshots do not match the model vocabulary: "
            + "; ".join(f"{a}: {m}" for a, m in problems)
            + " (scoring with unknown attributes ignored)",
            SchemaMismatchWarning,
        )
    rows = [encode(s, model.vocab) for s in snaps]
    probs = predict_batch(model, rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lead_id", "week", "propensity"])
    for s, p in zip(snaps, probs):
        w.writerow([s.lead_id, s.week, repr(float(p))])
    _write_text(args.out, buf.getvalue())
    write_manifest(
        _manifest_path(args.out),
        args,
        [args.model, args.snapshots],
        [args.out],
        {"model_fingerprint": model.vocab.fingerprint},
        started,
    )
    print(f"scored {len(snaps)} snapshots -> {args.out}")


def _read_scores(path):
    scores = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            scores[(rec["lead_id"], int(rec["week"]))] = float(rec["propensity"])
    return scores


def cmd_evaluate(args, parser):
    started = time.perf_counter()
    if args.data and args.quarter:
        snap_file = snapshot_path(args.data, args.quarter)
        out_file = outcome_path(args.data, args.quarter)
    elif args.snapshots and args.outcomes:
        snap_file, out_file = Path(args.snapshots), Path(args.outcomes)
    else:
        parser.error("give --data with --quarter, or --snapshots with --outcomes")
    with open(snap_file, "rb") as fh:
        text = fh.read().decode("utf-8-sig")
    header = next(csv.reader(io.StringIO(text)), [])
    conts = [c for c in header if c in _names(args.continuous)]
    cats = [c for c in header if c not in KEY_COLUMNS and c not in conts and c != "seller_rating"]
    if not conts:
        raise WinpropError(f"snapshot file has none of the continuous columns {args.continuous}")
    snaps = parse_snapshot_file(io.StringIO(text), SchemaSpec(cats, conts))
    outcomes = read_outcomes(out_file)
    scores = _read_scores(args.scores)

    rows = [r for r in label_snapshots(snaps, outcomes) if (r.snapshot.lead_id, r.snapshot.week) in scores]
    if not rows:
        raise WinpropError("joining scores with outcomes produced no rows")
    model_scored = scored_rows(
        rows, [scores[(r.snapshot.lead_id, r.snapshot.week)] for r in rows], args.segment
    )
    blocks = [("model", weekly_report(model_scored, args.metric), model_scored)]
    if args.baseline == "seller":
        keep = {(r.snapshot.lead_id, r.snapshot.week) for r in rows}
        seller = [s for s in seller_baseline(snaps, outcomes, args.segment) if (s.lead_id, s.week) in keep]
        blocks.append(("seller", weekly_report(seller, args.metric, segments=blocks[0][1].segments), seller))
    if len(blocks) == 1:
        text = report_csv(blocks[0][1])
    else:
        text = report_csv(*[(name, rep) for name, rep, _ in blocks])
    _write_text(args.out, text)
    outputs = [Path(args.out)]
    if args.curves_dir:
        for name, rep, scored in blocks:
            for seg in rep.segments:
                for wk in rep.weeks:
                    group = [s for s in scored if s.segment == seg and s.week == wk]
                    if not any(s.label for s in group):
                        continue
                    path = Path(args.curves_dir) / f"gain_{name}_{seg}_week{wk:02d}.csv"
                    _write_text(path, gain_curve(group).to_csv())
                    outputs.append(path)
    write_manifest(
        _manifest_path(args.out),
        args,
        [args.scores, snap_file, out_file],
        outputs,
        {"rows": len(rows)},
        started,
    )
    print(f"evaluated {len(rows)} scored rows -> {args.out}")


def cmd_replay(args, parser):
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = [doc["command"]]
    actions = {a.dest: a for a in SUBPARSERS[doc["command"]]._actions}
    for key, value in doc["config"].items():
        action = actions.get(key)
        if action is None or value is None:
            continue
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif isinstance(value, list):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return main(argv)


# -- parser ----------------------------------------------------------------------

SUBPARSERS: dict = {}


def _common(p):
    p.add_argument("--config", help="JSON file of option defaults; explicit flags win")
    p.add_argument("--strict", action="store_true", help="treat warnings as errors")
    p.add_argument("--timing", action="store_true", help="record wall time in manifests and reports")


def _schema_flags(p):
    p.add_argument("--categoricals", default=",".join(DEFAULT_SCHEMA.categoricals))
    p.add_argument("--continuous", default=",".join(DEFAULT_SCHEMA.continuous))


def build_parser():
    parser = argparse.ArgumentParser(prog="winprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"winprop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic pipeline with known ground truth")
    _common(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--leads", type=int, default=1000, help="leads per quarter")
    p.add_argument(
        "--quarters", type=_quarter_list, default=_quarter_list("2013Q1,2013Q2,2013Q3,2013Q4,2014Q1,2014Q2")
    )
    p.add_argument("--positive-rate", type=float, default=0.25)
    p.add_argument("--seller-noise", type=float, default=0.3)
    p.add_argument("--pending-fraction", type=float, default=0.5)
    p.add_argument("--creation-weeks", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assemble", help="build the training set for a target quarter")
    _common(p)
    _schema_flags(p)
    p.add_argument("--target", type=_quarter, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-seasonality", action="store_true")
    p.add_argument("--no-recency", action="store_true")
    p.add_argument("--extra-quarters", type=_quarter_list, default=[])
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("train", help="fit the logistic scorer")
    _common(p)
    _schema_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--l2", type=float, default=None, help="default 1/n")
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--method", choices=("lbfgs", "gd"), default="lbfgs")
    p.add_argument("--interactions", default=",".join(EncoderConfig().interaction_attributes))
    p.add_argument("--min-category-count", type=int, default=5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="write win propensities for snapshots")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="weekly gain/AUC report by segment")
    _common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--data")
    p.add_argument("--quarter", type=_quarter)
    p.add_argument("--snapshots")
    p.add_argument("--outcomes")
    p.add_argument("--continuous", default=",".join(DEFAULT_SCHEMA.continuous))
    p.add_argument("--segment", default="geography")
    p.add_argument("--metric", choices=("gain", "auc"), default="gain")
    p.add_argument("--baseline", choices=("seller",))
    p.add_argument("--curves-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)

    SUBPARSERS.update(sub.choices)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config file {args.config}: {exc}")
        sp = SUBPARSERS[args.command]
        known = {a.dest: a for a in sp._actions}
        unknown = sorted(set(defaults) - set(known))
        if unknown:
            parser.error(f"unknown keys in config file: {unknown}")
        converted = {}
        for key, value in defaults.items():
            action = known[key]
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            converted[key] = value
        sp.set_defaults(**converted)
        try:
            args = parser.parse_args(argv)
        finally:
            sp.set_defaults(**{k: known[k].default for k in converted})
    return args


def main(argv=None):
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        strict = getattr(args, "strict", False)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rc = args.func(args, parser)
    except SystemExit as exc:
        # argparse reports usage errors (and --help) this way
        return exc.code if isinstance(exc.code, int) else 2
    except WinpropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = rc if isinstance(rc, int) else 0
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
        if strict and issubclass(w.category, STRICT_WARNINGS):
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
