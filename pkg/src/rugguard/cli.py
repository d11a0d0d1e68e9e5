"""``rugguard`` command line: simulate, ingest, label, extract, split, train, evaluate, report, pipeline.

Stages communicate only through files. Every stage writes a key=value run
manifest next to its output recording the resolved configuration plus
SHA-256 digests of its inputs and artifacts; paths in manifests are relative,
so identical runs in different directories produce identical manifests.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

from . import dataset as ds
from . import features as feat
from . import harness
from .errors import ConfigError, IoError, RugguardError
from .ingest import atomic_write_text, load_traces, trace_files, write_trace
from .labeler import DeadTokenCriteria, LabelRecord, classify, read_labels_csv, write_labels_csv
from .synthgen import GeneratorConfig, generate, write_ground_truth_csv

log = logging.getLogger("rugguard")

RUN_MANIFEST = "run_manifest.txt"


# --- small file helpers --------------------------------------------------------

def read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None


def read_flat_config(path) -> dict[str, str]:
    """Flat ``key = value`` file (``#`` comments; a TOML subset without tables)."""
    out = {}
    for lineno, line in enumerate(read_text(path).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or line.startswith("["):
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip().strip('"').strip("'")
    return out


def file_digest(path) -> str:
    path = Path(path)
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(str(p.relative_to(path)).encode() + b"\0")
            h.update(hashlib.sha256(p.read_bytes()).digest())
        return h.hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(path, command: str, config: dict, inputs=(), artifacts=()) -> None:
    base = Path(path).parent
    lines = [f"command={command}"]
    lines += [f"config.{k}={config[k]}" for k in sorted(config)]
    for kind, paths in (("input", inputs), ("artifact", artifacts)):
        for p in paths:
            rel = os.path.relpath(p, base)
            lines.append(f"{kind}.{rel}={file_digest(p)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest")


def _sidecar_value(path, key: str) -> str:
    side = _sidecar(path)
    if not side.exists():
        return ""
    for line in side.read_text(encoding="utf-8").splitlines():
        k, _, v = line.partition("=")
        if k == key:
            return v
    return ""


# --- stages ----------------------------------------------------------------------

def stage_simulate(out, seed: int, n: int, rug_fraction: float, hard: bool = False) -> list[Path]:
    config = GeneratorConfig(seed=seed, n_projects=n, rug_fraction=rug_fraction, hard_mode=hard)
    out = Path(out)
    samples = generate(config)
    paths = [write_trace(trace, out) for trace, _ in samples]
    gt = out / "ground_truth.csv"
    atomic_write_text(gt, write_ground_truth_csv(truth for _, truth in samples))
    write_manifest(out / RUN_MANIFEST, "simulate",
                   {"seed": seed, "n": n, "rug_fraction": rug_fraction, "hard": hard},
                   artifacts=paths + [gt])
    log.info("simulated %d traces into %s", len(paths), out)
    return paths


def stage_ingest(src, out, order_tolerance: int = 0) -> list[Path]:
    traces = load_traces(src, order_tolerance)
    paths = [write_trace(t, out) for t in traces]
    write_manifest(Path(out) / RUN_MANIFEST, "ingest", {"order_tolerance": order_tolerance},
                   inputs=trace_files(src), artifacts=paths)
    return paths


def stage_label(traces_dir, out, criteria: DeadTokenCriteria) -> dict[str, LabelRecord]:
    files = trace_files(traces_dir)
    records = {}
    for t in load_traces(traces_dir):
        records[t.project_id] = LabelRecord.from_verdict(classify(t, criteria))
    atomic_write_text(out, write_labels_csv(records.values()))
    cfg = {f"criteria.{line.split(' = ')[0]}": line.split(" = ")[1] for line in criteria.as_lines()}
    cfg["criteria_hash"] = criteria.digest()
    write_manifest(_sidecar(out), "label", cfg, inputs=files, artifacts=[out])
    dead = sum(r.is_dead for r in records.values())
    log.info("labelled %d traces: %d dead, %d alive", len(records), dead, len(records) - dead)
    return records


def parse_cutoff_mode(text: str) -> tuple[str, float | None]:
    mode, _, arg = text.partition(":")
    if mode == feat.PRERUG and not arg:
        return mode, None
    if mode == feat.FIXED_AGE and arg:
        try:
            return mode, float(arg)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"cutoff must be 'prerug' or 'fixed:<days>', got {text!r}")


def stage_extract(traces_dir, labels_path, out, cutoff: str = feat.PRERUG, margin_hours: int = 0,
                  audit_trials: int = 0, seed: int = 0) -> list[feat.FeatureVector]:
    mode, age = parse_cutoff_mode(cutoff)
    labels = read_labels_csv(read_text(labels_path))
    files = trace_files(traces_dir)
    vectors = []
    for t in load_traces(traces_dir):
        rec = labels.get(t.project_id)
        if rec is None:
            raise ConfigError(f"{labels_path}: no label for {t.project_id}")
        c = feat.resolve_cutoff(t, mode, rugpull_time=rec.rugpull_time, death_onset=rec.death_onset,
                                safety_margin_hours=margin_hours, age_days=age)
        vectors.append(feat.extract(t, c))
        if audit_trials:
            feat.leakage_audit(t, c, audit_trials, seed=seed)
    atomic_write_text(out, feat.write_features_csv(vectors))
    desc = f"{cutoff}:margin={margin_hours}h"
    write_manifest(_sidecar(out), "extract",
                   {"cutoff": desc, "audit_trials": audit_trials, "audit_seed": seed},
                   inputs=files + [Path(labels_path)], artifacts=[out])
    return vectors


def stage_split(features_path, labels_path, out, policy: str = ds.TEMPORAL,
                fraction: float = 0.2, test_ids_path=None, fmt: str = "raw") -> ds.LabeledDataset:
    vectors = feat.read_features_csv(read_text(features_path))
    labels = {pid: int(r.is_dead) for pid, r in read_labels_csv(read_text(labels_path)).items()}
    if policy == ds.TEMPORAL:
        split_policy = ds.SplitPolicy.temporal(fraction)
    else:
        if not test_ids_path:
            raise ConfigError("explicit split needs --test-ids")
        ids = [line.strip() for line in read_text(test_ids_path).splitlines() if line.strip()]
        split_policy = ds.SplitPolicy.explicit(ids)
    provenance = {
        "criteria_hash": _sidecar_value(labels_path, "config.criteria_hash"),
        "cutoff": _sidecar_value(features_path, "config.cutoff"),
    }
    dataset = ds.build(vectors, labels, split_policy, provenance)
    manifest = ds.export(dataset, out, fmt)
    bal = dataset.class_balance()
    log.info("split: train %s test %s (label counts)", bal[ds.TRAIN], bal[ds.TEST])
    write_manifest(Path(out) / RUN_MANIFEST, "split",
                   {"policy": split_policy.describe(), "format": fmt,
                    "content_digest": manifest["content_digest"]},
                   inputs=[Path(features_path), Path(labels_path)],
                   artifacts=[Path(out) / n for n in ds.FILES])
    return dataset


def stage_train(dataset_dir, out, l2: float = 1e-2, tol: float = 1e-8, max_iters: int = 10000,
                transform: str = "log1p", name: str = harness.BASELINE_NAME) -> Path:
    dataset = ds.load(dataset_dir)
    model = harness.fit_baseline(dataset, l2, tol, max_iters, transform)
    out = Path(out)
    model_path = out / f"{name}.json"
    pred_path = out / f"{name}.predictions.csv"
    atomic_write_text(model_path, model.to_json())
    harness.write_predictions(harness.predict(model, dataset.test, name), pred_path)
    write_manifest(out / f"{name}.manifest", "train",
                   {"l2": l2, "tol": tol, "max_iters": max_iters, "transform": transform,
                    "iterations": model.iterations, "converged": model.converged},
                   inputs=[Path(dataset_dir) / n for n in ds.FILES],
                   artifacts=[model_path, pred_path])
    log.info("trained %s: %d iterations, converged=%s", name, model.iterations, model.converged)
    return pred_path


def stage_evaluate(prediction_paths, dataset_dir, report_dir, threshold: float = 0.5):
    dataset = ds.load(dataset_dir)
    test_ids = [r.project_id for r in dataset.test]
    reports = []
    written = []
    for p in prediction_paths:
        name = Path(p).name.removesuffix(".csv").removesuffix(".predictions")
        pred = harness.load_external_predictions(p, test_ids, name, threshold)
        report = harness.evaluate(pred, dataset)
        written.append(harness.write_report(report, report_dir, pred, dataset))
        reports.append(report)
    table = Path(report_dir) / "comparison.csv"
    atomic_write_text(table, harness.comparison_table(harness.load_reports(report_dir)))
    write_manifest(Path(report_dir) / RUN_MANIFEST, "evaluate", {"threshold": threshold},
                   inputs=[Path(p) for p in prediction_paths] + [Path(dataset_dir) / n for n in ds.FILES],
                   artifacts=written + [table])
    return reports


def stage_report(report_dir, dataset_dir=None, out=None) -> str:
    text = harness.comparison_table(harness.load_reports(report_dir))
    if dataset_dir:
        dataset = ds.load(dataset_dir)
        vectors = [r.features for r in dataset.rows]
        stats = feat.descriptive_stats(vectors)
        lines = ["feature,mean,std,median,min,max"]
        lines += [f"{k},{s.mean:.6g},{s.std:.6g},{s.median:.6g},{s.min:.6g},{s.max:.6g}"
                  for k, s in stats.items()]
        names = ("transaction_count", "tweet_volume_total", "google_hits")
        try:
            corr = feat.correlation_matrix(vectors, names)
            lines.append("")
            lines.append("correlation," + ",".join(names))
            lines += [f"{n}," + ",".join(f"{v:.3f}" for v in row) for n, row in zip(names, corr)]
        except RugguardError as exc:
            lines.append(f"# correlations unavailable: {exc}")
        text += "\n" + "\n".join(lines) + "\n"
    if out:
        atomic_write_text(out, text)
    return text


def stage_pipeline(out, seed: int, n: int, rug_fraction: float = 0.59, fraction: float = 0.2,
                   margin_hours: int = 0, hard: bool = False, l2: float = 1e-2,
                   audit_trials: int = 1, criteria: DeadTokenCriteria | None = None):
    out = Path(out)
    criteria = criteria or DeadTokenCriteria()
    corpus = out / "corpus"
    stage_simulate(corpus, seed, n, rug_fraction, hard)
    stage_label(corpus, out / "labels.csv", criteria)
    stage_extract(corpus, out / "labels.csv", out / "features.csv", feat.PRERUG, margin_hours,
                  audit_trials, seed)
    stage_split(out / "features.csv", out / "labels.csv", out / "dataset", ds.TEMPORAL, fraction)
    pred = stage_train(out / "dataset", out / "models", l2)
    reports = stage_evaluate([pred], out / "dataset", out / "reports")
    report_txt = stage_report(out / "reports", out / "dataset", out / "reports" / "summary.csv")
    artifacts = [out / "labels.csv", out / "features.csv", out / "dataset", out / "models",
                 out / "reports" / "comparison.csv"]
    artifacts += [out / "reports" / f"{r.model}.metrics.txt" for r in reports]
    write_manifest(out / RUN_MANIFEST, "pipeline",
                   {"seed": seed, "n": n, "rug_fraction": rug_fraction, "fraction": fraction,
                    "margin_hours": margin_hours, "hard": hard, "l2": l2,
                    "audit_trials": audit_trials, "criteria_hash": criteria.digest()},
                   inputs=[corpus], artifacts=artifacts)
    return reports, report_txt


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rugguard", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key=value file providing defaults for flags")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a seeded synthetic corpus")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--rug-fraction", type=float, default=0.59)
    s.add_argument("--hard", action="store_true", help="overlap class distributions")
    s.add_argument("--out", required=True)

    s = sub.add_parser("ingest", help="validate and normalise trace files")
    s.add_argument("src")
    s.add_argument("--out", required=True)
    s.add_argument("--order-tolerance", type=int, default=0,
                   help="seconds of timestamp regression tolerated (re-sorted with a warning)")

    s = sub.add_parser("label", help="apply the dead-token criteria")
    s.add_argument("traces")
    s.add_argument("--criteria", help="flat key=value criteria file")
    s.add_argument("--out", required=True)

    s = sub.add_parser("extract", help="causal feature extraction")
    s.add_argument("traces")
    s.add_argument("labels")
    s.add_argument("--cutoff", default="prerug", help="prerug | fixed:<days>")
    s.add_argument("--margin-hours", type=int, default=0)
    s.add_argument("--audit", type=int, default=0, metavar="TRIALS",
                   help="leakage-audit each trace with this many random post-cutoff mutations")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("split", help="build the labelled dataset and train/test split")
    s.add_argument("features")
    s.add_argument("labels")
    s.add_argument("--policy", choices=(ds.TEMPORAL, ds.EXPLICIT), default=ds.TEMPORAL)
    s.add_argument("--fraction", type=float, default=0.2)
    s.add_argument("--test-ids", help="file with one test project id per line (explicit policy)")
    s.add_argument("--format", choices=("raw", "design"), default="raw")
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="fit the logistic-regression baseline")
    s.add_argument("--dataset", required=True)
    s.add_argument("--l2", type=float, default=1e-2)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iters", type=int, default=10000)
    s.add_argument("--transform", choices=("log1p", "raw"), default="log1p")
    s.add_argument("--out", required=True)

    s = sub.add_parser("evaluate", help="score prediction files against the test split")
    s.add_argument("--predictions", action="append", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--report", required=True)

    s = sub.add_parser("report", help="print the model comparison table")
    s.add_argument("--report", required=True)
    s.add_argument("--dataset", help="also print descriptive statistics and correlations")
    s.add_argument("--out")

    s = sub.add_parser("pipeline", help="simulate -> label -> extract -> split -> train -> evaluate")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--rug-fraction", type=float, default=0.59)
    s.add_argument("--fraction", type=float, default=0.2)
    s.add_argument("--margin-hours", type=int, default=0)
    s.add_argument("--hard", action="store_true")
    s.add_argument("--l2", type=float, default=1e-2)
    s.add_argument("--audit", type=int, default=1, metavar="TRIALS")
    s.add_argument("--criteria")
    s.add_argument("--out", default="rugguard-run")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_flat_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub_action.choices), None)
    if command is None:
        return
    subparser = sub_action.choices[command]
    dests = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = dests.get(key)
        if action is None:
            parser.error(f"config key {key!r} is not an option of {command!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes")
        else:
            defaults[key] = action.type(raw) if action.type else raw
        action.required = False
    subparser.set_defaults(**defaults)


def _criteria(path) -> DeadTokenCriteria:
    return DeadTokenCriteria.from_mapping(read_flat_config(path)) if path else DeadTokenCriteria()


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get("RUGGUARD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        cmd = args.command
        if cmd == "simulate":
            stage_simulate(args.out, args.seed, args.n, args.rug_fraction, args.hard)
        elif cmd == "ingest":
            stage_ingest(args.src, args.out, args.order_tolerance)
        elif cmd == "label":
            stage_label(args.traces, args.out, _criteria(args.criteria))
        elif cmd == "extract":
            try:
                parse_cutoff_mode(args.cutoff)
            except argparse.ArgumentTypeError as exc:
                parser.error(str(exc))
            stage_extract(args.traces, args.labels, args.out, args.cutoff, args.margin_hours,
                          args.audit, args.seed)
        elif cmd == "split":
            stage_split(args.features, args.labels, args.out, args.policy, args.fraction,
                        args.test_ids, args.format)
        elif cmd == "train":
            print(stage_train(args.dataset, args.out, args.l2, args.tol, args.max_iters, args.transform))
        elif cmd == "evaluate":
            for r in stage_evaluate(args.predictions, args.dataset, args.report, args.threshold):
                print(harness.format_report(r), end="")
        elif cmd == "report":
            print(stage_report(args.report, args.dataset, args.out), end="")
        elif cmd == "pipeline":
            reports, _ = stage_pipeline(args.out, args.seed, args.n, args.rug_fraction, args.fraction,
                                        args.margin_hours, args.hard, args.l2, args.audit,
                                        _criteria(args.criteria))
            for r in reports:
                print(harness.format_report(r), end="")
    except RugguardError as exc:
        print(f"rugguard: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


def main() -> None:
    sys.exit(run())
