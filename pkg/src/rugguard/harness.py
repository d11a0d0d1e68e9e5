"""Model evaluation harness: built-in baseline, external prediction files and reports.

External models (TabPFN, XGBoost, LightGBM, SVM, ...) are scored elsewhere and
hand back a ``project_id,score`` CSV covering exactly the test split.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import LabeledDataset, Row
from .errors import CoverageError, IoError, ParseError, RangeError, SchemaError, SchemaMismatch
from .features import design_columns, design_matrix
from .ingest import atomic_write_text
from .logreg import LogisticModel, train_logreg
from .metrics import REPORT_FIELDS, MetricsReport, metrics_report, pr_curve, roc_curve

BASELINE_NAME = "logistic_regression"


@dataclass(frozen=True)
class Predictions:
    model_name: str
    scores: Mapping[str, float]
    threshold: float = 0.5

    def __post_init__(self):
        for pid, s in self.scores.items():
            if not (isinstance(s, float) and 0.0 <= s <= 1.0):
                raise RangeError(f"{self.model_name}: score for {pid} not a probability: {s!r}")


def fit_baseline(dataset: LabeledDataset, l2_lambda: float = 1e-2, tol: float = 1e-8,
                 max_iters: int = 10000, transform: str = "log1p") -> LogisticModel:
    """Train the logistic baseline on the train split only."""
    rows = dataset.train
    X = design_matrix([r.features for r in rows], transform)
    y = np.array([r.label for r in rows], dtype=float)
    return train_logreg(X, y, l2_lambda, tol, max_iters, design_columns(), transform)


def predict(model: LogisticModel, rows: Sequence[Row], model_name: str = BASELINE_NAME,
            threshold: float = 0.5) -> Predictions:
    if model.columns and tuple(model.columns) != tuple(design_columns()):
        raise SchemaMismatch("model was trained on a different feature schema")
    X = design_matrix([r.features for r in rows], model.transform)
    p = model.predict_proba(X)
    return Predictions(model_name, {r.project_id: float(s) for r, s in zip(rows, p)}, threshold)


def write_predictions(pred: Predictions, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("project_id", "score"))
    for pid in sorted(pred.scores):
        w.writerow((pid, repr(pred.scores[pid])))
    atomic_write_text(path, buf.getvalue())


def load_external_predictions(path, test_ids, model_name: str | None = None,
                              threshold: float = 0.5) -> Predictions:
    """Read a ``project_id,score`` file and check it covers exactly ``test_ids``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames or not {"project_id", "score"} <= set(reader.fieldnames):
        raise SchemaError(f"{path}: expected columns project_id,score; got {reader.fieldnames}")
    scores: dict[str, float] = {}
    for lineno, row in enumerate(reader, start=2):
        pid = row["project_id"]
        if pid in scores:
            raise ParseError(lineno, f"duplicate project_id {pid!r}", str(path))
        try:
            s = float(row["score"])
        except (TypeError, ValueError):
            raise ParseError(lineno, f"score is not a number: {row['score']!r}", str(path)) from None
        if not (math.isfinite(s) and 0.0 <= s <= 1.0):
            raise RangeError(f"{path}:{lineno}: score {row['score']} for {pid} outside [0, 1]")
        scores[pid] = s
    expected = set(test_ids)
    missing = sorted(expected - set(scores))
    extra = sorted(set(scores) - expected)
    if missing or extra:
        raise CoverageError(missing, extra)
    return Predictions(model_name or path.stem, scores, threshold)


def evaluate(pred: Predictions, dataset: LabeledDataset) -> MetricsReport:
    test = dataset.test
    ids = {r.project_id for r in test}
    missing = sorted(ids - set(pred.scores))
    extra = sorted(set(pred.scores) - ids)
    if missing or extra:
        raise CoverageError(missing, extra)
    scores = [pred.scores[r.project_id] for r in test]
    labels = [r.label for r in test]
    return metrics_report(pred.model_name, scores, labels, pred.threshold)


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def format_report(report: MetricsReport) -> str:
    return "".join(f"{k}={_fmt(getattr(report, k))}\n" for k in REPORT_FIELDS)


def parse_report(text: str) -> MetricsReport:
    values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    kwargs = {}
    for name, f in MetricsReport.__dataclass_fields__.items():
        raw = values[name]
        kwargs[name] = raw if name == "model" else (int(raw) if f.type == "int" else float(raw))
    return MetricsReport(**kwargs)


def comparison_table(reports: Sequence[MetricsReport]) -> str:
    """CSV with one row per model: headline columns first, then error metrics and confusion."""
    cols = ("model", "accuracy", "f1", "roc_auc", "pr_auc", "mse", "mae", "brier", "logloss",
            "tn", "fp", "fn", "tp")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in reports:
        w.writerow([r.model] + [f"{getattr(r, c):.6f}" if isinstance(getattr(r, c), float)
                                else getattr(r, c) for c in cols[1:]])
    return buf.getvalue()


def curve_csvs(pred: Predictions, dataset: LabeledDataset) -> dict[str, str]:
    test = dataset.test
    s = [pred.scores[r.project_id] for r in test]
    y = [r.label for r in test]
    out = {}
    for name, pts, header in (("roc", roc_curve(s, y), ("threshold", "fpr", "tpr")),
                              ("pr", pr_curve(s, y), ("threshold", "recall", "precision"))):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([repr(float(v)) for v in p] for p in pts)
        out[name] = buf.getvalue()
    return out


def write_report(report: MetricsReport, directory, pred: Predictions | None = None,
                 dataset: LabeledDataset | None = None) -> Path:
    directory = Path(directory)
    path = directory / f"{report.model}.metrics.txt"
    atomic_write_text(path, format_report(report))
    if pred is not None and dataset is not None:
        for name, text in curve_csvs(pred, dataset).items():
            atomic_write_text(directory / f"{report.model}.{name}.csv", text)
    return path


def load_reports(directory) -> list[MetricsReport]:
    directory = Path(directory)
    if not directory.is_dir():
        raise IoError(f"{directory}: no such directory")
    return [parse_report(p.read_text(encoding="utf-8"))
            for p in sorted(directory.glob("*.metrics.txt"))]
