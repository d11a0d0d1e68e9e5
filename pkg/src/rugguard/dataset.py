"""Labelled dataset assembly, temporal train/test split and reproducible export."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import EmptyDataset, IoError, KeyMismatch, SchemaError
from .features import FeatureVector, design_columns, design_matrix, read_features_csv, write_features_csv
from .ingest import atomic_write_text

SCHEMA_VERSION = "rugguard-dataset/1"
TRAIN = "train"
TEST = "test"
TEMPORAL = "temporal"
EXPLICIT = "explicit"

FILES = ("features.csv", "labels.csv", "split.csv")
MANIFEST = "manifest.txt"


@dataclass(frozen=True)
class SplitPolicy:
    kind: str = TEMPORAL
    fraction: float = 0.2
    test_ids: frozenset[str] = frozenset()

    @classmethod
    def temporal(cls, fraction: float = 0.2) -> "SplitPolicy":
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"test fraction must be in [0, 1], got {fraction}")
        return cls(TEMPORAL, fraction)

    @classmethod
    def explicit(cls, test_ids: Iterable[str]) -> "SplitPolicy":
        return cls(EXPLICIT, 0.0, frozenset(test_ids))

    def describe(self) -> str:
        if self.kind == TEMPORAL:
            return f"{TEMPORAL}:{self.fraction!r}"
        return f"{EXPLICIT}:{len(self.test_ids)}"


@dataclass(frozen=True)
class Row:
    project_id: str
    features: FeatureVector
    label: int  # 1 = Dead


@dataclass(frozen=True)
class LabeledDataset:
    rows: tuple[Row, ...]
    split: Mapping[str, str]
    policy: SplitPolicy
    schema_version: str = SCHEMA_VERSION
    provenance: Mapping[str, str] = field(default_factory=dict)

    def rows_in(self, part: str) -> list[Row]:
        return [r for r in self.rows if self.split[r.project_id] == part]

    @property
    def train(self) -> list[Row]:
        return self.rows_in(TRAIN)

    @property
    def test(self) -> list[Row]:
        return self.rows_in(TEST)

    def class_balance(self) -> dict[str, dict[int, int]]:
        out = {TRAIN: {0: 0, 1: 0}, TEST: {0: 0, 1: 0}}
        for r in self.rows:
            out[self.split[r.project_id]][r.label] += 1
        return out


def temporal_order(features: Iterable[FeatureVector]) -> list[str]:
    """Project ids by (start_time, project_id)."""
    return [v.project_id for v in sorted(features, key=lambda v: (v.start_time, v.project_id))]


def build(features, labels: Mapping[str, int], policy: SplitPolicy | None = None,
          provenance: Mapping[str, str] | None = None) -> LabeledDataset:
    """Join features with 0/1 labels and assign the split.

    ``features`` may be a mapping or an iterable of ``FeatureVector``. Under the
    temporal policy the latest-starting ``round(fraction * N)`` projects form
    the test set.
    """
    policy = policy or SplitPolicy.temporal()
    if isinstance(features, Mapping):
        by_id = dict(features)
    else:
        by_id = {v.project_id: v for v in features}
    missing_labels = sorted(set(by_id) - set(labels))
    missing_features = sorted(set(labels) - set(by_id))
    if missing_labels or missing_features:
        raise KeyMismatch(missing_features, missing_labels)
    for pid, y in labels.items():
        if y not in (0, 1):
            raise ValueError(f"{pid}: label must be 0 or 1, got {y!r}")

    if policy.kind == TEMPORAL:
        order = temporal_order(by_id.values())
        n_test = math.floor(policy.fraction * len(order) + 0.5)
        test = set(order[len(order) - n_test:]) if n_test else set()
    elif policy.kind == EXPLICIT:
        unknown = sorted(policy.test_ids - set(by_id))
        if unknown:
            raise KeyMismatch(unknown, [])
        test = set(policy.test_ids)
    else:
        raise ValueError(f"unknown split policy {policy.kind!r}")

    ids = sorted(by_id)
    rows = tuple(Row(pid, by_id[pid], labels[pid]) for pid in ids)
    split = {pid: TEST if pid in test else TRAIN for pid in ids}
    return LabeledDataset(rows, split, policy, SCHEMA_VERSION, dict(provenance or {}))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def render(dataset: LabeledDataset) -> dict[str, str]:
    """File name -> exact file contents for the three data files."""
    return {
        "features.csv": write_features_csv(r.features for r in dataset.rows),
        "labels.csv": _csv(("project_id", "label"), ((r.project_id, r.label) for r in dataset.rows)),
        "split.csv": _csv(("project_id", "split"),
                          ((r.project_id, dataset.split[r.project_id]) for r in dataset.rows)),
    }


def content_digest(files: Mapping[str, str]) -> str:
    h = hashlib.sha256()
    for name in FILES:
        data = files[name].encode("utf-8")
        h.update(f"{name}\0{len(data)}\0".encode())
        h.update(data)
    return h.hexdigest()


def manifest_lines(dataset: LabeledDataset, files: Mapping[str, str], fmt: str) -> list[str]:
    balance = dataset.class_balance()
    entries = {
        "schema_version": dataset.schema_version,
        "split_policy": dataset.policy.describe(),
        "criteria_hash": dataset.provenance.get("criteria_hash", ""),
        "cutoff": dataset.provenance.get("cutoff", ""),
        "format": fmt,
        "row_count": len(dataset.rows),
        "train_rows": sum(balance[TRAIN].values()),
        "test_rows": sum(balance[TEST].values()),
        "train_positives": balance[TRAIN][1],
        "test_positives": balance[TEST][1],
    }
    for name in FILES:
        entries[f"sha256.{name}"] = sha256_text(files[name])
    entries["content_digest"] = content_digest(files)
    return [f"{k}={v}" for k, v in entries.items()]


def export(dataset: LabeledDataset, directory, fmt: str = "raw") -> dict[str, str]:
    """Write features/labels/split CSVs and ``manifest.txt``; returns the manifest entries.

    ``fmt="design"`` additionally writes ``design.csv`` (signed-log1p numerics,
    one-hot categoricals) for external model runners; it is not covered by the
    content digest because it is derived from ``features.csv``.
    """
    if not dataset.rows:
        raise EmptyDataset("refusing to export an empty dataset")
    if fmt not in ("raw", "design"):
        raise ValueError(f"unknown export format {fmt!r}")
    directory = Path(directory)
    files = render(dataset)
    for name, text in files.items():
        atomic_write_text(directory / name, text)
    if fmt == "design":
        X = design_matrix([r.features for r in dataset.rows])
        body = [[r.project_id, dataset.split[r.project_id], r.label] + [repr(float(x)) for x in xs]
                for r, xs in zip(dataset.rows, X)]
        atomic_write_text(directory / "design.csv",
                          _csv(["project_id", "split", "label"] + design_columns(), body))
    lines = manifest_lines(dataset, files, fmt)
    atomic_write_text(directory / MANIFEST, "\n".join(lines) + "\n")
    return dict(line.split("=", 1) for line in lines)


def read_manifest(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None
    out = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            k, sep, v = line.partition("=")
            if not sep:
                raise SchemaError(f"{path}: manifest line is not key=value: {line!r}")
            out[k.strip()] = v.strip()
    return out


def load(directory, verify: bool = True) -> LabeledDataset:
    """Re-import an exported dataset; with ``verify`` the manifest digest must match."""
    directory = Path(directory)
    files = {}
    for name in FILES:
        try:
            files[name] = (directory / name).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"{directory / name}: {exc.strerror or exc}") from None
    manifest = read_manifest(directory / MANIFEST)
    if verify and manifest.get("content_digest") != content_digest(files):
        raise SchemaError(f"{directory}: content digest does not match manifest")
    vectors = {v.project_id: v for v in read_features_csv(files["features.csv"])}
    labels = {r["project_id"]: int(r["label"]) for r in csv.DictReader(io.StringIO(files["labels.csv"]))}
    split = {r["project_id"]: r["split"] for r in csv.DictReader(io.StringIO(files["split.csv"]))}
    if set(vectors) != set(labels) or set(vectors) != set(split):
        raise KeyMismatch(sorted(set(labels) - set(vectors)), sorted(set(vectors) - set(labels)))
    kind, _, arg = manifest.get("split_policy", f"{EXPLICIT}:").partition(":")
    test_ids = frozenset(pid for pid, part in split.items() if part == TEST)
    policy = SplitPolicy(TEMPORAL, float(arg)) if kind == TEMPORAL else SplitPolicy.explicit(test_ids)
    rows = tuple(Row(pid, vectors[pid], labels[pid]) for pid in sorted(vectors))
    provenance = {k: manifest[k] for k in ("criteria_hash", "cutoff") if manifest.get(k)}
    return LabeledDataset(rows, split, policy, manifest.get("schema_version", SCHEMA_VERSION), provenance)
