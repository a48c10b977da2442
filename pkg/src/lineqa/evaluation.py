"""Correlation metrics and the pooled evaluation protocol.

LCC is the Pearson linear correlation; SROCC is the Spearman rank-order
correlation computed as Pearson over average ranks (exact under ties, unlike
the 1 - 6*sum(d^2)/n(n^2-1) shortcut). Evaluation pools every document into
one LCC and one SROCC; per-document averaging is deliberately not offered.
Ground truth for the public benchmarks is the mean recognition accuracy over
OCR engines, read from a CSV with columns id,engine,accuracy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateError, ParameterError


def rank_average(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    a = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ParameterError(f"need at least 2 points, got {a.size}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ParameterError("inputs must be finite")
    return a, b


def pearson_lcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson linear correlation coefficient."""
    a, b = _check_pair(x, y)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise DegenerateError("constant input has no defined correlation")
    return float((a * b).sum() / denom)


def spearman_srocc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank-order correlation (average ranks under ties)."""
    a, b = _check_pair(x, y)
    try:
        return pearson_lcc(rank_average(a), rank_average(b))
    except DegenerateError:
        raise DegenerateError("all-tied input has no defined rank correlation") from None


@dataclass(frozen=True)
class EvalPair:
    id: str
    predicted: float
    ground_truth: float


@dataclass(frozen=True)
class EvalReport:
    n: int
    lcc: float
    srocc: float


def evaluate(pairs: Sequence[EvalPair]) -> EvalReport:
    """One pooled LCC and SROCC over all documents."""
    if len(pairs) < 2:
        raise ParameterError(f"need at least 2 documents, got {len(pairs)}")
    pred = [p.predicted for p in pairs]
    gt = [p.ground_truth for p in pairs]
    return EvalReport(n=len(pairs), lcc=pearson_lcc(pred, gt), srocc=spearman_srocc(pred, gt))


def average_ground_truth(per_engine: Mapping[str, Sequence[float]]) -> list[float]:
    """Element-wise mean accuracy across engines (aligned document order)."""
    if not per_engine:
        raise ParameterError("need at least one engine")
    lengths = {name: len(vals) for name, vals in per_engine.items()}
    if len(set(lengths.values())) != 1:
        raise DataError(f"engines cover different document counts: {lengths}")
    stacked = np.asarray([np.asarray(v, dtype=np.float64) for v in per_engine.values()])
    return [float(v) for v in stacked.mean(axis=0)]


# ---------------------------------------------------------------------------
# CSV interfaces


def load_predictions_csv(path: str | Path) -> dict[str, float]:
    """Read a predictions CSV with header ``id,score``."""
    rows = _read_csv(path, ("id", "score"))
    out: dict[str, float] = {}
    for row in rows:
        doc = row["id"]
        if doc in out:
            raise DataError(f"{path}: duplicate prediction for id {doc!r}")
        out[doc] = _parse_float(row["score"], path, "score")
    if not out:
        raise DataError(f"{path}: no prediction rows")
    return out


def load_ground_truth_csv(path: str | Path) -> dict[str, float]:
    """Read ``id,engine,accuracy`` rows and average accuracy per id.

    Every engine must cover exactly the same document set.
    """
    rows = _read_csv(path, ("id", "engine", "accuracy"))
    per_engine: dict[str, dict[str, float]] = {}
    for row in rows:
        eng = per_engine.setdefault(row["engine"], {})
        if row["id"] in eng:
            raise DataError(f"{path}: duplicate ({row['id']!r}, {row['engine']!r})")
        eng[row["id"]] = _parse_float(row["accuracy"], path, "accuracy")
    if not per_engine:
        raise DataError(f"{path}: no ground-truth rows")
    ids = None
    for name, docs in per_engine.items():
        if ids is None:
            ids = set(docs)
        elif set(docs) != ids:
            raise DataError(f"{path}: engine {name!r} covers a different document set")
    ordered = sorted(ids)
    means = average_ground_truth({name: [docs[i] for i in ordered] for name, docs in per_engine.items()})
    return dict(zip(ordered, means))


def pairs_from_files(pred_path: str | Path, gt_path: str | Path) -> list[EvalPair]:
    """Join predictions with averaged ground truth on document id."""
    pred = load_predictions_csv(pred_path)
    gt = load_ground_truth_csv(gt_path)
    missing = sorted(set(gt) - set(pred)) + sorted(set(pred) - set(gt))
    if missing:
        raise DataError(f"ids not shared by both files: {missing[:5]}")
    return [EvalPair(i, pred[i], gt[i]) for i in sorted(gt)]


def _read_csv(path: str | Path, columns: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != list(columns):
                raise DataError(f"{path}: expected header {','.join(columns)}, got {reader.fieldnames}")
            return [dict(row) for row in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _parse_float(text: str, path, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"{path}: bad {column} value {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{path}: non-finite {column} value {text!r}")
    return value
