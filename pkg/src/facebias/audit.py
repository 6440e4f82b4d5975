"""Per-demographic-cell metrics over prediction logs.

A prediction log is a list of :class:`LogEntry`.  Cells are formed by binning
each entry's dataset record along one or more axes (age group, gender, ITA
class, ...) and the metric is the mean per-sample score inside each cell.
Sums use :func:`math.fsum`, so results do not depend on entry order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import AGEDIFF3, AGE5, GENDER, ITA5, BinningScheme, Categorical, Dataset, bin_agediff, bin_ita
from .diversity import attribute_value

TASKS = ("classification", "age_regression", "verification")
RELATIONSHIPS = ("B-B", "S-S", "S-B", "M-S", "M-D", "F-S", "F-D")
AGEDIFF_LABELS = (*AGEDIFF3.labels, ">30")
N_AGES = 101


class AuditError(ValueError):
    pass


def expected_age(p) -> float:
    """Mean of a distribution over ages 0..100."""
    p = np.asarray(p, dtype=float)
    if p.shape != (N_AGES,):
        raise ValueError(f"expected a probability vector over {N_AGES} ages, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise ValueError("not a valid probability vector")
    return math.fsum(p * np.arange(N_AGES))


def mae(predictions, targets) -> float:
    pred = np.asarray(predictions, dtype=float)
    targ = np.asarray(targets, dtype=float)
    if pred.shape != targ.shape or pred.ndim != 1:
        raise ValueError(f"predictions and targets must be 1-D and equal length, got {pred.shape} vs {targ.shape}")
    if pred.size == 0:
        raise ValueError("MAE of an empty list")
    return math.fsum(np.abs(pred - targ)) / pred.size


def accuracy(predicted, target) -> float:
    pred, targ = list(predicted), list(target)
    if len(pred) != len(targ):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(targ)} targets")
    if not pred:
        raise ValueError("accuracy of an empty list")
    return sum(a == b for a, b in zip(pred, targ)) / len(pred)


# ---------------------------------------------------------------------------
# prediction logs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogEntry:
    record_id: str
    task: str
    predicted: object
    target: object
    relationship: str | None = None
    age_difference: float | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise AuditError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == "age_regression" and not np.isscalar(self.predicted):
            object.__setattr__(self, "predicted", tuple(float(x) for x in self.predicted))
        if self.task == "verification":
            if self.relationship not in RELATIONSHIPS:
                raise AuditError(f"{self.record_id}: relationship {self.relationship!r} not in {RELATIONSHIPS}")
            if self.age_difference is None or not self.age_difference >= 0:
                raise AuditError(f"{self.record_id}: verification entries need age_difference >= 0")
            if not isinstance(self.predicted, (bool, np.bool_)) or not isinstance(self.target, (bool, np.bool_)):
                raise AuditError(f"{self.record_id}: verification predictions and targets must be booleans")

    @property
    def predicted_value(self):
        """Scalar prediction; age distributions are decoded to their expected age."""
        if self.task == "age_regression" and isinstance(self.predicted, tuple):
            return expected_age(self.predicted)
        return self.predicted

    def score(self, metric: str) -> float:
        if metric == "accuracy":
            if self.task == "age_regression":
                raise AuditError(f"{self.record_id}: accuracy requested for an age_regression entry")
            return float(self.predicted_value == self.target)
        if metric == "mae":
            if self.task != "age_regression":
                raise AuditError(f"{self.record_id}: mae requested for a {self.task} entry")
            return abs(float(self.predicted_value) - float(self.target))
        raise AuditError(f"unknown metric {metric!r}")

    def to_dict(self) -> dict:
        d = {"id": self.record_id, "task": self.task, "predicted": self.predicted, "target": self.target}
        if self.relationship is not None:
            d["relationship"] = self.relationship
        if self.age_difference is not None:
            d["age_difference"] = self.age_difference
        if isinstance(d["predicted"], tuple):
            d["predicted"] = list(d["predicted"])
        return d


class PredictionLog(list):
    """List of :class:`LogEntry` with a single task kind."""

    def __init__(self, entries: Iterable[LogEntry] = ()):
        super().__init__(entries)
        kinds = {e.task for e in self}
        if len(kinds) > 1:
            raise AuditError(f"mixed task kinds in one log: {sorted(kinds)}")

    @property
    def task(self) -> str | None:
        return self[0].task if self else None

    @classmethod
    def from_jsonl(cls, path) -> "PredictionLog":
        entries = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    entries.append(
                        LogEntry(
                            str(d["id"]),
                            d["task"],
                            d["predicted"],
                            d["target"],
                            d.get("relationship"),
                            d.get("age_difference"),
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise AuditError(f"{path}:{lineno}: {exc}") from None
        return cls(entries)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self)


# ---------------------------------------------------------------------------
# grouped tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Axis:
    """A slicing axis: attribute name plus the scheme that bins it."""

    name: str
    scheme: BinningScheme | Categorical

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.scheme.labels)

    def index(self, value) -> int:
        if isinstance(self.scheme, BinningScheme) and self.scheme.kind == "ita5":
            return bin_ita(value)
        return self.scheme.index(value)


def axis(name: str, scheme: BinningScheme | Categorical | None = None) -> Axis:
    if scheme is None:
        try:
            scheme = {"age": AGE5, "gender": GENDER, "ita": ITA5}[name]
        except KeyError:
            raise AuditError(f"no default binning for {name!r}; pass a scheme") from None
    return Axis(name, scheme)


@dataclass
class GroupedMetricTable:
    axes: list[tuple[str, tuple[str, ...]]]
    cells: dict[tuple[int, ...], tuple[float | None, int]]
    overall: tuple[float | None, int]
    metric: str = "accuracy"

    def value(self, *key) -> float | None:
        return self.cells[tuple(key)][0]

    def support(self, *key) -> int:
        return self.cells[tuple(key)][1]

    def nonempty(self) -> dict[tuple[int, ...], float]:
        return {k: v for k, (v, n) in self.cells.items() if n > 0}

    def column_labels(self) -> list[str]:
        """Flattened cell labels in row-major order, e.g. ``F: 0-18``."""
        return [": ".join(lbl[i] for lbl, i in zip((l for _, l in self.axes), key)) for key in self.cells]

    def to_dict(self, disparity: dict | None = None) -> dict:
        d = {
            "metric": self.metric,
            "axes": [{"name": n, "labels": list(l)} for n, l in self.axes],
            "cells": [{"key": list(k), "value": v, "n": n} for k, (v, n) in self.cells.items()],
            "overall": {"value": self.overall[0], "n": self.overall[1]},
        }
        if disparity is not None:
            d["disparity"] = disparity
        return d

    def to_json(self, with_disparity: bool = True) -> str:
        disp = None
        if with_disparity and self.nonempty():
            disp = disparity_summary(self).to_dict()
        return json.dumps(self.to_dict(disp), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*(n for n, _ in self.axes), "value", "n"])
        for key, (v, n) in self.cells.items():
            w.writerow([*(labels[i] for (_, labels), i in zip(self.axes, key)), "" if v is None else repr(v), n])
        w.writerow([*("ALL" for _ in self.axes), "" if self.overall[0] is None else repr(self.overall[0]), self.overall[1]])
        return buf.getvalue()


def _table(axes_labels, keyed_scores: list[tuple[tuple[int, ...], float]], metric: str) -> GroupedMetricTable:
    buckets: dict[tuple[int, ...], list[float]] = {
        k: [] for k in itertools.product(*(range(len(l)) for _, l in axes_labels))
    }
    for key, s in keyed_scores:
        buckets[key].append(s)
    cells = {k: ((math.fsum(v) / len(v)) if v else None, len(v)) for k, v in buckets.items()}
    all_scores = [s for _, s in keyed_scores]
    overall = ((math.fsum(all_scores) / len(all_scores)) if all_scores else None, len(all_scores))
    return GroupedMetricTable(list(axes_labels), cells, overall, metric)


def group_slice(log: Sequence[LogEntry], dataset: Dataset, axes: Sequence[Axis], metric: str = "accuracy") -> GroupedMetricTable:
    if metric not in ("accuracy", "mae"):
        raise AuditError(f"unknown metric {metric!r}")
    keyed = []
    for e in log:
        try:
            rec = dataset.by_id(e.record_id)
        except KeyError:
            raise AuditError(f"log entry {e.record_id!r} has no matching dataset record") from None
        key = []
        for ax in axes:
            v = attribute_value(rec, ax.name, dataset.schema)
            if v is None:
                raise AuditError(f"record {rec.record_id!r} lacks {ax.name!r} metadata")
            key.append(ax.index(v))
        keyed.append((tuple(key), e.score(metric)))
    return _table([(ax.name, ax.labels) for ax in axes], keyed, metric)


@dataclass(frozen=True)
class Disparity:
    max_cell: tuple[int, ...]
    min_cell: tuple[int, ...]
    max_value: float
    min_value: float
    gap: float
    std: float

    def to_dict(self) -> dict:
        return {
            "max_cell": list(self.max_cell),
            "min_cell": list(self.min_cell),
            "max": self.max_value,
            "min": self.min_value,
            "gap": self.gap,
            "std": self.std,
        }


def disparity_summary(table: GroupedMetricTable) -> Disparity:
    """Max-min gap and population std over the non-empty cells (ties: first cell in key order)."""
    cells = table.nonempty()
    if not cells:
        raise AuditError("disparity needs at least one non-empty cell")
    keys = sorted(cells)
    vals = np.array([cells[k] for k in keys])
    hi, lo = keys[int(np.argmax(vals))], keys[int(np.argmin(vals))]
    return Disparity(hi, lo, cells[hi], cells[lo], cells[hi] - cells[lo], float(np.std(vals)))


@dataclass
class KinshipTable:
    table: GroupedMetricTable
    relationship_mean: dict[str, float | None]
    overflow: int


def kinship_slice(log: Sequence[LogEntry]) -> KinshipTable:
    """Verification accuracy per relationship x age-difference bin.

    Differences above 30 years land in an explicit overflow bin (``>30``);
    ``overflow`` counts them.  ``relationship_mean`` is the accuracy over all
    pairs of each relationship.
    """
    keyed = []
    for e in log:
        if e.task != "verification":
            raise AuditError(f"{e.record_id}: kinship slicing needs verification entries, got {e.task}")
        key = (RELATIONSHIPS.index(e.relationship), bin_agediff(e.age_difference))
        keyed.append((key, e.score("accuracy")))
    table = _table([("relationship", RELATIONSHIPS), ("age_difference", AGEDIFF_LABELS)], keyed, "accuracy")
    rel_mean = {}
    for r, name in enumerate(RELATIONSHIPS):
        s = [v for k, v in keyed if k[0] == r]
        rel_mean[name] = math.fsum(s) / len(s) if s else None
    overflow = sum(1 for k, _ in keyed if k[1] == len(AGEDIFF3))
    return KinshipTable(table, rel_mean, overflow)
