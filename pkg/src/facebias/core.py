"""Shared data model: embedding records, dataset schema, CSV/JSON IO and demographic binning."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

GENDERS = ("F", "M")
MAX_AGE = 100


class SchemaError(ValueError):
    """Raised when data disagrees with its declared schema."""


class DatasetFormatError(ValueError):
    """Malformed dataset file; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, path: str | os.PathLike | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ITAClampWarning(UserWarning):
    """An ITA value below the brown lower edge was clamped into the brown class."""


# ---------------------------------------------------------------------------
# schema and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSchema:
    d1: int
    K_p: int
    sensitive: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sensitive", tuple((str(n), int(k)) for n, k in self.sensitive))
        if self.d1 <= 0:
            raise SchemaError(f"d1 must be positive, got {self.d1}")
        if self.K_p < 2:
            raise SchemaError(f"K_p must be >= 2, got {self.K_p}")
        names = [n for n, _ in self.sensitive]
        if len(set(names)) != len(names):
            raise SchemaError(f"sensitive attribute names must be unique: {names}")
        reserved = {"id", "y_p", "age", "gender", "ita"} | {f"z{j}" for j in range(self.d1)}
        for name, k in self.sensitive:
            if k < 2:
                raise SchemaError(f"sensitive attribute {name!r} needs K >= 2, got {k}")
            if name in reserved:
                raise SchemaError(f"sensitive attribute name {name!r} collides with a reserved column")

    @property
    def N(self) -> int:
        return len(self.sensitive)

    @property
    def sensitive_names(self) -> list[str]:
        return [n for n, _ in self.sensitive]

    @property
    def sensitive_cards(self) -> list[int]:
        return [k for _, k in self.sensitive]

    def header(self) -> list[str]:
        return ["id", *(f"z{j}" for j in range(self.d1)), "y_p", *self.sensitive_names, "age", "gender", "ita"]

    def to_dict(self) -> dict:
        return {"d1": self.d1, "K_p": self.K_p, "sensitive": [{"name": n, "K": k} for n, k in self.sensitive]}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            return cls(int(d["d1"]), int(d["K_p"]), tuple((s["name"], int(s["K"])) for s in d.get("sensitive", [])))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"invalid schema document: {exc}") from exc

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    record_id: str
    z: np.ndarray
    y_p: int
    y_sens: tuple[int, ...] = ()
    age_years: int | None = None
    gender: str | None = None
    ita_degrees: float | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y_sens", tuple(int(v) for v in self.y_sens))

    @property
    def meta(self) -> dict:
        out = {}
        if self.age_years is not None:
            out["age_years"] = self.age_years
        if self.gender is not None:
            out["gender"] = self.gender
        if self.ita_degrees is not None:
            out["ita_degrees"] = self.ita_degrees
        return out

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.y_p == other.y_p
            and self.y_sens == other.y_sens
            and self.age_years == other.age_years
            and self.gender == other.gender
            and self.ita_degrees == other.ita_degrees
            and np.array_equal(self.z, other.z)
        )

    __hash__ = None


def validate_record(rec: EmbeddingRecord, schema: DatasetSchema) -> None:
    if rec.z.shape != (schema.d1,):
        raise SchemaError(f"record {rec.record_id!r}: z has length {rec.z.size}, schema declares d1={schema.d1}")
    if not np.all(np.isfinite(rec.z)):
        raise SchemaError(f"record {rec.record_id!r}: z contains non-finite values")
    if not 0 <= rec.y_p < schema.K_p:
        raise SchemaError(f"record {rec.record_id!r}: y_p={rec.y_p} outside [0, {schema.K_p})")
    if len(rec.y_sens) != schema.N:
        raise SchemaError(f"record {rec.record_id!r}: {len(rec.y_sens)} sensitive labels, schema declares {schema.N}")
    for (name, k), v in zip(schema.sensitive, rec.y_sens):
        if not 0 <= v < k:
            raise SchemaError(f"record {rec.record_id!r}: {name}={v} outside [0, {k})")
    if rec.age_years is not None and not 0 <= rec.age_years <= MAX_AGE:
        raise SchemaError(f"record {rec.record_id!r}: age {rec.age_years} outside [0, {MAX_AGE}]")
    if rec.gender is not None and rec.gender not in GENDERS:
        raise SchemaError(f"record {rec.record_id!r}: gender {rec.gender!r} not in {GENDERS}")
    if rec.ita_degrees is not None and not math.isfinite(rec.ita_degrees):
        raise SchemaError(f"record {rec.record_id!r}: ita is not finite")


class Dataset(Sequence[EmbeddingRecord]):
    """Immutable, schema-validated sequence of records with stacked array views."""

    def __init__(self, schema: DatasetSchema, records: Iterable[EmbeddingRecord] = (), validate: bool = True):
        self.schema = schema
        self._records = tuple(records)
        if validate:
            seen = set()
            for rec in self._records:
                validate_record(rec, schema)
                if rec.record_id in seen:
                    raise SchemaError(f"duplicate record id {rec.record_id!r}")
                seen.add(rec.record_id)
        self._Z = None
        self._index = None

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.schema, self._records[i], validate=False)
        return self._records[i]

    def __iter__(self) -> Iterator[EmbeddingRecord]:
        return iter(self._records)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and self._records == other._records

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return self._records

    @property
    def Z(self) -> np.ndarray:
        if self._Z is None:
            Z = np.stack([r.z for r in self._records]) if self._records else np.zeros((0, self.schema.d1))
            Z.setflags(write=False)
            self._Z = Z
        return self._Z

    @property
    def y_p(self) -> np.ndarray:
        return np.array([r.y_p for r in self._records], dtype=int)

    @property
    def y_sens(self) -> np.ndarray:
        """Sensitive labels, shape (n, N)."""
        return np.array([r.y_sens for r in self._records], dtype=int).reshape(len(self), self.schema.N)

    def by_id(self, record_id: str) -> EmbeddingRecord:
        if self._index is None:
            self._index = {r.record_id: r for r in self._records}
        return self._index[record_id]

    def with_embeddings(self, Z: np.ndarray) -> "Dataset":
        """Copy with every z replaced by the matching row of ``Z`` (same d1)."""
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (len(self), self.schema.d1):
            raise SchemaError(f"expected embeddings of shape {(len(self), self.schema.d1)}, got {Z.shape}")
        recs = [
            EmbeddingRecord(r.record_id, Z[i], r.y_p, r.y_sens, r.age_years, r.gender, r.ita_degrees)
            for i, r in enumerate(self._records)
        ]
        return Dataset(self.schema, recs, validate=False)


# ---------------------------------------------------------------------------
# binning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinningScheme:
    """Ordered, contiguous intervals over a numeric domain.

    Integer schemes use closed intervals ``[lo, hi]``. Real schemes use ``(lo, hi]``
    except the first interval, which is closed below.
    """

    kind: str
    edges: tuple[tuple[float, float], ...]
    labels: tuple[str, ...]
    integer: bool = False

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((float(a), float(b)) for a, b in self.edges))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind not in ("age5", "ita5", "agediff3", "custom"):
            raise ValueError(f"unknown binning kind {self.kind!r}")
        if len(self.edges) != len(self.labels):
            raise ValueError("labels count must equal interval count")
        if not self.edges:
            raise ValueError("a binning scheme needs at least one interval")
        for lo, hi in self.edges:
            if not lo <= hi:
                raise ValueError(f"interval ({lo}, {hi}) is reversed")
        for (_, hi), (lo, _) in zip(self.edges, self.edges[1:]):
            expected = hi + 1 if self.integer else hi
            if lo != expected:
                raise ValueError(f"intervals not contiguous at {hi} -> {lo}")

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def domain(self) -> tuple[float, float]:
        return self.edges[0][0], self.edges[-1][1]

    def index(self, value: float) -> int:
        if isinstance(value, bool) or value is None:
            raise ValueError(f"{self.kind}: cannot bin {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"{self.kind}: non-finite value {value!r}")
        if self.integer and v != int(v):
            raise ValueError(f"{self.kind}: expected an integer, got {value!r}")
        lo0, hi_last = self.domain
        if v < lo0 or v > hi_last:
            raise ValueError(f"{self.kind}: value {value!r} outside domain [{lo0:g}, {hi_last:g}]")
        for i, (lo, hi) in enumerate(self.edges):
            if v <= hi:
                return i
        raise AssertionError("unreachable: contiguous edges cover the domain")


@dataclass(frozen=True)
class Categorical:
    """Unordered labels; a value bins to its position in ``labels``."""

    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("categorical labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, value) -> int:
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if 0 <= value < len(self.labels):
                return int(value)
            raise ValueError(f"category index {value} outside [0, {len(self.labels)})")
        try:
            return self.labels.index(value)
        except ValueError:
            raise ValueError(f"unknown category {value!r}; expected one of {self.labels}") from None


AGE5 = BinningScheme(
    "age5",
    ((0, 18), (19, 30), (31, 45), (46, 60), (61, MAX_AGE)),
    ("0-18", "19-30", "31-45", "46-60", "61+"),
    integer=True,
)
ITA5 = BinningScheme(
    "ita5",
    ((-30, 10), (10, 28), (28, 41), (41, 55), (55, 90)),
    ("brown", "tan", "intermediate", "light", "very light"),
)
AGEDIFF3 = BinningScheme("agediff3", ((0, 10), (10, 20), (20, 30)), ("0-10", "11-20", "21-30"))
GENDER = Categorical(GENDERS)


def bin_age(age_years: int) -> int:
    """Index of the five-class age group containing ``age_years``."""
    if isinstance(age_years, bool) or not isinstance(age_years, (int, np.integer)):
        if isinstance(age_years, float) and age_years.is_integer():
            age_years = int(age_years)
        else:
            raise ValueError(f"age must be an integer number of years, got {age_years!r}")
    if not 0 <= age_years <= MAX_AGE:
        raise ValueError(f"age {age_years} outside [0, {MAX_AGE}]")
    return AGE5.index(age_years)


def bin_ita(ita_degrees: float) -> int:
    """Index of the five-class ITA skin-tone group.

    Values in [-90, -30) are clamped into the brown class and an
    :class:`ITAClampWarning` is emitted.
    """
    v = float(ita_degrees)
    if not math.isfinite(v):
        raise ValueError(f"ITA must be finite, got {ita_degrees!r}")
    if not -90.0 <= v <= 90.0:
        raise ValueError(f"ITA {ita_degrees!r} outside [-90, 90]")
    if v < ITA5.domain[0]:
        warnings.warn(f"ITA {v:g} below {ITA5.domain[0]:g}; clamped to 'brown'", ITAClampWarning, stacklevel=2)
        return 0
    return ITA5.index(v)


def bin_agediff(years: float) -> int:
    """Age-difference bin 0..2; differences above 30 go to overflow index 3."""
    v = float(years)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"age difference must be finite and >= 0, got {years!r}")
    if v > AGEDIFF3.domain[1]:
        return len(AGEDIFF3)
    return AGEDIFF3.index(v)


# ---------------------------------------------------------------------------
# IO
# ---------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(dataset: Dataset) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dataset.schema.header())
    for r in dataset:
        w.writerow(
            [
                r.record_id,
                *(_fmt(v) for v in r.z),
                r.y_p,
                *r.y_sens,
                "" if r.age_years is None else r.age_years,
                "" if r.gender is None else r.gender,
                "" if r.ita_degrees is None else _fmt(r.ita_degrees),
            ]
        )
    return buf.getvalue()


def save_dataset(dataset: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(dataset))


def _parse_int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"{what}: expected an integer, got {s!r}") from None


def load_dataset(path, schema: DatasetSchema) -> Dataset:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    records = []
    seen: set[str] = set()
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError("missing header", line=1, path=path)
        expected = schema.header()
        if header != expected:
            if len(header) != len(expected):
                raise SchemaError(
                    f"{path}:1: header has {len(header)} columns, schema implies {len(expected)} "
                    f"(d1={schema.d1}, N={schema.N})"
                )
            bad = next(i for i, (a, b) in enumerate(zip(header, expected)) if a != b)
            raise SchemaError(f"{path}:1: column {bad + 1} is {header[bad]!r}, expected {expected[bad]!r}")
        d1, N = schema.d1, schema.N
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(expected):
                raise DatasetFormatError(f"expected {len(expected)} fields, got {len(row)}", line=line, path=path)
            try:
                rid = row[0]
                if not rid:
                    raise ValueError("empty id")
                if rid in seen:
                    raise ValueError(f"duplicate id {rid!r}")
                z = np.array([float(v) for v in row[1 : 1 + d1]])
                y_p = _parse_int(row[1 + d1], "y_p")
                y_sens = tuple(_parse_int(v, name) for v, name in zip(row[2 + d1 : 2 + d1 + N], schema.sensitive_names))
                age_s, gender_s, ita_s = row[2 + d1 + N :]
                rec = EmbeddingRecord(
                    rid,
                    z,
                    y_p,
                    y_sens,
                    age_years=_parse_int(age_s, "age") if age_s else None,
                    gender=gender_s or None,
                    ita_degrees=float(ita_s) if ita_s else None,
                )
                validate_record(rec, schema)
            except ValueError as exc:
                raise DatasetFormatError(str(exc), line=line, path=path) from None
            seen.add(rid)
            records.append(rec)
    return Dataset(schema, records, validate=False)
