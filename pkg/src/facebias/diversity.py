"""Simpson and Shannon diversity/evenness indices and the per-attribute diversity report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import AGE5, GENDER, ITA5, BinningScheme, Categorical, Dataset, EmbeddingRecord, bin_ita

LOG_BASES = {"e": math.e, "natural": math.e, "2": 2.0, "two": 2.0}


@dataclass(frozen=True)
class ProbabilityVector:
    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        object.__setattr__(self, "p", p)
        if not p:
            raise ValueError("probability vector needs at least one class")
        if any(not math.isfinite(x) or x < 0 for x in p):
            raise ValueError("probabilities must be finite and >= 0")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")

    @property
    def S(self) -> int:
        return len(self.p)

    def __len__(self) -> int:
        return len(self.p)

    def __iter__(self):
        return iter(self.p)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.p, dtype=dtype)


def _pv(p) -> ProbabilityVector:
    return p if isinstance(p, ProbabilityVector) else ProbabilityVector(tuple(p))


def _log_base(base) -> float:
    key = str(base).lower()
    if key not in LOG_BASES:
        raise ValueError(f"unsupported log base {base!r}; use 'e' or '2'")
    return math.log(LOG_BASES[key])


def histogram(values: Sequence[int], S: int) -> ProbabilityVector:
    if S < 1:
        raise ValueError("S must be >= 1")
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("cannot build a histogram from no values")
    if v.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(v, 1), 0)):
            raise ValueError("bin indices must be integers")
        v = v.astype(int)
    if v.min() < 0 or v.max() >= S:
        bad = int(v[(v < 0) | (v >= S)][0])
        raise ValueError(f"bin index {bad} outside [0, {S})")
    counts = np.bincount(v, minlength=S)
    return ProbabilityVector(tuple(counts / counts.sum()))


def shannon_h(p, base="e") -> float:
    """``-sum p_i log p_i`` with ``0 log 0 = 0``."""
    pv = _pv(p)
    h = -math.fsum(x * math.log(x) for x in pv.p if x > 0)
    return (max(h, 0.0) + 0.0) / _log_base(base)


def shannon_e(p, base="e") -> float:
    """Shannon evenness ``H / log S``; the base cancels."""
    pv = _pv(p)
    if pv.S < 2:
        raise ValueError("Shannon evenness is undefined for a single class")
    return shannon_h(pv, base) / (math.log(pv.S) / _log_base(base))


def simpson_d(p) -> float:
    """Inverse Simpson index ``1 / sum p_i^2``."""
    pv = _pv(p)
    return 1.0 / math.fsum(x * x for x in pv.p)


def simpson_e(p) -> float:
    pv = _pv(p)
    return simpson_d(pv) / pv.S


@dataclass(frozen=True)
class ITAResult:
    degrees: float
    degenerate: bool = False


def ita_from_lab(L: float, b: float) -> ITAResult:
    """Individual typology angle ``atan((L - 50) / b)`` in degrees.

    For ``b == 0`` the limit is returned (+-90, or 0 when ``L == 50``) and the
    result is flagged degenerate.
    """
    if not (math.isfinite(L) and math.isfinite(b)):
        raise ValueError("L and b must be finite")
    if b == 0:
        return ITAResult(math.copysign(90.0, L - 50) if L != 50 else 0.0, degenerate=True)
    return ITAResult(math.degrees(math.atan((L - 50.0) / b)))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiversityRow:
    attribute: str
    SiD: float
    SiE: float
    ShH: float
    ShE: float
    mean: float
    std: float


REPORT_COLUMNS = ("attribute", "SiD", "SiE", "ShH", "ShE", "mean", "std")

# metadata field behind each well-known attribute name
_META = {"age": "age_years", "gender": "gender", "ita": "ita_degrees"}


def default_scheme(name: str, schema=None) -> BinningScheme | Categorical:
    """Standard bins for age/gender/ITA; label attributes get one class per label value."""
    fixed = {"age": AGE5, "gender": GENDER, "ita": ITA5}
    if name in fixed:
        return fixed[name]
    if schema is not None:
        if name == "y_p":
            return Categorical(tuple(str(k) for k in range(schema.K_p)))
        if name in schema.sensitive_names:
            K = schema.sensitive_cards[schema.sensitive_names.index(name)]
            return Categorical(tuple(str(k) for k in range(K)))
    raise KeyError(f"unknown attribute {name!r}")


def attribute_value(rec: EmbeddingRecord, name: str, schema=None):
    if name in _META:
        return getattr(rec, _META[name])
    if name == "y_p":
        return rec.y_p
    if schema is not None and name in schema.sensitive_names:
        return rec.y_sens[schema.sensitive_names.index(name)]
    raise KeyError(f"unknown attribute {name!r}")


def _bin(scheme, name: str, value) -> int:
    if scheme is ITA5 or (isinstance(scheme, BinningScheme) and scheme.kind == "ita5"):
        return bin_ita(value)
    return scheme.index(value)


def diversity_report(
    dataset: Dataset,
    specs: Sequence[tuple[str, BinningScheme | Categorical | None]],
    base="e",
) -> list[DiversityRow]:
    """One row per requested attribute, in request order.

    ``mean`` and ``std`` (population) are taken over the raw values; categorical
    values enter as their label index.
    """
    rows = []
    for name, scheme in specs:
        if scheme is None:
            scheme = default_scheme(name, dataset.schema)
        raw = [attribute_value(r, name, dataset.schema) for r in dataset]
        missing = [r.record_id for r, v in zip(dataset, raw) if v is None]
        if missing:
            shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
            raise ValueError(f"attribute {name!r} missing for {len(missing)} record(s): {shown}")
        idx = [_bin(scheme, name, v) for v in raw]
        numeric = np.array(idx if isinstance(scheme, Categorical) else raw, dtype=float)
        p = histogram(idx, len(scheme))
        rows.append(
            DiversityRow(
                attribute=name,
                SiD=simpson_d(p),
                SiE=simpson_e(p),
                ShH=shannon_h(p, base),
                ShE=shannon_e(p, base) if p.S > 1 else float("nan"),
                mean=float(np.mean(numeric)),
                std=float(np.std(numeric)),
            )
        )
    return rows


def report_csv(rows: Sequence[DiversityRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.attribute, *(repr(getattr(r, c)) for c in REPORT_COLUMNS[1:])])
    return buf.getvalue()


def report_json(rows: Sequence[DiversityRow]) -> str:
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    return json.dumps([clean(asdict(r)) for r in rows], indent=2) + "\n"
