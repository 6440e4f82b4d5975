"""Synthetic biased embeddings with known ground-truth factors.

Each sample is ``z = M_p onehot(y_p) + sum_i M_i onehot(y_i) + sigma * eps``.
In orthogonal mode the factor matrices occupy disjoint column blocks of one
random orthonormal basis, so the ideal debiased code (projection onto
span(M_p)) is known exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GENDERS, MAX_AGE, Dataset, DatasetSchema, EmbeddingRecord, atomic_write_text


@dataclass
class SynthConfig:
    d1: int = 64
    K_p: int = 10
    sensitive: tuple[int, ...] = (5, 2)
    mode: str = "orthogonal"
    sigma: float = 0.1
    rho: float = 0.6
    n: int = 5000
    seed: int = 0
    # sampling weights over primary classes; None means uniform
    weights: tuple[float, ...] | None = None
    # signal amplitude of each factor column
    scale: float = 1.0
    sensitive_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.sensitive = tuple(int(k) for k in self.sensitive)
        if self.weights is not None:
            self.weights = tuple(float(w) for w in self.weights)
        if self.sensitive_names is not None:
            self.sensitive_names = tuple(self.sensitive_names)
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("orthogonal", "random"):
            raise ValueError(f"mode must be 'orthogonal' or 'random', got {self.mode!r}")
        if self.d1 <= 0 or self.K_p < 2 or any(k < 2 for k in self.sensitive):
            raise ValueError("need d1 > 0, K_p >= 2 and every sensitive K >= 2")
        if self.mode == "orthogonal" and self.d1 < self.K_p + sum(self.sensitive):
            raise ValueError(
                f"orthogonal mode needs d1 >= K_p + sum(K_i) = {self.K_p + sum(self.sensitive)}, got d1={self.d1}"
            )
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.weights is not None:
            if len(self.weights) != self.K_p or any(not w > 0 for w in self.weights):
                raise ValueError(f"weights must be {self.K_p} positive numbers")
        if self.sensitive_names is not None and len(self.sensitive_names) != len(self.sensitive):
            raise ValueError("one name per sensitive attribute")

    @property
    def names(self) -> tuple[str, ...]:
        if self.sensitive_names is not None:
            return self.sensitive_names
        return tuple(f"s{i + 1}" for i in range(len(self.sensitive)))

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema(self.d1, self.K_p, tuple(zip(self.names, self.sensitive)))

    def primary_marginal(self) -> np.ndarray:
        w = np.ones(self.K_p) if self.weights is None else np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def sensitive_marginal(self, i: int) -> np.ndarray:
        """Exact marginal of attribute ``i`` implied by the correlation scheme."""
        K = self.sensitive[i]
        p = self.primary_marginal()
        tied = np.bincount(np.arange(self.K_p) % K, weights=p, minlength=K)
        return self.rho * tied + (1 - self.rho) / K


@dataclass
class GroundTruth:
    M_p: np.ndarray
    M_sens: list[np.ndarray]
    config: SynthConfig

    def primary_projector(self) -> np.ndarray:
        """Orthogonal projector onto span(M_p)."""
        Q, _ = np.linalg.qr(self.M_p)
        return Q @ Q.T

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "M_p": self.M_p.tolist(),
            "M_sens": [M.tolist() for M in self.M_sens],
        }

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1) + "\n")


def factor_matrices(config: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[np.ndarray]]:
    blocks = [config.K_p, *config.sensitive]
    if config.mode == "orthogonal":
        Q, R = np.linalg.qr(rng.standard_normal((config.d1, config.d1)))
        Q = Q * np.sign(np.diag(R))
        cols = np.split(Q[:, : sum(blocks)], np.cumsum(blocks)[:-1], axis=1)
    else:
        cols = [rng.standard_normal((config.d1, k)) / np.sqrt(config.d1) for k in blocks]
    cols = [config.scale * c for c in cols]
    return cols[0], cols[1:]


def sample_labels(config: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Primary labels from the group weights; each y_i equals y_p mod K_i with probability rho."""
    n = config.n
    y_p = rng.choice(config.K_p, size=n, p=config.primary_marginal())
    y_s = np.empty((n, len(config.sensitive)), dtype=int)
    for i, K in enumerate(config.sensitive):
        tied = rng.random(n) < config.rho
        free = rng.integers(0, K, size=n)
        y_s[:, i] = np.where(tied, y_p % K, free)
    return y_p, y_s


def generate(config: SynthConfig) -> tuple[Dataset, GroundTruth]:
    rng = np.random.default_rng(config.seed)
    M_p, M_sens = factor_matrices(config, rng)
    y_p, y_s = sample_labels(config, rng)
    Z = M_p.T[y_p].copy()
    for i, M in enumerate(M_sens):
        Z += M.T[y_s[:, i]]
    Z += config.sigma * rng.standard_normal(Z.shape)
    # demographic metadata, so audit and diversity can run on synthetic sets
    ages = rng.integers(0, MAX_AGE + 1, size=config.n)
    genders = rng.integers(0, 2, size=config.n)
    itas = rng.uniform(-30.0, 90.0, size=config.n)
    width = max(1, len(str(max(config.n - 1, 0))))
    records = [
        EmbeddingRecord(
            f"r{j:0{width}d}",
            Z[j],
            int(y_p[j]),
            tuple(int(v) for v in y_s[j]),
            age_years=int(ages[j]),
            gender=GENDERS[genders[j]],
            ita_degrees=float(itas[j]),
        )
        for j in range(config.n)
    ]
    return Dataset(config.schema, records, validate=False), GroundTruth(M_p, M_sens, config)


def oracle_probe_accuracy(dataset: Dataset, which: str | int = "y_p", seed: int = 0) -> float:
    """Leakage reference: the linear probe run on the raw embeddings.

    ``which`` is ``"y_p"`` or a sensitive-attribute name or index.
    """
    from .debias import adversary_probe

    return adversary_probe(dataset.Z, label_column(dataset, which), seed=seed)


def label_column(dataset: Dataset, which: str | int) -> np.ndarray:
    if which == "y_p":
        return dataset.y_p
    if isinstance(which, str):
        names = dataset.schema.sensitive_names
        if which not in names:
            raise KeyError(f"unknown label {which!r}; expected 'y_p' or one of {names}")
        which = names.index(which)
    return dataset.y_sens[:, which]
