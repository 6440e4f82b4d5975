"""Adversarial linear decomposition of embeddings.

An embedding ``z`` is split through a shared code ``h = B z`` into a task part
``z_p = A h`` and one part per sensitive attribute ``z_i = D_i s_i`` with
``s_i = T_i h``.  A softmax head ``W_p`` reads ``z_p``; adversary heads ``W_i``
read ``s_i``.  Training alternates between

* the adversary (``U = {T_i, W_i}``) minimising ``sum_i CE_i``, and
* the main player (``V = {A, B, D_i, W_p}``) minimising
  ``CE_p + lam_dec * L_decom + L_or - sum_i lam_i * H_i``

where ``L_decom = mean 1/2 ||z - z_p - sum_i z_i||^2``,
``L_or = sum_i lam_or_i * 1/2 ||A^T D_i||_F^2`` and ``H_i`` is the mean
softmax entropy of adversary ``i``.  All gradients are analytic.

Batches are row-major: ``Z`` has shape ``(n, d1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_softmax

FORMAT_VERSION = "facebias-debias/1"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, epoch: int | None = None, step: int | None = None):
        self.epoch = epoch
        self.step = step
        super().__init__(message)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class Hyperparams:
    lam_dec: float = 1.0
    lam_ent: tuple[float, ...] | float = 0.1
    lam_or: tuple[float, ...] | float = 10.0
    lr_main: float = 1e-2
    lr_adv: float = 1e-2
    momentum: float = 0.9
    adv_steps: int = 5
    batch_size: int = 64
    epochs: int = 200
    init_scale: float = 1.0
    # global-norm gradient clipping per update; None disables
    clip_norm: float | None = 10.0
    seed: int = 0
    d2: int | None = None
    d3: tuple[int, ...] | int | None = None

    def __post_init__(self):
        for name in ("lam_ent", "lam_or", "d3"):
            v = getattr(self, name)
            if isinstance(v, list):
                setattr(self, name, tuple(v))
        for name in ("lam_dec", "lr_main", "lr_adv", "momentum", "init_scale"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for v in _as_tuple(self.lam_ent) + _as_tuple(self.lam_or):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"attribute weights must be finite and >= 0, got {v}")
        if self.adv_steps < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("adv_steps and batch_size must be >= 1, epochs >= 0")

    def per_attr(self, name: str, N: int) -> tuple[float, ...]:
        v = getattr(self, name)
        if isinstance(v, (int, float)):
            return (float(v),) * N
        if len(v) != N:
            raise ValueError(f"{name} has {len(v)} entries, expected one per sensitive attribute ({N})")
        return tuple(float(x) for x in v)

    def dims(self, d1: int, N: int) -> tuple[int, tuple[int, ...]]:
        d2, d3 = default_dims(d1, N)
        if self.d2 is not None:
            d2 = int(self.d2)
        if self.d3 is not None:
            d3 = (int(self.d3),) * N if isinstance(self.d3, int) else tuple(int(x) for x in self.d3)
        return d2, d3


def _as_tuple(v) -> tuple:
    return (v,) if isinstance(v, (int, float)) else tuple(v)


def default_dims(d1: int, N: int) -> tuple[int, tuple[int, ...]]:
    """Bottleneck sizes: 4096 -> (512, 64) and 64 -> (16, 4), i.e. d1/8 and d1/16."""
    d2 = max(1, d1 // 8) if d1 >= 4096 else max(1, d1 // 4)
    d3 = max(1, d1 // 64) if d1 >= 4096 else max(1, d1 // 16)
    return d2, (d3,) * N


@dataclass
class DebiasModel:
    A: np.ndarray  # d1 x d2
    B: np.ndarray  # d2 x d1
    W_p: np.ndarray  # K_p x d1
    b_p: np.ndarray  # K_p
    D: list[np.ndarray] = field(default_factory=list)  # d1 x d3_i
    T: list[np.ndarray] = field(default_factory=list)  # d3_i x d2
    W: list[np.ndarray] = field(default_factory=list)  # K_i x d3_i
    b: list[np.ndarray] = field(default_factory=list)  # K_i

    def __post_init__(self):
        self.check()

    @property
    def d1(self) -> int:
        return self.A.shape[0]

    @property
    def d2(self) -> int:
        return self.A.shape[1]

    @property
    def d3(self) -> tuple[int, ...]:
        return tuple(T.shape[0] for T in self.T)

    @property
    def N(self) -> int:
        return len(self.T)

    @property
    def K_p(self) -> int:
        return self.W_p.shape[0]

    def check(self) -> None:
        d1, d2 = self.A.shape
        if d1 <= 0 or d2 <= 0:
            raise ValueError("dimensions must be positive")
        if d2 > d1:
            raise ValueError(f"bottleneck d2={d2} exceeds d1={d1}")
        if self.B.shape != (d2, d1):
            raise ValueError(f"B has shape {self.B.shape}, expected {(d2, d1)}")
        if self.W_p.shape[1] != d1 or self.b_p.shape != (self.W_p.shape[0],):
            raise ValueError("W_p / b_p shapes inconsistent with d1")
        if not len(self.D) == len(self.T) == len(self.W) == len(self.b):
            raise ValueError("D, T, W, b need one entry per sensitive attribute")
        for i, (D, T, W, b) in enumerate(zip(self.D, self.T, self.W, self.b)):
            d3 = T.shape[0]
            if d3 <= 0 or T.shape != (d3, d2) or D.shape != (d1, d3) or W.shape[1] != d3 or b.shape != (W.shape[0],):
                raise ValueError(f"attribute {i}: inconsistent shapes D{D.shape} T{T.shape} W{W.shape} b{b.shape}")

    # flat name <-> array access used by optimisers and finite differences
    def param_names(self, group: str = "all") -> list[str]:
        V = ["A", "B", "W_p", "b_p"] + [f"D.{i}" for i in range(self.N)]
        U = [n for i in range(self.N) for n in (f"T.{i}", f"W.{i}", f"b.{i}")]
        return {"V": V, "U": U, "all": V + U}[group]

    def get(self, name: str) -> np.ndarray:
        if "." in name:
            base, i = name.split(".")
            return getattr(self, base)[int(i)]
        return getattr(self, name)

    def copy(self) -> "DebiasModel":
        return DebiasModel(
            self.A.copy(),
            self.B.copy(),
            self.W_p.copy(),
            self.b_p.copy(),
            [x.copy() for x in self.D],
            [x.copy() for x in self.T],
            [x.copy() for x in self.W],
            [x.copy() for x in self.b],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(self.get(n))) for n in self.param_names())

    def to_dict(self, hyper: Hyperparams | None = None) -> dict:
        return {
            "version": FORMAT_VERSION,
            "dims": {"d1": self.d1, "d2": self.d2, "d3": list(self.d3), "K_p": self.K_p, "K": [W.shape[0] for W in self.W]},
            "hyper": None if hyper is None else asdict(hyper),
            "params": {n: _row_major(self.get(n)) for n in self.param_names()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DebiasModel":
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}, expected {FORMAT_VERSION!r}")
        dims = doc["dims"]
        d1, d2, d3s, K_p, Ks = dims["d1"], dims["d2"], dims["d3"], dims["K_p"], dims["K"]
        p = doc["params"]

        def arr(name, shape):
            return _from_row_major(p[name], shape)

        N = len(d3s)
        return cls(
            arr("A", (d1, d2)),
            arr("B", (d2, d1)),
            arr("W_p", (K_p, d1)),
            arr("b_p", (K_p,)),
            [arr(f"D.{i}", (d1, d3s[i])) for i in range(N)],
            [arr(f"T.{i}", (d3s[i], d2)) for i in range(N)],
            [arr(f"W.{i}", (Ks[i], d3s[i])) for i in range(N)],
            [arr(f"b.{i}", (Ks[i],)) for i in range(N)],
        )

    def save(self, path, hyper: Hyperparams | None = None) -> None:
        from .core import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_dict(hyper)) + "\n")

    @classmethod
    def load(cls, path) -> "DebiasModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _row_major(a: np.ndarray) -> list[float]:
    return [float(x) for x in np.asarray(a).ravel(order="C")]


def _from_row_major(values: Sequence[float], shape: tuple[int, ...]) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.size != math.prod(shape):
        raise ValueError(f"parameter has {a.size} values, expected {math.prod(shape)} for shape {shape}")
    return a.reshape(shape)


def init_model(
    d1: int,
    K_p: int,
    Ks: Sequence[int],
    d2: int,
    d3: Sequence[int],
    init_scale: float = 1.0,
    rng: np.random.Generator | int | None = 0,
) -> DebiasModel:
    """Gaussian init with std ``init_scale / sqrt(fan_in)``; biases zero."""
    rng = np.random.default_rng(rng)

    def g(rows, cols):
        return rng.standard_normal((rows, cols)) * (init_scale / math.sqrt(cols))

    A, B, W_p = g(d1, d2), g(d2, d1), g(K_p, d1)
    D, T, W = [], [], []
    for K, k3 in zip(Ks, d3):
        D.append(g(d1, k3))
        T.append(g(k3, d2))
        W.append(g(K, k3))
    return DebiasModel(A, B, W_p, np.zeros(K_p), D, T, W, [np.zeros(K) for K in Ks])


# ---------------------------------------------------------------------------
# forward pass and losses
# ---------------------------------------------------------------------------


@dataclass
class ForwardState:
    h: np.ndarray  # shared code B z, (n, d2)
    z_p: np.ndarray  # (n, d1)
    s: list[np.ndarray]  # (n, d3_i)
    z_sens: list[np.ndarray]  # (n, d1)
    logits_p: np.ndarray  # (n, K_p)
    logits_adv: list[np.ndarray]  # (n, K_i)
    recon: np.ndarray  # z_p + sum z_i


def _as_batch(model: DebiasModel, z) -> tuple[np.ndarray, bool]:
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.ndim != 2 or Z.shape[1] != model.d1:
        raise ValueError(f"embedding dimension {Z.shape[-1]} does not match model d1={model.d1}")
    return Z, single


def forward(model: DebiasModel, z) -> ForwardState:
    """Forward pass for a single vector (1-D) or a batch (n, d1)."""
    Z, single = _as_batch(model, z)
    h = Z @ model.B.T
    z_p = h @ model.A.T
    s = [h @ T.T for T in model.T]
    z_sens = [si @ D.T for si, D in zip(s, model.D)]
    recon = z_p.copy()
    for zi in z_sens:
        recon += zi
    st = ForwardState(
        h=h,
        z_p=z_p,
        s=s,
        z_sens=z_sens,
        logits_p=z_p @ model.W_p.T + model.b_p,
        logits_adv=[si @ W.T + b for si, W, b in zip(s, model.W, model.b)],
        recon=recon,
    )
    if single:
        st = ForwardState(
            st.h[0], st.z_p[0], [x[0] for x in st.s], [x[0] for x in st.z_sens],
            st.logits_p[0], [x[0] for x in st.logits_adv], st.recon[0],
        )
    return st


def debias_transform(model: DebiasModel, z) -> np.ndarray:
    """The task representation ``A B z`` (single vector or batch)."""
    Z, single = _as_batch(model, z)
    out = (Z @ model.B.T) @ model.A.T
    return out[0] if single else out


def loss_decom(model: DebiasModel, Z, state: ForwardState | None = None) -> float:
    Z, _ = _as_batch(model, Z)
    if len(Z) == 0:
        raise ValueError("empty batch")
    st = state or forward(model, Z)
    R = Z - st.recon
    return 0.5 * float(np.sum(R * R)) / len(Z)


def loss_or(model: DebiasModel, lam_or: Sequence[float] | float = 1.0) -> float:
    lam = (float(lam_or),) * model.N if isinstance(lam_or, (int, float)) else tuple(lam_or)
    total = 0.0
    for w, D in zip(lam, model.D):
        M = model.A.T @ D
        total += w * 0.5 * float(np.sum(M * M))
    return total


def loss_cls(logits, target) -> float:
    """Mean softmax cross-entropy; ``logits`` is (K,) with int target or (n, K) with (n,) targets."""
    L = np.atleast_2d(np.asarray(logits, dtype=float))
    y = np.atleast_1d(np.asarray(target, dtype=int))
    if len(L) != len(y):
        raise ValueError("logits and targets disagree in batch size")
    if len(y) and (y.min() < 0 or y.max() >= L.shape[1]):
        raise ValueError(f"target outside [0, {L.shape[1]})")
    logp = log_softmax(L, axis=1)
    return float(-np.mean(logp[np.arange(len(y)), y]))


def loss_entropy(logits) -> float:
    """Mean natural-base entropy of softmax(logits)."""
    L = np.atleast_2d(np.asarray(logits, dtype=float))
    logp = log_softmax(L, axis=1)
    return float(np.mean(-np.sum(np.exp(logp) * logp, axis=1)))


@dataclass
class Batch:
    Z: np.ndarray
    y_p: np.ndarray
    y_sens: np.ndarray  # (n, N)

    def __post_init__(self):
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self.y_p = np.asarray(self.y_p, dtype=int)
        self.y_sens = np.asarray(self.y_sens, dtype=int).reshape(len(self.Z), -1)
        if len(self.Z) == 0:
            raise ValueError("empty batch")

    @classmethod
    def from_dataset(cls, dataset) -> "Batch":
        return cls(dataset.Z, dataset.y_p, dataset.y_sens)

    def take(self, idx) -> "Batch":
        return Batch(self.Z[idx], self.y_p[idx], self.y_sens[idx])


def loss_parts(model: DebiasModel, batch: Batch, hyper: Hyperparams, state: ForwardState | None = None) -> dict:
    st = state or forward(model, batch.Z)
    parts = {
        "L_cls_p": loss_cls(st.logits_p, batch.y_p),
        "L_decom": loss_decom(model, batch.Z, st),
        "L_or": loss_or(model, hyper.per_attr("lam_or", model.N)),
    }
    for i in range(model.N):
        parts[f"L_cls_{i + 1}"] = loss_cls(st.logits_adv[i], batch.y_sens[:, i])
        parts[f"L_entr_{i + 1}"] = loss_entropy(st.logits_adv[i])
    return parts


def objective_main(model: DebiasModel, batch: Batch, hyper: Hyperparams) -> float:
    st = forward(model, batch.Z)
    val = loss_cls(st.logits_p, batch.y_p)
    val += hyper.lam_dec * loss_decom(model, batch.Z, st)
    val += loss_or(model, hyper.per_attr("lam_or", model.N))
    for lam, logits in zip(hyper.per_attr("lam_ent", model.N), st.logits_adv):
        val -= lam * loss_entropy(logits)
    return val


def objective_adv(model: DebiasModel, batch: Batch) -> float:
    st = forward(model, batch.Z)
    return sum((loss_cls(st.logits_adv[i], batch.y_sens[:, i]) for i in range(model.N)), 0.0)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _softmax_ce_grad(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d(mean CE)/d logits."""
    P = np.exp(log_softmax(logits, axis=1))
    P[np.arange(len(y)), y] -= 1.0
    return P / len(y)


def _entropy_grad(logits: np.ndarray) -> np.ndarray:
    """d(mean entropy)/d logits: -q * (log q + H) per row."""
    logq = log_softmax(logits, axis=1)
    q = np.exp(logq)
    H = -np.sum(q * logq, axis=1, keepdims=True)
    return -q * (logq + H) / len(logits)


def grad_main(model: DebiasModel, batch: Batch, hyper: Hyperparams) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`objective_main` w.r.t. ``A, B, D_i, W_p, b_p`` (U held fixed)."""
    Z = batch.Z
    n = len(Z)
    st = forward(model, Z)
    lam_or = hyper.per_attr("lam_or", model.N)
    lam_ent = hyper.per_attr("lam_ent", model.N)

    G_lp = _softmax_ce_grad(st.logits_p, batch.y_p)
    G_rec = -(hyper.lam_dec / n) * (Z - st.recon)  # d/d recon

    G_zp = G_lp @ model.W_p + G_rec
    g = {"W_p": G_lp.T @ st.z_p, "b_p": G_lp.sum(axis=0), "A": G_zp.T @ st.h}
    G_h = G_zp @ model.A
    for i in range(model.N):
        D, T, W = model.D[i], model.T[i], model.W[i]
        G_s = G_rec @ D - lam_ent[i] * (_entropy_grad(st.logits_adv[i]) @ W)
        AtD = model.A.T @ D
        g[f"D.{i}"] = G_rec.T @ st.s[i] + lam_or[i] * (model.A @ AtD)
        g["A"] += lam_or[i] * (D @ AtD.T)
        G_h += G_s @ T
    g["B"] = G_h.T @ Z
    return g


def grad_adv(model: DebiasModel, batch: Batch) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`objective_adv` w.r.t. ``T_i, W_i, b_i`` (V held fixed)."""
    st = forward(model, batch.Z)
    g = {}
    for i in range(model.N):
        G_l = _softmax_ce_grad(st.logits_adv[i], batch.y_sens[:, i])
        g[f"W.{i}"] = G_l.T @ st.s[i]
        g[f"b.{i}"] = G_l.sum(axis=0)
        g[f"T.{i}"] = (G_l @ model.W[i]).T @ st.h
    return g


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class Momentum:
    """Heavy-ball SGD over a named subset of model parameters, updated in place."""

    def __init__(self, model: DebiasModel, names: Iterable[str], lr: float, momentum: float, clip_norm: float | None = None):
        self.model = model
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = {n: np.zeros_like(model.get(n)) for n in names}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        scale = self.lr
        if self.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(grads[n] * grads[n])) for n in self.velocity))
            if norm > self.clip_norm:
                scale *= self.clip_norm / norm
        for name, v in self.velocity.items():
            v *= self.momentum
            v -= scale * grads[name]
            self.model.get(name)[...] += v


@dataclass
class TrainResult:
    model: DebiasModel
    history: list[dict]
    hyper: Hyperparams


def history_header(N: int) -> list[str]:
    return ["epoch", "L_cls_p", "L_decom", "L_or", *(f"L_cls_{i + 1}" for i in range(N)), *(f"L_entr_{i + 1}" for i in range(N))]


def history_csv(history: list[dict], N: int) -> str:
    cols = history_header(N)
    lines = [",".join(cols)]
    for row in history:
        lines.append(",".join(str(row["epoch"]) if c == "epoch" else repr(float(row[c])) for c in cols))
    return "\n".join(lines) + "\n"


def train(dataset, schema=None, hyper: Hyperparams | None = None, model: DebiasModel | None = None, callback=None) -> TrainResult:
    """Alternating min-min training: ``adv_steps`` adversary updates, then one main update, per batch.

    ``dataset`` is a :class:`~facebias.core.Dataset` or a :class:`Batch`.
    The loss history holds one row per epoch, evaluated on the full data with
    the end-of-epoch parameters.
    """
    hyper = hyper or Hyperparams()
    data = dataset if isinstance(dataset, Batch) else Batch.from_dataset(dataset)
    if schema is None:
        schema = dataset.schema
    n, d1 = data.Z.shape
    N = schema.N
    if d1 != schema.d1 or data.y_sens.shape[1] != N:
        raise ValueError("data does not match schema")
    rng = np.random.default_rng(hyper.seed)
    if model is None:
        d2, d3 = hyper.dims(d1, N)
        model = init_model(d1, schema.K_p, schema.sensitive_cards, d2, d3, hyper.init_scale, rng)
    opt_v = Momentum(model, model.param_names("V"), hyper.lr_main, hyper.momentum, hyper.clip_norm)
    opt_u = Momentum(model, model.param_names("U"), hyper.lr_adv, hyper.momentum, hyper.clip_norm)
    history = []
    step = 0
    # divergence is detected explicitly below, so numpy's float warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, hyper.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, hyper.batch_size):
                b = data.take(order[start : start + hyper.batch_size])
                if N:
                    for _ in range(hyper.adv_steps):
                        opt_u.step(grad_adv(model, b))
                opt_v.step(grad_main(model, b, hyper))
                step += 1
                if not model.is_finite():
                    raise NonFiniteLossError(f"non-finite parameters at epoch {epoch}, step {step}", epoch, step)
            parts = loss_parts(model, data, hyper)
            bad = [k for k, v in parts.items() if not math.isfinite(v)]
            if bad:
                raise NonFiniteLossError(f"non-finite loss {bad} at epoch {epoch}, step {step}", epoch, step)
            history.append({"epoch": epoch, **parts})
            if callback is not None:
                callback(epoch, model, parts)
    return TrainResult(model, history, hyper)


# ---------------------------------------------------------------------------
# leakage probe
# ---------------------------------------------------------------------------


def _split(labels: np.ndarray, seed: int, test_frac: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split: ``test_frac`` of every class goes to the test side."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(test_frac * len(idx)))
        test_idx.append(idx[:k])
        train_idx.append(idx[k:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def chance_level(labels) -> float:
    """Accuracy of always predicting the most frequent label."""
    labels = np.asarray(labels)
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / counts.sum())


def adversary_probe(vectors, labels, seed: int = 0, max_iter: int = 500) -> float:
    """Held-out accuracy of a freshly trained multinomial logistic probe.

    Stratified 80/20 split drawn from ``seed``; features are standardised on
    the training side; L-BFGS with a fixed iteration budget.
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    X = np.asarray(vectors, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("vectors must be (n, d) with one label per row")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("probe needs at least two classes")
    if counts.min() < 10:
        raise ValueError(f"probe needs >= 10 samples per class; smallest class has {counts.min()}")
    tr, te = _split(y, seed)
    clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=max_iter))
    import warnings

    from sklearn.exceptions import ConvergenceWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(X[tr], y[tr])
    return float(np.mean(clf.predict(X[te]) == y[te]))


def orthogonality_ratio(model: DebiasModel, i: int, eps: float = 1e-12) -> float:
    """``||A^T D_i||_F / (||A||_F ||D_i||_F + eps)``."""
    D = model.D[i]
    return float(np.linalg.norm(model.A.T @ D) / (np.linalg.norm(model.A) * np.linalg.norm(D) + eps))
