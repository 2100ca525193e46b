"""Measurements on trained models: node-wise variance, variance-bin accuracy
gaps, the graph Lipschitz constant, feature correlation and overfitting gaps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .graph import SparseAdjacency
from .models import Model, forward

NUM_BINS = 5
ALL_PAIRS_MAX_NODES = 2000
MIN_PAIR_DISTANCE = 1e-12


def node_variance(H) -> np.ndarray:
    """Population variance of every row."""
    H = np.asarray(getattr(H, "data", H), dtype=np.float64)
    if H.ndim != 2 or H.shape[1] < 1:
        raise ValidationError(f"node_variance needs an n x d array with d >= 1, got {H.shape}")
    return H.var(axis=1)


@dataclass
class VarianceProfile:
    per_layer: list[np.ndarray]
    layer_indices: list[int]

    @property
    def log10(self) -> list[np.ndarray]:
        # zero variances map to -inf; plotting code drops them
        with np.errstate(divide="ignore"):
            return [np.log10(v) for v in self.per_layer]

    def max_log10(self) -> np.ndarray:
        return np.array([np.max(v) for v in self.log10])


def variance_profile(model: Model, X, adj: SparseAdjacency) -> VarianceProfile:
    """Eval-mode forward pass; node-wise variance of every layer output (1-based layer ids)."""
    _, hidden = forward(model, X, adj, training=False)
    return VarianceProfile([node_variance(h) for h in hidden], list(range(1, len(hidden) + 1)))


@dataclass
class BinReport:
    bins: list[np.ndarray]          # positions into the input arrays, lowest variance first
    acc_shallow: np.ndarray
    acc_deep: np.ndarray
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gap = self.acc_shallow - self.acc_deep


def variance_bins(deep_var, correct_deep, correct_shallow, num_bins: int = NUM_BINS) -> BinReport:
    """Sort nodes by the deep model's variance and compare per-bin accuracies.

    Ties are broken by position; the remainder of ``n / num_bins`` goes to the
    lowest-variance bins.
    """
    deep_var = np.asarray(deep_var, dtype=np.float64)
    correct_deep = np.asarray(correct_deep, dtype=bool)
    correct_shallow = np.asarray(correct_shallow, dtype=bool)
    n = deep_var.size
    if not (deep_var.shape == correct_deep.shape == correct_shallow.shape == (n,)):
        raise ValidationError("variance_bins inputs must be 1-D arrays of equal length")
    if n < num_bins:
        raise ValidationError(f"variance_bins needs at least {num_bins} nodes, got {n}")
    order = np.argsort(deep_var, kind="stable")
    base, extra = divmod(n, num_bins)
    sizes = [base + (1 if b < extra else 0) for b in range(num_bins)]
    bins = np.split(order, np.cumsum(sizes)[:-1])
    acc_s = np.array([correct_shallow[b].mean() for b in bins])
    acc_d = np.array([correct_deep[b].mean() for b in bins])
    return BinReport(bins, acc_s, acc_d)


def _pair_ratios(F: np.ndarray, X: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Exact ratios for explicit pairs; degenerate pairs come back as NaN."""
    num = np.linalg.norm(F[i] - F[j], axis=1)
    den = np.linalg.norm(X[i] - X[j], axis=1)
    out = np.full(i.size, np.nan)
    ok = den >= MIN_PAIR_DISTANCE
    out[ok] = num[ok] / den[ok]
    return out


def _nanmax(values: np.ndarray) -> float:
    values = values[~np.isnan(values)]
    return float(values.max()) if values.size else np.nan


def _all_pairs_max(F: np.ndarray, X: np.ndarray, block: int = 512, top: int = 32) -> float:
    """Blocked Gram-matrix search; suspicious and leading pairs are recomputed exactly."""
    n = X.shape[0]
    sqx = np.einsum("ij,ij->i", X, X)
    sqf = np.einsum("ij,ij->i", F, F)
    best = np.nan
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        dx = np.maximum(sqx[rows, None] + sqx[None, :] - 2.0 * (X[rows] @ X.T), 0.0)
        df = np.maximum(sqf[rows, None] + sqf[None, :] - 2.0 * (F[rows] @ F.T), 0.0)
        upper = np.arange(n)[None, :] > rows[:, None]
        # Gram distances lose precision when points nearly coincide
        shaky = upper & (dx <= 1e-8 * (sqx[rows, None] + sqx[None, :] + 1.0))
        solid = upper & ~shaky
        est = np.where(solid, np.sqrt(df) / np.sqrt(np.where(solid, dx, 1.0)), -np.inf)
        flat = est.ravel()
        k = min(top, int(solid.sum()))
        cand = np.argpartition(flat, flat.size - k)[flat.size - k:] if k else np.array([], dtype=np.int64)
        cand = cand[np.isfinite(flat[cand])]
        ci, cj = np.divmod(cand, n)
        si, sj = np.nonzero(shaky)
        pi = np.concatenate([rows[ci], rows[si]])
        pj = np.concatenate([cj, sj])
        if pi.size:
            best = _nanmax(np.append(_pair_ratios(F, X, pi, pj), best))
    return float(best)


def lipschitz_mode(n: int, pair_limit: Optional[int]) -> str:
    return "sampled" if pair_limit is not None and n > ALL_PAIRS_MAX_NODES else "all-pairs"


def graph_lipschitz(model: Model, X, adj: SparseAdjacency, pair_limit: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> float:
    """max ||f(x_i) - f(x_j)|| / ||x_i - x_j|| over node pairs, f = eval-mode logits.

    All pairs are used unless ``pair_limit`` is given and the graph has more
    than 2000 nodes; then ``pair_limit`` uniformly drawn pairs are used.
    """
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    logits, _ = forward(model, X, adj, training=False)
    return lipschitz_from_outputs(X, logits.data, pair_limit, rng)


def lipschitz_from_outputs(X, F, pair_limit: Optional[int] = None,
                           rng: Optional[np.random.Generator] = None) -> float:
    X = np.asarray(X, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    n = X.shape[0]
    if n < 2 or F.shape[0] != n:
        raise ValidationError("graph_lipschitz needs at least 2 nodes and one output row per node")
    if lipschitz_mode(n, pair_limit) == "sampled":
        if pair_limit < 1:
            raise ValidationError("pair_limit must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        i = rng.integers(0, n, size=pair_limit)
        j = (i + rng.integers(1, n, size=pair_limit)) % n  # uniform over j != i
        value = _nanmax(_pair_ratios(F, X, i, j))
    else:
        value = _all_pairs_max(F, X)
    if np.isnan(value):
        raise ValidationError("every considered node pair has identical input features")
    return value


def correlation_frobenius(H) -> float:
    """Frobenius norm of the column-wise Pearson correlation matrix (diagonal included).

    Constant columns correlate 0 with everything else and 1 with themselves.
    """
    H = np.asarray(getattr(H, "data", H), dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 2:
        raise ValidationError(f"correlation_frobenius needs at least 2 rows, got shape {H.shape}")
    C = H - H.mean(axis=0)
    std = np.sqrt(np.mean(C * C, axis=0))
    scale = np.max(np.abs(H), axis=0)
    live = std > 1e-12 * np.maximum(scale, 1.0)
    Z = np.where(live, C / np.where(live, std, 1.0), 0.0)
    corr = (Z.T @ Z) / H.shape[0]
    np.fill_diagonal(corr, 1.0)
    return float(np.linalg.norm(np.clip(corr, -1.0, 1.0)))


@dataclass
class History:
    """Per-epoch metrics; every list has one entry per epoch."""

    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    def append(self, train_loss, train_acc, val_loss, val_acc) -> None:
        self.train_loss.append(float(train_loss))
        self.train_acc.append(float(train_acc))
        self.val_loss.append(float(val_loss))
        self.val_acc.append(float(val_acc))

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("train_loss", "train_acc", "val_loss", "val_acc")}


def overfit_gaps(history: History) -> tuple[float, float]:
    """Final-epoch (train - val) accuracy and loss differences."""
    series: Sequence[Sequence[float]] = (history.train_loss, history.train_acc, history.val_loss, history.val_acc)
    lengths = {len(s) for s in series}
    if len(lengths) != 1 or 0 in lengths:
        raise ValidationError(f"history series must be non-empty and aligned, got lengths {sorted(lengths)}")
    return (history.train_acc[-1] - history.val_acc[-1], history.train_loss[-1] - history.val_loss[-1])
