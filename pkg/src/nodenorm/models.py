"""GC layers, node-wise normalizations and the GCN / T-GCN / P-GCN builders."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .autodiff import Tensor, as_tensor, dropout, glorot_init, matmul, record, relu, add
from .errors import ConfigError, ShapeError
from .graph import SparseAdjacency, spmm

NORM_EPS = 1e-6

VARIANTS = ("gcn", "tgcn", "pgcn")
PLACEMENTS = ("after", "inside")
NORM_KINDS = ("none", "nodenorm", "layernorm", "layernorm_star", "layernorm_ms")


@dataclass(frozen=True)
class Norm:
    """Which variance-controlling operation to apply (``p`` only matters for nodenorm)."""

    kind: str = "none"
    p: int = 1

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ConfigError(f"unknown norm kind {self.kind!r}; expected one of {NORM_KINDS}")
        if self.kind == "nodenorm" and (int(self.p) != self.p or self.p < 1):
            raise ConfigError(f"nodenorm needs an integer p >= 1, got {self.p}")

    @classmethod
    def parse(cls, text: str) -> "Norm":
        """Accepts ``none``, ``nodenorm<p>``, ``layernorm``, ``layernorm-star``, ``layernorm-ms``."""
        t = text.strip().lower().replace("_", "-")
        if t in ("none", ""):
            return cls()
        if t.startswith("nodenorm"):
            digits = t[len("nodenorm"):]
            return cls("nodenorm", int(digits) if digits else 1)
        named = {"layernorm": "layernorm", "layernorm-star": "layernorm_star", "layernorm*": "layernorm_star",
                 "layernorm-ms": "layernorm_ms"}
        if t not in named:
            raise ConfigError(f"cannot parse norm {text!r}")
        return cls(named[t])

    def __str__(self) -> str:
        if self.kind == "nodenorm":
            return f"nodenorm{self.p}"
        return self.kind.replace("_", "-")

    @property
    def affine(self) -> bool:
        return self.kind == "layernorm"


@dataclass(frozen=True)
class ModelSpec:
    depth: int
    input_dim: int
    num_classes: int
    hidden_dim: int = 64
    variant: str = "gcn"
    norm: Norm = field(default_factory=Norm)
    placement: str = "after"
    residual: bool = False
    dropout_rate: float = 0.5

    def __post_init__(self):
        if isinstance(self.norm, str):
            object.__setattr__(self, "norm", Norm.parse(self.norm))
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if min(self.input_dim, self.hidden_dim, self.num_classes) < 1:
            raise ConfigError("input_dim, hidden_dim and num_classes must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement {self.placement!r}; expected one of {PLACEMENTS}")
        if self.placement == "inside" and self.norm.kind == "none":
            raise ConfigError("inside placement requires a norm")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.norm.kind == "nodenorm":
            # inside placement normalizes the propagated input of the first layer too
            widths = [self.hidden_dim] + ([self.input_dim] if self.placement == "inside" else [])
            if min(widths) < 2:
                raise ConfigError("nodenorm needs feature width >= 2 wherever it is applied")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth, "input_dim": self.input_dim, "num_classes": self.num_classes,
            "hidden_dim": self.hidden_dim, "variant": self.variant, "norm": str(self.norm),
            "placement": self.placement, "residual": self.residual, "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**{**d, "norm": Norm.parse(d.get("norm", "none"))})


@dataclass(frozen=True)
class LayerPlan:
    """Static description of one layer of a built model."""

    kind: str            # "gc" | "tran" | "prop"
    in_dim: int
    out_dim: int
    weight: Optional[int]  # index into Model.weights
    relu: bool
    norm: bool
    residual: bool


def plan_layers(spec: ModelSpec) -> list[LayerPlan]:
    L, h = spec.depth, spec.hidden_dim
    has_norm = spec.norm.kind != "none"
    plans = [LayerPlan("gc", spec.input_dim, h, 0, True, has_norm, False)]
    w = 1
    for _ in range(L - 2):
        if spec.variant == "pgcn":
            plans.append(LayerPlan("prop", h, h, None, False, False, False))
        else:
            kind = "gc" if spec.variant == "gcn" else "tran"
            plans.append(LayerPlan(kind, h, h, w, True, has_norm, spec.residual))
            w += 1
    plans.append(LayerPlan("gc", h, spec.num_classes, w, False, False, False))
    return plans


@dataclass
class Model:
    spec: ModelSpec
    weights: list[Tensor]
    norm_params: dict[int, tuple[Tensor, Tensor]] = field(default_factory=dict)  # layer index -> (alpha, beta)

    @property
    def layers(self) -> list[LayerPlan]:
        return plan_layers(self.spec)

    def parameters(self) -> list[Tensor]:
        out = list(self.weights)
        for key in sorted(self.norm_params):
            out.extend(self.norm_params[key])
        return out


# normalizations -------------------------------------------------------------------

def _centre(X: np.ndarray) -> np.ndarray:
    """Row-centred copy; the second pass removes the rounding error of the first mean."""
    mu = X.mean(axis=1, keepdims=True)
    mu = mu + (X - mu).mean(axis=1, keepdims=True)
    return X - mu


def node_norm(H, p: int = 1, eps: float = NORM_EPS) -> Tensor:
    """Divide each row by the p-th root of its population standard deviation.

    Rows whose std is below ``eps`` pass through unchanged.
    """
    H = as_tensor(H)
    X = H.data
    if X.ndim != 2 or X.shape[1] < 2:
        raise ConfigError(f"node_norm needs at least 2 feature columns, got shape {X.shape}")
    d = X.shape[1]
    centred = _centre(X)
    var = np.mean(centred * centred, axis=1, keepdims=True)
    sigma = np.sqrt(var)
    live = sigma >= eps
    scale = np.where(live, sigma, 1.0) ** (1.0 / p)
    out = X / scale

    def backward(g):
        # d/dh of h / sigma^(1/p): g/s - (g.h) (h - mu) / (s p d var)
        gh = np.sum(g * X, axis=1, keepdims=True)
        safe_var = np.where(live, var, 1.0)
        corr = gh * centred / (scale * p * d * safe_var)
        return (np.where(live, g / scale - corr, g),)

    return record((H,), out, backward, "node_norm")


def layer_norm(H, alpha=None, beta=None, mode: str = "full", eps: float = NORM_EPS) -> Tensor:
    """Row-wise LayerNorm. ``mode``: ``full`` (affine), ``star`` (no affine) or ``ms`` (mean subtraction)."""
    H = as_tensor(H)
    X = H.data
    if X.ndim != 2:
        raise ShapeError(f"layer_norm expects a 2-D input, got {X.shape}")
    d = X.shape[1]
    centred = _centre(X)
    if mode == "ms":
        return record((H,), centred, lambda g: (g - g.mean(axis=1, keepdims=True),), "layer_norm_ms")
    if mode not in ("full", "star"):
        raise ConfigError(f"unknown layer_norm mode {mode!r}")

    sigma = np.sqrt(np.mean(centred * centred, axis=1, keepdims=True))
    live = sigma >= eps
    denom = np.maximum(sigma, eps)
    xhat = centred / denom

    def norm_grad(g_xhat):
        mean_g = g_xhat.mean(axis=1, keepdims=True)
        proj = np.mean(g_xhat * xhat, axis=1, keepdims=True)
        # sigma clamped to eps is a constant, so the projection term vanishes there
        return (g_xhat - mean_g - np.where(live, xhat * proj, 0.0)) / denom

    if mode == "star":
        return record((H,), xhat, lambda g: (norm_grad(g),), "layer_norm_star")

    if alpha is None or beta is None:
        raise ConfigError("full layer_norm needs alpha and beta")
    alpha, beta = as_tensor(alpha), as_tensor(beta)
    if alpha.shape != (1, d) or beta.shape != (1, d):
        raise ShapeError(f"alpha/beta must have shape (1, {d}), got {alpha.shape} / {beta.shape}")
    a = alpha.data
    out = a * xhat + beta.data

    def backward(g):
        return (norm_grad(g * a), np.sum(g * xhat, axis=0, keepdims=True), np.sum(g, axis=0, keepdims=True))

    return record((H, alpha, beta), out, backward, "layer_norm")


def apply_norm(H: Tensor, norm: Norm, params: Optional[tuple[Tensor, Tensor]] = None) -> Tensor:
    if norm.kind == "none":
        return H
    if norm.kind == "nodenorm":
        return node_norm(H, norm.p)
    if norm.kind == "layernorm":
        alpha, beta = params if params is not None else (None, None)
        return layer_norm(H, alpha, beta, "full")
    return layer_norm(H, mode="star" if norm.kind == "layernorm_star" else "ms")


# layers and models -------------------------------------------------------------------

def gc_layer(
    H,
    adj: SparseAdjacency,
    W,
    norm: Norm = Norm(),
    placement: str = "after",
    apply_relu: bool = True,
    norm_params: Optional[tuple[Tensor, Tensor]] = None,
    skip: Optional[Tensor] = None,
) -> Tensor:
    """One graph convolution.

    after:  norm(relu(A H W) [+ skip])
    inside: relu(norm(A H) W) [+ skip]

    ``skip`` is the residual input. With ``after`` placement it is added before
    the norm, so a normalized layer's output keeps the norm's guarantees.
    """
    H, W = as_tensor(H), as_tensor(W)
    if H.shape[0] != adj.n:
        raise ShapeError(f"gc_layer: H has {H.shape[0]} rows, adjacency has {adj.n}")
    if placement == "inside":
        Z = matmul(apply_norm(spmm(adj, H), norm, norm_params), W)
    elif W.shape[0] > W.shape[1]:
        # A (H W) == (A H) W; multiplying by W first is cheaper for wide inputs
        Z = spmm(adj, matmul(H, W))
    else:
        Z = matmul(spmm(adj, H), W)
    if apply_relu:
        Z = relu(Z)
    if skip is not None:
        Z = add(Z, skip)
    if placement == "after":
        Z = apply_norm(Z, norm, norm_params)
    return Z


def tran_layer(H, W, norm: Norm, placement: str, norm_params=None, skip: Optional[Tensor] = None) -> Tensor:
    """Transformation only: relu(H W), with the same norm/residual handling as a GC layer."""
    H = as_tensor(H)
    if placement == "inside":
        H = apply_norm(H, norm, norm_params)
    Z = relu(matmul(H, W))
    if skip is not None:
        Z = add(Z, skip)
    if placement == "after":
        Z = apply_norm(Z, norm, norm_params)
    return Z


def build_model(spec: ModelSpec, rng: np.random.Generator) -> Model:
    plans = plan_layers(spec)
    weights = [
        glorot_init(pl.in_dim, pl.out_dim, rng, name=f"W{i}")
        for i, pl in enumerate(plans) if pl.weight is not None
    ]
    norm_params = {}
    if spec.norm.affine:
        for i, pl in enumerate(plans):
            if pl.norm:
                width = pl.in_dim if spec.placement == "inside" else pl.out_dim
                norm_params[i] = (Tensor(np.ones((1, width)), requires_grad=True, name=f"alpha{i}"),
                                  Tensor(np.zeros((1, width)), requires_grad=True, name=f"beta{i}"))
    return Model(spec, weights, norm_params)


def forward(model: Model, X, adj: SparseAdjacency, training: bool = False,
            rng: Optional[np.random.Generator] = None) -> tuple[Tensor, list[Tensor]]:
    """Run the model; returns logits and the output of every layer (logits last)."""
    spec = model.spec
    H = as_tensor(X)
    if H.data.ndim != 2 or H.shape[0] != adj.n:
        raise ShapeError(f"X must have {adj.n} rows, got shape {H.shape}")
    if H.shape[1] != spec.input_dim:
        raise ShapeError(f"X has {H.shape[1]} features, model expects {spec.input_dim}")

    hidden: list[Tensor] = []
    for i, pl in enumerate(model.layers):
        if pl.kind == "prop":
            H = spmm(adj, H)
            hidden.append(H)
            continue
        inp = dropout(H, spec.dropout_rate, rng, training)
        W = model.weights[pl.weight]
        norm = spec.norm if pl.norm else Norm()
        params = model.norm_params.get(i)
        skip = H if pl.residual else None
        if pl.kind == "gc":
            H = gc_layer(inp, adj, W, norm, spec.placement if pl.norm else "after", pl.relu, params, skip)
        else:
            H = tran_layer(inp, W, norm, spec.placement, params, skip)
        hidden.append(H)
    return H, hidden


def clone_model(model: Model) -> Model:
    """Deep copy of the parameters (fresh, untracked-by-tape tensors)."""
    weights = [Tensor(w.data.copy(), requires_grad=True, name=w.name) for w in model.weights]
    norm_params = {
        k: tuple(Tensor(t.data.copy(), requires_grad=True, name=t.name) for t in pair)
        for k, pair in model.norm_params.items()
    }
    return replace(model, weights=weights, norm_params=norm_params)
