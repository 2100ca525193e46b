"""Tape-based reverse-mode automatic differentiation over dense float64 matrices.

Operations executed while a :class:`Tape` is active (``with Tape() as tape:``)
and that touch at least one tensor with ``requires_grad=True`` are appended to
the tape together with a backward rule. ``tape.gradient`` then walks the
recorded nodes once, in reverse recording order.

Outside an active tape every op is a plain numpy computation, which is what
evaluation-mode forwards use.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A dense float64 array, optionally tracked for differentiation."""

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.node: int | None = None  # index of the producing node on its tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self) -> "Tensor":
        return total(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    op: str = ""


_state = threading.local()


def _active_tape() -> Optional["Tape"]:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    A tape is single-threaded; nesting is allowed and the innermost tape
    records. Distinct training runs should use distinct tapes.
    """

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn, op: str = "") -> None:
        output.node = len(self.nodes)
        self.nodes.append(Node(tuple(inputs), output, backward, op))

    def gradient(self, target: Tensor, sources: Sequence[Tensor], seed: np.ndarray | None = None) -> list[np.ndarray]:
        """Return d(target)/d(source) for each source (zeros if unreachable)."""
        # intermediate grads are dropped once consumed; keep the ones asked for
        wanted = {id(s) for s in sources}
        grads = self._propagate(target, seed, wanted)
        return [grads.get(id(s), np.zeros_like(s.data)) for s in sources]

    def _propagate(self, target, seed, keep: set[int]) -> dict[int, np.ndarray]:
        if seed is None:
            if target.data.size != 1:
                raise ValidationError("gradient target must be scalar unless a seed is given")
            seed = np.ones_like(target.data)
        grads: dict[int, np.ndarray] = {id(target): np.asarray(seed, dtype=np.float64)}
        for node in reversed(self.nodes):
            key_out = id(node.output)
            g = grads.get(key_out) if key_out in keep else grads.pop(key_out, None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi
        return grads

    def backward(self, target: Tensor, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients into ``.grad`` of every reachable leaf tensor."""
        leaves = {}
        for node in self.nodes:
            for inp in node.inputs:
                if inp.requires_grad and inp.node is None:
                    leaves[id(inp)] = inp
        grads = self._propagate(target, seed, set(leaves))
        for key, leaf in leaves.items():
            if key in grads:
                leaf.grad = grads[key] if leaf.grad is None else leaf.grad + grads[key]


def record(inputs: Sequence[Tensor], out: np.ndarray, backward: BackwardFn, op: str = "") -> Tensor:
    """Wrap ``out`` in a Tensor and record it on the active tape if needed."""
    needs = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        tape.record(inputs, result, backward, op)
    return result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise and linear algebra ------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return record((a, b), A @ B, lambda g: (g @ B.T, A.T @ g), "matmul")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return record((a, b), out, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return record((a, b), out, lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    try:
        out = A * B
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc
    return record(
        (a, b), out,
        lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)),
        "mul",
    )


def power(x, exponent: float) -> Tensor:
    x = as_tensor(x)
    X = x.data
    return record((x,), X ** exponent, lambda g: (g * exponent * X ** (exponent - 1),), "pow")


def total(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return record((x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def relu(x) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    x = as_tensor(x)
    gate = x.data > 0
    return record((x,), np.where(gate, x.data, 0.0), lambda g: (g * gate,), "relu")


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= rate) * (1.0 / (1.0 - rate))
    return record((x,), x.data * keep, lambda g: (g * keep,), "dropout")


# losses -------------------------------------------------------------------------

def softmax_cross_entropy(logits, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the masked rows."""
    logits = as_tensor(logits)
    Z = logits.data
    if Z.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got {Z.shape}")
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != (Z.shape[0],) or mask.shape != (Z.shape[0],):
        raise ShapeError("labels and mask must have one entry per logits row")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValidationError("softmax_cross_entropy: mask selects no rows")
    y = labels[idx]
    if y.min() < 0 or y.max() >= Z.shape[1]:
        raise ValidationError("masked labels must lie in [0, num_classes)")

    z = Z[idx]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(idx.size), y]
    loss = np.mean(lse - picked)

    def backward(g):
        probs = np.exp(shifted - lse[:, None])
        probs[np.arange(idx.size), y] -= 1.0
        full = np.zeros_like(Z)
        full[idx] = probs * (float(g) / idx.size)
        return (full,)

    return record((logits,), np.asarray(loss), backward, "softmax_cross_entropy")


def l1_penalty(params: Sequence[Tensor], lam: float) -> Tensor:
    """lam * sum |w| over all entries; subgradient uses sign(0) = 0."""
    if lam < 0:
        raise ConfigError(f"l1 weight must be non-negative, got {lam}")
    params = [as_tensor(p) for p in params]
    value = lam * sum(float(np.abs(p.data).sum()) for p in params)
    signs = [np.sign(p.data) for p in params]
    return record(params, np.asarray(value), lambda g: [lam * float(g) * s for s in signs], "l1")


# initialisation and optimisation --------------------------------------------

def glorot_init(rows: int, cols: int, rng: np.random.Generator, name: str | None = None) -> Tensor:
    """Uniform(-s, s) with s = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"glorot_init needs positive dimensions, got ({rows}, {cols})")
    s = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-s, s, size=(rows, cols)), requires_grad=True, name=name)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params], v=[np.zeros_like(p.data) for p in params])


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[Sequence[Tensor], AdamState]:
    """One Adam update with coupled L2 decay (``grad += weight_decay * w``).

    Parameters are updated in place; the same objects are returned.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("adam_step: params, grads and state lengths differ")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"adam_step: shape mismatch {p.shape} / {np.shape(g)} / {m.shape}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay:
            g = g + weight_decay * p.data
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


# verification -------------------------------------------------------------------

def gradient_check(f: Callable[[], Tensor], params, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is re-evaluated for every perturbation, so it must be deterministic
    (re-seed any rng inside it). The relative error per entry is
    ``|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)``.
    """
    params = [params] if isinstance(params, Tensor) else list(params)
    with Tape() as tape:
        out = f()
        if out.data.size != 1:
            raise ValidationError(f"gradient_check needs a scalar function, got shape {out.shape}")
        analytic = tape.gradient(out, params)

    worst = 0.0
    for p, g_ad in zip(params, analytic):
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            f_plus = f().item()
            flat[k] = orig - h
            f_minus = f().item()
            flat[k] = orig
            g_fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(g_flat[k] - g_fd) / max(1.0, abs(g_flat[k]), abs(g_fd))
            worst = max(worst, err)
    return worst
