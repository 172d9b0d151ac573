"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Only the handful of primitives needed for small multilayer networks are
provided. Broadcasting is limited to scalar scaling; bias rows and embedding
lookups are expressed as products with constant matrices instead.

Usage::

    with Tape() as tape:
        y = softplus(matmul(x, w))
        loss = mean(y)
    backward(loss, tape)
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class _Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tcgan_tape", default=None)


@dataclass
class Tape:
    """Ordered record of primitive operations.

    Nodes are appended in execution order, so every node's inputs were
    produced before it. Use as a context manager to make it the active tape;
    operations only record onto the active tape.
    """

    nodes: list[_Node] = field(default_factory=list)
    _token: contextvars.Token | None = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], rule) -> Tensor:
    # a finite sum implies finite entries; only scan when the sum is not finite
    if not np.isfinite(out_data.sum()) and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("operation produced non-finite values")
    tape = _ACTIVE_TAPE.get()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = needs
    out.grad = None
    out.name = None
    if needs:
        tape.nodes.append(_Node(inputs, out, rule))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _record(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    A, B = a.data, b.data
    return _record(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _record(a.data * s, (a,), lambda g: (g * s,))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    x = a.data
    return _record(np.where(x >= 0.0, x, alpha * x), (a,),
                   lambda g: (np.where(x >= 0.0, g, alpha * g),))


def leaky_relu_slope(a: Tensor, alpha: float = 0.2) -> np.ndarray:
    """Piecewise-constant derivative of leaky_relu at ``a`` (no tape node)."""
    return np.where(a.data >= 0.0, 1.0, alpha)


def _softplus(x: np.ndarray) -> np.ndarray:
    # x + log1p(exp(-x)) above 30 avoids exp overflow
    return np.where(x > 30.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 30.0))))


def _logistic(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    return _record(_softplus(x), (a,), lambda g: (g * _logistic(x),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {a.shape}")
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,))


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a 0-d tensor."""
    shape = a.shape
    return _record(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    return scale(total(a), 1.0 / a.size)


def elementwise(op_kind: str, *inputs: Tensor, alpha: float = 0.2, factor: float = 1.0) -> Tensor:
    """Dispatch by name: add, sub, mul, scale, leaky_relu, softplus, tanh."""
    unary = {"leaky_relu": lambda t: leaky_relu(t, alpha), "softplus": softplus, "tanh": tanh,
             "scale": lambda t: scale(t, factor)}
    binary = {"add": add, "sub": sub, "mul": mul}
    if op_kind in unary:
        if len(inputs) != 1:
            raise ContractError(f"{op_kind} takes one operand, got {len(inputs)}")
        return unary[op_kind](inputs[0])
    if op_kind in binary:
        if len(inputs) != 2:
            raise ContractError(f"{op_kind} takes two operands, got {len(inputs)}")
        return binary[op_kind](*inputs)
    raise ContractError(f"unknown elementwise op {op_kind!r}")


# ---------------------------------------------------------------- helpers built from primitives


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b a (1, n) row; the row is tiled via a ones column."""
    ones = constant(np.ones((x.shape[0], 1)))
    return add(matmul(x, w), matmul(ones, b))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise IndexError(f"class id out of range [0, {num_classes}): {labels.min()}..{labels.max()}")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def gather_rows(table: Tensor, labels: np.ndarray) -> Tensor:
    return matmul(constant(one_hot(labels, table.shape[0])), table)


def row_sum(a: Tensor) -> Tensor:
    return matmul(a, constant(np.ones((a.shape[1], 1))))


# ---------------------------------------------------------------- reverse pass


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(tensor) into ``grad`` of every tensor on the tape.

    The tape is cleared afterwards.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    seen: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        seen.setdefault(id(node.output), node.output)
        for t in node.inputs:
            seen.setdefault(id(t), t)
        g = grads.get(id(node.output))
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if not t.requires_grad or gi is None:
                continue
            key = id(t)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    for key, t in seen.items():
        if not t.requires_grad:
            continue
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(t.data)
        t.grad = g if t.grad is None else t.grad + g
    if id(loss) not in seen and loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
    tape.clear()


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> None:
    """Bias-corrected Adam update applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ContractError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.first_moment)} moment slots"
        )
    if state.step_count < 0:
        raise ContractError("adam_step: negative step_count")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or state.first_moment[i].shape != p.data.shape:
            raise ContractError(f"adam_step: param {i} shape {p.shape} vs grad {g.shape}")
        m = b1 * state.first_moment[i] + (1.0 - b1) * g
        v = b2 * state.second_moment[i] + (1.0 - b2) * (g * g)
        state.first_moment[i] = m
        state.second_moment[i] = v
        p.data = p.data - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
