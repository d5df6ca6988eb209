"""
Minimal dense tensor engine with reverse-mode differentiation
"""
from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]


# ============== Errors ==============

class ShapeError(ValueError):
    """Operand shapes are incompatible for an op"""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or infinite values"""


class TapeError(RuntimeError):
    """Backward called on a missing or already consumed tape"""


# ============== Tape ==============

_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "pit_active_tape", default=None
)
_ste_surrogate: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "pit_ste_surrogate", default=False
)


@dataclass
class Node:
    """One recorded op: output, inputs and the vector-Jacobian product"""
    op: str
    output: "Tensor"
    inputs: Tuple["Tensor", ...]
    backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tape:
    """
    Ordered record of differentiable ops.

    Ops only record while a tape is active (``with Tape():``). The active tape
    is context-local, so training runs in different threads never share one.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.consumed = False
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def record(self, node: Node) -> None:
        if self.consumed:
            raise TapeError("Cannot record on a tape that has already been consumed")
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


@contextmanager
def ste_surrogate() -> Iterator[None]:
    """Evaluate straight-through nodes as identity (used for numeric gradient probing)"""
    token = _ste_surrogate.set(True)
    try:
        yield
    finally:
        _ste_surrogate.reset(token)


# ============== Tensor ==============

class Tensor:
    """Dense float64 array with optional gradient tracking"""

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(f"Tensor {name or '<unnamed>'} created with non-finite values")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(array) if requires_grad else None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def set_requires_grad(self, flag: bool) -> None:
        self.requires_grad = flag
        self.grad = np.zeros_like(self.data) if flag else None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, _as_tensor(other))

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, _as_tensor(other))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _finite(op: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"Op '{op}' produced non-finite values")
    return array


def _make(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result and record it when a tape is active and an input needs grad"""
    out = Tensor.__new__(Tensor)
    out.data = _finite(op, data)
    out.name = None
    out.grad = None
    out._tape = None
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out.requires_grad = needs_grad
    if needs_grad:
        tape.record(Node(op, out, inputs, backward_fn))
        out._tape = tape
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Op '{op}' needs matching shapes, got {a.shape} and {b.shape}")


# ============== Elementwise and reduction ops ==============

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product"""
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return _make("mul", a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


hadamard = mul


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return _make("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def abs_(a: Tensor) -> Tensor:
    # np.sign(0) == 0: the subgradient at the kink is zero
    sign = np.sign(a.data)
    return _make("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


def relu(a: Tensor) -> Tensor:
    alive = (a.data > 0).astype(np.float64)
    return _make("relu", np.where(alive > 0, a.data, 0.0), (a,), lambda g: (g * alive,))


def sum_(a: Tensor) -> Tensor:
    shape = a.shape
    return _make("sum", np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return _make("mean", np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"Op 'matmul' needs (n, k) @ (k, m), got {a.shape} and {b.shape}")
    a_data, b_data = a.data, b.data
    return _make("matmul", a_data @ b_data, (a, b), lambda g: (g @ b_data.T, a_data.T @ g))


def column_product(a: Tensor) -> Tensor:
    """Reduce an L x P matrix to a length-P vector by multiplying each column"""
    if a.ndim != 2:
        raise ShapeError(f"Op 'column_product' needs a matrix, got shape {a.shape}")
    data = a.data
    rows = data.shape[0]

    def backward(g):
        # d out_p / d a_jp = product of the other entries in column p (no division: zeros are common)
        ones = np.ones((1, data.shape[1]))
        prefix = np.vstack([ones, np.cumprod(data, axis=0)[:-1]])
        suffix = np.vstack([np.cumprod(data[::-1], axis=0)[:-1][::-1], ones]) if rows > 1 else ones
        return (g[None, :] * prefix * suffix,)

    return _make("column_product", np.prod(data, axis=0), (a,), backward)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"Cannot reshape {original} to {tuple(shape)}")
    return _make("reshape", out, (a,), lambda g: (g.reshape(original),))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Dense layer applied per time-step: x [B, C_in] or [B, C_in, T],
    weight [C_out, C_in], bias [C_out]
    """
    if weight.ndim != 2 or x.ndim not in (2, 3) or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"Op 'linear' got input {x.shape} and weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"Op 'linear' bias {bias.shape} does not match weight {weight.shape}")
    x_data, w_data = x.data, weight.data
    if x.ndim == 2:
        out = x_data @ w_data.T
        if bias is not None:
            out = out + bias.data

        def backward(g):
            return g @ w_data, g.T @ x_data, g.sum(axis=0)
    else:
        out = np.einsum("oc,bct->bot", w_data, x_data)
        if bias is not None:
            out = out + bias.data[None, :, None]

        def backward(g):
            return (
                np.einsum("oc,bot->bct", w_data, g),
                np.einsum("bot,bct->oc", g, x_data),
                g.sum(axis=(0, 2)),
            )

    if bias is None:
        return _make("linear", out, (x, weight), lambda g: backward(g)[:2])
    return _make("linear", out, (x, weight, bias), backward)


def bce_with_logits(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy on logits, numerically stable"""
    _same_shape("bce_with_logits", logits, target)
    z, y = logits.data, target.data
    n = z.size
    value = np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))))
    prob = 1.0 / (1.0 + np.exp(-z))

    def backward(g):
        return float(g) * (prob - y) / n, float(g) * (-z) / n

    return _make("bce_with_logits", np.array(value), (logits, target), backward)


# ============== Straight-through binarization ==============

def heaviside_ste(g_hat: Tensor, delta: float) -> Tensor:
    """
    Forward: 1 where g_hat >= delta, else 0.
    Backward: identity (straight-through estimator).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if _ste_surrogate.get():
        out = g_hat.data.copy()
    else:
        out = (g_hat.data >= delta).astype(np.float64)
    return _make("heaviside_ste", out, (g_hat,), lambda g: (g,))


# ============== Causal dilated convolution ==============

def _causal_terms(x_data: np.ndarray, k: int, d: int) -> np.ndarray:
    """Left-pad along time by (k - 1) * d zeros"""
    pad = (k - 1) * d
    widths = [(0, 0)] * (x_data.ndim - 1) + [(pad, 0)]
    return np.pad(x_data, widths)


def conv1d_causal(x: Tensor, weight: Tensor, bias: Optional[Tensor], d: int) -> Tensor:
    """
    y[m, t] = sum_i sum_l x[l, t - d*i] * W[m, l, i] + bias[m]

    x is [C_in, T] or [B, C_in, T]. Taps are accumulated in a fixed order
    (tap outer, input channel inner, bias last) so results are bitwise
    reproducible and zero taps leave the sum untouched.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"Dilation must be a positive integer, got {d}")
    if weight.ndim != 3 or weight.shape[2] < 1:
        raise ShapeError(f"Conv weight must be [C_out, C_in, K] with K >= 1, got {weight.shape}")
    if x.ndim not in (2, 3):
        raise ShapeError(f"Conv input must be [C_in, T] or [B, C_in, T], got {x.shape}")
    c_out, c_in, k = weight.shape
    if x.shape[-2] != c_in:
        raise ShapeError(f"Conv input has {x.shape[-2]} channels but weight expects {c_in}: {x.shape} vs {weight.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"Conv bias {bias.shape} does not match weight {weight.shape}")

    d = int(d)
    batched = x.ndim == 3
    x_data = x.data if batched else x.data[None]
    w_data = weight.data
    steps = x_data.shape[-1]
    padded = _causal_terms(x_data, k, d)
    pad = (k - 1) * d

    out = np.zeros((x_data.shape[0], c_out, steps))
    for i in range(k):
        start = pad - d * i
        window = padded[:, :, start:start + steps]
        for l in range(c_in):
            out += w_data[None, :, l, i, None] * window[:, l, None, :]
    if bias is not None:
        out += bias.data[None, :, None]

    def backward(g):
        g3 = g if batched else g[None]
        grad_w = np.zeros_like(w_data)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            start = pad - d * i
            window = padded[:, :, start:start + steps]
            grad_w[:, :, i] = np.einsum("bmt,blt->ml", g3, window)
            grad_padded[:, :, start:start + steps] += np.einsum("bmt,ml->blt", g3, w_data[:, :, i])
        grad_x = grad_padded[:, :, pad:]
        if not batched:
            grad_x = grad_x[0]
        grad_b = g3.sum(axis=(0, 2)) if bias is not None else None
        return grad_x, grad_w, grad_b

    inputs = (x, weight) if bias is None else (x, weight, bias)
    data = out if batched else out[0]
    if bias is None:
        return _make("conv1d_causal", data, inputs, lambda g: backward(g)[:2])
    return _make("conv1d_causal", data, inputs, backward)


# ============== Backward ==============

def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from a scalar loss"""
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("Loss was not recorded on a tape (compute it inside `with Tape():`)")
    if tape.consumed:
        raise TapeError("Tape already consumed: one backward pass per forward pass")
    if not tape.nodes:
        raise TapeError("Tape is empty")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        input_grads = node.backward_fn(upstream)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            _finite(f"{node.op} (backward)", grad)
            if tensor.is_leaf:
                tensor.grad = tensor.grad + grad if tensor.grad is not None else grad.copy()
            else:
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad

    tape.clear()
    tape.consumed = True
    logger.debug("Backward pass complete")


def pool_time(x: Tensor, mode: str = "mean") -> Tensor:
    """Collapse the time axis of [B, C, T] to [B, C] (mean or last step)"""
    if x.ndim != 3:
        raise ShapeError(f"Op 'pool_time' needs [B, C, T], got {x.shape}")
    shape, steps = x.shape, x.shape[2]
    if mode == "mean":
        def backward(g):
            return (np.repeat(g[:, :, None] / steps, steps, axis=2),)
        return _make("pool_time", x.data.mean(axis=2), (x,), backward)
    if mode == "last":
        def backward(g):
            grad = np.zeros(shape)
            grad[:, :, -1] = g
            return (grad,)
        return _make("pool_time", x.data[:, :, -1].copy(), (x,), backward)
    raise ValueError(f"Unknown pooling mode: {mode}")
