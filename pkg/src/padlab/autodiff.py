"""Dense tensors and tape-based reverse-mode differentiation.

A `Tensor` is an immutable-by-convention dense array of rank 1..4 in row-major
order; activations use the (N, C, H, W) layout. A `Variable` wraps a Tensor
together with an accumulated gradient. Differentiable operations append
`TapeEntry` records to a `Tape` in execution order, which is automatically a
topological order, so `backward` is a single reverse sweep.

Gradient accumulation over fan-out is plain summation in recording order.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, NumericError, ShapeError

DTYPES = {"f32": np.float32, "f64": np.float64}
_NP_TO_TAG = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


class Tensor:
    """Dense numeric array, rank 1..4, all dims >= 1, dtype f32 or f64."""

    __slots__ = ("data",)

    def __init__(self, data, dtype: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(DTYPES[dtype], copy=False)
        elif arr.dtype not in _NP_TO_TAG:
            arr = arr.astype(np.float64)
        if arr.ndim < 1 or arr.ndim > 4:
            raise ShapeError(f"rank must be between 1 and 4, got {arr.ndim}")
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dims must be >= 1, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return _NP_TO_TAG[self.data.dtype]

    @property
    def size(self) -> int:
        return self.data.size

    def astype(self, dtype: str) -> "Tensor":
        return Tensor(self.data.astype(DTYPES[dtype], copy=False))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def fill(shape, value, dtype: str = "f32") -> Tensor:
    """Tensor of `shape` with every element equal to `value`."""
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("shape must be non-empty")
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dims must be >= 1, got {shape}")
    return Tensor(np.full(shape, value, dtype=DTYPES[dtype]))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (N, C, H, W) tensors along the channel axis, a first."""
    if len(a.shape) != 4 or len(b.shape) != 4:
        raise ShapeError("concat_channels expects rank-4 tensors")
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    an, _, ah, aw = a.shape
    bn, _, bh, bw = b.shape
    if (an, ah, aw) != (bn, bh, bw):
        raise ShapeError(f"N/H/W mismatch: {a.shape} vs {b.shape}")
    return Tensor(np.concatenate([a.data, b.data], axis=1))


class Variable:
    """A Tensor plus an accumulated gradient of identical shape."""

    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.requires_grad = bool(requires_grad)
        self.grad = (np.zeros(self.value.data.shape, self.value.data.dtype)
                     if self.requires_grad else None)
        self.name = name

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros(self.value.data.shape, self.value.data.dtype)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Variable{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


class TapeEntry:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Execution-ordered record of differentiable operations.

    Appending at execution time guarantees every entry appears after the
    entries that produced its inputs.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def record(self, inputs, output: Variable, backward_fn):
        """backward_fn(out_grad) -> tuple of grads aligned with inputs (None allowed)."""
        self.entries.append(TapeEntry(tuple(inputs), output, backward_fn))

    def __len__(self):
        return len(self.entries)


def backward(loss: Variable, tape: Tape) -> dict:
    """Reverse sweep from a scalar loss.

    Accumulates dLoss/dVariable into `.grad` of every requires_grad Variable
    reachable from `loss` and also returns {Variable: gradient array}.
    """
    if loss.value.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    pending: dict[Variable, np.ndarray] = {loss: np.ones_like(loss.value.data)}
    for entry in reversed(tape.entries):
        out_grad = pending.pop(entry.output, None)
        if out_grad is None:
            continue  # not reachable from the loss
        in_grads = entry.backward_fn(out_grad)
        for var, g in zip(entry.inputs, in_grads):
            if g is None or not var.requires_grad:
                continue
            if g.shape != var.value.shape:
                raise GraphError(
                    f"gradient shape {g.shape} != value shape {var.value.shape}")
            if var in pending:
                pending[var] = pending[var] + g
            else:
                pending[var] = g
    grad_map = {}
    for var, g in pending.items():
        if var.requires_grad:
            if var.grad is None:
                var.grad = np.zeros_like(var.value.data)
            var.grad = var.grad + g
            grad_map[var] = g
    return grad_map


def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    `f(var, tape)` must build a scalar Variable from `var` using tape-recorded
    ops and be deterministic across calls. `x` must be f64; f32 differences
    are too noisy for tight tolerances.
    """
    if x.dtype != "f64":
        raise NumericError("grad_check requires an f64 input")
    var = Variable(x.copy(), requires_grad=True)
    tape = Tape()
    out = f(var, tape)
    backward(out, tape)
    analytic = var.grad.copy()

    flat = var.value.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(Variable(var.value), Tape()).value.data.reshape(-1)[0])
        flat[i] = orig - eps
        lo = float(f(Variable(var.value), Tape()).value.data.reshape(-1)[0])
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        raise NumericError("non-finite values in gradient check")
    a = analytic.reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
    return float(np.max(np.abs(a - numeric) / denom))
