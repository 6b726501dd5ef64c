"""Dense tensors with tape-based reverse-mode differentiation."""
import os
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, NonFiniteError

DTYPES = {"float32": np.float32, "float64": np.float64}

_check_finite = os.environ.get("VESSELMTL_CHECK_FINITE", "") not in {"", "0"}
_tape_stack = []


def set_check_finite(flag):
    """Toggle the NaN/Inf assertion run after every recorded op."""
    global _check_finite
    _check_finite = bool(flag)


def check_finite_enabled():
    return _check_finite


def resolve_dtype(name_or_dtype):
    if isinstance(name_or_dtype, str):
        try:
            return np.dtype(DTYPES[name_or_dtype])
        except KeyError:
            raise ContractError(f"unsupported precision {name_or_dtype!r}; use float32 or float64") from None
    dt = np.dtype(name_or_dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported element type {dt}")
    return dt


class Tensor:
    """A numpy array plus an optional gradient buffer and tape handle.

    Leaves created with ``requires_grad=True`` accumulate gradients into ``grad``
    when :func:`backward` reaches them. Tensors produced by ops inside an active
    :class:`Tape` carry ``node_id``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr if arr.flags.c_contiguous else arr.copy()
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import scale
        return scale(self, other)

    __rmul__ = __mul__

    def sum(self):
        from .ops import sum_all
        return sum_all(self)

    def __repr__(self):
        tag = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


class _Record:
    __slots__ = ("name", "inputs", "output_id", "backward")

    def __init__(self, name, inputs, output_id, backward):
        self.name = name
        self.inputs = inputs
        self.output_id = output_id
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops.

    Use as a context manager; ops executed inside it are recorded. Records are
    appended in execution order, so the list is topologically sorted.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def clear(self):
        """Drop all records so the saved activations can be freed."""
        self.records.clear()


def active_tape():
    return _tape_stack[-1] if _tape_stack else None


@contextmanager
def no_tape():
    """Run ops without recording, even inside an outer tape."""
    _tape_stack.append(None)
    try:
        yield
    finally:
        _tape_stack.pop()


def record(name, out_data, inputs, backward_fn):
    """Wrap ``out_data`` and record it on the active tape when any input needs grads.

    ``backward_fn(grad_out)`` returns one gradient (or None) per input.
    """
    if _check_finite and not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"non-finite values produced by {name}")
    out = Tensor(out_data)
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    out.node_id = len(tape.records)
    out._tape = tape
    tape.records.append(_Record(name, tuple(inputs), out.node_id, backward_fn))
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``grad`` of every reachable leaf."""
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None or loss.node_id is None:
        raise ContractError("loss was not recorded on a tape")
    pending = {loss.node_id: np.ones_like(loss.data)}
    for rec in reversed(tape.records[: loss.node_id + 1]):
        g = pending.pop(rec.output_id, None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._tape is tape and inp.node_id is not None:
                prev = pending.get(inp.node_id)
                pending[inp.node_id] = gi if prev is None else prev + gi
            elif inp.grad is None:
                inp.grad = np.array(gi, dtype=inp.dtype, copy=True)
            else:
                inp.grad += gi
