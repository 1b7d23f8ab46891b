"""Dense rank-2 tensors with reverse-mode automatic differentiation.

Every numeric object in this library is a 2-D float64 matrix. A forward
pass runs inside a :class:`Tape` context; each operation appends one
record, and :func:`backward` walks the records once in reverse order,
accumulating gradients additively into every tensor that was created
with ``requires_grad=True``.

Tapes are rebuilt for every forward pass (define-by-run) and must be
used from a single thread. Operations executed with no active tape run
in inference mode: nothing is recorded and outputs do not track
gradients.

Tensor values are treated as immutable while a tape built from them is
still alive; optimizers may mutate parameter values in place between
passes.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "GatherPlan",
    "Segments",
    "parameter",
    "matmul",
    "add",
    "mul",
    "scalar_mul",
    "add_bias",
    "relu",
    "sigmoid",
    "absolute",
    "concat_cols",
    "concat_rows",
    "rowwise_max_over_set",
    "take_rows",
    "row_scale",
    "segment_max",
    "segment_sum",
    "sum_all",
    "backward",
]

_ACTIVE = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_ACTIVE, "tape", None)


class Tensor:
    """A rows x cols float64 matrix, optionally tracked for gradients.

    ``grad`` is a same-shaped accumulator present exactly when
    ``requires_grad`` is true, and None otherwise. The buffer is
    materialized lazily: internally a tensor that has received no
    gradient yet stores nothing, and reading ``grad`` on it yields
    zeros.
    """

    __slots__ = ("values", "requires_grad", "_grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(
                f"tensors are rank-2; got an array of rank {arr.ndim} "
                f"with shape {arr.shape}"
            )
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None

    @property
    def grad(self) -> np.ndarray | None:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        if value is None:
            self._grad = None
            return
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self.values.shape:
            raise ShapeError(
                f"grad must match the value shape {self.values.shape}, "
                f"got {arr.shape}"
            )
        self._grad = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self._grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def parameter(values) -> Tensor:
    """A tensor that accumulates gradients."""
    return Tensor(values, requires_grad=True)


def _accum(t: Tensor, g: np.ndarray) -> None:
    """Add a freshly allocated contribution to t's gradient.

    The caller hands over ownership of ``g``; it must not be a view of
    or alias any other live array.
    """
    if t._grad is None:
        t._grad = g
    else:
        t._grad += g


def _accum_view(t: Tensor, g: np.ndarray) -> None:
    """Like _accum for contributions that alias other arrays."""
    if t._grad is None:
        t._grad = np.array(g)
    else:
        t._grad += g


def _scatter_buf(t: Tensor) -> np.ndarray:
    """t's gradient buffer, materialized for in-place scatter updates."""
    if t._grad is None:
        t._grad = np.zeros_like(t.values)
    return t._grad


class _OpRecord:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward_fn


class Tape:
    """Ordered record of one forward pass.

    Used as a context manager::

        with Tape() as tape:
            loss = ...
        backward(loss, tape)

    Entries are appended in execution order, so inputs of any entry were
    produced by earlier entries (or exist outside the tape). Nested
    tapes shadow the outer one until their block exits.
    """

    __slots__ = ("entries", "_outer")

    def __init__(self):
        self.entries: list[_OpRecord] = []
        self._outer = None

    def __enter__(self) -> "Tape":
        self._outer = _active_tape()
        _ACTIVE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE.tape = self._outer
        self._outer = None

    def __len__(self) -> int:
        return len(self.entries)


def _emit(name: str, inputs: tuple, out_values: np.ndarray,
          backward_builder: Callable[[Tensor], Callable[[], None]]) -> Tensor:
    """Create the output tensor and record the op if a tape is active.

    ``backward_builder`` receives the finished output tensor and returns
    the closure that moves output.grad into the inputs' grads.
    """
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.requires_grad = needs
    out._grad = None
    if needs:
        tape.entries.append(_OpRecord(name, inputs, out, backward_builder(out)))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(tensor) into every requires_grad tensor.

    ``loss`` must be 1x1 and must have been produced under ``tape``.
    Each recorded operation is visited exactly once, in reverse order of
    recording; gradients add onto whatever is already in ``grad``.
    Branches that never received a gradient are skipped.

    Leaf gradients (tensors the caller created with requires_grad) are
    authoritative after the walk. Buffers of intermediate results may be
    recycled once their producing record has run, so read those during
    the walk or not at all.
    """
    if loss.values.shape != (1, 1):
        raise ContractError(
            f"backward needs a scalar (1x1) loss, got shape {loss.shape}"
        )
    if not loss.requires_grad:
        raise ContractError(
            "backward needs a loss that tracks gradients; this one was "
            "computed outside a tape or from constant inputs"
        )
    _accum(loss, np.ones((1, 1)))
    for entry in reversed(tape.entries):
        entry.backward()


# ---------------------------------------------------------------------------
# elementwise and matrix ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul needs inner dimensions to agree, got {a.shape} @ {b.shape}"
        )
    out_values = a.values @ b.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, g @ b.values.T)
            if b.requires_grad:
                _accum(b, a.values.T @ g)
        return back

    return _emit("matmul", (a, b), out_values, build)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    out_values = a.values + b.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if a.requires_grad:
                _accum_view(a, g)
            if b.requires_grad:
                _accum_view(b, g)
        return back

    return _emit("add", (a, b), out_values, build)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    out_values = a.values * b.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, g * b.values)
            if b.requires_grad:
                _accum(b, g * a.values)
        return back

    return _emit("mul", (a, b), out_values, build)


def scalar_mul(c: float, x: Tensor) -> Tensor:
    c = float(c)
    out_values = c * x.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                _accum(x, c * g)
        return back

    return _emit("scalar_mul", (x,), out_values, build)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x d bias row to every row of x."""
    if bias.rows != 1 or bias.cols != x.cols:
        raise ShapeError(
            f"add_bias needs a 1x{x.cols} bias for input {x.shape}, "
            f"got {bias.shape}"
        )
    out_values = x.values + bias.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if x.requires_grad:
                _accum_view(x, g)
            if bias.requires_grad:
                _accum(bias, g.sum(axis=0, keepdims=True))
        return back

    return _emit("add_bias", (x, bias), out_values, build)


def relu(x: Tensor) -> Tensor:
    out_values = np.maximum(x.values, 0.0)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                # derivative taken as 0 at exactly 0; out's buffer is
                # dead once this record runs, so mask it in place
                g[out.values <= 0.0] = 0.0
                _accum(x, g)
        return back

    return _emit("relu", (x,), out_values, build)


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out_values = np.empty_like(v)
    pos = v >= 0
    out_values[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out_values[~pos] = ev / (1.0 + ev)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                s = out.values
                g *= s * (1.0 - s)
                _accum(x, g)
        return back

    return _emit("sigmoid", (x,), out_values, build)


def absolute(x: Tensor) -> Tensor:
    out_values = np.abs(x.values)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                x_gradient = g * np.sign(x.values)
                _accum(x, x_gradient)
        return back

    return _emit("absolute", (x,), out_values, build)


def sum_all(x: Tensor) -> Tensor:
    """Sum of every entry, as a 1x1 tensor."""
    out_values = np.array([[x.values.sum()]])

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None or not x.requires_grad:
                return
            if x._grad is None:
                x._grad = np.full_like(x.values, g[0, 0])
            else:
                x._grad += g[0, 0]
        return back

    return _emit("sum_all", (x,), out_values, build)


# ---------------------------------------------------------------------------
# concatenation


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(
            f"concat_cols needs equal row counts, got {a.shape} and {b.shape}"
        )
    out_values = np.concatenate([a.values, b.values], axis=1)
    split = a.cols

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if a.requires_grad:
                _accum_view(a, g[:, :split])
            if b.requires_grad:
                _accum_view(b, g[:, split:])
        return back

    return _emit("concat_cols", (a, b), out_values, build)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if len(parts) == 0:
        raise ContractError("concat_rows needs at least one tensor")
    width = parts[0].cols
    for p in parts[1:]:
        if p.cols != width:
            raise ShapeError(
                f"concat_rows needs equal column counts, got {width} and {p.cols}"
            )
    out_values = np.concatenate([p.values for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            for i, p in enumerate(parts):
                if p.requires_grad:
                    _accum_view(p, g[offsets[i]:offsets[i + 1]])
        return back

    return _emit("concat_rows", tuple(parts), out_values, build)


# ---------------------------------------------------------------------------
# reductions over row sets


def rowwise_max_over_set(x: Tensor) -> Tensor:
    """Columnwise max over all rows, as a 1 x d tensor.

    The row set must be non-empty. On ties the gradient flows to the
    first row attaining the max.
    """
    if x.rows == 0:
        raise ContractError("rowwise_max_over_set needs a non-empty row set")
    out_values = x.values.max(axis=0, keepdims=True)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None or not x.requires_grad:
                return
            winners = np.argmax(x.values, axis=0)
            _scatter_buf(x)[winners, np.arange(x.cols)] += g[0]
        return back

    return _emit("rowwise_max_over_set", (x,), out_values, build)


class GatherPlan:
    """Row-gather indices plus a precomputed scatter-add plan.

    Building the plan sorts the indices once; reusing one plan across
    many :func:`take_rows` calls keeps the backward pass at
    reduceat speed instead of per-element scatter.
    """

    __slots__ = ("indices", "n_rows", "_order", "_targets", "_starts")

    def __init__(self, indices, n_rows: int):
        idx = np.asarray(indices, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
            raise ContractError(
                f"gather indices must lie in [0, {n_rows}), got range "
                f"[{idx.min()}, {idx.max()}]"
            )
        self.indices = idx
        self.n_rows = int(n_rows)
        self._order = None
        self._targets = None
        self._starts = None

    def _scatter_plan(self):
        if self._order is None:
            order = np.argsort(self.indices, kind="stable")
            sorted_idx = self.indices[order]
            starts = np.flatnonzero(
                np.concatenate([[True], sorted_idx[1:] != sorted_idx[:-1]])
            )
            self._order = order
            self._targets = sorted_idx[starts]
            self._starts = starts
        return self._order, self._targets, self._starts

    def scatter_add(self, into: np.ndarray, g: np.ndarray) -> None:
        """into[indices[r]] += g[r] for every r, vectorized."""
        if self.indices.size == 0:
            return
        order, targets, starts = self._scatter_plan()
        into[targets] += np.add.reduceat(g[order], starts, axis=0)


def take_rows(x: Tensor, rows) -> Tensor:
    """Gather rows of x: out[r] = x[rows[r]].

    ``rows`` may be an integer array or a prebuilt :class:`GatherPlan`
    (preferred in hot loops). Indices may repeat; the backward pass
    scatter-adds.
    """
    plan = rows if isinstance(rows, GatherPlan) else GatherPlan(rows, x.rows)
    if plan.n_rows != x.rows:
        raise ShapeError(
            f"gather plan was built for {plan.n_rows} rows, tensor has {x.rows}"
        )
    out_values = x.values[plan.indices]

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                plan.scatter_add(_scatter_buf(x), g)
        return back

    return _emit("take_rows", (x,), out_values, build)


def row_scale(x: Tensor, scale: Tensor) -> Tensor:
    """Multiply row r of x by scale[r, 0]. ``scale`` is a column tensor."""
    if scale.cols != 1 or scale.rows != x.rows:
        raise ShapeError(
            f"row_scale needs a {x.rows}x1 scale for input {x.shape}, "
            f"got {scale.shape}"
        )
    out_values = x.values * scale.values

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None:
                return
            if x.requires_grad:
                _accum(x, g * scale.values)
            if scale.requires_grad:
                _accum(scale, (g * x.values).sum(axis=1, keepdims=True))
        return back

    return _emit("row_scale", (x, scale), out_values, build)


class Segments:
    """Contiguous row segments of a matrix, e.g. edges grouped by target.

    Rows [starts_all[s], starts_all[s] + sizes[s]) belong to segment s.
    Segments may be empty; reductions over empty segments produce zero
    rows.
    """

    __slots__ = ("count", "sizes", "starts_all", "total",
                 "_nonempty", "_nonempty_starts", "_row_segment", "_bufs")

    def __init__(self, sizes):
        sizes = np.asarray(sizes, dtype=np.intp).reshape(-1)
        if sizes.size and sizes.min() < 0:
            raise ContractError("segment sizes must be non-negative")
        self.sizes = sizes
        self.count = int(sizes.size)
        self.starts_all = np.concatenate([[0], np.cumsum(sizes)[:-1]]) \
            if sizes.size else np.zeros(0, dtype=np.intp)
        self.total = int(sizes.sum())
        self._nonempty = np.flatnonzero(sizes > 0)
        self._nonempty_starts = self.starts_all[self._nonempty]
        self._row_segment = np.repeat(np.arange(self.count), sizes)
        self._bufs = {}

    def _scratch(self, width: int):
        """Reusable work buffers for the max backward, keyed by width."""
        bufs = self._bufs.get(width)
        if bufs is None:
            bufs = (
                np.empty((self.total, width)),
                np.empty((self.total, width), dtype=bool),
                np.empty((self.total, width), dtype=np.int32),
                (self.total - np.arange(self.total, dtype=np.int32))
                .reshape(-1, 1),
            )
            self._bufs[width] = bufs
        return bufs

    @classmethod
    def from_sorted_ids(cls, ids, count: int) -> "Segments":
        """Build from a sorted array of per-row segment ids."""
        ids = np.asarray(ids, dtype=np.intp).reshape(-1)
        if ids.size and np.any(ids[1:] < ids[:-1]):
            raise ContractError("segment ids must be sorted ascending")
        if ids.size and (ids.min() < 0 or ids.max() >= count):
            raise ContractError(
                f"segment ids must lie in [0, {count}), got range "
                f"[{ids.min()}, {ids.max()}]"
            )
        return cls(np.bincount(ids, minlength=count))

    def _check_rows(self, x: Tensor, op: str) -> None:
        if x.rows != self.total:
            raise ShapeError(
                f"{op} needs {self.total} rows to match the segments, "
                f"tensor has {x.rows}"
            )


def segment_max(x: Tensor, segments: Segments) -> Tensor:
    """Per-segment columnwise max; empty segments give zero rows.

    On ties within a segment, the gradient goes to the first maximal
    row.
    """
    segments._check_rows(x, "segment_max")
    out_values = np.zeros((segments.count, x.cols))
    ne = segments._nonempty
    if ne.size:
        out_values[ne] = np.maximum.reduceat(
            x.values, segments._nonempty_starts, axis=0)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is None or not x.requires_grad or ne.size == 0:
                return
            v = x.values
            gathered, hit, code, desc = segments._scratch(v.shape[1])
            np.take(out.values, segments._row_segment, axis=0, out=gathered)
            np.equal(v, gathered, out=hit)
            # encode hit rows by descending index so a max-reduce picks
            # the first row attaining the segment max
            np.multiply(hit, desc, out=code)
            enc = np.maximum.reduceat(code, segments._nonempty_starts, axis=0)
            winners = segments.total - enc
            grads = g if ne.size == segments.count else g[ne]
            _scatter_buf(x)[winners, np.arange(v.shape[1])] += grads
        return back

    return _emit("segment_max", (x,), out_values, build)


def segment_sum(x: Tensor, segments: Segments) -> Tensor:
    """Per-segment columnwise sum; empty segments give zero rows."""
    segments._check_rows(x, "segment_sum")
    out_values = np.zeros((segments.count, x.cols))
    ne = segments._nonempty
    if ne.size:
        out_values[ne] = np.add.reduceat(
            x.values, segments._nonempty_starts, axis=0)

    def build(out: Tensor):
        def back():
            g = out._grad
            if g is not None and x.requires_grad:
                _accum(x, g[segments._row_segment])
        return back

    return _emit("segment_sum", (x,), out_values, build)
