"""Differentiable operations.

Broadcasting is limited to scalar-with-tensor and equal shapes; the only
row-broadcast is the explicit :func:`bias_add`. Row-indexed ops (gather,
segment sums) act on axis ``-2`` so a leading batch axis passes through.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..errors import IdOutOfRange, ShapeMismatch
from . import memory
from .autograd import Tensor, as_tensor, default_dtype, make_result


def _is_scalar(x) -> bool:
    return not isinstance(x, Tensor) or x.data.ndim == 0


def _val(x, dtype):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=dtype)


def _dtype_of(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.data.dtype
    return default_dtype()


def _check_binary(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
            raise ShapeMismatch(f"shapes {a.shape} and {b.shape} do not broadcast")


def _reduce_like(g: np.ndarray, x) -> np.ndarray | None:
    if not isinstance(x, Tensor):
        return None
    if x.data.ndim == 0 and g.ndim != 0:
        return np.asarray(g.sum(), dtype=g.dtype)
    return g


# -- elementwise ------------------------------------------------------------------


def add(a, b) -> Tensor:
    _check_binary(a, b)
    dt = _dtype_of(a, b)
    out = _val(a, dt) + _val(b, dt)

    def bw(g):
        return _reduce_like(g, a), _reduce_like(g, b)

    return make_result(out, (a, b), bw)


def sub(a, b) -> Tensor:
    _check_binary(a, b)
    dt = _dtype_of(a, b)
    out = _val(a, dt) - _val(b, dt)

    def bw(g):
        gb = _reduce_like(g, b)
        return _reduce_like(g, a), (None if gb is None else -gb)

    return make_result(out, (a, b), bw)


def mul(a, b) -> Tensor:
    _check_binary(a, b)
    dt = _dtype_of(a, b)
    av, bv = _val(a, dt), _val(b, dt)
    out = av * bv

    def bw(g):
        ga = _reduce_like(g * bv, a) if isinstance(a, Tensor) and a.requires_grad else None
        gb = _reduce_like(g * av, b) if isinstance(b, Tensor) and b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    xv = x.data
    out = np.maximum(xv, 0)

    def bw(g):
        # subgradient 0 at the kink
        return (g * (xv > 0),)

    return make_result(out, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def bw(g):
        return (g * out * (1 - out),)

    return make_result(out, (x,), bw)


def log(x: Tensor) -> Tensor:
    xv = x.data
    out = np.log(xv)

    def bw(g):
        return (g / xv,)

    return make_result(out, (x,), bw)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    xv = x.data
    out = np.clip(xv, lo, hi)

    def bw(g):
        return (g * ((xv >= lo) & (xv <= hi)),)

    return make_result(out, (x,), bw)


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: relu, sigmoid, add, mul, sub."""
    table = {"relu": relu, "sigmoid": sigmoid, "add": add, "mul": mul, "sub": sub}
    return table[op](*args)


# -- reductions and shape ------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def bw(g):
        return (np.broadcast_to(g, shape),)

    return make_result(out, (x,), bw)


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size

    out = np.asarray(x.data.mean(), dtype=x.dtype)

    def bw(g):
        return (np.broadcast_to(g / n, shape),)

    return make_result(out, (x,), bw)


def sum_last(x: Tensor) -> Tensor:
    """Sum over the last axis."""
    shape = x.shape
    out = x.data.sum(axis=-1)

    def bw(g):
        return (np.broadcast_to(g[..., None], shape),)

    return make_result(out, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    out = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(old),)

    return make_result(out, (x,), bw)


def concat(xs: list[Tensor], axis: int = -1) -> Tensor:
    out = np.concatenate([x.data for x in xs], axis=axis)
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(out, tuple(xs), bw)


def take_along_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """``out[..., j] = x[..., idx[..., j]]`` (indices are constants)."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape
    out = np.take_along_axis(x.data, idx, axis=-1)

    def bw(g):
        gx = np.zeros(shape, dtype=g.dtype)
        rows = np.indices(idx.shape)[:-1]
        np.add.at(gx, (*rows, idx), g)
        return (gx,)

    return make_result(out, (x,), bw)


# -- linear algebra ------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` with ``b`` two-dimensional; ``a`` may carry leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    av, bv = a.data, b.data
    out = av @ bv

    def bw(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_result(out, (a, b), bw)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"bias {b.shape} does not match {x.shape}")
    out = x.data + b.data

    def bw(g):
        return g, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return make_result(out, (x, b), bw)


def softmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax over the last axis of ``x / temperature`` (max-subtracted)."""
    z = x.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner) / temperature,)

    return make_result(y, (x,), bw)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis (population variance), then apply gain and bias."""
    xv = x.data
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        d = xv.shape[-1]
        gflat = g.reshape(-1, d)
        ggain = (gflat * xhat.reshape(-1, d)).sum(axis=0)
        gbias = gflat.sum(axis=0)
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (
                gh
                - gh.mean(axis=-1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, ggain, gbias

    return make_result(out, (x, gain, bias), bw)


# -- scatter / gather ------------------------------------------------------------------


class SegmentPlan:
    """Reusable sum-by-id operator for a fixed ``ids`` vector.

    Backed by a CSR matrix of shape ``(num_segments, n)``: O(n) index storage,
    and the product writes directly into an ``(num_segments, d)`` output.
    """

    def __init__(self, ids, num_segments: int):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeMismatch("segment ids must be one-dimensional")
        if len(ids) and (ids.min() < 0 or ids.max() >= num_segments):
            raise IdOutOfRange(f"segment id outside [0, {num_segments})")
        self.ids = ids
        self.num_segments = int(num_segments)
        self._mats: dict = {}

    def __len__(self) -> int:
        return len(self.ids)

    def matrix(self, dtype) -> sp.csr_matrix:
        dtype = np.dtype(dtype)
        mat = self._mats.get(dtype)
        if mat is None:
            n = len(self.ids)
            order = np.argsort(self.ids, kind="stable")
            counts = np.bincount(self.ids, minlength=self.num_segments)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            mat = sp.csr_matrix(
                (np.ones(n, dtype=dtype), order, indptr), shape=(self.num_segments, n)
            )
            self._mats[dtype] = mat
        return mat

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Sum rows (axis -2) of ``values`` by id; leading axes are looped."""
        if values.shape[-2] != len(self.ids):
            raise ShapeMismatch(f"{values.shape[-2]} rows but {len(self.ids)} ids")
        mat = self.matrix(values.dtype)
        if values.ndim == 2:
            return np.asarray(mat @ values)
        lead = values.shape[:-2]
        out = np.empty(lead + (self.num_segments, values.shape[-1]), dtype=values.dtype)
        n = int(np.prod(lead))
        flat_in = values.reshape((n,) + values.shape[-2:])
        flat_out = out.reshape((n,) + out.shape[-2:])
        for i in range(flat_in.shape[0]):
            flat_out[i] = mat @ flat_in[i]
        return out


def segment_sum(values: Tensor, segment_ids, num_segments: int | None = None) -> Tensor:
    """Row ``j`` of the output sums the rows of ``values`` whose id is ``j``."""
    plan = segment_ids if isinstance(segment_ids, SegmentPlan) else SegmentPlan(segment_ids, num_segments)
    values = as_tensor(values)
    out = plan.apply(values.data)

    def bw(g):
        return (memory.track(np.take(g, plan.ids, axis=-2), "segment_sum.grad"),)

    return make_result(out, (values,), bw)


def gather_rows(x: Tensor, idx) -> Tensor:
    """``x[..., idx, :]``; the backward pass is a segment sum over ``idx``."""
    plan = idx if isinstance(idx, SegmentPlan) else SegmentPlan(idx, x.shape[-2])
    out = np.take(x.data, plan.ids, axis=-2)

    def bw(g):
        return (memory.track(plan.apply(g), "gather.grad"),)

    return make_result(out, (x,), bw)
