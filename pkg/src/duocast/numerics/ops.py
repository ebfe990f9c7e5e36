"""Differentiable primitives over :class:`Tensor`.

Elementwise binary ops support identical shapes or a scalar on one side;
anything richer (bias rows, per-row scales, gathers) is its own primitive
with a hand-written adjoint so the supported surface stays explicit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .tensor import ShapeError, Tensor, as_tensor

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} vs {b.shape} "
                     "(only identical-shape or scalar broadcasting is supported)")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    """Collapse a broadcast gradient back onto a scalar operand."""
    if g.shape == t.data.shape:
        return g
    return np.sum(g).reshape(t.data.shape)


# -- arithmetic ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        return _reduce_to(g, a), _reduce_to(g, b)

    return Tensor._from_op(out, (a, b), bwd, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "sub")
    out = a.data - b.data

    def bwd(g):
        return _reduce_to(g, a), _reduce_to(-g, b)

    return Tensor._from_op(out, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "mul")
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _reduce_to(g * bd, a), _reduce_to(g * ad, b)

    return Tensor._from_op(out, (a, b), bwd, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "div")
    out = a.data / b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _reduce_to(g / bd, a), _reduce_to(-g * ad / (bd * bd), b)

    return Tensor._from_op(out, (a, b), bwd, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (-g,)

    return Tensor._from_op(-a.data, (a,), bwd, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return Tensor._from_op(out, (a, b), bwd, "matmul")


# -- activations ---------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    mask = a.data > 0.0

    def bwd(g):
        return (g * mask,)

    return Tensor._from_op(out, (a,), bwd, "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # stable two-branch evaluation; saturates cleanly at the float limits
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, (a,), bwd, "sigmoid")


def gelu(a) -> Tensor:
    """Exact Gaussian-CDF gelu: x * Phi(x)."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return Tensor._from_op(out, (a,), bwd, "gelu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (a,), bwd, "tanh")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return Tensor._from_op(out, (a,), bwd, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)
    ad = a.data

    def bwd(g):
        return (g / ad,)

    return Tensor._from_op(out, (a,), bwd, "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def bwd(g):
        return (g * 0.5 / out,)

    return Tensor._from_op(out, (a,), bwd, "sqrt")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out = np.abs(a.data)
    sign = np.sign(a.data)

    def bwd(g):
        return (g * sign,)

    return Tensor._from_op(out, (a,), bwd, "abs")


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, floor)
    mask = a.data > floor

    def bwd(g):
        return (g * mask,)

    return Tensor._from_op(out, (a,), bwd, "clamp_min")


# -- reductions ----------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.full(shape, g.reshape(()) if np.ndim(g) else g),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, shape).copy(),)

    return Tensor._from_op(out, (a,), bwd, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return (np.full(shape, (g.reshape(()) if np.ndim(g) else g) / count),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, shape).copy() / count,)

    return Tensor._from_op(out, (a,), bwd, "mean")


def vmax(a) -> Tensor:
    """Max over all elements; gradient routes to the first argmax."""
    a = as_tensor(a)
    flat = a.data.ravel()
    idx = int(np.argmax(flat))
    out = flat[idx]
    shape = a.data.shape

    def bwd(g):
        ga = np.zeros(shape)
        ga.ravel()[idx] = g.reshape(()) if np.ndim(g) else g
        return (ga,)

    return Tensor._from_op(out, (a,), bwd, "vmax")


# -- shape ops -----------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    old = a.data.shape

    def bwd(g):
        return (g.reshape(old),)

    return Tensor._from_op(out, (a,), bwd, "reshape")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")

    def bwd(g):
        return (g.T,)

    return Tensor._from_op(a.data.T, (a,), bwd, "transpose")


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tuple(parts), bwd, "concat")


def rows(a, i0: int, i1: int) -> Tensor:
    """Rows [i0, i1) along axis 0."""
    a = as_tensor(a)
    out = a.data[i0:i1]
    shape = a.data.shape

    def bwd(g):
        ga = np.zeros(shape)
        ga[i0:i1] = g
        return (ga,)

    return Tensor._from_op(out, (a,), bwd, "rows")


def cols(a, j0: int, j1: int) -> Tensor:
    """Columns [j0, j1) of a 2-D tensor."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"cols expects a 2-D tensor, got {a.shape}")
    out = a.data[:, j0:j1]
    shape = a.data.shape

    def bwd(g):
        ga = np.zeros(shape)
        ga[:, j0:j1] = g
        return (ga,)

    return Tensor._from_op(out, (a,), bwd, "cols")


def gather_rows(a, idx) -> Tensor:
    """Select rows by integer index array (repeats allowed)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = a.data[idx]
    shape = a.data.shape

    def bwd(g):
        ga = np.zeros(shape)
        np.add.at(ga, idx, g)
        return (ga,)

    return Tensor._from_op(out, (a,), bwd, "gather_rows")


def gather_cols_per_row(a, idx) -> Tensor:
    """out[n, k] = a[n, idx[n, k]] for a 2-D tensor."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if a.ndim != 2 or idx.ndim != 2 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"gather_cols_per_row: {a.shape} with index {idx.shape}")
    rows_ix = np.arange(a.shape[0])[:, None]
    out = a.data[rows_ix, idx]
    shape = a.data.shape

    def bwd(g):
        ga = np.zeros(shape)
        np.add.at(ga, (np.broadcast_to(rows_ix, idx.shape), idx), g)
        return (ga,)

    return Tensor._from_op(out, (a,), bwd, "gather_cols_per_row")


def weighted_gather_rows(feats, idx, weights) -> Tensor:
    """out[n] = sum_k weights[n, k] * feats[idx[n, k]].

    The sparse aggregation core: O(rows * k * dim) work, never O(rows^2).
    """
    feats = as_tensor(feats)
    weights = as_tensor(weights)
    idx = np.asarray(idx, dtype=np.intp)
    if feats.ndim != 2 or idx.shape != weights.shape:
        raise ShapeError(
            f"weighted_gather_rows: feats {feats.shape}, idx {idx.shape}, weights {weights.shape}"
        )
    picked = feats.data[idx]                      # [n, k, d]
    out = np.einsum("nk,nkd->nd", weights.data, picked)
    fshape = feats.data.shape
    wdata = weights.data

    def bwd(g):
        gw = np.einsum("nd,nkd->nk", g, picked)
        gf = np.zeros(fshape)
        contrib = wdata[:, :, None] * g[:, None, :]   # [n, k, d]
        np.add.at(gf, idx.ravel(), contrib.reshape(-1, fshape[1]))
        return gf, gw

    return Tensor._from_op(out, (feats, weights), bwd, "weighted_gather_rows")


def add_bias(a, b) -> Tensor:
    """a[..., d] + b[d]; the row-broadcast used by affine layers."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: {a.shape} + {b.shape}")
    out = a.data + b.data

    def bwd(g):
        return g, g.reshape(-1, b.shape[0]).sum(axis=0)

    return Tensor._from_op(out, (a, b), bwd, "add_bias")


def scale_rows(a, s) -> Tensor:
    """Multiply row i of a 2-D tensor by s[i]."""
    a, s = as_tensor(a), as_tensor(s)
    if a.ndim != 2 or s.ndim != 1 or s.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rows: {a.shape} * {s.shape}")
    out = a.data * s.data[:, None]
    ad, sd = a.data, s.data

    def bwd(g):
        return g * sd[:, None], (g * ad).sum(axis=1)

    return Tensor._from_op(out, (a, s), bwd, "scale_rows")


def shift_rows(a, v) -> Tensor:
    """Add v[i] to every entry of row i."""
    a, v = as_tensor(a), as_tensor(v)
    if a.ndim != 2 or v.ndim != 1 or v.shape[0] != a.shape[0]:
        raise ShapeError(f"shift_rows: {a.shape} + {v.shape}")
    out = a.data + v.data[:, None]

    def bwd(g):
        return g, g.sum(axis=1)

    return Tensor._from_op(out, (a, v), bwd, "shift_rows")


def repeat_cols(a, r: int) -> Tensor:
    """Repeat each column of a 2-D tensor r times (piecewise-constant expand)."""
    a = as_tensor(a)
    if a.ndim != 2 or r < 1:
        raise ShapeError(f"repeat_cols: shape {a.shape}, r={r}")
    out = np.repeat(a.data, r, axis=1)
    n, u = a.data.shape

    def bwd(g):
        return (g.reshape(n, u, r).sum(axis=2),)

    return Tensor._from_op(out, (a,), bwd, "repeat_cols")


# -- normalization / attention kernels ------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, (a,), bwd, "softmax")


def layer_norm(a, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine.

    ``gamma``/``beta`` may be None for the fixed (1, 0) affine.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    a = as_tensor(a)
    d = a.shape[-1]
    mu = np.mean(a.data, axis=-1, keepdims=True)
    xc = a.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    gamma_t = None if gamma is None else as_tensor(gamma)
    beta_t = None if beta is None else as_tensor(beta)
    out = xhat if gamma_t is None else xhat * gamma_t.data
    if beta_t is not None:
        out = out + beta_t.data

    parents = [a] + [t for t in (gamma_t, beta_t) if t is not None]

    def bwd(g):
        gx_hat = g if gamma_t is None else g * gamma_t.data
        # classic layer-norm adjoint over the last axis
        m1 = np.mean(gx_hat, axis=-1, keepdims=True)
        m2 = np.mean(gx_hat * xhat, axis=-1, keepdims=True)
        ga = ivar * (gx_hat - m1 - xhat * m2)
        grads = [ga]
        if gamma_t is not None:
            grads.append((g * xhat).reshape(-1, d).sum(axis=0))
        if beta_t is not None:
            grads.append(g.reshape(-1, d).sum(axis=0))
        return tuple(grads)

    return Tensor._from_op(out, tuple(parents), bwd, "layer_norm")


# -- losses ---------------------------------------------------------------

def _check_same_shape(pred: Tensor, target: Tensor, op: str) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"{op}: pred shape {pred.shape} != target shape {target.shape}")


def l1_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "l1_loss")
    return tmean(absolute(sub(pred, target)))


mae_loss = l1_loss


def mse_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "mse_loss")
    diff = sub(pred, target)
    return tmean(mul(diff, diff))


def cross_entropy(logits, target_ids, ignore_id=None) -> Tensor:
    """Mean token-level cross entropy of [L, V] logits against integer ids.

    Positions whose id equals ``ignore_id`` are dropped from the mean.
    """
    logits = as_tensor(logits)
    ids = np.asarray(target_ids, dtype=np.intp)
    if logits.ndim != 2 or ids.ndim != 1 or ids.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs ids {ids.shape}")
    vocab = logits.shape[1]
    live = np.ones(ids.shape[0], dtype=bool) if ignore_id is None else ids != ignore_id
    check = ids[live]
    if check.size and (check.min() < 0 or check.max() >= vocab):
        raise ValueError(f"cross_entropy: token id out of range [0, {vocab})")
    count = int(live.sum())
    if count == 0:
        raise ValueError("cross_entropy: no positions left after masking")
    z = logits.data - np.max(logits.data, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1)) - z[np.arange(ids.shape[0]), ids]
    out = np.sum(lse[live]) / count
    probs = np.exp(z) / np.sum(np.exp(z), axis=1, keepdims=True)

    def bwd(g):
        gl = probs.copy()
        gl[np.arange(ids.shape[0]), ids] -= 1.0
        gl[~live] = 0.0
        return ((g.reshape(()) if np.ndim(g) else g) * gl / count,)

    return Tensor._from_op(out, (logits,), bwd, "cross_entropy")


_LOSSES = {"l1": l1_loss, "mae": mae_loss, "mse": mse_loss}


def loss(kind: str, pred, target, ignore_id=None) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(pred, target, ignore_id=ignore_id)
    try:
        return _LOSSES[kind](pred, target)
    except KeyError:
        raise ValueError(f"unknown loss kind {kind!r}") from None
