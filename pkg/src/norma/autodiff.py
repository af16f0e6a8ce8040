"""Reverse-mode automatic differentiation over dense float64 tensors.

Each op computes its forward value and, when any input requires grad,
registers a backward closure; `backward(loss)` replays the recorded graph
in reverse topological order. Broadcasting is limited to bias-style
trailing-shape alignment; everything else must match exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    pass


class NanError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # copy: g may be shared upstream
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    # Sum gradient over leading axes introduced by trailing-shape broadcast.
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_trailing(a: Tensor, b: Tensor, op: str):
    if a.shape == b.shape:
        return
    if b.data.ndim <= a.data.ndim and a.shape[a.data.ndim - b.data.ndim:] == b.shape:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} vs {b.shape}")


class Tape:
    """Reverse topological order of the graph reaching a root tensor."""

    def __init__(self, root: Tensor):
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))

    def replay_backward(self):
        for node in reversed(self.nodes):
            if node._backward is not None:
                node._backward(node.grad)


def backward(loss: Tensor):
    """Populate .grad on every requires_grad leaf reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data):
        raise NanError("loss is not finite")
    if loss._consumed:
        raise RuntimeError("backward already called on this graph; run a new forward")
    loss._consumed = True
    loss.grad = np.ones_like(loss.data)
    Tape(loss).replay_backward()


# ---------------------------------------------------------------- primitives

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=np.float64))
    _check_trailing(a, b, "add")

    def back(g):
        _accum(a, g)
        _accum(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=np.float64))
    _check_trailing(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        _accum(a, g * bd)
        _accum(b, _unbroadcast(g * ad, b.shape))

    return _result(ad * bd, (a, b), back)


def sub(a: Tensor, b) -> Tensor:
    return add(a, mul(b if isinstance(b, Tensor) else Tensor(b), -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} vs {b.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    if bd.ndim == 2:
        shared_rhs = True
    elif ad.shape[:-2] == bd.shape[:-2]:
        shared_rhs = False
    else:
        raise ShapeError(f"matmul: batch dims differ, {a.shape} vs {b.shape}")

    def back(g):
        _accum(a, g @ np.swapaxes(bd, -1, -2))
        if shared_rhs and ad.ndim > 2:
            _accum(b, ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        else:
            _accum(b, np.swapaxes(ad, -1, -2) @ g)

    return _result(ad @ bd, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return add(out, b) if b is not None else out


def embedding_lookup(table: Tensor, idx) -> Tensor:
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("embedding_lookup indices must be integers")
    if idx.min(initial=0) < 0 or (idx.size and idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding index out of range for table {table.shape}")

    def back(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx.ravel(), g.reshape(-1, table.shape[-1]))

    return _result(table.data[idx], (table,), back)


def layer_norm(x: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no scale/shift)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    if np.isnan(y).any():
        raise NanError("layer_norm produced NaN")

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        _accum(x, inv * (g - gm - y * gy))

    return _result(y, (x,), back)


def softmax_causal_masked(scores: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
    """Row softmax over the last axis under a lower-triangular causal mask.

    key_mask (optional, broadcastable bool, True = may attend) masks out
    padding keys. Masked positions contribute exactly 0; rows with no
    allowed position return all zeros rather than NaN.
    """
    sd = scores.data
    if sd.ndim < 2 or sd.shape[-1] != sd.shape[-2]:
        raise ShapeError(f"softmax_causal_masked expects (..., T, T), got {scores.shape}")
    T = sd.shape[-1]
    allowed = np.tril(np.ones((T, T), dtype=bool))
    if key_mask is not None:
        allowed = allowed & np.broadcast_to(key_mask, sd.shape)
    else:
        allowed = np.broadcast_to(allowed, sd.shape)

    neg = np.where(allowed, sd, -np.inf)
    rowmax = neg.max(axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    shifted = np.where(allowed, sd - rowmax, -np.inf)
    ex = np.exp(shifted)
    denom = ex.sum(axis=-1, keepdims=True)
    w = np.divide(ex, denom, out=np.zeros_like(ex), where=denom > 0)
    if np.isnan(w).any():
        raise NanError("softmax produced NaN")

    def back(g):
        dot = (g * w).sum(axis=-1, keepdims=True)
        _accum(scores, w * (g - dot))

    return _result(w, (scores,), back)


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / np.sqrt(2.0)))

    def back(g):
        pdf = np.exp(-0.5 * xd * xd) / np.sqrt(2.0 * np.pi)
        _accum(x, g * (cdf + xd * pdf))

    return _result(xd * cdf, (x,), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        _accum(x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), back)


def softplus(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
    sig = np.where(x.data >= 0, sig, 1.0 - sig)

    def back(g):
        _accum(x, g * sig)

    return _result(np.logaddexp(0.0, x.data), (x,), back)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def back(g):
        _accum(x, g * y)

    return _result(y, (x,), back)


def sin(x: Tensor) -> Tensor:
    cos = np.cos(x.data)

    def back(g):
        _accum(x, g * cos)

    return _result(np.sin(x.data), (x,), back)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def slice_(x: Tensor, key) -> Tensor:
    def back(g):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.data)
        full[key] = g
        _accum(x, full)

    return _result(x.data[key], (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape

    def back(g):
        _accum(x, g.reshape(orig))

    return _result(x.data.reshape(shape), (x,), back)


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)

    def back(g):
        _accum(x, g.transpose(inverse))

    return _result(x.data.transpose(axes), (x,), back)


def mean_(x: Tensor) -> Tensor:
    n = x.data.size

    def back(g):
        _accum(x, np.full_like(x.data, float(g) / n))

    return _result(x.data.mean(), (x,), back)


def sum_(x: Tensor) -> Tensor:
    def back(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _result(x.data.sum(), (x,), back)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def gradient_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central finite differences.

    The relative error denominator is max(1, |analytic gradient|), taken
    elementwise over every parameter.
    """
    zero_grads(params)
    backward(f(params))
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(params).data)
            flat[i] = orig - eps
            fm = float(f(params).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(numeric - gflat[i]) / max(1.0, abs(gflat[i]))
            worst = max(worst, err)
    return worst
