"""Minimal dense-tensor reverse-mode autodiff on float64 numpy arrays.

Each op records a backward closure; ``Tensor.backward()`` walks the graph
in reverse topological order.  Every op validates that its output is
finite (a NaN/Inf raises :class:`NonFinite` at the op that produced it).
The op set is exactly what the union operator and the region MLP need; no
GPU, no general graph compilation.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import NonFinite, ShapeMismatch


@dataclass
class RunCtx:
    """Execution context: train/eval switch plus the dropout RNG key parts."""

    train: bool = False
    seed: int = 0
    step: int = 0

    def philox(self, layer_id):
        """Philox stream for (seed, step, layer): one base generator per
        context, jumped per layer so streams never overlap."""
        base = getattr(self, "_philox", None)
        if base is None:
            key = [(int(self.seed) & 0xFFFFFFFF) | ((int(self.step) & 0xFFFFFFFF) << 32), 0]
            base = np.random.Philox(key=key)
            object.__setattr__(self, "_philox", base)
        return np.random.Generator(base.jumped(int(layer_id) + 1))


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        # min/max propagate NaN and catch +-Inf without a full isfinite map
        if self.values.size and not (
            np.isfinite(self.values.min()) and np.isfinite(self.values.max())
        ):
            raise NonFinite("non-finite tensor values")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    def item(self):
        return float(self.values)

    def _accumulate(self, g):
        if self.grad is None:
            # copy: closures may hand the same buffer to several parents
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self, seed_grad=None):
        """Reverse-mode sweep from this tensor.

        Without an explicit ``seed_grad`` the tensor must be scalar.
        """
        if seed_grad is None:
            if self.values.size != 1:
                raise ShapeMismatch("backward() without seed requires a scalar")
            seed_grad = np.ones_like(self.values)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.asarray(seed_grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, grad={'set' if self.grad is not None else 'none'})"


def _make(values, parents, backward):
    out = Tensor(values)
    track = any(p.requires_grad or p._parents for p in parents)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------------


def add(a, b):
    def backward(g):
        a._accumulate(_unbroadcast(g, a.values.shape))
        b._accumulate(_unbroadcast(g, b.values.shape))

    return _make(a.values + b.values, (a, b), backward)


def sub(a, b):
    def backward(g):
        a._accumulate(_unbroadcast(g, a.values.shape))
        b._accumulate(_unbroadcast(-g, b.values.shape))

    return _make(a.values - b.values, (a, b), backward)


def mul(a, b):
    def backward(g):
        a._accumulate(_unbroadcast(g * b.values, a.values.shape))
        b._accumulate(_unbroadcast(g * a.values, b.values.shape))

    return _make(a.values * b.values, (a, b), backward)


def scale(a, c):
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _make(a.values * c, (a,), backward)


def matmul(a, b):
    if a.values.ndim < 2 or b.values.ndim < 2:
        raise ShapeMismatch("matmul needs >= 2-d operands")
    if a.values.shape[-1] != b.values.shape[-2]:
        raise ShapeMismatch(f"matmul {a.values.shape} @ {b.values.shape}")

    def backward(g):
        a._accumulate(_unbroadcast(g @ b.values.swapaxes(-1, -2), a.values.shape))
        b._accumulate(_unbroadcast(a.values.swapaxes(-1, -2) @ g, b.values.shape))

    return _make(a.values @ b.values, (a, b), backward)


# -- activations ----------------------------------------------------------------


def relu(a):
    mask = a.values > 0

    def backward(g):
        a._accumulate(g * mask)

    return _make(np.where(mask, a.values, 0.0), (a,), backward)


def elu(a, alpha=1.0):
    neg = a.values <= 0
    ex = np.where(neg, np.exp(np.minimum(a.values, 0.0)), 1.0)
    vals = np.where(neg, alpha * (ex - 1.0), a.values)

    def backward(g):
        a._accumulate(g * np.where(neg, alpha * ex, 1.0))

    return _make(vals, (a,), backward)


def sigmoid(a):
    y = 1.0 / (1.0 + np.exp(-a.values))

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), backward)


def softmax(a):
    """Softmax over the last dimension."""
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        a._accumulate(y * (g - dot))

    return _make(y, (a,), backward)


def layer_norm(a, gamma, beta, eps=1e-12):
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    mean = a.values.mean(axis=-1, keepdims=True)
    xc = a.values - mean
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    vals = gamma.values * xhat + beta.values
    n = a.values.shape[-1]

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gamma._accumulate((g * xhat).sum(axis=lead))
        beta._accumulate(g.sum(axis=lead))
        dxhat = g * gamma.values
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(
            axis=-1, keepdims=True
        ) / n
        a._accumulate(inv * term)

    return _make(vals, (a, gamma, beta), backward)


def dropout(a, p, ctx, layer_id):
    """Inverted dropout with a counter-based Philox key (seed, step, layer).

    Identity in eval mode; in train mode zeros entries with probability
    ``p`` and rescales by 1/(1-p).  The mask depends only on the key and
    the shape, so evaluation order cannot perturb it.
    """
    if not ctx.train or p <= 0.0:
        return a
    keep = ctx.philox(layer_id).random(a.values.shape) >= p
    factor = 1.0 / (1.0 - p)

    def backward(g):
        a._accumulate(g * keep * factor)

    return _make(a.values * keep * factor, (a,), backward)


# -- shape ops -------------------------------------------------------------------


def cumsum(a):
    """Cumulative sum over the last dimension."""

    def backward(g):
        a._accumulate(np.flip(np.cumsum(np.flip(g, axis=-1), axis=-1), axis=-1))

    return _make(np.cumsum(a.values, axis=-1), (a,), backward)


def concat(tensors, axis=-1):
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        moved = np.moveaxis(g, axis, 0)
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            t._accumulate(np.moveaxis(moved[lo:hi], 0, axis))

    return _make(np.concatenate([t.values for t in tensors], axis=axis), tuple(tensors), backward)


def slice_axis(a, start, stop, axis=-1):
    idx = [slice(None)] * a.values.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros_like(a.values)
        full[idx] = g
        a._accumulate(full)

    return _make(a.values[idx], (a,), backward)


def transpose(a, axes=None):
    if axes is None:
        axes = list(range(a.values.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(g.transpose(inv))

    return _make(a.values.transpose(axes), (a,), backward)


def reshape(a, shape):
    orig = a.values.shape

    def backward(g):
        a._accumulate(g.reshape(orig))

    return _make(a.values.reshape(shape), (a,), backward)


def broadcast_to(a, shape):
    def backward(g):
        a._accumulate(_unbroadcast(g, a.values.shape))

    return _make(np.broadcast_to(a.values, shape).copy(), (a,), backward)


def select(cond, a, b):
    """Elementwise choice by a boolean ndarray (no gradient through cond)."""
    cond = np.asarray(cond, dtype=bool)

    def backward(g):
        a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.values.shape))
        b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.values.shape))

    return _make(np.where(cond, a.values, b.values), (a, b), backward)


# -- reductions / losses -----------------------------------------------------------


def mean_all(a):
    n = a.values.size

    def backward(g):
        a._accumulate(np.full_like(a.values, float(g) / n))

    return _make(np.asarray(a.values.mean()), (a,), backward)


def mean_last(a):
    n = a.values.shape[-1]

    def backward(g):
        a._accumulate(np.repeat(np.expand_dims(g / n, -1), n, axis=-1))

    return _make(a.values.mean(axis=-1), (a,), backward)


def mse(pred, target):
    """Mean squared error over all entries; scalar output."""
    if pred.values.shape != target.values.shape:
        raise ShapeMismatch(f"mse {pred.values.shape} vs {target.values.shape}")
    diff = pred.values - target.values
    n = diff.size

    def backward(g):
        gg = float(g) * 2.0 / n
        pred._accumulate(gg * diff)
        target._accumulate(-gg * diff)

    return _make(np.asarray((diff**2).mean()), (pred, target), backward)


# -- finite-difference gradient check ----------------------------------------------


def gradcheck(fn, inputs, h=1e-5):
    """Max relative error between autodiff and central finite differences.

    ``fn`` maps the input tensors to a scalar Tensor and must be free of
    side effects.  The relative error uses ``max(1, |ad|, |fd|)`` in the
    denominator so near-zero gradients are compared absolutely.
    """
    for t in inputs:
        t.grad = None
    out = fn(*inputs)
    out.backward()
    worst = 0.0
    for t in inputs:
        g_ad = t.grad if t.grad is not None else np.zeros_like(t.values)
        flat = t.values.ravel()
        g_flat = g_ad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn(*inputs).values)
            flat[i] = orig - h
            f_minus = float(fn(*inputs).values)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(g_flat[i] - fd) / max(1.0, abs(g_flat[i]), abs(fd))
            worst = max(worst, err)
    return worst
