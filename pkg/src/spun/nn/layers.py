"""Parameter store and the layer set used by the union and region models."""

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T
from .tensor import Tensor


class ParamStore:
    """Named parameter tensors with deterministic (sorted) iteration order."""

    def __init__(self):
        self._params = {}

    def register(self, name, values):
        if name in self._params:
            raise ValueError(f"parameter '{name}' already registered")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def n_parameters(self):
        return sum(t.values.size for t in self._params.values())

    def state_dict(self):
        return {n: t.values.copy() for n, t in self.items()}

    def load_state_dict(self, state):
        if set(state) != set(self._params):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise ShapeMismatch(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for n, v in state.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self._params[n].values.shape:
                raise ShapeMismatch(
                    f"'{n}': expected {self._params[n].values.shape}, got {v.shape}"
                )
            self._params[n].values = v.copy()
            self._params[n].grad = None

    def grad_norms(self):
        return {
            n: float(np.linalg.norm(t.grad)) if t.grad is not None else 0.0
            for n, t in self.items()
        }


class Linear:
    """Affine map; weights uniform in +-1/sqrt(fan_in)."""

    def __init__(self, store, name, d_in, d_out, rng):
        bound = 1.0 / np.sqrt(d_in)
        self.w = store.register(f"{name}.w", rng.uniform(-bound, bound, (d_in, d_out)))
        self.b = store.register(f"{name}.b", rng.uniform(-bound, bound, (d_out,)))

    def __call__(self, x):
        if x.values.ndim > 2:
            # one flat GEMM instead of a loop over batch slices
            lead = x.values.shape[:-1]
            flat = T.reshape(x, (-1, x.values.shape[-1]))
            out = T.add(T.matmul(flat, self.w), self.b)
            return T.reshape(out, lead + (self.w.values.shape[1],))
        return T.add(T.matmul(x, self.w), self.b)


class LayerNorm:
    def __init__(self, store, name, d):
        self.gamma = store.register(f"{name}.gamma", np.ones(d))
        self.beta = store.register(f"{name}.beta", np.zeros(d))

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class Dropout:
    def __init__(self, p, layer_id):
        self.p = p
        self.layer_id = layer_id

    def __call__(self, x, ctx):
        return T.dropout(x, self.p, ctx, self.layer_id)


def _split_heads(x, heads):
    """(..., S, d) -> (..., h, S, d/h)"""
    s, d = x.values.shape[-2], x.values.shape[-1]
    lead = x.values.shape[:-2]
    x = T.reshape(x, lead + (s, heads, d // heads))
    axes = list(range(x.values.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return T.transpose(x, axes)


def _merge_heads(x):
    """(..., h, S, d/h) -> (..., S, d)"""
    axes = list(range(x.values.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = T.transpose(x, axes)  # (..., S, h, d/h)
    lead = x.values.shape[:-3]
    s = x.values.shape[-3]
    return T.reshape(x, lead + (s, x.values.shape[-2] * x.values.shape[-1]))


class MultiHeadAttention:
    """Scaled dot-product attention with per-head splitting and output projection."""

    def __init__(self, store, name, d, heads, dropout_p, rng, ids):
        if d % heads != 0:
            raise ShapeMismatch(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.scale = 1.0 / np.sqrt(d // heads)
        self.wq = Linear(store, f"{name}.wq", d, d, rng)
        self.wk = Linear(store, f"{name}.wk", d, d, rng)
        self.wv = Linear(store, f"{name}.wv", d, d, rng)
        self.wo = Linear(store, f"{name}.wo", d, d, rng)
        self.drop = Dropout(dropout_p, next(ids))

    def __call__(self, query, memory, ctx):
        q = _split_heads(self.wq(query), self.heads)
        k = _split_heads(self.wk(memory), self.heads)
        v = _split_heads(self.wv(memory), self.heads)
        scores = T.scale(T.matmul(q, T.transpose(k)), self.scale)
        attn = self.drop(T.softmax(scores), ctx)
        out = _merge_heads(T.matmul(attn, v))
        return self.wo(out)


class FeedForward:
    def __init__(self, store, name, d, ff_dim, dropout_p, rng, ids):
        self.lin1 = Linear(store, f"{name}.lin1", d, ff_dim, rng)
        self.lin2 = Linear(store, f"{name}.lin2", ff_dim, d, rng)
        self.drop = Dropout(dropout_p, next(ids))

    def __call__(self, x, ctx):
        return self.lin2(self.drop(T.relu(self.lin1(x)), ctx))


class EncoderBlock:
    """Post-norm transformer encoder layer: self-attention then feed-forward."""

    def __init__(self, store, name, d, ff_dim, heads, dropout_p, rng, ids):
        self.attn = MultiHeadAttention(store, f"{name}.attn", d, heads, dropout_p, rng, ids)
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.ff = FeedForward(store, f"{name}.ff", d, ff_dim, dropout_p, rng, ids)
        self.drop1 = Dropout(dropout_p, next(ids))
        self.drop2 = Dropout(dropout_p, next(ids))

    def __call__(self, x, ctx):
        x = self.norm1(T.add(x, self.drop1(self.attn(x, x, ctx), ctx)))
        return self.norm2(T.add(x, self.drop2(self.ff(x, ctx), ctx)))


class CrossBlock:
    """Decoder-style layer: self-attention, cross-attention into the other
    sequence, then feed-forward; residual + layer norm around each."""

    def __init__(self, store, name, d, ff_dim, heads, dropout_p, rng, ids):
        self.self_attn = MultiHeadAttention(store, f"{name}.self", d, heads, dropout_p, rng, ids)
        self.cross_attn = MultiHeadAttention(store, f"{name}.cross", d, heads, dropout_p, rng, ids)
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.norm3 = LayerNorm(store, f"{name}.norm3", d)
        self.ff = FeedForward(store, f"{name}.ff", d, ff_dim, dropout_p, rng, ids)
        self.drop1 = Dropout(dropout_p, next(ids))
        self.drop2 = Dropout(dropout_p, next(ids))
        self.drop3 = Dropout(dropout_p, next(ids))

    def __call__(self, x, memory, ctx):
        x = self.norm1(T.add(x, self.drop1(self.self_attn(x, x, ctx), ctx)))
        x = self.norm2(T.add(x, self.drop2(self.cross_attn(x, memory, ctx), ctx)))
        return self.norm3(T.add(x, self.drop3(self.ff(x, ctx), ctx)))
