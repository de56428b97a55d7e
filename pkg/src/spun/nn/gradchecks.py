"""Packaged finite-difference checks for every differentiable op.

Run by the CLI ``gradcheck`` subcommand and the acceptance suite.
Primitives must match central differences to 1e-6 relative, composed
blocks to 1e-5 (f64, h = 1e-5, random 4x7 inputs shifted off kinks).
"""

import itertools

import numpy as np

from . import layers as L
from . import tensor as T
from .layers import ParamStore
from .tensor import RunCtx, Tensor

PRIM_TOL = 1e-6
BLOCK_TOL = 1e-5


def _rand(rng, *shape):
    vals = rng.uniform(-1.0, 1.0, shape)
    vals += np.sign(vals) * 0.15  # keep away from relu/elu kinks
    return Tensor(vals, requires_grad=True)


def _primitive_checks(rng):
    ctx = RunCtx(train=True, seed=3, step=5)
    cond = rng.random((4, 7)) > 0.5
    gamma = Tensor(rng.uniform(0.5, 2.0, (7,)), requires_grad=True)
    beta = Tensor(rng.uniform(-1.0, 1.0, (7,)), requires_grad=True)
    return [
        ("add", lambda a, b: T.mean_all(T.add(a, b)), [_rand(rng, 4, 7), _rand(rng, 4, 7)]),
        ("mul", lambda a, b: T.mean_all(T.mul(a, b)), [_rand(rng, 4, 7), _rand(rng, 4, 7)]),
        ("matmul", lambda a, b: T.mean_all(T.matmul(a, b)), [_rand(rng, 4, 7), _rand(rng, 7, 3)]),
        (
            "matmul_batched",
            lambda a, b: T.mean_all(T.matmul(a, b)),
            [_rand(rng, 2, 4, 7), _rand(rng, 7, 3)],
        ),
        ("relu", lambda a: T.mean_all(T.relu(a)), [_rand(rng, 4, 7)]),
        ("elu", lambda a: T.mean_all(T.elu(a)), [_rand(rng, 4, 7)]),
        ("sigmoid", lambda a: T.mean_all(T.sigmoid(a)), [_rand(rng, 4, 7)]),
        (
            "softmax",
            lambda a, w: T.mean_all(T.mul(T.softmax(a), w)),
            [_rand(rng, 4, 7), _rand(rng, 4, 7)],
        ),
        (
            "layer_norm",
            lambda a, g, b, w: T.mean_all(T.mul(T.layer_norm(a, g, b), w)),
            [_rand(rng, 4, 7), gamma, beta, _rand(rng, 4, 7)],
        ),
        (
            "dropout",
            lambda a, w: T.mean_all(T.mul(T.dropout(a, 0.3, ctx, 2), w)),
            [_rand(rng, 4, 7), _rand(rng, 4, 7)],
        ),
        (
            "cumsum",
            lambda a, w: T.mean_all(T.mul(T.cumsum(a), w)),
            [_rand(rng, 4, 7), _rand(rng, 4, 7)],
        ),
        ("mse", lambda a, b: T.mse(a, b), [_rand(rng, 4, 7), _rand(rng, 4, 7)]),
        (
            "concat",
            lambda a, b, w: T.mean_all(T.mul(T.concat([a, b]), w)),
            [_rand(rng, 4, 3), _rand(rng, 4, 4), _rand(rng, 4, 7)],
        ),
        (
            "slice",
            lambda a, w: T.mean_all(T.mul(T.slice_axis(a, 1, 5), w)),
            [_rand(rng, 4, 7), _rand(rng, 4, 4)],
        ),
        (
            "transpose",
            lambda a, w: T.mean_all(T.mul(T.transpose(a), w)),
            [_rand(rng, 4, 7), _rand(rng, 7, 4)],
        ),
        (
            "reshape",
            lambda a, w: T.mean_all(T.mul(T.reshape(a, (7, 4)), w)),
            [_rand(rng, 4, 7), _rand(rng, 7, 4)],
        ),
        (
            "broadcast_to",
            lambda a, w: T.mean_all(T.mul(T.broadcast_to(a, (5, 4, 7)), w)),
            [_rand(rng, 4, 7), _rand(rng, 5, 4, 7)],
        ),
        (
            "select",
            lambda a, b: T.mean_all(T.select(cond, a, b)),
            [_rand(rng, 4, 7), _rand(rng, 4, 7)],
        ),
        ("mean_last", lambda a: T.mean_all(T.mean_last(a)), [_rand(rng, 4, 7)]),
    ]


def _block_checks(rng):
    ectx = RunCtx(train=False)
    checks = []

    store = ParamStore()
    mha = L.MultiHeadAttention(store, "mha", 8, 2, 0.0, rng, itertools.count())
    inputs = [_rand(rng, 5, 8), _rand(rng, 5, 8)] + [p for _, p in store.items()]
    checks.append(
        ("multi_head_attention", lambda x, m, *ps: T.mean_all(T.mul(mha(x, m, ectx), x)), inputs)
    )

    store = ParamStore()
    enc = L.EncoderBlock(store, "enc", 8, 16, 2, 0.0, rng, itertools.count())
    inputs = [_rand(rng, 5, 8)] + [p for _, p in store.items()]
    checks.append(("encoder_block", lambda x, *ps: T.mean_all(T.mul(enc(x, ectx), x)), inputs))

    store = ParamStore()
    cross = L.CrossBlock(store, "cross", 8, 16, 2, 0.0, rng, itertools.count())
    inputs = [_rand(rng, 5, 8), _rand(rng, 5, 8)] + [p for _, p in store.items()]
    checks.append(
        ("cross_block", lambda x, m, *ps: T.mean_all(T.mul(cross(x, m, ectx), x)), inputs)
    )
    return checks


def run_all(seed=0):
    """All gradchecks; returns [{name, error, tol, ok}], primitives first."""
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, inputs in _primitive_checks(rng):
        err = float(T.gradcheck(fn, inputs))
        results.append({"name": name, "error": err, "tol": PRIM_TOL, "ok": bool(err < PRIM_TOL)})
    for name, fn, inputs in _block_checks(rng):
        err = float(T.gradcheck(fn, inputs))
        results.append({"name": name, "error": err, "tol": BLOCK_TOL, "ok": bool(err < BLOCK_TOL)})
    return results
