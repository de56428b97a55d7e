"""Shared fixtures.

The acceptance suite trains real (desk-scale) models, which takes minutes;
those fixtures are session-scoped and, when SPUN_TEST_CACHE points to a
directory, cached on disk so local reruns skip the training.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from spun import dataset as ds
from spun.geometry import synth_family
from spun.nn import load_ckpt, save_ckpt
from spun.union_op import TrainConfig, UnionModel, train_union

FAMILY_A_SEED = 2024
FAMILY_B_SEED = 777


def _cache_dir():
    path = os.environ.get("SPUN_TEST_CACHE")
    if path:
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        return p
    return None


@pytest.fixture(scope="session")
def family_small():
    """Tiny family for unit tests (fast to generate, big enough for spectra)."""
    return synth_family(42, 3, 3, v_target=560)


@pytest.fixture(scope="session")
def family_a():
    """Acceptance family: 4 identities x 5 poses."""
    return synth_family(FAMILY_A_SEED, 4, 5, v_target=700)


@pytest.fixture(scope="session")
def family_b():
    """Retrieval family: 8 identities x 5 poses."""
    return synth_family(FAMILY_B_SEED, 8, 5, v_target=700)


@pytest.fixture(scope="session")
def manifest_small(family_small):
    cache = _cache_dir()
    path = cache / "manifest_small.jsonl" if cache else None
    if path and path.exists():
        return ds.load_manifest(path)
    man = ds.build_dataset(
        family_small,
        n_regions=10,
        realizations=4,
        cfg=ds.PairConfig(scenario="partial_union"),
        seed=3,
        n_aug=1,
        policy=ds.SplitPolicy(test_a_frac=0.10, test_b_frac=0.05),
    )
    if path:
        ds.save_manifest(man, path)
    return man


@pytest.fixture(scope="session")
def manifest_a(family_a):
    """Acceptance 7/8/12 dataset: ~300 partial-union samples, 15% Test A."""
    cache = _cache_dir()
    path = cache / "manifest_a.jsonl" if cache else None
    if path and path.exists():
        man = ds.load_manifest(path)
    else:
        man = ds.build_dataset(
            family_a,
            n_regions=60,
            realizations=5,
            cfg=ds.PairConfig(scenario="partial_union"),
            seed=7,
            n_aug=2,
            policy=ds.SplitPolicy(test_a_frac=0.15, test_b_frac=0.0),
        )
        if path:
            ds.save_manifest(man, path)
    return man


@pytest.fixture(scope="session")
def union_model_a(manifest_a):
    """Trained partial-union operator plus its wall-clock build time."""
    cache = _cache_dir()
    ck = cache / "union_a.ckpt" if cache else None
    cfg = TrainConfig(epochs=150, seed=1, augment=True)
    if ck and ck.exists():
        model = UnionModel(k=manifest_a.k, seed=cfg.seed, target_bc="dirichlet")
        model.store.load_state_dict(load_ckpt(ck))
        return {"model": model, "train_seconds": 0.0, "history": None}
    t0 = time.time()
    model, history = train_union(manifest_a, cfg)
    dt = time.time() - t0
    if ck:
        save_ckpt(model.store, ck)
    return {"model": model, "train_seconds": dt, "history": history}


@pytest.fixture(scope="session")
def manifest_b(family_b):
    """Acceptance 9 dataset: full-cover pairs on the retrieval family."""
    cache = _cache_dir()
    path = cache / "manifest_b.jsonl" if cache else None
    if path and path.exists():
        return ds.load_manifest(path)
    man = ds.build_dataset(
        family_b,
        n_regions=48,
        realizations=5,
        cfg=ds.PairConfig(scenario="full_cover", radius_range=(0.35, 0.60)),
        seed=11,
        n_aug=0,
        policy=ds.SplitPolicy(test_a_frac=0.15, test_b_frac=0.0),
    )
    if path:
        ds.save_manifest(man, path)
    return man


@pytest.fixture(scope="session")
def union_model_b(manifest_b):
    cache = _cache_dir()
    ck = cache / "union_b.ckpt" if cache else None
    cfg = TrainConfig(epochs=310, seed=5, augment=False)
    if ck and ck.exists():
        model = UnionModel(k=manifest_b.k, seed=cfg.seed, target_bc="closed")
        model.store.load_state_dict(load_ckpt(ck))
        return {"model": model, "train_seconds": 0.0}
    t0 = time.time()
    model, _history = train_union(manifest_b, cfg)
    return {"model": model, "train_seconds": time.time() - t0}


@pytest.fixture(scope="session")
def region_model_a(manifest_a, union_model_a):
    from spun.downstream import RegionTrainConfig, train_region
    from spun.nn import load_ckpt as _load

    cache = _cache_dir()
    ck = cache / "region_a.ckpt" if cache else None
    cfg = RegionTrainConfig(epochs=220, seed=2, patience=60)
    if ck and ck.exists():
        from spun.downstream import RegionModel

        n_vertices = manifest_a.samples[0].union_mask.n_template
        model = RegionModel(n_vertices, k=manifest_a.k, seed=cfg.seed)
        model.store.load_state_dict(_load(ck))
        return {"model": model, "history": None}
    model, history = train_region(manifest_a, union_model_a["model"], cfg)
    if ck:
        save_ckpt(model.store, ck)
    return {"model": model, "history": history}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance-criteria checks")
