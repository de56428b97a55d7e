"""Supervised spectral-union samples built from a shape family.

The pipeline: sample overlapping patch pairs on the template, disambiguate
mirror-symmetric variants (minimum union area, then left-side preference),
realize Dirichlet spectra per identity/pose embedding, optionally attach
area-augmented spectral variants, and split into train / Test A / Test B.

Test A holds out samples whose union region still appears in train under
another identity or pose; Test B holds out entire union-region equivalence
classes.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSplit, ParseError, SamplingExhausted, VersionMismatch
from .geometry.mesh import RegionMask, submesh, vertex_areas
from .geometry.patch import dilate_mask, erode_mask, mask_connected
from .spectral import DEFAULT_K, Spectrum, spectrum

MANIFEST_MAGIC = "SPUN-DS v1"
MANIFEST_VERSION = 1


@dataclass
class PairConfig:
    radius_range: tuple = (0.30, 0.55)
    min_overlap_frac: float = 0.05
    scenario: str = "partial_union"
    min_interior: int = 26
    max_retries_per_pair: int = 400

    def __post_init__(self):
        if not 0 < self.min_overlap_frac < 1:
            raise ValueError("min_overlap_frac must be in (0, 1)")
        if self.scenario not in ("partial_union", "full_cover"):
            raise ValueError(f"unknown scenario '{self.scenario}'")


@dataclass
class PartialPairSample:
    spec1: Spectrum
    spec2: Spectrum
    union_spec: Spectrum
    mask1: RegionMask
    mask2: RegionMask
    union_mask: RegionMask
    identity: int
    pose: int
    partiality_id_1: str
    partiality_id_2: str
    scenario: str
    split: str = "train"
    aug: list = field(default_factory=list)  # (spec1, spec2, union_spec) triples

    @property
    def union_class(self):
        return self.union_mask.key()


@dataclass
class SplitPolicy:
    test_a_frac: float = 0.10
    test_b_frac: float = 0.05


@dataclass
class DatasetManifest:
    family_seed: int
    family_fingerprint: str
    k: int
    settings: dict
    samples: list

    def split(self, name):
        return [s for s in self.samples if s.split == name]

    def content_hash(self):
        h = hashlib.sha256()
        for line in _serialize_lines(self):
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


# -- interior bookkeeping -------------------------------------------------------


def _interior_count(mesh, flags):
    """Interior vertex count of the submesh induced by ``flags``.

    Interior means not on the induced submesh boundary; on a closed
    template this equals the vertices whose whole face star lies inside the
    mask.  Returns 0 when no face survives.
    """
    keep = flags[mesh.faces].all(axis=1)
    if not keep.any():
        return 0
    faces = mesh.faces[keep]
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    oneface = uniq[counts == 1]
    referenced = np.unique(faces)
    boundary = np.unique(oneface.ravel())
    return len(referenced) - len(np.intersect1d(referenced, boundary, assume_unique=True))


# -- pair sampling --------------------------------------------------------------


def _mask_ok(family, flags, min_interior):
    return (
        flags.any()
        and _interior_count(family.template, flags) >= min_interior
        and mask_connected(family.template, flags)
    )


def make_pairs(family, count, cfg=None, seed=0):
    """Sample ``count`` overlapping patch-mask pairs on the family template.

    Pairs overlap by at least ``min_overlap_frac`` of the smaller mask's
    template area.  ``full_cover`` pairs union to the entire template (the
    primary patch is seeded on the symmetry midline, which makes both masks
    mirror-invariant and keeps the full cover stable under
    canonicalization); ``partial_union`` pairs union to a strict,
    edge-connected subset.  Deterministic in ``seed``.
    """
    cfg = cfg or PairConfig()
    rng = np.random.default_rng(seed)
    dist = family.template_distances()
    va = vertex_areas(family.template)
    n = family.n_vertices
    midline = np.flatnonzero(family.symmetry_map == np.arange(n))
    pairs = []
    budget = cfg.max_retries_per_pair * count
    attempts = 0
    while len(pairs) < count:
        attempts += 1
        if attempts > budget:
            raise SamplingExhausted(
                f"made {len(pairs)}/{count} pairs in {attempts - 1} attempts"
            )
        if cfg.scenario == "full_cover":
            pair = _try_full_cover(family, rng, dist, va, midline, cfg)
        else:
            pair = _try_partial(family, rng, dist, va, cfg)
        if pair is not None:
            pairs.append(pair)
    return pairs


def _try_full_cover(family, rng, dist, va, midline, cfg):
    s = int(rng.choice(midline))
    r1 = rng.uniform(*cfg.radius_range)
    d = dist[s]
    m1 = d <= r1
    w = rng.uniform(0.15, 0.45) * r1
    m2 = d >= r1 - w
    a1, a2 = va[m1].sum(), va[m2].sum()
    ov = va[m1 & m2].sum()
    if ov < cfg.min_overlap_frac * min(a1, a2):
        return None
    if not (_mask_ok(family, m1, cfg.min_interior) and _mask_ok(family, m2, cfg.min_interior)):
        return None
    return RegionMask(m1), RegionMask(m2)


def _try_partial(family, rng, dist, va, cfg):
    n = family.n_vertices
    s1 = int(rng.integers(n))
    r1 = rng.uniform(*cfg.radius_range)
    r2 = rng.uniform(*cfg.radius_range)
    d1 = dist[s1]
    lo, hi = 0.35 * (r1 + r2), 0.85 * (r1 + r2)
    cand = np.flatnonzero((d1 >= lo) & (d1 <= hi))
    if len(cand) == 0:
        return None
    s2 = int(rng.choice(cand))
    m1 = d1 <= r1
    m2 = dist[s2] <= r2
    union = m1 | m2
    if union.all():
        return None
    a1, a2 = va[m1].sum(), va[m2].sum()
    ov = va[m1 & m2].sum()
    if ov < cfg.min_overlap_frac * min(a1, a2):
        return None
    for m in (m1, m2, union):
        if not _mask_ok(family, m, cfg.min_interior):
            return None
    return RegionMask(m1), RegionMask(m2)


# -- symmetry canonicalization ---------------------------------------------------


def canonicalize_union(mask_a, mask_b, family):
    """Disambiguate mirror variants of a patch pair.

    Among the four variants {A, sym(A)} x {B, sym(B)} pick the one with the
    minimum union area on the template; ties within 0.5% area prefer the
    union overlapping the left side most, remaining ties take the lowest
    lexicographic (union, A, B) bit pattern.  Idempotent.

    Returns
    -------
    (mask_a, mask_b, union_mask)
    """
    sym = family.symmetry_map
    va = vertex_areas(family.template)
    left = family.left_labels
    variants = []
    for fa in (mask_a.flags, mask_a.permute(sym).flags):
        for fb in (mask_b.flags, mask_b.permute(sym).flags):
            u = fa | fb
            variants.append((fa, fb, u, va[u].sum(), va[u & left].sum()))
    min_area = min(v[3] for v in variants)
    ties = [v for v in variants if v[3] <= min_area * 1.005]
    best_left = max(v[4] for v in ties)
    ties = [v for v in ties if v[4] >= best_left - 1e-12 * max(best_left, 1.0)]
    ties.sort(
        key=lambda v: (
            np.packbits(v[2]).tobytes(),
            np.packbits(v[0]).tobytes(),
            np.packbits(v[1]).tobytes(),
        )
    )
    fa, fb, u, _, _ = ties[0]
    return RegionMask(fa), RegionMask(fb), RegionMask(u)


# -- augmentation ----------------------------------------------------------------


def augment_mask(mask, family, rng, max_rings=2, max_area_change=0.10, min_interior=26):
    """Grow or shrink a mask by up to ``max_rings`` boundary rings.

    The ring count is uniform in {-max_rings, ..., +max_rings}; each ring
    step is kept only while the mask stays non-empty, connected, keeps
    ``min_interior`` interior vertices and changes template area by at most
    ``max_area_change``.  Steps violating a constraint are clipped.
    """
    r = int(rng.integers(-max_rings, max_rings + 1))
    if r == 0:
        return RegionMask(mask.flags)
    va = vertex_areas(family.template)
    base_area = va[mask.flags].sum()
    flags = mask.flags.copy()
    for _ in range(abs(r)):
        if r > 0:
            cand = dilate_mask(family.template, flags)
        else:
            cand = erode_mask(family.template, flags)
        if not cand.any() or not mask_connected(family.template, cand):
            break
        if abs(va[cand].sum() - base_area) > max_area_change * base_area:
            break
        if _interior_count(family.template, cand) < min_interior:
            break
        flags = cand
    return RegionMask(flags)


# -- sample realization ----------------------------------------------------------


def _patch_spectrum(emb, flags, k):
    sub, _ = submesh(emb, flags)
    bc = "dirichlet" if sub.boundary_flags.any() else "closed"
    return spectrum(sub, k=k, bc=bc)


def realize_sample(family, identity, pose, pair, k=DEFAULT_K):
    """Compute the spectra of a canonicalized pair under one embedding.

    The full embedding is normalized to unit area before patch extraction;
    partial patches inherit their true area fraction.  The union spectrum
    is Dirichlet when the union has boundary and closed when it covers the
    whole (watertight) template.
    """
    mask_a, mask_b = pair
    emb = family.embedding_mesh(identity, pose, unit_area=True)
    union = mask_a.union(mask_b)
    return PartialPairSample(
        spec1=_patch_spectrum(emb, mask_a.flags, k),
        spec2=_patch_spectrum(emb, mask_b.flags, k),
        union_spec=_patch_spectrum(emb, union.flags, k),
        mask1=mask_a,
        mask2=mask_b,
        union_mask=union,
        identity=int(identity),
        pose=int(pose),
        partiality_id_1=mask_a.key(),
        partiality_id_2=mask_b.key(),
        scenario="full_cover" if union.flags.all() else "partial_union",
    )


# -- splits ----------------------------------------------------------------------


def split_dataset(samples, policy=None, seed=0):
    """Assign train / testA / testB splits in place and return the sample list.

    Test B takes whole union-region classes; Test A then takes individual
    samples from classes that keep at least one train member, topping the
    total holdout up to ``test_a_frac + test_b_frac`` of the data (within
    one sample).
    """
    policy = policy or SplitPolicy()
    rng = np.random.default_rng(seed)
    n = len(samples)
    classes = {}
    for i, s in enumerate(samples):
        classes.setdefault(s.union_class, []).append(i)
    keys = sorted(classes)
    if len(keys) < 2 and policy.test_b_frac > 0:
        # full-cover datasets have one union class; Test B is undefined there
        raise InfeasibleSplit("need at least two union-region classes for a Test B holdout")
    for s in samples:
        s.split = "train"

    total_budget = int(round((policy.test_a_frac + policy.test_b_frac) * n))
    budget_b = int(round(policy.test_b_frac * n))
    order = list(rng.permutation(len(keys)))
    test_b = []
    for ki in order:
        if len(test_b) >= budget_b:
            break
        members = classes[keys[ki]]
        if len(test_b) + len(members) > budget_b + max(1, len(members) // 2):
            continue
        if len(classes) - len({samples[i].union_class for i in test_b}) <= 1:
            break
        test_b.extend(members)
    for i in test_b:
        samples[i].split = "testB"

    budget_a = total_budget - len(test_b)
    held_b = {samples[i].union_class for i in test_b}
    donors = []
    for key in sorted(set(keys) - held_b):
        members = classes[key]
        if len(members) >= 2:
            members = list(rng.permutation(members))
            donors.append(members[: len(members) - 1])  # keep one in train
    flat = []
    round_i = 0
    while any(round_i < len(d) for d in donors):
        for d in donors:
            if round_i < len(d):
                flat.append(d[round_i])
        round_i += 1
    if budget_a > len(flat):
        raise InfeasibleSplit(
            f"test A budget {budget_a} exceeds donatable samples {len(flat)}"
        )
    for i in flat[:budget_a]:
        samples[i].split = "testA"
    return samples


def split_settings(samples):
    """Per-split evaluation conditions recorded in the manifest."""
    train = [s for s in samples if s.split == "train"]
    train_ids = {s.identity for s in train}
    train_part = {(s.partiality_id_1, s.partiality_id_2, s.union_class) for s in train}
    out = {}
    for name in ("train", "testA", "testB"):
        part = [s for s in samples if s.split == name]
        if not part:
            out[name] = {"known_identity": True, "known_partiality": True, "remeshed": False}
            continue
        out[name] = {
            "known_identity": all(s.identity in train_ids for s in part),
            "known_partiality": all(
                (s.partiality_id_1, s.partiality_id_2, s.union_class) in train_part
                for s in part
            )
            if name != "train"
            else True,
            "remeshed": False,
        }
    return out


# -- dataset build ----------------------------------------------------------------


def build_dataset(
    family,
    n_regions,
    realizations,
    cfg=None,
    seed=0,
    k=DEFAULT_K,
    policy=None,
    n_aug=2,
    jobs=None,
):
    """Full dataset pipeline: pairs -> canonicalize -> realize -> split.

    Each region pair is realized under ``realizations`` distinct
    (identity, pose) combinations so union-region classes span several
    embeddings (which is what gives Test A its meaning).  ``n_aug``
    precomputed area-augmented spectral variants are attached to
    partial-union samples for training-time augmentation.
    """
    cfg = cfg or PairConfig()
    rng = np.random.default_rng(seed)
    pairs = make_pairs(family, n_regions, cfg, seed=int(rng.integers(2**32)))
    canon = [canonicalize_union(a, b, family) for a, b in pairs]
    if cfg.scenario == "full_cover":
        for _, _, u in canon:
            if not u.flags.all():
                raise SamplingExhausted("full-cover pair lost coverage in canonicalization")

    combos = family.identities * family.poses
    if realizations > combos:
        raise ValueError("realizations exceeds identities x poses")
    tasks = []
    for ridx, (ma, mb, _u) in enumerate(canon):
        chosen = rng.choice(combos, size=realizations, replace=False)
        for c in chosen:
            identity, pose = divmod(int(c), family.poses)
            tasks.append((ridx, identity, pose, ma, mb))

    def _one(task):
        ridx, identity, pose, ma, mb = task
        sample = realize_sample(family, identity, pose, (ma, mb), k=k)
        if n_aug and sample.scenario == "partial_union":
            for v in range(n_aug):
                arng = np.random.default_rng([int(seed), 101, ridx, identity, pose, v])
                aa = augment_mask(ma, family, arng, min_interior=cfg.min_interior)
                ab = augment_mask(mb, family, arng, min_interior=cfg.min_interior)
                aa, ab, _ = canonicalize_union(aa, ab, family)
                var = realize_sample(family, identity, pose, (aa, ab), k=k)
                sample.aug.append((var.spec1, var.spec2, var.union_spec))
        return sample

    if jobs and jobs > 1:
        from multiprocessing import Pool

        with Pool(jobs, initializer=_pool_init, initargs=(family, k, cfg, seed, n_aug)) as pool:
            samples = pool.map(_pool_one, tasks, chunksize=4)
    else:
        samples = [_one(t) for t in tasks]

    split_dataset(samples, policy, seed=int(np.random.default_rng([int(seed), 5]).integers(2**32)))
    settings = {
        "scenario": cfg.scenario,
        "radius_range": list(cfg.radius_range),
        "min_overlap_frac": cfg.min_overlap_frac,
        "n_regions": n_regions,
        "realizations": realizations,
        "n_aug": n_aug,
        "seed": int(seed),
        "splits": split_settings(samples),
        # family metadata needed by downstream training/evaluation
        "symmetry_map": [int(v) for v in family.symmetry_map],
        "left_labels": [int(v) for v in family.left_labels],
    }
    return DatasetManifest(
        family_seed=family.seed if family.seed is not None else -1,
        family_fingerprint=family.fingerprint(),
        k=k,
        settings=settings,
        samples=samples,
    )


_POOL = {}


def _pool_init(family, k, cfg, seed, n_aug):
    _POOL.update(family=family, k=k, cfg=cfg, seed=seed, n_aug=n_aug)


def _pool_one(task):
    ridx, identity, pose, ma, mb = task
    family, k, cfg, seed, n_aug = (
        _POOL["family"],
        _POOL["k"],
        _POOL["cfg"],
        _POOL["seed"],
        _POOL["n_aug"],
    )
    sample = realize_sample(family, identity, pose, (ma, mb), k=k)
    if n_aug and sample.scenario == "partial_union":
        for v in range(n_aug):
            arng = np.random.default_rng([int(seed), 101, ridx, identity, pose, v])
            aa = augment_mask(ma, family, arng, min_interior=cfg.min_interior)
            ab = augment_mask(mb, family, arng, min_interior=cfg.min_interior)
            aa, ab, _ = canonicalize_union(aa, ab, family)
            var = realize_sample(family, identity, pose, (aa, ab), k=k)
            sample.aug.append((var.spec1, var.spec2, var.union_spec))
    return sample


# -- audit ------------------------------------------------------------------------


def audit_manifest(manifest, eps=1e-6):
    """Split-leakage and domain-monotonicity audit.

    Returns a report dict with an overall ``ok`` flag; violations are
    counted, never raised.
    """
    samples = manifest.samples
    train_classes = {s.union_class for s in samples if s.split == "train"}
    test_a = [s for s in samples if s.split == "testA"]
    test_b = [s for s in samples if s.split == "testB"]
    a_missing = sum(1 for s in test_a if s.union_class not in train_classes)
    b_leaked = sum(1 for s in test_b if s.union_class in train_classes)
    mono_violations = 0
    checked = 0
    for s in samples:
        if s.union_spec.bc != "dirichlet":
            continue
        checked += 1
        cap = np.minimum(s.spec1.values, s.spec2.values)
        if np.any(s.union_spec.values > cap + eps * np.abs(cap)):
            mono_violations += 1
    report = {
        "n_samples": len(samples),
        "n_train": sum(1 for s in samples if s.split == "train"),
        "n_testA": len(test_a),
        "n_testB": len(test_b),
        "testA_class_missing_from_train": a_missing,
        "testB_class_leaked_into_train": b_leaked,
        "monotonicity_checked": checked,
        "monotonicity_violations": mono_violations,
    }
    report["ok"] = a_missing == 0 and b_leaked == 0 and mono_violations == 0
    return report


# -- persistence ------------------------------------------------------------------


def _rle_encode(flags):
    runs = []
    val = False
    i = 0
    n = len(flags)
    while i < n:
        j = i
        while j < n and flags[j] == val:
            j += 1
        runs.append(j - i)
        val = not val
        i = j
    return {"n": n, "runs": runs}


def _rle_decode(obj):
    flags = np.zeros(obj["n"], dtype=bool)
    pos = 0
    val = False
    for run in obj["runs"]:
        if val:
            flags[pos:pos + run] = True
        pos += run
        val = not val
    if pos != obj["n"]:
        raise ParseError("RLE length mismatch")
    return flags


def _spec_obj(s):
    return {"k": s.k, "bc": s.bc, "values": s.values.tolist()}


def _spec_from(obj):
    return Spectrum(np.array(obj["values"], dtype=np.float64), k=int(obj["k"]), bc=obj["bc"])


def _serialize_lines(manifest):
    header = {
        "magic": MANIFEST_MAGIC,
        "version": MANIFEST_VERSION,
        "family_seed": manifest.family_seed,
        "family_fingerprint": manifest.family_fingerprint,
        "k": manifest.k,
        "settings": manifest.settings,
        "n_samples": len(manifest.samples),
    }
    yield json.dumps(header, sort_keys=True, separators=(",", ":"))
    for s in manifest.samples:
        rec = {
            "identity": s.identity,
            "pose": s.pose,
            "scenario": s.scenario,
            "split": s.split,
            "partiality_id_1": s.partiality_id_1,
            "partiality_id_2": s.partiality_id_2,
            "spec1": _spec_obj(s.spec1),
            "spec2": _spec_obj(s.spec2),
            "union_spec": _spec_obj(s.union_spec),
            "mask1": _rle_encode(s.mask1.flags),
            "mask2": _rle_encode(s.mask2.flags),
            "union_mask": _rle_encode(s.union_mask.flags),
            "aug": [
                {"spec1": _spec_obj(a), "spec2": _spec_obj(b), "union_spec": _spec_obj(u)}
                for a, b, u in s.aug
            ],
        }
        yield json.dumps(rec, sort_keys=True, separators=(",", ":"))


def save_manifest(manifest, path):
    """Write header + one JSON line per sample; byte-deterministic."""
    with open(path, "w") as fh:
        for line in _serialize_lines(manifest):
            fh.write(line)
            fh.write("\n")


def load_manifest(path):
    """Reload a manifest; raises VersionMismatch / ParseError with line numbers."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty manifest file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"line 1: {exc}") from exc
    if header.get("magic") != MANIFEST_MAGIC or header.get("version") != MANIFEST_VERSION:
        raise VersionMismatch(
            f"expected '{MANIFEST_MAGIC}' v{MANIFEST_VERSION}, "
            f"got '{header.get('magic')}' v{header.get('version')}"
        )
    samples = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            m1 = RegionMask(_rle_decode(rec["mask1"]))
            m2 = RegionMask(_rle_decode(rec["mask2"]))
            mu = RegionMask(_rle_decode(rec["union_mask"]))
            samples.append(
                PartialPairSample(
                    spec1=_spec_from(rec["spec1"]),
                    spec2=_spec_from(rec["spec2"]),
                    union_spec=_spec_from(rec["union_spec"]),
                    mask1=m1,
                    mask2=m2,
                    union_mask=mu,
                    identity=int(rec["identity"]),
                    pose=int(rec["pose"]),
                    partiality_id_1=rec["partiality_id_1"],
                    partiality_id_2=rec["partiality_id_2"],
                    scenario=rec["scenario"],
                    split=rec["split"],
                    aug=[
                        (_spec_from(a["spec1"]), _spec_from(a["spec2"]), _spec_from(a["union_spec"]))
                        for a in rec.get("aug", [])
                    ],
                )
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise ParseError(f"line {ln}: {exc}") from exc
    if len(samples) != header["n_samples"]:
        raise ParseError(
            f"header declares {header['n_samples']} samples, found {len(samples)}"
        )
    return DatasetManifest(
        family_seed=header["family_seed"],
        family_fingerprint=header["family_fingerprint"],
        k=header["k"],
        settings=header["settings"],
        samples=samples,
    )
