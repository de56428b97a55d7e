"""Region localization on the template and spectral shape retrieval.

Both consume computed or predicted spectra.  The region model is an MLP
from the k eigenvalues to a per-vertex probability on the template, trained
with a symmetry-invariant loss (mirror solutions are not penalized);
retrieval is exact nearest-neighbour search over raw-eigenvalue signatures.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceDetected, EmptyIndex, LengthMismatch, NonFinite
from .nn import layers as L
from .nn import tensor as T
from .nn.optim import LrSchedule, OptimizerState, adam_step, lr_at
from .nn.tensor import RunCtx, Tensor
from .spectral import DEFAULT_K, Signature, Spectrum, shape_dna, signature_distance, spectrum
from .union_op import UnionModel, union_forward


def region_widths(n_vertices):
    """Hidden-layer ladder: the reference widths 1300/2600/3900/5200 on the
    6890-vertex template, rescaled proportionally to any template size."""
    fracs = (1300.0 / 6890.0, 2600.0 / 6890.0, 3900.0 / 6890.0, 5200.0 / 6890.0)
    return [int(round(n_vertices * f)) for f in fracs] + [int(n_vertices)]


@dataclass
class RegionTrainConfig:
    batch: int = 32
    lr: float = 5e-5
    weight_decay: float = 1e-6
    t0: int = 10
    t_mult: int = 2
    min_lr: float = 0.0
    epochs: int = 200
    patience: int = 40
    seed: int = 0
    val_frac: float = 0.15
    noise_frac: float = 0.01  # gaussian sigma as a fraction of the per-index mean


class RegionModel:
    """MLP from a length-k spectrum to per-vertex probabilities.

    linear -> relu -> layer_norm, three of (linear -> elu -> dropout(0.5)
    -> layer_norm), then linear -> sigmoid; widths follow the proportional
    ladder of :func:`region_widths`.
    """

    def __init__(self, n_vertices, k=DEFAULT_K, seed=0, dropout_p=0.5):
        self.k = k
        self.n_vertices = int(n_vertices)
        widths = region_widths(n_vertices)
        self.store = L.ParamStore()
        rng = np.random.default_rng([int(seed), 91])
        ids = itertools.count()
        dims = [k] + widths
        self.lins = [
            L.Linear(self.store, f"lin{i}", dims[i], dims[i + 1], rng) for i in range(5)
        ]
        self.norms = [L.LayerNorm(self.store, f"norm{i}", dims[i + 1]) for i in range(4)]
        self.drops = [L.Dropout(dropout_p, next(ids)) for _ in range(3)]

    def forward(self, x, ctx):
        """(B, k) spectra -> (B, V) probabilities in (0, 1)."""
        if x.values.shape[-1] != self.k:
            raise LengthMismatch(f"expected {self.k} eigenvalues, got {x.values.shape[-1]}")
        h = self.norms[0](T.relu(self.lins[0](x)))
        for i in range(3):
            h = self.norms[i + 1](self.drops[i](T.elu(self.lins[i + 1](h)), ctx))
        return T.sigmoid(self.lins[4](h))

    def predict(self, values):
        """Eval-mode probabilities for spectra given as an (B, k) array."""
        ctx = RunCtx(train=False)
        return self.forward(Tensor(np.atleast_2d(values)), ctx).values


def region_forward(spec, model, mode="eval"):
    """Per-vertex probability vector for one spectrum."""
    ctx = RunCtx(train=(mode == "train"))
    out = model.forward(Tensor(spec.values[None, :]), ctx)
    return out.values[0]


def sym_loss(pred, gt_flags, symmetry_map):
    """min(mse(pred, gt), mse(pred, gt o sym)): mirror answers cost nothing."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt_flags, dtype=np.float64)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    m1 = float(np.mean((pred - gt) ** 2))
    m2 = float(np.mean((pred - gt[symmetry_map]) ** 2))
    return min(m1, m2)


def _sym_loss_batch(pred, gt_vals, symmetry_map):
    """Autodiff batched symmetric loss: per-sample min, then mean."""
    gt = Tensor(gt_vals)
    gts = Tensor(gt_vals[:, symmetry_map])
    d1 = T.sub(pred, gt)
    d2 = T.sub(pred, gts)
    m1 = T.mean_last(T.mul(d1, d1))
    m2 = T.mean_last(T.mul(d2, d2))
    return T.mean_all(T.select(m1.values <= m2.values, m1, m2))


def _mask_scores(pred_probs, gt_flags, symmetry_map, threshold=0.5):
    """(IoU, accuracy) against the better of gt and its mirror."""
    pred = pred_probs >= threshold
    best = (-1.0, -1.0)
    for gt in (gt_flags, gt_flags[symmetry_map]):
        inter = np.logical_and(pred, gt).sum()
        union = np.logical_or(pred, gt).sum()
        iou = float(inter / union) if union else 1.0
        acc = float(np.mean(pred == gt))
        if iou > best[0]:
            best = (iou, acc)
    return best


def train_region(
    manifest,
    union_model=None,
    cfg=None,
    symmetry_map=None,
    log_path=None,
):
    """Train the region MLP on union spectra -> union masks.

    Inputs mix ground-truth union spectra with Gaussian noise (sigma =
    ``noise_frac`` of the per-index mean) and, when a frozen ``union_model``
    is given, its predicted spectra for the same samples.  Early stops on
    the validation IoU (patience in epochs); the best-IoU parameters are
    restored.  The union model parameters are never touched.
    """
    cfg = cfg or RegionTrainConfig()
    sym = _manifest_symmetry(manifest, symmetry_map)
    samples = manifest.split("train")
    if not samples:
        raise ValueError("manifest has no train split")
    n_vertices = samples[0].union_mask.n_template
    k = manifest.k

    gt_specs = np.stack([s.union_spec.values for s in samples])
    masks = np.stack([s.union_mask.flags for s in samples]).astype(np.float64)
    inputs = [gt_specs]
    targets = [masks]
    if union_model is not None:
        from .union_op import _sample_arrays

        off1, off2, _ = _sample_arrays(samples)
        pred_specs = union_model.predict_batch(off1, off2)
        inputs.append(pred_specs)
        targets.append(masks)
    inputs = np.concatenate(inputs)
    targets = np.concatenate(targets)
    noise_sigma = cfg.noise_frac * gt_specs.mean(axis=0)
    noisy_rows = np.zeros(len(inputs), dtype=bool)
    noisy_rows[: len(gt_specs)] = True

    rng = np.random.default_rng([cfg.seed, 29])
    n = len(inputs)
    n_val = max(1, int(round(cfg.val_frac * n))) if n >= 8 else 0
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    model = RegionModel(n_vertices, k=k, seed=cfg.seed)
    sched = LrSchedule(base_lr=cfg.lr, min_lr=cfg.min_lr, t0=cfg.t0, t_mult=cfg.t_mult)
    opt = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    history = []
    best_iou = -1.0
    best_state = model.store.state_dict()
    since_best = 0
    step = 0
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            lr = lr_at(sched, epoch)
            order = rng.permutation(len(train_idx))
            ep_losses = []
            for lo in range(0, len(order), cfg.batch):
                rows = train_idx[order[lo:lo + cfg.batch]]
                x = inputs[rows].copy()
                add_noise = noisy_rows[rows]
                if add_noise.any():
                    x[add_noise] += rng.normal(0.0, 1.0, x[add_noise].shape) * noise_sigma
                    x[add_noise] = np.maximum(x[add_noise], 0.0)
                step += 1
                ctx = RunCtx(train=True, seed=cfg.seed, step=step)
                try:
                    pred = model.forward(Tensor(x), ctx)
                    loss = _sym_loss_batch(pred, targets[rows], sym)
                except NonFinite as exc:
                    raise DivergenceDetected(f"non-finite loss at step {step}") from exc
                model.store.zero_grad()
                loss.backward()
                adam_step(model.store, opt, lr=lr)
                ep_losses.append(loss.item())
            train_loss = float(np.mean(ep_losses)) if ep_losses else np.nan
            if not np.isfinite(train_loss):
                raise DivergenceDetected(f"loss diverged at epoch {epoch}")
            if len(val_idx):
                probs = model.predict(inputs[val_idx])
                ious = [
                    _mask_scores(probs[j], targets[val_idx[j]] > 0.5, sym)[0]
                    for j in range(len(val_idx))
                ]
                val_iou = float(np.mean(ious))
            else:
                val_iou = 1.0 - train_loss
            row = {"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_iou": val_iou}
            history.append(row)
            if log_fh:
                log_fh.write(json.dumps(row, sort_keys=True) + "\n")
            if val_iou > best_iou:
                best_iou = val_iou
                best_state = model.store.state_dict()
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.store.load_state_dict(best_state)
    return model, history


def eval_region(model, samples, symmetry_map, union_model=None, threshold=0.5):
    """Mean IoU / accuracy at a threshold, scored against the better of the
    mask and its mirror (consistent with the symmetry-invariant loss).

    With a ``union_model`` the inputs are its predictions from the two part
    spectra; otherwise the ground-truth union spectra.
    """
    if not samples:
        raise ValueError("empty split")
    if union_model is not None:
        from .union_op import _sample_arrays

        off1, off2, _ = _sample_arrays(samples)
        specs = union_model.predict_batch(off1, off2)
    else:
        specs = np.stack([s.union_spec.values for s in samples])
    probs = model.predict(specs)
    ious, accs = [], []
    for j, s in enumerate(samples):
        iou, acc = _mask_scores(probs[j], s.union_mask.flags, symmetry_map, threshold)
        ious.append(iou)
        accs.append(acc)
    return {"iou": float(np.mean(ious)), "accuracy": float(np.mean(accs))}


def _manifest_symmetry(manifest, symmetry_map=None):
    if symmetry_map is not None:
        return np.asarray(symmetry_map, dtype=np.int64)
    sym = manifest.settings.get("symmetry_map")
    if sym is None:
        raise ValueError("manifest lacks a symmetry_map; pass one explicitly")
    return np.asarray(sym, dtype=np.int64)


# -- retrieval ------------------------------------------------------------------


@dataclass
class RetrievalIndex:
    shape_ids: list
    identity_ids: list
    matrix: np.ndarray  # (N, k) signature values

    def __len__(self):
        return len(self.shape_ids)


def index_build(entries):
    """Build an exact-NN index from (shape_id, identity_id, Signature) rows."""
    entries = list(entries)
    if not entries:
        raise EmptyIndex("no entries")
    lengths = {len(e[2].values) for e in entries}
    if len(lengths) != 1:
        raise LengthMismatch(f"signature lengths differ: {sorted(lengths)}")
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("shape ids must be unique")
    order = np.argsort(ids)
    entries = [entries[i] for i in order]
    return RetrievalIndex(
        shape_ids=[e[0] for e in entries],
        identity_ids=[e[1] for e in entries],
        matrix=np.stack([e[2].values for e in entries]),
    )


def query_topk(index, sig, k_top):
    """Ranked (shape_id, distance) list: brute-force Euclidean, ties by id."""
    if len(index) == 0:
        raise EmptyIndex("empty index")
    d = np.linalg.norm(index.matrix - sig.values[None, :], axis=1)
    order = sorted(range(len(d)), key=lambda i: (d[i], index.shape_ids[i]))
    return [(index.shape_ids[i], float(d[i])) for i in order[:k_top]]


def eval_retrieval(index, queries, ks=(1, 5, 10)):
    """Top-K hit rates: a hit is any retrieved shape of the correct identity."""
    id_of = dict(zip(index.shape_ids, index.identity_ids))
    hits = {k: 0 for k in ks}
    for identity, sig in queries:
        ranked = query_topk(index, sig, max(ks))
        for k in ks:
            if any(id_of[sid] == identity for sid, _ in ranked[:k]):
                hits[k] += 1
    n = len(queries)
    return {k: hits[k] / n for k in ks}


def build_family_index(family, k=DEFAULT_K):
    """Closed-spectrum signatures of every (identity, pose) embedding."""
    entries = []
    for i in range(family.identities):
        for p in range(family.poses):
            s = spectrum(family.embedding_mesh(i, p, unit_area=True), k=k, bc="closed")
            entries.append((f"id{i}_pose{p}", i, shape_dna(s)))
    return index_build(entries)


# -- interpolation ----------------------------------------------------------------


def interpolate_spectra(a, b, t):
    """Elementwise (1-t)·a + t·b; sortedness is preserved for sorted inputs."""
    if a.k != b.k:
        raise LengthMismatch(f"k mismatch: {a.k} vs {b.k}")
    if a.bc != b.bc:
        raise ValueError(f"bc mismatch: {a.bc} vs {b.bc}")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must be in [0, 1]")
    return Spectrum((1.0 - t) * a.values + t * b.values, k=a.k, bc=a.bc)


# -- exports ----------------------------------------------------------------------


def export_mask_json(probs, path):
    with open(path, "w") as fh:
        json.dump([float(p) for p in probs], fh)


def export_retrieval_json(query_id, ranked, path_or_none=None):
    obj = {
        "query_id": query_id,
        "ranked": [{"shape_id": sid, "distance": dist} for sid, dist in ranked],
    }
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path_or_none:
        with open(path_or_none, "w") as fh:
            fh.write(text)
    return text
