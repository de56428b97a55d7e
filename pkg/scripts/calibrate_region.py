"""Dev calibration: acceptance-8 region localization + acceptance-12 remeshing."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from spun.geometry import synth_family, submesh, decimate
from spun import dataset as ds
from spun import spectral as sp
from spun.union_op import TrainConfig, train_union, eval_union
from spun.downstream import RegionTrainConfig, train_region, eval_region
from spun.spectral import offset_encode

t0 = time.time()
fam = synth_family(2024, 4, 5, v_target=700)
man = ds.build_dataset(
    fam, n_regions=60, realizations=5, cfg=ds.PairConfig(scenario="partial_union"),
    seed=7, n_aug=2, policy=ds.SplitPolicy(test_a_frac=0.15, test_b_frac=0.0),
)
print(f"[{time.time()-t0:6.1f}s] dataset {len(man.samples)}", flush=True)

print("audit:", ds.audit_manifest(man), flush=True)
union_model, _ = train_union(man, TrainConfig(epochs=150, seed=1, augment=True))
test_a = man.split("testA")
ev = eval_union(union_model, test_a)
from spun.union_op import min_baseline
base = min_baseline(test_a)
print(f"[{time.time()-t0:6.1f}s] union trained: testA mae {ev['mae']:.2f} "
      f"baseline {base['mae']:.2f} ratio {ev['mae']/base['mae']:.3f}", flush=True)

cfg = RegionTrainConfig(epochs=220, seed=2, patience=60)
region, hist = train_region(man, union_model, cfg)
print(f"[{time.time()-t0:6.1f}s] region trained {len(hist)} epochs, best val iou "
      f"{max(h['val_iou'] for h in hist):.3f}", flush=True)
for h in hist[::20]:
    print(f"  ep {h['epoch']:4d} loss {h['train_loss']:.4f} val_iou {h['val_iou']:.3f}", flush=True)

sym = np.array(man.settings["symmetry_map"])
gt = eval_region(region, test_a, sym, union_model=None)
pred = eval_region(region, test_a, sym, union_model=union_model)
print(f"GT spectra:   iou {gt['iou']:.3f} acc {gt['accuracy']:.3f}", flush=True)
print(f"pred spectra: iou {pred['iou']:.3f} acc {pred['accuracy']:.3f} (drop {100*(gt['iou']-pred['iou']):.1f} pts)", flush=True)

# acceptance 12: decimation robustness
preds, targets = [], []
t1 = time.time()
for s in test_a:
    emb = fam.embedding_mesh(s.identity, s.pose, unit_area=True)
    offs = []
    for mask in (s.mask1, s.mask2):
        sub, _ = submesh(emb, mask)
        dec = decimate(sub, 0.30)
        spec = sp.spectrum(dec, k=man.k, bc="dirichlet")
        offs.append(offset_encode(spec).offsets)
    preds.append(union_model.predict_batch(offs[0][None, :], offs[1][None, :])[0])
    targets.append(s.union_spec.values)
err = np.stack(preds) - np.stack(targets)
mae_dec = float(np.mean(np.abs(err)))
print(f"[{time.time()-t0:6.1f}s] decimated mae {mae_dec:.2f} vs base {ev['mae']:.2f} "
      f"ratio {mae_dec/ev['mae']:.2f} (decimation loop {time.time()-t1:.0f}s)", flush=True)
