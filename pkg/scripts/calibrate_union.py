"""Dev calibration: acceptance-7-scale union training feasibility probe."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from spun.geometry import synth_family
from spun import dataset as ds
from spun.union_op import TrainConfig, train_union, eval_union, min_baseline

t0 = time.time()
fam = synth_family(2024, 4, 5, v_target=700)
print(f"[{time.time()-t0:6.1f}s] family V={fam.n_vertices}", flush=True)

man = ds.build_dataset(
    fam, n_regions=60, realizations=5, cfg=ds.PairConfig(scenario="partial_union"),
    seed=7, n_aug=2, policy=ds.SplitPolicy(test_a_frac=0.15, test_b_frac=0.0),
)
print(f"[{time.time()-t0:6.1f}s] dataset: {len(man.samples)} samples, "
      f"train={len(man.split('train'))} testA={len(man.split('testA'))}", flush=True)
rep = ds.audit_manifest(man)
print("audit:", rep, flush=True)

test_a = man.split("testA")
base = min_baseline(test_a)
print("min-baseline on testA:", base, flush=True)
tr = man.split("train")
t_vals = np.stack([s.union_spec.values for s in tr])
print("target scale: mean", t_vals.mean(), "std", t_vals.std(), flush=True)

cfg = TrainConfig(epochs=150, seed=1, augment=True)
model, hist = train_union(man, cfg)
for h in hist[::10]:
    print(f"  epoch {h['epoch']:4d} lr {h['lr']:.2e} train {h['train_loss']:10.2f} val {h['val_loss']:10.2f}", flush=True)
print(f"[{time.time()-t0:6.1f}s] trained", flush=True)

for name, split in [("train", tr[:60]), ("testA", test_a)]:
    ev = eval_union(model, split)
    bl = min_baseline(split)
    print(f"{name}: model mse {ev['mse']:.2f} mae {ev['mae']:.3f} | baseline mse {bl['mse']:.2f} mae {bl['mae']:.3f} | ratio {ev['mae']/bl['mae']:.3f}", flush=True)
print(f"[{time.time()-t0:6.1f}s] done", flush=True)
