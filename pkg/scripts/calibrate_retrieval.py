"""Dev calibration: acceptance-9 retrieval feasibility (full-cover model)."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from spun.geometry import synth_family
from spun import dataset as ds
from spun.union_op import TrainConfig, train_union, eval_union, min_baseline, _sample_arrays
from spun.downstream import build_family_index, eval_retrieval
from spun.spectral import Signature

t0 = time.time()
fam = synth_family(42, 8, 5, v_target=700)
print(f"[{time.time()-t0:6.1f}s] family V={fam.n_vertices}", flush=True)

man = ds.build_dataset(
    fam, n_regions=48, realizations=6, cfg=ds.PairConfig(scenario="full_cover", radius_range=(0.35, 0.6)),
    seed=11, n_aug=0, policy=ds.SplitPolicy(test_a_frac=0.15, test_b_frac=0.0),
)
print(f"[{time.time()-t0:6.1f}s] dataset: {len(man.samples)} samples "
      f"train={len(man.split('train'))} testA={len(man.split('testA'))}", flush=True)

index = build_family_index(fam, k=20)
print(f"[{time.time()-t0:6.1f}s] index: {len(index)} entries", flush=True)
# identity separation statistics
M = index.matrix
ids = np.array(index.identity_ids)
d = np.linalg.norm(M[:,None,:]-M[None,:,:],axis=2)
same = d[(ids[:,None]==ids[None,:]) & (d>0)]
diff = d[ids[:,None]!=ids[None,:]]
print(f"signature dist: within-id mean {same.mean():.1f}, cross-id mean {diff.mean():.1f}, cross-id min {diff.min():.1f}", flush=True)

cfg = TrainConfig(epochs=420, seed=5, augment=False)
model, hist = train_union(man, cfg)
for h in hist[::30]:
    print(f"  epoch {h['epoch']:4d} train {h['train_loss']:9.2f} val {h['val_loss']:9.2f}", flush=True)
print(f"[{time.time()-t0:6.1f}s] trained", flush=True)

for name in ("train", "testA"):
    split = man.split(name)
    ev = eval_union(model, split)
    print(f"{name}: mse {ev['mse']:.2f} mae {ev['mae']:.3f} (baseline mae {min_baseline(split)['mae']:.1f})", flush=True)

for qname, split in [("testA", man.split("testA")), ("all", man.samples)]:
    off1, off2, _ = _sample_arrays(split)
    preds = model.predict_batch(off1, off2)
    queries = [(s.identity, Signature(preds[i], provenance="predicted")) for i, s in enumerate(split)]
    rates = eval_retrieval(index, queries, ks=(1, 5, 10))
    print(f"retrieval[{qname}] n={len(queries)}: top1 {rates[1]:.3f} top5 {rates[5]:.3f} top10 {rates[10]:.3f}", flush=True)
print(f"[{time.time()-t0:6.1f}s] done", flush=True)
