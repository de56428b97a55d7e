"""Experiment driver: every pipeline stage as a subcommand.

Machine-readable JSON goes to stdout (or files under ``--out``); human
summaries go to stderr.  Exit codes: 0 success, 2 validation/usage
failure, 1 runtime error.  Flags beat ``--config`` values beat defaults;
the config file is JSON with a flat ``overrides`` object.
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SpunError
from .dataset import (
    DatasetManifest,
    PairConfig,
    SplitPolicy,
    audit_manifest,
    build_dataset,
    load_manifest,
    save_manifest,
)
from .downstream import (
    RegionModel,
    RegionTrainConfig,
    build_family_index,
    eval_region,
    eval_retrieval,
    export_retrieval_json,
    index_build,
    interpolate_spectra,
    query_topk,
    region_widths,
    train_region,
)
from .geometry import load_family, load_shape_file, normalize_area, synth_family, write_off
from .geometry.family import save_family
from .geometry.mesh import TriMesh
from .nn import load_ckpt, save_ckpt
from .spectral import Signature, Spectrum, shape_dna, spectrum
from .union_op import TrainConfig, UnionModel, eval_union, min_baseline, train_union, union_compose


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(obj, args, filename=None):
    """JSON result to stdout and, when --out is set, into the out dir."""
    text = json.dumps(obj, indent=2, sort_keys=True)
    print(text)
    if getattr(args, "out", None) and filename:
        Path(args.out).joinpath(filename).write_text(text + "\n")


def _version_string():
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _prepare_out(args):
    if getattr(args, "out", None):
        Path(args.out).mkdir(parents=True, exist_ok=True)


def _write_run_record(args, started):
    if not getattr(args, "out", None):
        return
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config") and v is not None}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    record = {
        "command": " ".join(sys.argv[1:]),
        "config": json.loads(blob),
        "config_hash": hashlib.sha256(blob.encode()).hexdigest()[:16],
        "version": _version_string(),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    Path(args.out).joinpath("run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _apply_config(args, parser):
    """Fill unset args from the --config overrides object."""
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path) as fh:
        overrides = json.load(fh).get("overrides", {})
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None and hasattr(args, attr):
            setattr(args, attr, value)
    return args


def _d(args, key, default):
    v = getattr(args, key, None)
    return default if v is None else v


def _load_spectrum_file(path):
    return Spectrum.from_json(Path(path).read_text())


def _jobs(args):
    v = getattr(args, "jobs", None)
    if v is None:
        v = os.environ.get("SPUN_JOBS")
    if v is None:
        return os.cpu_count() or 1
    return int(v)


def _union_model_for(manifest, args, ckpt_path):
    scenario = manifest.settings.get("scenario", "partial_union") if manifest else "partial_union"
    bc = "closed" if scenario == "full_cover" else "dirichlet"
    k = manifest.k if manifest else int(_d(args, "k", 20))
    model = UnionModel(k=k, seed=int(_d(args, "seed", 0)), target_bc=bc)
    model.store.load_state_dict(load_ckpt(ckpt_path))
    return model


# -- subcommand handlers ---------------------------------------------------------


def cmd_spectrum(args):
    shape = load_shape_file(args.shape)
    if args.normalize_area and isinstance(shape, TriMesh):
        shape = normalize_area(shape, 1.0)
    s = spectrum(shape, k=int(_d(args, "k", 20)), bc=_d(args, "bc", "dirichlet"))
    _say(f"{args.shape}: {type(shape).__name__}, bc={s.bc}, lam1={s.values[0]:.6g}")
    _emit(json.loads(s.to_json()), args, "spectrum.json")


def cmd_export_spectrum(args):
    if args.shape:
        shape = load_shape_file(args.shape)
        if args.normalize_area and isinstance(shape, TriMesh):
            shape = normalize_area(shape, 1.0)
        s = spectrum(shape, k=int(_d(args, "k", 20)), bc=_d(args, "bc", "dirichlet"))
    else:
        s = _load_spectrum_file(args.spectrum)
    Path(args.out_file).write_text(s.to_json() + "\n")
    _say(f"wrote {args.out_file} (k={s.k}, bc={s.bc})")


def cmd_synth(args):
    fam = synth_family(
        int(_d(args, "seed", 0)),
        int(_d(args, "identities", 4)),
        int(_d(args, "poses", 5)),
        v_target=int(_d(args, "v_target", 700)),
    )
    _prepare_out(args)
    save_family(fam, args.out)
    meta = {
        "seed": fam.seed,
        "identities": fam.identities,
        "poses": fam.poses,
        "n_vertices": fam.n_vertices,
        "fingerprint": fam.fingerprint(),
    }
    Path(args.out).joinpath("family.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _say(f"family written to {args.out} (V={fam.n_vertices})")
    print(json.dumps(meta, indent=2, sort_keys=True))


def cmd_dataset_build(args):
    fam = load_family(args.family)
    if fam.seed is None:
        meta_path = Path(args.family) / "family.json"
        if meta_path.exists():
            fam.seed = json.loads(meta_path.read_text()).get("seed")
    cfg = PairConfig(
        radius_range=(float(_d(args, "radius_lo", 0.30)), float(_d(args, "radius_hi", 0.55))),
        min_overlap_frac=float(_d(args, "min_overlap", 0.05)),
        scenario=_d(args, "scenario", "partial_union"),
    )
    policy = SplitPolicy(
        test_a_frac=float(_d(args, "test_a_frac", 0.10)),
        test_b_frac=float(_d(args, "test_b_frac", 0.05)),
    )
    manifest = build_dataset(
        fam,
        n_regions=int(_d(args, "regions", 40)),
        realizations=int(_d(args, "realizations", 5)),
        cfg=cfg,
        seed=int(_d(args, "seed", 0)),
        k=int(_d(args, "k", 20)),
        policy=policy,
        n_aug=int(_d(args, "aug", 2)),
        jobs=_jobs(args),
    )
    _prepare_out(args)
    path = Path(args.out) / "manifest.jsonl"
    save_manifest(manifest, path)
    report = audit_manifest(manifest)
    _say(f"manifest: {len(manifest.samples)} samples -> {path}")
    _emit(report, args, "audit.json")


def cmd_dataset_audit(args):
    manifest = load_manifest(args.manifest)
    report = audit_manifest(manifest)
    _emit(report, args, "audit.json")
    if not report["ok"]:
        sys.exit(2)


def cmd_train_union(args):
    manifest = load_manifest(args.manifest)
    cfg = TrainConfig(
        batch=int(_d(args, "batch", 32)),
        lr=float(_d(args, "lr", 2e-4)),
        weight_decay=float(_d(args, "weight_decay", 1e-5)),
        epochs=int(_d(args, "epochs", 150)),
        seed=int(_d(args, "seed", 0)),
        augment=not args.no_augment,
    )
    _prepare_out(args)
    log_path = Path(args.out) / "train_log.jsonl" if args.out else None
    model, history = train_union(manifest, cfg, log_path=log_path)
    if args.out:
        save_ckpt(model.store, Path(args.out) / "union.ckpt")
        _say(f"checkpoint -> {Path(args.out) / 'union.ckpt'}")
    summary = {
        "epochs": len(history),
        "final_train_loss": history[-1]["train_loss"],
        "best_val_loss": min(h["val_loss"] for h in history),
        "n_parameters": model.store.n_parameters(),
    }
    _emit(summary, args, "train_summary.json")


def cmd_eval_union(args):
    manifest = load_manifest(args.manifest)
    model = _union_model_for(manifest, args, args.ckpt)
    split = manifest.split(_d(args, "split", "testA"))
    result = eval_union(model, split)
    result["baseline_min"] = min_baseline(split)
    result["split"] = _d(args, "split", "testA")
    _emit(result, args, "eval_union.json")


def cmd_union(args):
    spectra = [_load_spectrum_file(p) for p in args.spectra]
    model = _union_model_for(None, args, args.ckpt)
    if spectra[0].k != model.k:
        model = UnionModel(k=spectra[0].k, seed=int(_d(args, "seed", 0)))
        model.store.load_state_dict(load_ckpt(args.ckpt))
    out = union_compose(spectra, model) if len(spectra) > 2 else model.predict(spectra[0], spectra[1])
    _say(f"composed {len(spectra)} spectra")
    _emit(json.loads(out.to_json()), args, "union.json")


def cmd_train_region(args):
    manifest = load_manifest(args.manifest)
    union_model = _union_model_for(manifest, args, args.union_ckpt) if args.union_ckpt else None
    cfg = RegionTrainConfig(
        epochs=int(_d(args, "epochs", 200)),
        seed=int(_d(args, "seed", 0)),
        lr=float(_d(args, "lr", 5e-5)),
        weight_decay=float(_d(args, "weight_decay", 1e-6)),
        patience=int(_d(args, "patience", 40)),
    )
    _prepare_out(args)
    log_path = Path(args.out) / "train_log.jsonl" if args.out else None
    model, history = train_region(manifest, union_model, cfg, log_path=log_path)
    if args.out:
        save_ckpt(model.store, Path(args.out) / "region.ckpt")
        _say(f"checkpoint -> {Path(args.out) / 'region.ckpt'}")
    summary = {
        "epochs": len(history),
        "best_val_iou": max(h["val_iou"] for h in history),
        "n_parameters": model.store.n_parameters(),
        "n_vertices": model.n_vertices,
    }
    _emit(summary, args, "train_summary.json")


def _region_model_for(manifest, args, ckpt_path):
    n_vertices = manifest.samples[0].union_mask.n_template
    model = RegionModel(n_vertices, k=manifest.k, seed=int(_d(args, "seed", 0)))
    model.store.load_state_dict(load_ckpt(ckpt_path))
    return model


def cmd_eval_region(args):
    manifest = load_manifest(args.manifest)
    model = _region_model_for(manifest, args, args.region_ckpt)
    union_model = _union_model_for(manifest, args, args.union_ckpt) if args.union_ckpt else None
    split = manifest.split(_d(args, "split", "testA"))
    result = eval_region(model, split, np.array(manifest.settings["symmetry_map"]), union_model)
    result["split"] = _d(args, "split", "testA")
    result["inputs"] = "predicted" if union_model else "ground_truth"
    _emit(result, args, "eval_region.json")


def cmd_localize(args):
    manifest = load_manifest(args.manifest)
    model = _region_model_for(manifest, args, args.region_ckpt)
    s = _load_spectrum_file(args.spectrum)
    probs = model.predict(s.values[None, :])[0]
    _prepare_out(args)
    result = {"n_vertices": len(probs), "mean_prob": float(probs.mean())}
    if args.out:
        Path(args.out).joinpath("mask.json").write_text(json.dumps([float(p) for p in probs]) + "\n")
        if args.template:
            mesh = load_shape_file(args.template)
            write_off(mesh, Path(args.out) / "mask_colored.off", vertex_scalars=probs)
        result["mask_json"] = str(Path(args.out) / "mask.json")
    print(json.dumps(result, indent=2, sort_keys=True))


def cmd_index_build(args):
    fam = load_family(args.family)
    index = build_family_index(fam, k=int(_d(args, "k", 20)))
    obj = {
        "k": int(_d(args, "k", 20)),
        "entries": [
            {
                "shape_id": sid,
                "identity": int(ident),
                "values": [float(v) for v in row],
                "provenance": "computed",
            }
            for sid, ident, row in zip(index.shape_ids, index.identity_ids, index.matrix)
        ],
    }
    _prepare_out(args)
    if args.out:
        Path(args.out).joinpath("index.json").write_text(json.dumps(obj, sort_keys=True) + "\n")
        _say(f"index with {len(index)} entries -> {Path(args.out) / 'index.json'}")
    print(json.dumps({"entries": len(index)}, indent=2))


def _load_index(path):
    obj = json.loads(Path(path).read_text())
    entries = [
        (e["shape_id"], e["identity"], Signature(np.array(e["values"]), e.get("provenance", "computed")))
        for e in obj["entries"]
    ]
    return index_build(entries)


def cmd_index_query(args):
    index = _load_index(args.index)
    s = _load_spectrum_file(args.spectrum)
    ranked = query_topk(index, shape_dna(s, provenance="predicted"), int(_d(args, "top", 5)))
    text = export_retrieval_json(args.spectrum, ranked)
    print(text)
    if args.out:
        _prepare_out(args)
        Path(args.out).joinpath("query.json").write_text(text + "\n")


def cmd_retrieve_eval(args):
    index = _load_index(args.index)
    manifest = load_manifest(args.manifest)
    model = _union_model_for(manifest, args, args.ckpt)
    split_name = _d(args, "split", "testA")
    samples = manifest.split(split_name) if split_name != "all" else manifest.samples
    from .union_op import _sample_arrays

    off1, off2, _ = _sample_arrays(samples)
    preds = model.predict_batch(off1, off2)
    queries = [
        (s.identity, Signature(preds[i], provenance="predicted")) for i, s in enumerate(samples)
    ]
    ks = tuple(int(x) for x in _d(args, "ks", "1,5,10").split(","))
    rates = eval_retrieval(index, queries, ks=ks)
    result = {f"top{k}": rates[k] for k in ks}
    result["n_queries"] = len(queries)
    result["split"] = split_name
    _emit(result, args, "retrieval.json")


def cmd_interp(args):
    a = _load_spectrum_file(args.a)
    b = _load_spectrum_file(args.b)
    out = interpolate_spectra(a, b, float(args.t))
    _emit(json.loads(out.to_json()), args, "interp.json")


def cmd_gradcheck(args):
    from .nn.gradchecks import run_all

    results = run_all()
    worst = max(r["error"] for r in results)
    ok = all(r["ok"] for r in results)
    _emit({"checks": results, "worst": worst, "ok": ok}, args, "gradcheck.json")
    if not ok:
        sys.exit(1)


# -- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="spun", description=__doc__)
    p.add_argument("--version", action="version", version=f"spun {_version_string()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, seed=True):
        sp.add_argument("--config", help="JSON config with an 'overrides' object")
        if out:
            sp.add_argument("--out", help="output directory (artifacts + run.json)")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("spectrum", help="truncated spectrum of a shape file")
    sp.add_argument("shape")
    sp.add_argument("--bc", choices=["dirichlet", "closed"])
    sp.add_argument("--k", type=int)
    sp.add_argument("--normalize-area", action="store_true")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("export-spectrum", help="write a spectrum in the exchange JSON format")
    sp.add_argument("--shape")
    sp.add_argument("--spectrum")
    sp.add_argument("--bc", choices=["dirichlet", "closed"])
    sp.add_argument("--k", type=int)
    sp.add_argument("--normalize-area", action="store_true")
    sp.add_argument("--out-file", required=True)
    common(sp, out=False, seed=False)
    sp.set_defaults(func=cmd_export_spectrum)

    sp = sub.add_parser("synth", help="generate a synthetic shape family")
    sp.add_argument("--identities", type=int)
    sp.add_argument("--poses", type=int)
    sp.add_argument("--v-target", type=int, dest="v_target")
    common(sp)
    sp.set_defaults(func=cmd_synth)
    sp._required_out = True

    ds = sub.add_parser("dataset", help="dataset building and auditing")
    dsub = ds.add_subparsers(dest="subcommand", required=True)
    sp = dsub.add_parser("build")
    sp.add_argument("--family", required=True)
    sp.add_argument("--regions", type=int)
    sp.add_argument("--realizations", type=int)
    sp.add_argument("--scenario", choices=["partial_union", "full_cover"])
    sp.add_argument("--radius-lo", type=float, dest="radius_lo")
    sp.add_argument("--radius-hi", type=float, dest="radius_hi")
    sp.add_argument("--min-overlap", type=float, dest="min_overlap")
    sp.add_argument("--aug", type=int)
    sp.add_argument("--test-a-frac", type=float, dest="test_a_frac")
    sp.add_argument("--test-b-frac", type=float, dest="test_b_frac")
    sp.add_argument("--k", type=int)
    sp.add_argument("--jobs", type=int)
    common(sp)
    sp.set_defaults(func=cmd_dataset_build)
    sp = dsub.add_parser("audit")
    sp.add_argument("--manifest", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_dataset_audit)

    sp = sub.add_parser("train-union", help="train the spectral union operator")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--weight-decay", type=float, dest="weight_decay")
    sp.add_argument("--no-augment", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_train_union)

    sp = sub.add_parser("eval-union", help="mse/mae of a trained union operator")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", choices=["train", "testA", "testB"])
    common(sp)
    sp.set_defaults(func=cmd_eval_union)

    sp = sub.add_parser("union", help="predict the union spectrum of two or more spectra")
    sp.add_argument("spectra", nargs="+")
    sp.add_argument("--ckpt", required=True)
    common(sp)
    sp.set_defaults(func=cmd_union)

    sp = sub.add_parser("train-region", help="train the region localization MLP")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--union-ckpt", dest="union_ckpt")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--weight-decay", type=float, dest="weight_decay")
    sp.add_argument("--patience", type=int)
    common(sp)
    sp.set_defaults(func=cmd_train_region)

    sp = sub.add_parser("eval-region", help="IoU/accuracy of the region MLP")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--region-ckpt", dest="region_ckpt", required=True)
    sp.add_argument("--union-ckpt", dest="union_ckpt")
    sp.add_argument("--split", choices=["train", "testA", "testB"])
    common(sp)
    sp.set_defaults(func=cmd_eval_region)

    sp = sub.add_parser("localize", help="predict a region mask from a spectrum")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--region-ckpt", dest="region_ckpt", required=True)
    sp.add_argument("--spectrum", required=True)
    sp.add_argument("--template", help="template OFF for the colored export")
    common(sp)
    sp.set_defaults(func=cmd_localize)

    ix = sub.add_parser("index", help="retrieval index")
    isub = ix.add_subparsers(dest="subcommand", required=True)
    sp = isub.add_parser("build")
    sp.add_argument("--family", required=True)
    sp.add_argument("--k", type=int)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_index_build)
    sp = isub.add_parser("query")
    sp.add_argument("--index", required=True)
    sp.add_argument("--spectrum", required=True)
    sp.add_argument("--top", type=int)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_index_query)

    sp = sub.add_parser("retrieve-eval", help="top-K retrieval with predicted union signatures")
    sp.add_argument("--index", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", choices=["train", "testA", "testB", "all"])
    sp.add_argument("--ks")
    common(sp)
    sp.set_defaults(func=cmd_retrieve_eval)

    sp = sub.add_parser("interp", help="linear interpolation of two spectra")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--t", type=float, required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_interp)

    sp = sub.add_parser("gradcheck", help="finite-difference checks of every autodiff op")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_gradcheck)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not getattr(args, "out", None):
        parser.error("synth requires --out")
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    try:
        _apply_config(args, parser)
        _prepare_out(args)
        args.func(args)
        _write_run_record(args, started)
    except SpunError as exc:
        _say(f"error: {exc}")
        sys.exit(exc.exit_code)
    except FileNotFoundError as exc:
        _say(f"error: {exc}")
        sys.exit(2)
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure
        _say(f"error: {type(exc).__name__}: {exc}")
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
