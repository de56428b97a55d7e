import io
import json
import sys

import numpy as np
import pytest

from spun import cli
from spun import dataset as ds
from spun.geometry import primitives as pr
from spun.geometry import write_off
from spun.nn import save_ckpt
from spun.spectral import Spectrum
from spun.union_op import UnionModel

SQUARE_EXACT = np.pi**2 * np.array([2.0, 5.0, 5.0, 8.0, 10.0])


def run_cli(argv, capsys):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""
    try:
        cli.main(argv)
        code = 0
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def square_off(tmp_path_factory):
    path = tmp_path_factory.mktemp("shapes") / "square.off"
    write_off(pr.grid_mesh(41), path)
    return path


@pytest.fixture(scope="module")
def union_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "union.ckpt"
    model = UnionModel(k=20, seed=0)
    save_ckpt(model.store, path)
    return path


@pytest.fixture(scope="module")
def spec_files(tmp_path_factory):
    rng = np.random.default_rng(0)
    d = tmp_path_factory.mktemp("spectra")
    paths = []
    for i in range(3):
        s = Spectrum(np.sort(rng.uniform(1, 200, 20)), k=20)
        p = d / f"s{i}.json"
        p.write_text(s.to_json())
        paths.append(p)
    return paths


class TestSpectrumCommand:
    def test_analytic_square(self, square_off, capsys):
        code, out, err = run_cli(["spectrum", str(square_off), "--bc", "dirichlet", "--k", "5"], capsys)
        assert code == 0
        obj = json.loads(out)
        vals = np.array(obj["values"])
        assert obj["k"] == 5 and obj["bc"] == "dirichlet"
        assert np.all(np.abs(vals - SQUARE_EXACT) / SQUARE_EXACT < 0.02)

    def test_missing_file_exits_2(self, capsys):
        code, _, err = run_cli(["spectrum", "/nonexistent.off"], capsys)
        assert code == 2

    def test_unknown_flag_exits_2(self, square_off, capsys):
        code, _, _ = run_cli(["spectrum", str(square_off), "--bogus"], capsys)
        assert code == 2


class TestUnionCommand:
    def test_swapped_arguments_byte_identical(self, union_ckpt, spec_files, capsys):
        a, b = str(spec_files[0]), str(spec_files[1])
        code1, out1, _ = run_cli(["union", a, b, "--ckpt", str(union_ckpt)], capsys)
        code2, out2, _ = run_cli(["union", b, a, "--ckpt", str(union_ckpt)], capsys)
        assert code1 == 0 and code2 == 0
        assert out1 == out2

    def test_composition_three_inputs(self, union_ckpt, spec_files, capsys):
        argv = ["union"] + [str(p) for p in spec_files] + ["--ckpt", str(union_ckpt)]
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        obj = json.loads(out)
        vals = np.array(obj["values"])
        assert len(vals) == 20
        assert (np.diff(vals) >= 0).all() and (vals >= 0).all()


class TestDatasetAudit:
    def test_clean_manifest_reports_ok(self, manifest_small, tmp_path, capsys):
        path = tmp_path / "m.jsonl"
        ds.save_manifest(manifest_small, path)
        code, out, _ = run_cli(["dataset", "audit", "--manifest", str(path)], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["ok"]
        assert report["testB_class_leaked_into_train"] == 0

    def test_bad_manifest_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"magic":"SPUN-DS v0","version":0,"n_samples":0}\n')
        code, _, _ = run_cli(["dataset", "audit", "--manifest", str(path)], capsys)
        assert code == 2


class TestInterp:
    def test_midpoint(self, tmp_path, capsys):
        a = Spectrum(np.array([0.0, 2.0, 4.0]), k=3)
        b = Spectrum(np.array([2.0, 4.0, 6.0]), k=3)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        pa.write_text(a.to_json())
        pb.write_text(b.to_json())
        code, out, _ = run_cli(["interp", str(pa), str(pb), "--t", "0.5"], capsys)
        assert code == 0
        assert json.loads(out)["values"] == [1.0, 3.0, 5.0]


class TestExportSpectrum:
    def test_export_from_shape(self, square_off, tmp_path, capsys):
        out_file = tmp_path / "exported.json"
        code, _, err = run_cli(
            ["export-spectrum", "--shape", str(square_off), "--k", "5", "--out-file", str(out_file)],
            capsys,
        )
        assert code == 0
        back = Spectrum.from_json(out_file.read_text())
        assert back.k == 5 and back.bc == "dirichlet"


class TestSynthAndRunRecord:
    def test_synth_writes_family_and_run_record(self, tmp_path, capsys):
        out = tmp_path / "fam"
        code, stdout, _ = run_cli(
            ["synth", "--seed", "3", "--identities", "1", "--poses", "2",
             "--v-target", "300", "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert (out / "id0_pose1.off").exists()
        assert (out / "symmetry.txt").exists()
        record = json.loads((out / "run.json").read_text())
        assert "config_hash" in record and "version" in record

    def test_synth_without_out_is_usage_error(self, capsys):
        code, _, _ = run_cli(["synth", "--seed", "1"], capsys)
        assert code == 2


class TestConfigPrecedence:
    def test_flag_beats_config(self, square_off, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"overrides": {"k": 7}}))
        code, out, _ = run_cli(
            ["spectrum", str(square_off), "--k", "4", "--config", str(cfg)], capsys
        )
        assert code == 0
        assert json.loads(out)["k"] == 4

    def test_config_beats_default(self, square_off, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"overrides": {"k": 7}}))
        code, out, _ = run_cli(["spectrum", str(square_off), "--config", str(cfg)], capsys)
        assert code == 0
        assert json.loads(out)["k"] == 7
