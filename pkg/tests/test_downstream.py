import numpy as np
import pytest

from spun import downstream as dn
from spun.errors import EmptyIndex, LengthMismatch
from spun.spectral import Signature, Spectrum, shape_dna


class TestRegionWidths:
    def test_reference_template_exact(self):
        assert dn.region_widths(6890) == [1300, 2600, 3900, 5200, 6890]

    def test_scales_proportionally(self):
        w = dn.region_widths(689)
        assert w == [130, 260, 390, 520, 689]


class TestRegionForward:
    @pytest.fixture(scope="class")
    def model(self):
        return dn.RegionModel(n_vertices=50, k=6, seed=0)

    def test_outputs_in_unit_interval(self, model):
        rng = np.random.default_rng(0)
        s = Spectrum(np.sort(rng.uniform(1, 50, 6)), k=6)
        probs = dn.region_forward(s, model)
        assert probs.shape == (50,)
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_eval_deterministic(self, model):
        rng = np.random.default_rng(1)
        s = Spectrum(np.sort(rng.uniform(1, 50, 6)), k=6)
        a = dn.region_forward(s, model)
        b = dn.region_forward(s, model)
        assert np.array_equal(a, b)

    def test_length_mismatch(self, model):
        with pytest.raises(LengthMismatch):
            model.predict(np.zeros((1, 9)))


class TestSymLoss:
    def setup_method(self):
        self.sym = np.array([1, 0, 3, 2, 4])

    def test_exact_match_zero(self):
        gt = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
        assert dn.sym_loss(gt, gt, self.sym) == 0.0

    def test_mirror_match_zero(self):
        gt = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
        pred = gt[self.sym]
        assert dn.sym_loss(pred, gt, self.sym) == 0.0

    def test_joint_relabeling_invariance(self):
        rng = np.random.default_rng(2)
        pred = rng.random(5)
        gt = (rng.random(5) > 0.5).astype(float)
        a = dn.sym_loss(pred, gt, self.sym)
        b = dn.sym_loss(pred[self.sym], gt[self.sym], self.sym)
        assert a == pytest.approx(b, abs=1e-15)

    def test_never_exceeds_plain_mse(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            pred = rng.random(5)
            gt = (rng.random(5) > 0.5).astype(float)
            plain = float(np.mean((pred - gt) ** 2))
            assert dn.sym_loss(pred, gt, self.sym) <= plain + 1e-15


class TestEvalRegionScores:
    def test_perfect_prediction(self):
        sym = np.arange(6)
        gt = np.array([True, True, False, False, True, False])
        iou, acc = dn._mask_scores(gt.astype(float), gt, sym)
        assert iou == 1.0 and acc == 1.0

    def test_complement_prediction(self):
        sym = np.arange(4)
        gt = np.array([True, True, True, True])
        pred = np.zeros(4)
        iou, acc = dn._mask_scores(pred, gt, sym)
        assert iou == 0.0 and acc == 0.0

    def test_mirror_counts_as_correct(self):
        sym = np.array([1, 0, 3, 2])
        gt = np.array([True, False, True, False])
        pred = gt[sym].astype(float)
        iou, acc = dn._mask_scores(pred, gt, sym)
        assert iou == 1.0 and acc == 1.0


class TestRetrieval:
    @staticmethod
    def _index(n=12, k=5, seed=0):
        rng = np.random.default_rng(seed)
        entries = [
            (f"s{i:03d}", i % 4, Signature(np.sort(rng.uniform(0, 10, k))))
            for i in range(n)
        ]
        return dn.index_build(entries), entries

    def test_self_query_is_top1_with_zero_distance(self):
        index, entries = self._index()
        sid, ident, sig = entries[5]
        ranked = dn.query_topk(index, sig, 3)
        assert ranked[0] == (sid, 0.0)

    def test_k_larger_than_index_returns_full_ranking(self):
        index, _ = self._index(n=7)
        ranked = dn.query_topk(index, Signature(np.zeros(5)), 99)
        assert len(ranked) == 7

    def test_matches_bruteforce_scan(self):
        index, entries = self._index(n=40, seed=4)
        rng = np.random.default_rng(5)
        for _ in range(200):
            q = Signature(np.sort(rng.uniform(0, 10, 5)))
            ranked = dn.query_topk(index, q, 40)
            # independent linear scan
            dists = [(float(np.linalg.norm(e[2].values - q.values)), e[0]) for e in entries]
            expected = [sid for _, sid in sorted(dists, key=lambda t: (t[0], t[1]))]
            assert [sid for sid, _ in ranked] == expected

    def test_empty_index(self):
        with pytest.raises(EmptyIndex):
            dn.index_build([])

    def test_exact_signature_queries_hit_top1(self):
        index, entries = self._index(n=20, seed=6)
        queries = [(ident, sig) for _, ident, sig in entries]
        rates = dn.eval_retrieval(index, queries, ks=(1, 5))
        assert rates[1] == 1.0

    def test_mismatched_lengths_rejected(self):
        entries = [("a", 0, Signature(np.zeros(4))), ("b", 1, Signature(np.zeros(5)))]
        with pytest.raises(LengthMismatch):
            dn.index_build(entries)


class TestInterpolate:
    def test_endpoints(self):
        a = Spectrum(np.array([0.0, 2.0, 4.0]), k=3)
        b = Spectrum(np.array([2.0, 4.0, 6.0]), k=3)
        assert dn.interpolate_spectra(a, b, 0.0) == a
        assert dn.interpolate_spectra(a, b, 1.0) == b

    def test_midpoint(self):
        a = Spectrum(np.array([0.0, 2.0, 4.0]), k=3)
        b = Spectrum(np.array([2.0, 4.0, 6.0]), k=3)
        mid = dn.interpolate_spectra(a, b, 0.5)
        assert np.array_equal(mid.values, [1.0, 3.0, 5.0])

    def test_sortedness_preserved(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = Spectrum(np.sort(rng.uniform(0, 100, 8)), k=8)
            b = Spectrum(np.sort(rng.uniform(0, 100, 8)), k=8)
            t = rng.random()
            out = dn.interpolate_spectra(a, b, t)
            assert np.all(np.diff(out.values) >= 0)

    def test_k_mismatch(self):
        a = Spectrum(np.zeros(3), k=3)
        b = Spectrum(np.zeros(4), k=4)
        with pytest.raises(LengthMismatch):
            dn.interpolate_spectra(a, b, 0.5)


class TestTrainRegionSmall:
    def test_frozen_union_model_untouched_and_training_runs(self, manifest_small):
        from spun.downstream import RegionTrainConfig, train_region
        from spun.union_op import UnionModel

        union_model = UnionModel(k=manifest_small.k, seed=9)
        before = {n: v.values.copy() for n, v in union_model.store.items()}
        cfg = RegionTrainConfig(epochs=6, seed=1, patience=10)
        model, history = train_region(manifest_small, union_model, cfg)
        after = union_model.store.state_dict()
        for name in before:
            assert np.array_equal(before[name], after[name])
        assert len(history) >= 1
        sched_lr = history[0]["lr"]
        assert sched_lr == pytest.approx(5e-5)

    def test_rerun_identical(self, manifest_small):
        from spun.downstream import RegionTrainConfig, train_region

        cfg = RegionTrainConfig(epochs=4, seed=2, patience=10)
        _, h1 = train_region(manifest_small, None, cfg)
        _, h2 = train_region(manifest_small, None, cfg)
        assert h1 == h2
