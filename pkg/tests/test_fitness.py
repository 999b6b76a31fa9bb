import numpy as np
import pytest

from gpfuse import fitness as ft
from gpfuse.datamodel import SynthConfig, generate_synthetic
from gpfuse.errors import ShapeError
from gpfuse.program import from_text


class TestAssemble:
    def test_mask_counting(self):
        mask = np.zeros((2, 5), bool)
        mask[0, :3] = True
        mask[1, :5] = True
        split = ft.StackedSplit(
            bank={},
            labels=np.zeros((2, 5), dtype=np.int8),
            mask=mask,
        )
        fused = np.arange(2 * 5 * 3, dtype=float).reshape(2, 5, 3)
        x, y = ft.assemble(fused, split)
        assert x.shape == (8, 3)
        assert y.shape == (8, 8)
        assert (y.sum(axis=1) == 1).all()

    def test_all_padding_protein_contributes_nothing(self):
        mask = np.zeros((2, 4), bool)
        mask[0] = True
        split = ft.StackedSplit(
            bank={}, labels=np.zeros((2, 4), dtype=np.int8), mask=mask
        )
        x, _ = ft.assemble(np.ones((2, 4, 2)), split)
        assert x.shape == (4, 2)

    def test_row_order_stable(self):
        rng = np.random.default_rng(0)
        mask = rng.random((3, 6)) < 0.7
        split = ft.StackedSplit(
            bank={},
            labels=rng.integers(8, size=(3, 6)).astype(np.int8),
            mask=mask,
        )
        fused = rng.normal(size=(3, 6, 4))
        x1, y1 = ft.assemble(fused, split)
        x2, y2 = ft.assemble(fused, split)
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(y1, y2)


class TestRidge:
    def test_recovers_planted_weights(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(500, 6))
        w_true = rng.normal(size=(6, 8))
        y = x @ w_true
        clf = ft.ridge_fit(x, y, ridge_lambda=1e-9)
        # independent normal-equations oracle
        xb = np.hstack([x, np.ones((500, 1))])
        oracle = np.linalg.lstsq(xb, y, rcond=None)[0]
        np.testing.assert_allclose(clf.weights, oracle, atol=1e-6)
        np.testing.assert_allclose(clf.weights[:-1], w_true, atol=1e-4)

    def test_zero_design_fits_prior(self):
        x = np.zeros((50, 3))
        y = np.zeros((50, 8))
        y[:, 2] = 1.0
        clf = ft.ridge_fit(x, y)
        assert np.abs(clf.weights[:-1]).max() < 1e-9
        assert np.argmax(clf.weights[-1]) == 2

    def test_shrinkage(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(100, 4))
        y = rng.normal(size=(100, 8))
        small = ft.ridge_fit(x, y, ridge_lambda=1e-3)
        huge = ft.ridge_fit(x, y, ridge_lambda=1e6)
        assert np.linalg.norm(huge.weights[:-1]) <= np.linalg.norm(
            small.weights[:-1]
        )
        assert np.abs(huge.weights[:-1]).max() < 1e-3

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(80, 5))
        y = rng.normal(size=(80, 8))
        perm = rng.permutation(80)
        a = ft.ridge_fit(x, y)
        b = ft.ridge_fit(x[perm], y[perm])
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-9)


class TestPredict:
    def test_argmax(self):
        w = np.zeros((3, 8))
        w[0, 0] = 0.9
        w[1, 1] = 0.1
        clf = ft.LinearClassifier(weights=w, ridge_lambda=0.0)
        x = np.array([[1.0, 1.0]])
        assert ft.predict(clf, x)[0] == 0

    def test_tie_goes_to_lower_index(self):
        w = np.zeros((2, 8))
        w[0, 3] = 1.0
        w[0, 5] = 1.0
        clf = ft.LinearClassifier(weights=w, ridge_lambda=0.0)
        assert ft.predict(clf, np.array([[1.0]]))[0] == 3

    def test_matches_scalar_argmax(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(6, 8))
        clf = ft.LinearClassifier(weights=w, ridge_lambda=0.0)
        x = rng.normal(size=(20, 5))
        got = ft.predict(clf, x)
        for i in range(20):
            scores = [
                sum(x[i, j] * w[j, k] for j in range(5)) + w[5, k]
                for k in range(8)
            ]
            best = max(range(8), key=lambda k: (scores[k], -k))
            assert got[i] == best

    def test_width_mismatch(self):
        clf = ft.LinearClassifier(weights=np.zeros((4, 8)), ridge_lambda=0.0)
        with pytest.raises(ShapeError):
            ft.predict(clf, np.zeros((2, 5)))


class TestQ8:
    def test_identity(self):
        x = np.arange(8)
        assert ft.q8(x, x, np.ones(8, bool)) == 1.0

    def test_three_of_four(self):
        pred = np.array([0, 1, 2, 3])
        truth = np.array([0, 1, 2, 7])
        assert ft.q8(pred, truth, np.ones(4, bool)) == 0.75

    def test_masked_only(self):
        pred = np.array([0, 9, 9])  # junk at padding
        truth = np.array([0, 1, 2])
        mask = np.array([True, False, False])
        assert ft.q8(pred, truth, mask) == 1.0

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            ft.q8(np.zeros(3), np.zeros(3), np.zeros(3, bool))


class TestFitnessPipeline:
    def test_strong_feature_scores_high(self, tiny_splits):
        train, val = tiny_splits
        cfg = SynthConfig(
            n_proteins=30,
            length=30,
            dim=12,
            view_snr={"HMM": 6.0, "PSSM": 0.1, "T5": 0.1, "Sa": 0.1},
        )
        vcfg = SynthConfig(**{**cfg.__dict__, "split": "validation"})
        train = ft.stack_dataset(generate_synthetic(cfg, 31))
        val = ft.stack_dataset(generate_synthetic(vcfg, 32))
        p = from_text("(Root1 HMM_CNN1)")
        assert ft.evaluate_program(p, train, val).q_a >= 0.9

    def test_q_c_example(self, tiny_splits):
        train, val = tiny_splits
        pair = ft.evaluate_program(from_text("(Root1 T5_CNN2)"), train, val)
        assert pair.q_c == pytest.approx(11.2)
        assert 0.0 <= pair.q_a <= 1.0

    def test_cache_single_evaluation_for_duplicates(self, tiny_splits):
        train, val = tiny_splits
        cache = ft.FitnessCache(train, val)
        p1 = from_text("(Root1 T5_CNN2)")
        p2 = from_text("(Root1 T5_CNN2)")
        pairs = cache.evaluate_many([p1, p2, p1])
        assert cache.evaluations == 1
        assert pairs[0] == pairs[1] == pairs[2]

    def test_reproducible(self, tiny_splits):
        train, val = tiny_splits
        p = from_text("(Root2 (LoGF 2 T5_CNN1) PSSM_RNN1)")
        a = ft.evaluate_program(p, train, val)
        b = ft.evaluate_program(p, train, val)
        assert a == b

    def test_worker_count_does_not_change_results(self, tiny_splits):
        train, val = tiny_splits
        programs = [
            from_text("(Root1 T5_CNN2)"),
            from_text("(Root2 HMM_CNN1 PSSM_CNN2)"),
            from_text("(Root1 (MaxP Sa_RNN1))"),
        ]
        serial = ft.FitnessCache(train, val).evaluate_many(programs, workers=1)
        threaded = ft.FitnessCache(train, val).evaluate_many(programs, workers=4)
        assert serial == threaded

    def test_label_permutation_equivariance(self, tiny_splits):
        train, val = tiny_splits
        rng = np.random.default_rng(5)
        perm = rng.permutation(8)
        p = from_text("(Root1 T5_CNN1)")
        base = ft.evaluate_program(p, train, val)
        permuted_train = ft.StackedSplit(
            bank=train.bank, labels=perm[train.labels], mask=train.mask
        )
        permuted_val = ft.StackedSplit(
            bank=val.bank, labels=perm[val.labels], mask=val.mask
        )
        permuted = ft.evaluate_program(p, permuted_train, permuted_val)
        assert permuted.q_a == pytest.approx(base.q_a, abs=1e-12)
