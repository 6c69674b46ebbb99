import numpy as np
import pytest

from amnr.baselines import (
    TlrModel,
    flatten_tensors,
    tgp_fit,
    tgp_fit_predict,
    tlr_fit,
    tlr_inner_factored,
    tlr_predict,
)
from amnr.data import Dataset
from amnr.datagen import DgpSpec, gen_full_rank
from amnr.errors import ShapeError
from amnr.kernels import KernelSpec
from amnr.tensor import Tensor, inner, make_cp, random_sign_flip, reconstruct


def random_tlr_model(rng, dims, rank):
    return TlrModel(
        factors=[rng.standard_normal((d, rank)) for d in dims],
        intercept=float(rng.standard_normal()),
    )


def random_cp(rng, dims, rank):
    factors = []
    for d in dims:
        f = rng.standard_normal((d, rank))
        f /= np.linalg.norm(f, axis=0)
        factors.append(f)
    lam = np.sort(np.abs(rng.standard_normal(rank)) + 0.5)[::-1]
    return make_cp(lam, factors)


class TestFactoredInnerIdentity:
    def test_agrees_with_dense_inner_product(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            model = random_tlr_model(rng, (4, 5), 2)
            form = random_cp(rng, (4, 5), 2)
            x = reconstruct(form)
            dense = inner(model.weight_tensor(), x)
            factored = tlr_inner_factored(model, form)
            assert factored == pytest.approx(dense, abs=1e-10)

    def test_three_modes(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            model = random_tlr_model(rng, (3, 4, 2), 2)
            form = random_cp(rng, (3, 4, 2), 2)
            dense = inner(model.weight_tensor(), reconstruct(form))
            assert tlr_inner_factored(model, form) == pytest.approx(dense,
                                                                    abs=1e-10)

    def test_invariant_under_even_sign_flips(self):
        rng = np.random.default_rng(2)
        model = random_tlr_model(rng, (4, 4, 3), 2)
        form = random_cp(rng, (4, 4, 3), 2)
        base = tlr_inner_factored(model, form)
        for _ in range(50):
            flipped = random_sign_flip(form, rng)
            assert tlr_inner_factored(model, flipped) == pytest.approx(
                base, abs=1e-10
            )


class TestTlrFit:
    def test_recovers_rank_one_noiseless(self):
        rng = np.random.default_rng(3)
        b = np.outer(rng.standard_normal(5), rng.standard_normal(5))
        x = [Tensor(rng.standard_normal((5, 5))) for _ in range(200)]
        y = np.array([float(np.sum(b * t.data)) for t in x])
        train = Dataset(x[:150], y[:150])
        model = tlr_fit(train, rank=1, ridge=1e-9, seed=0)
        preds = tlr_predict(model, x[150:])
        assert np.mean((preds - y[150:]) ** 2) < 1e-6

    def test_constant_response(self):
        rng = np.random.default_rng(4)
        ds = Dataset([Tensor(rng.standard_normal((3, 3))) for _ in range(40)],
                     np.full(40, 2.5))
        model = tlr_fit(ds, rank=2, ridge=1e-4, seed=0)
        assert model.intercept == pytest.approx(2.5, abs=1e-6)
        assert np.allclose(tlr_predict(model, ds.tensors), 2.5, atol=1e-6)

    def test_objective_monotone(self):
        rng = np.random.default_rng(5)
        ds = Dataset([Tensor(rng.standard_normal((4, 3))) for _ in range(30)],
                     rng.standard_normal(30))
        model = tlr_fit(ds, rank=2, ridge=1e-3, max_sweeps=40, seed=0)
        tr = model.objective_trace
        assert np.all(np.diff(tr) <= 1e-9 * (1.0 + tr[0]))

    def test_zero_ridge_escalates_on_singular_system(self):
        # duplicated tensors make the normal equations singular
        rng = np.random.default_rng(6)
        t = Tensor(rng.standard_normal((2, 2)))
        ds = Dataset([t] * 6, rng.standard_normal(6))
        with pytest.warns(UserWarning, match="ridge"):
            tlr_fit(ds, rank=2, ridge=0.0, max_sweeps=3, seed=0)

    def test_validation(self):
        rng = np.random.default_rng(7)
        ds = Dataset([Tensor(rng.standard_normal((2, 2)))], np.zeros(1))
        with pytest.raises(ValueError):
            tlr_fit(ds, rank=0)
        with pytest.raises(ValueError):
            tlr_fit(ds, rank=1, ridge=-1.0)


class TestTlrPredict:
    def test_zero_model_gives_intercept(self):
        model = TlrModel(factors=[np.zeros((3, 2)), np.zeros((3, 2))],
                         intercept=1.25)
        preds = tlr_predict(model, [Tensor(np.ones((3, 3)))])
        assert preds[0] == 1.25

    def test_self_inner_product(self):
        rng = np.random.default_rng(8)
        model = random_tlr_model(rng, (4, 4), 2)
        b = model.weight_tensor()
        pred = tlr_predict(model, [b])[0]
        assert pred == pytest.approx(model.intercept + b.norm() ** 2, rel=1e-10)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(9)
        model = random_tlr_model(rng, (3, 4), 3)
        tensors = [Tensor(rng.standard_normal((3, 4))) for _ in range(5)]
        preds = tlr_predict(model, tensors)
        b = model.weight_tensor()
        for p, t in zip(preds, tensors):
            assert p == pytest.approx(model.intercept + inner(b, t), abs=1e-10)

    def test_shape_mismatch(self):
        model = TlrModel(factors=[np.zeros((3, 1)), np.zeros((3, 1))],
                         intercept=0.0)
        with pytest.raises(ShapeError):
            tlr_predict(model, [Tensor(np.zeros((2, 2)))])


class TestTgp:
    def test_flatten_row_major_roundtrip(self):
        t = Tensor(np.arange(12.0).reshape(3, 4))
        flat = flatten_tensors([t])
        assert np.array_equal(flat[0], np.arange(12.0))
        assert np.array_equal(flat[0].reshape(3, 4), t.data)

    def test_single_training_point_interpolates(self):
        t = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        ds = Dataset([t], np.array([5.0]))
        preds = tgp_fit_predict(ds, KernelSpec("rbf", 1.0), 0.0, [t])
        assert preds[0] == pytest.approx(5.0, abs=1e-6)

    def test_zero_targets(self):
        rng = np.random.default_rng(10)
        ds = Dataset([Tensor(rng.standard_normal((2, 2))) for _ in range(8)],
                     np.zeros(8))
        preds = tgp_fit_predict(ds, KernelSpec(), 0.5, ds.tensors)
        assert np.allclose(preds, 0.0, atol=1e-12)

    def test_beats_mean_predictor_on_smooth_dgp(self):
        spec = DgpSpec(kind="full-rank", dims=(2, 2), noise_var=1e-4, seed=3)
        ds = gen_full_rank(spec, 80)
        train, test = ds.split(50)
        preds = tgp_fit_predict(train, KernelSpec("matern", 1.0, 1.5), 1e-4,
                                test.tensors)
        mse = np.mean((preds - test.y) ** 2)
        assert mse < np.var(test.y)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        tensors = [Tensor(rng.standard_normal((2, 3))) for _ in range(12)]
        y = rng.standard_normal(12)
        query = [Tensor(rng.standard_normal((2, 3))) for _ in range(3)]
        ds = Dataset(tensors, y)
        perm = rng.permutation(12)
        ds_perm = ds.subset(perm)
        spec = KernelSpec("rbf", 2.0)
        a = tgp_fit_predict(ds, spec, 0.3, query, bandwidths=[2.0])
        b = tgp_fit_predict(ds_perm, spec, 0.3, query, bandwidths=[2.0])
        assert np.allclose(a, b, atol=1e-9)

    def test_bandwidth_selection_argmin_with_tie_to_smaller(self):
        rng = np.random.default_rng(12)
        tensors = [Tensor(rng.standard_normal((2, 2))) for _ in range(30)]
        y = rng.standard_normal(30)
        ds = Dataset(tensors, y)
        spec = KernelSpec("rbf", 1.0)
        candidates = [0.5, 1.0, 2.0, 4.0]
        model = tgp_fit(ds, spec, 0.5, bandwidths=candidates)
        # recompute every candidate's holdout error independently
        x = flatten_tensors(tensors)
        n_val = 10
        errs = {}
        from amnr.gp import gp_fit_predict
        for h in candidates:
            mean, _ = gp_fit_predict(x[:20], y[:20], KernelSpec("rbf", h, 1.5),
                                     0.5, x[20:])
            errs[h] = float(np.mean((mean - y[20:]) ** 2))
        best = min(candidates, key=lambda h: (errs[h], h))
        assert model.gp.spec.bandwidth == best
        # duplicated candidates cannot displace the smaller equal one
        model2 = tgp_fit(ds, spec, 0.5, bandwidths=[best, best, max(candidates)])
        assert model2.gp.spec.bandwidth == best
