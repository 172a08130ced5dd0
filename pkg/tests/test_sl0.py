import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0_oracle import l0_minimizer_support
from tensorsl0.linalg import SingularGramError
from tensorsl0.sl0 import (
    SNR_CAP_DB,
    DictionarySet,
    SolverConfig,
    initialize,
    project,
    recover,
    residual,
    sigma_schedule,
    smoothed_norm,
    smoothed_norm_delta,
    snr_db,
)
from tensorsl0.tensor import frobenius_norm_sq, kron_chain, tensorize, vectorize


def rel_residual(x, y, ds):
    return math.sqrt(frobenius_norm_sq(residual(x, y, ds)) / frobenius_norm_sq(y))


def random_dicts(rng, y_shape, x_shape):
    return DictionarySet.from_matrices([rng.standard_normal((m, n)) for m, n in zip(y_shape, x_shape)])


def sparse_tensor(rng, shape, k):
    x = np.zeros(int(np.prod(shape)))
    x[rng.choice(x.size, k, replace=False)] = rng.standard_normal(k)
    return x.reshape(shape)


class TestSmoothedNorm:
    def test_zero(self):
        assert smoothed_norm(np.zeros((3, 3)), 0.7) == 0.0

    def test_single_entry_at_sigma(self):
        assert smoothed_norm(np.array([0.3]), 0.3) == pytest.approx(1 - math.exp(-0.5), abs=1e-15)
        assert smoothed_norm(np.array([0.3]), 0.3) == pytest.approx(0.39347, abs=1e-5)

    def test_approaches_l0(self):
        sigma = 0.01
        x = np.zeros((4, 5, 6))
        x[0, 0, 0], x[1, 2, 3], x[3, 4, 5] = 100 * sigma, -150 * sigma, 1e3
        assert abs(smoothed_norm(x, sigma) - 3) <= 1e-3

    def test_range(self, rng):
        x = rng.standard_normal((5, 5))
        assert 0 <= smoothed_norm(x, 0.5) < x.size

    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            smoothed_norm(np.ones(2), 0.0)
        with pytest.raises(ValueError):
            smoothed_norm_delta(np.ones(2), -1.0)


class TestDelta:
    def test_zero(self):
        np.testing.assert_array_equal(smoothed_norm_delta(np.zeros((2, 2)), 1.0), np.zeros((2, 2)))

    def test_at_sigma(self):
        assert smoothed_norm_delta(np.array([0.2]), 0.2)[0] == pytest.approx(0.2 * math.exp(-0.5), rel=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
    def test_matches_central_differences(self, seed, sigma):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 3)) * sigma * 2
        grad = smoothed_norm_delta(x, sigma) / sigma**2
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            h = 1e-6 * max(1.0, abs(x[idx]))
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            fd[idx] = (smoothed_norm(xp, sigma) - smoothed_norm(xm, sigma)) / (2 * h)
        assert np.linalg.norm(grad - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)


class TestDictionarySet:
    def test_pinvs_right_identity(self, rng):
        ds = random_dicts(rng, (3, 4), (5, 6))
        for a, p in zip(ds.dicts, ds.pinvs):
            np.testing.assert_allclose(a @ p, np.eye(a.shape[0]), atol=1e-10)
        assert ds.x_shape == (5, 6) and ds.y_shape == (3, 4)

    def test_rejects_tall(self, rng):
        with pytest.raises(ValueError):
            DictionarySet.from_matrices([rng.standard_normal((5, 3))])

    def test_rank_deficient(self):
        with pytest.raises(SingularGramError):
            DictionarySet.from_matrices([np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])])

    def test_immutable(self, rng):
        ds = random_dicts(rng, (2,), (3,))
        with pytest.raises(ValueError):
            ds.dicts[0][0, 0] = 1.0


class TestSolverConfig:
    def test_defaults(self):
        c = SolverConfig()
        assert (c.sigma_min, c.sigma_decay, c.inner_iters, c.step_mu, c.epsilon) == (0.004, 0.9, 5, 0.5, 0.01)

    @pytest.mark.parametrize("kw", [
        {"sigma_min": 0.0}, {"sigma_decay": 1.0}, {"sigma_decay": 0.0}, {"inner_iters": 0},
        {"step_mu": 0.0}, {"epsilon": -1.0}, {"sigma_initial": 0.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestInitializeProject:
    def test_orthonormal_rows(self, rng):
        qs = [np.linalg.qr(rng.standard_normal((n, n)))[0][:m] for m, n in [(3, 5), (2, 4)]]
        ds = DictionarySet.from_matrices(qs)
        y = rng.standard_normal((3, 2))
        x0 = initialize(y, ds)
        np.testing.assert_allclose(x0, qs[0].T @ y @ qs[1], atol=1e-12)
        assert rel_residual(x0, y, ds) <= 1e-10

    def test_zero(self, rng):
        ds = random_dicts(rng, (3, 4), (5, 6))
        np.testing.assert_array_equal(initialize(np.zeros((3, 4)), ds), np.zeros((5, 6)))

    def test_feasible_12x12(self, rng):
        ds = random_dicts(rng, (12, 12), (20, 20))
        y = rng.standard_normal((12, 12))
        assert rel_residual(initialize(y, ds), y, ds) <= 1e-9

    def test_shape_mismatch(self, rng):
        ds = random_dicts(rng, (3, 4), (5, 6))
        with pytest.raises(ValueError):
            initialize(np.zeros((4, 3)), ds)
        with pytest.raises(ValueError):
            project(np.zeros((6, 5)), np.zeros((3, 4)), ds)

    def test_project_feasible_unchanged(self, rng):
        ds = random_dicts(rng, (3, 4, 2), (5, 6, 3))
        y = rng.standard_normal((3, 4, 2))
        x = initialize(y, ds) + 0.0
        np.testing.assert_allclose(project(x, y, ds), x, atol=1e-12)

    def test_project_zero_is_initialize(self, rng):
        ds = random_dicts(rng, (3, 4), (5, 6))
        y = rng.standard_normal((3, 4))
        np.testing.assert_allclose(project(np.zeros((5, 6)), y, ds), initialize(y, ds), atol=1e-14)

    def test_project_random(self, rng):
        ds = random_dicts(rng, (4, 3, 5), (6, 5, 7))
        y = rng.standard_normal((4, 3, 5))
        p = project(rng.standard_normal((6, 5, 7)), y, ds)
        assert frobenius_norm_sq(residual(p, y, ds)) <= 1e-18 * frobenius_norm_sq(y)

    def test_project_is_orthogonal(self, rng):
        # the correction lies in the row space, so it is orthogonal to the null space
        ds = random_dicts(rng, (3, 4), (5, 6))
        y = rng.standard_normal((3, 4))
        x = rng.standard_normal((5, 6))
        p = project(x, y, ds)
        z = rng.standard_normal((5, 6))
        null_dir = z - ds.backward(ds.forward(z))
        assert abs(np.sum((x - p) * null_dir)) <= 1e-10 * np.linalg.norm(x - p) * np.linalg.norm(null_dir)


class TestSchedule:
    def test_geometric_then_floor(self):
        cfg = SolverConfig()
        trace = sigma_schedule(1.0, cfg)
        assert trace[0] == 1.0
        assert trace[-1] == cfg.sigma_min
        ratios = np.array(trace[1:-1]) / np.array(trace[:-2])
        np.testing.assert_allclose(ratios, cfg.sigma_decay, rtol=1e-12)
        assert all(s > cfg.sigma_min for s in trace[:-1])
        assert trace[-2] * cfg.sigma_decay <= cfg.sigma_min
        assert all(a > b for a, b in zip(trace, trace[1:]))
        assert len(trace) == math.ceil(math.log(cfg.sigma_min / 1.0) / math.log(cfg.sigma_decay)) + 1

    def test_start_below_floor(self):
        assert sigma_schedule(0.0, SolverConfig()) == [0.004]


class TestRecover:
    def test_zero_measurements(self, rng):
        ds = random_dicts(rng, (3, 4), (5, 6))
        rep = recover(np.zeros((3, 4)), ds)
        np.testing.assert_array_equal(rep.x_hat, np.zeros((5, 6)))
        assert rep.residual_energy == 0.0

    def test_report_fields(self, rng):
        ds = random_dicts(rng, (6, 6), (10, 10))
        x = sparse_tensor(rng, (10, 10), 3)
        rep = recover(ds.forward(x), ds, SolverConfig())
        assert rep.outer_stages == len(rep.sigma_trace)
        assert rep.iterations == 5 * rep.outer_stages == rep.projections
        assert rep.sigma_trace[0] == pytest.approx(2 * np.max(np.abs(initialize(ds.forward(x), ds))))
        assert rep.sigma_trace[-1] <= 0.004 / 0.9
        assert rep.elapsed >= 0

    def test_one_mode_single_spike(self):
        r = np.random.default_rng(7)
        a = r.standard_normal((2, 4))
        x = np.zeros(4)
        x[2] = 1.3
        ds = DictionarySet.from_matrices([a])
        y = ds.forward(x)
        rep = recover(y, ds)
        support, count = l0_minimizer_support([a], y, 1)
        assert count == 1
        assert tuple(np.flatnonzero(np.abs(rep.x_hat) > 0.1)) == support == (2,)
        assert snr_db(x, rep.x_hat) >= 40

    def test_two_way_50x50_setup(self):
        r = np.random.default_rng(0)
        ds = random_dicts(r, (30, 30), (50, 50))
        x = sparse_tensor(r, (50, 50), 150)
        y = ds.forward(x)
        y = y + np.sqrt(frobenius_norm_sq(y) / y.size) * 1e-3 * r.standard_normal(y.shape)
        rep = recover(y, ds, SolverConfig(noisy=True))
        assert snr_db(x, rep.x_hat) >= 40

    def test_noiseless_feasible(self, rng):
        ds = random_dicts(rng, (6, 5, 4), (8, 7, 6))
        x = sparse_tensor(rng, (8, 7, 6), 6)
        y = ds.forward(x)
        rep = recover(y, ds)
        assert rel_residual(rep.x_hat, y, ds) <= 1e-8

    def test_noisy_skips_projection_within_budget(self, rng):
        ds = random_dicts(rng, (6, 6), (10, 10))
        x = sparse_tensor(rng, (10, 10), 3)
        y = ds.forward(x)
        loose = recover(y, ds, SolverConfig(noisy=True, epsilon=1e6))
        assert loose.projections == 0
        tight = recover(y, ds, SolverConfig(noisy=True, epsilon=0.0))
        assert tight.projections == tight.iterations

    def test_one_mode_equals_padded_two_mode(self, rng):
        a = rng.standard_normal((5, 9))
        x = sparse_tensor(rng, (9,), 2)
        one = DictionarySet.from_matrices([a])
        two = DictionarySet.from_matrices([a, np.eye(1)])
        y = one.forward(x)
        r1 = recover(y, one)
        r2 = recover(y.reshape(5, 1), two)
        np.testing.assert_allclose(r2.x_hat.reshape(9), r1.x_hat, atol=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_flattening_equivalence(self, seed, ndim):
        r = np.random.default_rng(seed)
        x_shape = tuple(int(n) for n in r.integers(2, 7, size=ndim))
        y_shape = tuple(int(r.integers(1, n)) for n in x_shape)
        mats = [r.standard_normal((m, n)) for m, n in zip(y_shape, x_shape)]
        ds = DictionarySet.from_matrices(mats)
        x = sparse_tensor(r, x_shape, max(1, int(np.prod(y_shape)) // 4))
        y = ds.forward(x)
        cfg = SolverConfig()
        tensor_rep = recover(y, ds, cfg)
        flat_rep = recover(vectorize(y), DictionarySet.from_matrices([kron_chain(mats)]), cfg)
        assert flat_rep.iterations == tensor_rep.iterations
        np.testing.assert_allclose(tensorize(flat_rep.x_hat, x_shape), tensor_rep.x_hat, rtol=0, atol=1e-6)


class TestSNR:
    def test_exact(self, rng):
        x = rng.standard_normal((3, 3))
        assert snr_db(x, x) == SNR_CAP_DB

    def test_zero_estimate(self, rng):
        x = rng.standard_normal((3, 3))
        assert snr_db(x, np.zeros_like(x)) == pytest.approx(0.0, abs=1e-12)

    def test_forty_db(self, rng):
        x = rng.standard_normal((4, 5))
        e = rng.standard_normal((4, 5))
        e /= np.linalg.norm(e)
        assert snr_db(x, x + 0.01 * np.linalg.norm(x) * e) == pytest.approx(40.0, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            snr_db(np.zeros(3), np.ones(3))
        with pytest.raises(ValueError):
            snr_db(np.ones(3), np.ones(4))
