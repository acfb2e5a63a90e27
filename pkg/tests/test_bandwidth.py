from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from seeqr.bandwidth import (SmoothingMoments, _sym_sqrt, estimate_moments, h_directional,
                             h_star_general, h_star_iid, initial_bandwidth, intercept_ratio,
                             plugin_bandwidth)
from seeqr.errors import ZeroBias
from seeqr.instruments import Dataset
from seeqr.kernels import get_kernel, kernel_constants
from seeqr.probdist import DensityFamily, FitResult

from conftest import linear_data

KC = kernel_constants("horowitz4")


def _objective(h, m, n, r):
    return n * h ** (2 * r) * m.BB - h * m.tr_AA


def _random_moments(rng, d=3):
    a = rng.normal(size=(d, d))
    eaa = a @ a.T + 0.1 * np.eye(d)
    v = np.cov(rng.normal(size=(d, 50))) + np.eye(d)
    return SmoothingMoments(eaa, rng.normal(size=d), v, rng.normal(size=(d, d)) + 2 * np.eye(d))


class TestGeneral:
    def test_closed_form(self):
        m = SmoothingMoments(np.eye(1), np.ones(1), np.eye(1))
        assert h_star_general(m, 100, 2) == pytest.approx((1 / 400) ** (1 / 3), rel=1e-15)

    @given(st.integers(0, 10_000), st.integers(1, 3), st.integers(10, 10_000))
    def test_scaling_law(self, seed, half_r, n):
        m = _random_moments(np.random.default_rng(seed))
        r = 2 * half_r
        ratio = h_star_general(m, 2 * n, r) / h_star_general(m, n, r)
        assert ratio == pytest.approx(2.0 ** (-1.0 / (2 * r - 1)), rel=1e-12)

    @given(st.integers(0, 10_000))
    def test_grid_minimizer_and_foc(self, seed):
        m = _random_moments(np.random.default_rng(seed))
        n, r = 500, 4
        h = h_star_general(m, n, r)
        grid = h * np.logspace(-1, 1, 201)
        assert np.all(_objective(grid, m, n, r) >= _objective(h, m, n, r))
        foc = 2 * r * n * h ** (2 * r - 1) * m.BB - m.tr_AA
        assert abs(foc) < 1e-12 * m.tr_AA

    def test_zero_bias(self):
        m = SmoothingMoments(np.eye(2), np.zeros(2), np.eye(2))
        with pytest.raises(ZeroBias):
            h_star_general(m, 100, 4)


class TestIid:
    def test_zero_derivative_substituted(self):
        h, flag = h_star_iid(0.4, 0.0, 2, 100, return_flag=True)
        assert flag
        assert h == h_star_iid(0.4, 0.01, 2, 100)

    def test_tiny_relative_derivative_substituted(self):
        # 1e-14 is zero relative to f0^4 ~ 0.0256
        assert h_star_iid(0.4, 1e-16, 2, 100, return_flag=True)[1]
        assert not h_star_iid(0.4, 1e-3, 2, 100, return_flag=True)[1]

    def test_scale_free_guard(self):
        # rescaling U by s: f0 -> f0/s, f''' -> f'''/s^4, h -> s h
        s = 1e4
        h1 = h_star_iid(0.3, -0.02, 2, 100)
        h2 = h_star_iid(0.3 / s, -0.02 / s ** 4, 2, 100)
        assert h2 == pytest.approx(s * h1, rel=1e-12)

    def test_doubling_d(self):
        r = 4
        assert h_star_iid(0.4, 0.2, 4, 100) / h_star_iid(0.4, 0.2, 2, 100) == pytest.approx(
            2 ** (1 / (2 * r - 1)), rel=1e-12)

    def test_matches_general_population_moments(self):
        # Z = (1, x), x ~ Unif(1, 5), U independent of Z with known f0, f'''(0)
        q, f0, f3, n = 0.5, 0.35, -0.12, 250
        mean_x = integrate.quad(lambda x: x / 4, 1, 5)[0]
        mean_x2 = integrate.quad(lambda x: x * x / 4, 1, 5)[0]
        ezz = np.array([[1.0, mean_x], [mean_x, mean_x2]])
        ez = np.array([1.0, mean_x])
        v = q * (1 - q) * ezz
        vih = _sym_sqrt(v, inverse=True)
        eaa = KC.one_minus_g_sq * f0 * vih @ ezz @ vih
        eb = KC.moment_r / math.factorial(4) * f3 * vih @ ez
        m = SmoothingMoments(eaa, eb, v)
        assert h_star_general(m, n, 4) == pytest.approx(h_star_iid(f0, f3, 2, n), rel=1e-8)

    def test_rejects_nonpositive_f0(self):
        with pytest.raises(ValueError):
            h_star_iid(0.0, 0.1, 2, 100)


class TestInterceptRatio:
    @given(st.integers(0, 10_000), st.integers(2, 6))
    def test_ratio_is_d(self, seed, d):
        rng = np.random.default_rng(seed)
        z = np.column_stack([np.ones(60), rng.normal(size=(60, d - 1)) + rng.normal(size=d - 1)])
        assert intercept_ratio(z) == pytest.approx(d, abs=1e-8)
        z2 = z * np.concatenate([[1.0], rng.uniform(0.1, 10, d - 1)])
        assert intercept_ratio(z2) == pytest.approx(d, abs=1e-8)

    def test_intercept_only(self):
        assert intercept_ratio(np.ones((10, 1))) == pytest.approx(1.0, abs=1e-14)


def _fit(f0=0.3, f3=-0.05):
    return FitResult(DensityFamily("gaussian", (0.0, 1.0)), -1.0, f0, f3, True)


class TestEstimateMoments:
    def test_intercept_only(self, rng):
        y = rng.normal(size=40)
        data = Dataset(y, np.ones((40, 1)), np.ones((40, 1)), 0.3)
        m = estimate_moments(data, _fit())
        qq = 0.3 * 0.7
        assert m.tr_AA == pytest.approx(KC.one_minus_g_sq * 0.3 / qq, rel=1e-12)
        assert m.BB == pytest.approx((KC.moment_r / 24) ** 2 * 0.05 ** 2 / qq, rel=1e-12)

    def test_trace_formula(self, small_data):
        m = estimate_moments(small_data, _fit())
        q = small_data.q
        assert m.tr_AA == pytest.approx(KC.one_minus_g_sq * 0.3 * 2 / (q * (1 - q)), rel=1e-12)
        np.testing.assert_allclose(m.EAA, m.EAA.T)
        assert np.all(np.linalg.eigvalsh(m.EAA) >= 0)

    @given(st.integers(0, 10_000))
    def test_reproduces_iid_bandwidth(self, seed):
        data, _ = linear_data(np.random.default_rng(seed), n=90, d=3)
        m = estimate_moments(data, _fit())
        assert h_star_general(m, data.n, 4) == pytest.approx(
            h_star_iid(0.3, -0.05, data.d, data.n), rel=1e-10)

    def test_linear_in_f0(self, small_data):
        a = estimate_moments(small_data, _fit(f0=0.3))
        b = estimate_moments(small_data, _fit(f0=0.6))
        assert b.tr_AA == pytest.approx(2 * a.tr_AA, rel=1e-14)
        np.testing.assert_array_equal(a.EB, b.EB)

    @given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
    def test_rotation_invariance(self, seed, angle):
        rng = np.random.default_rng(seed)
        data, _ = linear_data(rng, n=120, d=3)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.eye(3)
        rot[1:, 1:] = [[c, -s], [s, c]]
        x2 = data.x @ rot + np.concatenate([[0.0], rng.normal(size=2)]) * data.x[:, :1]
        rotated = Dataset(data.y, x2, x2.copy(), data.q)
        h1 = h_star_general(estimate_moments(data, _fit()), data.n, 4)
        h2 = h_star_general(estimate_moments(rotated, _fit()), data.n, 4)
        assert h2 == pytest.approx(h1, rel=1e-8)


class TestDirectional:
    def test_special_directions_give_general(self, small_data):
        m = estimate_moments(small_data, _fit())
        vih = _sym_sqrt(m.V, inverse=True)
        sigma_xz = m.sigma_zx.T
        c = (sigma_xz @ vih.T).T            # rows are c_i = Sigma_XZ (V^{-1/2})' e_i
        assert h_directional(c, m, small_data.n, 4) == pytest.approx(
            h_star_general(m, small_data.n, 4), rel=1e-10)

    @given(st.integers(0, 10_000))
    def test_single_direction_lower_bound(self, seed):
        rng = np.random.default_rng(seed)
        m = _random_moments(rng)
        n, r = 300, 4
        c = rng.normal(size=3)
        bound = (1 / (m.EB @ np.linalg.solve(m.EAA, m.EB)) / (2 * n * r)) ** (1 / (2 * r - 1))
        assert h_directional(c, m, n, r) >= bound * (1 - 1e-12)

    @given(st.integers(0, 10_000))
    def test_grid_minimizer(self, seed):
        rng = np.random.default_rng(seed)
        m = _random_moments(rng)
        n, r = 300, 4
        c = rng.normal(size=(2, 3))
        h = h_directional(c, m, n, r)
        u = (_sym_sqrt(m.V).T @ np.linalg.solve(m.sigma_zx.T, c.T)).T

        def obj(hh):
            return sum(ui @ (n * hh ** (2 * r) * np.outer(m.EB, m.EB) - hh * m.EAA) @ ui for ui in u)

        assert all(obj(g) >= obj(h) - 1e-12 * abs(obj(h)) for g in h * np.logspace(-1, 1, 201))

    def test_zero_bias_direction(self):
        m = SmoothingMoments(np.eye(2), np.array([1.0, 0.0]), np.eye(2), np.eye(2))
        with pytest.raises(ZeroBias):
            h_directional([[0.0, 1.0]], m, 100, 4)


class TestPlugin:
    def test_initial_bandwidth(self):
        assert initial_bandwidth(50, 4) == pytest.approx(400 ** (-1 / 7))

    def test_report_contract(self, rng):
        data, _ = linear_data(rng, n=120, noise="t")
        rep = plugin_bandwidth(data)
        assert rep.selected == min(rep.candidates.values())
        assert rep.selected > 0
        assert rep.selected_family in rep.candidates
        assert {f.family.family for f in rep.fits} <= {"gaussian", "student_t", "gamma", "gev"}
        assert rep.h0 == initial_bandwidth(120, 4)

    def test_deterministic(self, small_data):
        a, b = plugin_bandwidth(small_data), plugin_bandwidth(small_data)
        assert a.candidates == b.candidates and a.selected == b.selected

    def test_gaussian_candidate_closed_form(self):
        rng = np.random.default_rng(2)
        data, _ = linear_data(rng, n=20_000)
        rep = plugin_bandwidth(data, families=("gaussian",))
        mu, sigma = rep.fit_for("gaussian").family.params
        t = -mu / sigma
        f0 = stats.norm.pdf(t) / sigma
        f3 = -(t ** 3 - 3 * t) * stats.norm.pdf(t) / sigma ** 4
        assert rep.selected == pytest.approx(h_star_iid(f0, f3, 2, data.n), rel=1e-10)

    def test_standard_normal_triggers_guard(self):
        h, flag = h_star_iid(stats.norm.pdf(0), 0.0, 2, 10_000, return_flag=True)
        assert flag and np.isfinite(h)

    def test_kernel_r2(self, small_data):
        rep = plugin_bandwidth(small_data, kernel=get_kernel("epanechnikov2"))
        assert rep.h0 == pytest.approx((2 * small_data.n * 2) ** (-1 / 3))
