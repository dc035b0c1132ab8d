import math
import warnings

import numpy as np
import pytest

from bqclab.blend import (
    BlendShape,
    bqce_alpha_beta,
    bqnl_alpha_beta,
    build_blend,
    characteristic_shape,
    coupling_seminorm,
    cubic_shape,
    custom_shape,
    get_shape,
    ghost_seminorm,
    indicator,
    linear_shape,
    optimal_shape,
    quintic_shape,
)
from bqclab.energy import bqce, qce
from bqclab.experiments import fit_rate
from bqclab.lattice import Deformation, LatticeConfig, delta2, lp_norm, mean_seq
from bqclab.potential import LennardJones

from oracles import qce_energy

SMOOTH = [cubic_shape(), quintic_shape()]


class TestShapes:
    @pytest.mark.parametrize("shape", [linear_shape(), cubic_shape(), quintic_shape()])
    def test_endpoints_and_extension(self, shape):
        assert shape(0.0) == 0 and shape(1.0) == 1
        np.testing.assert_array_equal(shape(np.array([-1.0, 2.0])), [0.0, 1.0])

    @pytest.mark.parametrize("shape", SMOOTH)
    def test_flat_ends(self, shape):
        assert shape.flat_ends
        assert abs(shape.derivative(0.0)) < 1e-12 and abs(shape.derivative(1.0)) < 1e-12

    def test_characteristic_is_a_step(self):
        g = characteristic_shape()
        assert g(0.0) == 0 and g(0.999) == 0 and g(1.0) == 1

    def test_invalid_custom_shapes(self):
        with pytest.raises(ValueError):
            custom_shape([0.0, 0.5])  # g(1) != 1
        with pytest.raises(ValueError):
            custom_shape([0.0, 4.0, -3.0])  # not monotone
        with pytest.raises(ValueError):
            BlendShape("sigmoid")

    def test_get_shape(self):
        assert get_shape("cubic").kind == "cubic"
        assert get_shape("custom", [0, 0, 3, -2]).kind == "custom"
        with pytest.raises(ValueError):
            get_shape("tanh")

    def test_optimal_shape_is_cubic(self):
        g = optimal_shape()
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(g(x), 3 * x**2 - 2 * x**3, atol=1e-15)
        assert g.second_derivative_norm(2) == pytest.approx(math.sqrt(12), rel=1e-13)

    def test_second_derivative_norm_by_quadrature(self):
        from scipy import integrate

        val = integrate.quad(lambda x: (60 * x - 180 * x**2 + 120 * x**3) ** 2, 0, 1)[0] ** 0.5
        assert quintic_shape().second_derivative_norm(2) == pytest.approx(val, rel=1e-10)
        p3 = integrate.quad(lambda x: abs(6 - 12 * x) ** 3, 0, 1)[0] ** (1 / 3)
        assert cubic_shape().second_derivative_norm(3) == pytest.approx(p3, rel=1e-8)
        assert cubic_shape().second_derivative_norm(np.inf) == pytest.approx(6.0)

    def test_cubic_beats_other_admissible_shapes(self):
        rng = np.random.default_rng(20)
        best = optimal_shape().second_derivative_norm(2)
        assert quintic_shape().second_derivative_norm(2) > best
        base = np.polynomial.Polynomial([0, 0, 3, -2])
        bump = np.polynomial.Polynomial([0, 0, 1, -2, 1])  # x^2 (1-x)^2
        made = 0
        while made < 20:
            q = np.polynomial.Polynomial(rng.normal(scale=0.5, size=3))
            try:
                shape = custom_shape((base + bump * q).coef)
            except ValueError:
                continue  # not monotone
            made += 1
            assert shape.flat_ends
            assert shape.second_derivative_norm(2) >= best - 1e-12


class TestBuildBlend:
    def test_cubic_window_values(self):
        b = build_blend(LatticeConfig(64), cubic_shape(), 32, 8, 4)
        j1, j2 = b.windows
        np.testing.assert_allclose(b.gamma[j2], [0, 5 / 32, 1 / 2, 27 / 32, 1], atol=1e-15)
        np.testing.assert_allclose(b.gamma[j1], [0, 5 / 32, 1 / 2, 27 / 32, 1], atol=1e-15)

    def test_layout(self):
        n, width, k = 64, 10, 6
        b = build_blend(LatticeConfig(n), linear_shape(), 20, width, k)
        assert b.atomistic.size == width
        assert b.interface.size == 2 * (k - 1)
        assert b.continuum.size == n - width - 2 * (k - 1)
        assert np.all((b.gamma >= 0) & (b.gamma <= 1))
        assert 20 in b.atomistic

    def test_wraps_around_period(self):
        b = build_blend(LatticeConfig(40), cubic_shape(), 0, 6, 5)
        assert b.gamma[0] == 0 and b.gamma[39] == 0
        assert b.gamma[20] == 1

    def test_geometry_must_fit(self):
        with pytest.raises(ValueError):
            build_blend(LatticeConfig(100), cubic_shape(), 50, 16, 64)
        build_blend(LatticeConfig(40), cubic_shape(), 20, 8, 14)  # 8 + 28 + 4 = 40

    def test_k1_warns(self):
        with pytest.warns(UserWarning):
            b = build_blend(LatticeConfig(32), cubic_shape(), 16, 6, 1)
        assert set(np.unique(b.gamma)) == {0.0, 1.0}

    def test_characteristic_gives_qce(self, lj):
        n = 12
        c = LatticeConfig(n)
        b = build_blend(c, characteristic_shape(), 6, 3, 1)
        cont = b.gamma == 1
        rng = np.random.default_rng(1)
        y = Deformation.from_displacement(c, 1.02, rng.normal(size=n) * 0.003)
        e_qce = qce_energy(lj, y, cont)
        assert bqce(lj, b).value(y) == pytest.approx(e_qce, rel=1e-14)
        assert qce(lj, np.flatnonzero(cont), n).value(y) == pytest.approx(e_qce, rel=1e-14)


class TestAlphaBeta:
    def test_bqce_limits(self):
        a, b = bqce_alpha_beta(np.ones(8))
        assert np.all(a == 1) and np.all(b == 0)
        a, b = bqce_alpha_beta(np.zeros(8))
        assert np.all(a == 0) and np.all(b == 1)

    def test_bqnl_limits(self):
        a, b = bqnl_alpha_beta(np.ones(8))
        assert np.all(a == 0) and np.all(b == 1)
        a, b = bqnl_alpha_beta(np.zeros(8))
        assert np.all(a == 1) and np.all(b == 0)

    def test_qce_interface_weights_by_hand(self):
        # continuum = sites 6..11 of a 12-site chain
        gamma = indicator(12, range(6, 12))
        a, b = bqce_alpha_beta(gamma)
        # alpha_xi = (gamma_xi + gamma_{xi-1})/2: half weight where the regions meet
        expected_a = np.array([0.5, 0, 0, 0, 0, 0, 0.5, 1, 1, 1, 1, 1])
        expected_b = np.array([0.5, 1, 1, 1, 1, 0.5, 0.5, 0, 0, 0, 0, 0.5])
        np.testing.assert_array_equal(a, expected_a)
        np.testing.assert_array_equal(b, expected_b)

    def test_bqnl_patch_identity(self):
        rng = np.random.default_rng(5)
        eta = rng.uniform(size=30)
        a, b = bqnl_alpha_beta(eta)
        np.testing.assert_allclose(mean_seq(b) + a - 1, 0, atol=1e-15)

    def test_bqce_defect_identity(self):
        rng = np.random.default_rng(6)
        g = rng.uniform(size=30)
        a, b = bqce_alpha_beta(g)
        np.testing.assert_allclose(2 * (1 - a - mean_seq(b)), delta2(a), atol=1e-14)


class TestGhostSeminorm:
    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    @pytest.mark.parametrize("k", [2, 5, 16, 64])
    def test_linear_exact_value(self, p, k):
        n = 1024
        rep = ghost_seminorm(build_blend(LatticeConfig(n), linear_shape(), n // 2, 32, k), p)
        exact = 2 ** (1 / p) * (1 / n) ** (1 / p) / k
        for value in rep.per_transition:
            assert value == pytest.approx(exact, rel=1e-12)

    def test_constant_gamma(self):
        assert ghost_seminorm(np.full(20, 0.3), 2).value == 0

    @pytest.mark.parametrize("shape", SMOOTH)
    def test_flat_shape_rate_is_asymptotic(self, shape):
        # endpoint samples carry an O(1/k) deficit, so the k^-3/2 rate shows
        # up only once the window is resolved
        n = 4096
        ks = [32, 64, 128, 256]
        vals = [ghost_seminorm(build_blend(LatticeConfig(n), shape, n // 2, 32, k), 2).value for k in ks]
        slopes = np.log2(np.array(vals[1:]) / vals[:-1])
        np.testing.assert_allclose(slopes, -1.5, atol=0.05)
        assert np.all(np.diff(slopes) < 0)  # steepening towards -3/2

    @pytest.mark.parametrize("shape", SMOOTH)
    @pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
    def test_bound_is_sharp(self, shape, p):
        n = 1024
        ratios = []
        for k in (4, 8, 16, 32, 64):
            rep = ghost_seminorm(build_blend(LatticeConfig(n), shape, n // 2, 32, k), p)
            ratios.append(rep.per_transition[-1] / rep.bound_per_transition)
        assert np.all(np.diff(ratios) > 0)
        assert 0.95 <= ratios[-1] <= 1.0

    @pytest.mark.parametrize("shape", SMOOTH)
    def test_bound_rate_is_exact(self, shape):
        n = 1024
        ks = [4, 8, 16, 32, 64]
        vals = [ghost_seminorm(build_blend(LatticeConfig(n), shape, n // 2, 32, k), 2).bound for k in ks]
        assert fit_rate(zip(ks, vals)).slope == pytest.approx(-1.5, abs=1e-12)

    def test_linear_fitted_slope(self):
        n = 1024
        ks = [4, 8, 16, 32, 64]
        vals = [ghost_seminorm(build_blend(LatticeConfig(n), linear_shape(), n // 2, 32, k), 2).value for k in ks]
        assert -1.05 <= fit_rate(zip(ks, vals)).slope <= -0.95

    @pytest.mark.parametrize("shape", SMOOTH)
    @pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
    def test_minkowski_chain(self, shape, p):
        n = 512
        for k in range(2, 65):
            rep = ghost_seminorm(build_blend(LatticeConfig(n), shape, n // 2, 16, k), p)
            assert rep.value <= rep.gamma_value * (1 + 1e-12)
            assert rep.gamma_value <= rep.bound * (1 + 1e-12)
            assert max(rep.per_transition) <= rep.bound_per_transition * (1 + 1e-12)

    def test_linear_has_no_second_derivative_bound(self):
        rep = ghost_seminorm(build_blend(LatticeConfig(128), linear_shape(), 64, 8, 8), 2)
        assert rep.bound is None

    def test_mirror_symmetry(self):
        b = build_blend(LatticeConfig(200), quintic_shape(), 70, 12, 9)
        for p in (1.0, 2.0, np.inf):
            assert ghost_seminorm(b.gamma[::-1].copy(), p).value == pytest.approx(ghost_seminorm(b, p).value, rel=1e-13)
        reps = ghost_seminorm(b, 2).per_transition
        assert reps[0] == pytest.approx(reps[1], rel=1e-13)


class TestCouplingSeminorm:
    def test_uniform_state(self):
        c = LatticeConfig(64)
        b = build_blend(c, cubic_shape(), 32, 8, 8)
        _, beta = bqce_alpha_beta(b)
        assert coupling_seminorm(beta, Deformation.uniform(c, 1.0), 2).value == 0

    def test_constant_beta(self, rng):
        c = LatticeConfig(64)
        y = Deformation.from_displacement(c, 1.0, rng.normal(size=64) * 1e-3)
        assert coupling_seminorm(np.full(64, 0.4), y, 2).value == 0

    def _smooth_state(self, n):
        x = np.arange(n) / n
        # y'' peaks where the transitions sit (atomistic center at N/4)
        return Deformation.from_displacement(LatticeConfig(n), 1.0, 0.002 * np.sin(2 * np.pi * x))

    def test_rate_and_bound(self):
        n = 4096
        y = self._smooth_state(n)
        ks = [8, 16, 32, 64]
        vals = []
        for k in ks:
            b = build_blend(y.config, cubic_shape(), n // 4, 8, k)
            _, beta = bqce_alpha_beta(b)
            rep = coupling_seminorm(beta, y, 2, blend=b)
            assert rep.value <= rep.bound
            vals.append(rep.value)
        for v0, v1 in zip(vals, vals[1:]):
            assert math.log2(v1 / v0) == pytest.approx(-0.5, abs=0.1)

    @pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
    def test_bound_other_p(self, p):
        n = 1024
        y = self._smooth_state(n)
        b = build_blend(y.config, quintic_shape(), n // 4, 8, 12)
        _, beta = bqnl_alpha_beta(b)
        rep = coupling_seminorm(beta, y, p, blend=b)
        assert 0 < rep.value <= rep.bound
