import math
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqclab import energy as E
from bqclab import experiments as X
from bqclab.blend import build_blend, cubic_shape, linear_shape
from bqclab.lattice import Deformation, LatticeConfig, delta2, dual_norm


class TestFitRate:
    def test_exact_power_law(self):
        xs = [2.0**j for j in range(1, 8)]
        fit = X.fit_rate([(x, x**-2) for x in xs])
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(7)
        xs = np.logspace(0, 2, 25)
        ys = 3.0 * xs**-1.5 * (1.0 + 0.01 * rng.standard_normal(xs.size))
        fit = X.fit_rate(zip(xs, ys))
        assert -1.55 <= fit.slope <= -1.45

    def test_constant(self):
        fit = X.fit_rate([(1, 5.0), (2, 5.0), (4, 5.0)])
        assert fit.slope == pytest.approx(0.0, abs=1e-14)
        assert 0.0 <= fit.r_squared <= 1.0

    @pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 1)], [(0, 1), (2, 1), (3, 1)]])
    def test_rejects(self, pts):
        with pytest.raises(ValueError):
            X.fit_rate(pts)

    @given(st.floats(-3, 3), st.floats(0.1, 10))
    @settings(max_examples=50, deadline=None)
    def test_recovers_any_slope(self, s, c):
        xs = [1.0, 3.0, 9.0, 27.0]
        fit = X.fit_rate([(x, c * x**s) for x in xs])
        assert fit.slope == pytest.approx(s, abs=1e-9)
        assert fit.intercept == pytest.approx(math.log(c), abs=1e-9)


class TestLoads:
    def test_profile_is_periodic_in_center(self):
        f0 = X.load_profile(0.95)
        f1 = X.load_profile(-0.05)
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(f0(x), f1(x), atol=1e-15)

    def test_canonical_load_mean_zero(self):
        load = X.canonical_load(LatticeConfig(64), 0.25)
        assert abs(load.values.sum()) < 1e-12

    def test_random_state_deterministic(self):
        c = LatticeConfig(32)
        a = X.random_smooth_state(c, np.random.default_rng(3))
        b = X.random_smooth_state(c, np.random.default_rng(3))
        np.testing.assert_array_equal(a.u, b.u)
        assert a.strain_f == b.strain_f

    def test_smooth_strain_amplitude(self, rng):
        w = X.smooth_strain(64, rng, 0.07)
        assert np.max(np.abs(w)) == pytest.approx(0.07)
        assert abs(w.mean()) < 1e-15


class TestAudit:
    N = 64
    BLEND = build_blend(LatticeConfig(64), cubic_shape(), 32, 10, 8)

    def test_bqnl_patch_test(self, potential):
        m = E.bqnl(potential, self.BLEND)
        a = X.modeling_error_audit(m, Deformation.uniform(LatticeConfig(self.N), 1.0))
        assert a.lhs <= 1e-13
        assert a.rhs == 0.0
        assert a.parts["ghost"] == 0.0

    @pytest.mark.parametrize("f", [0.95, 1.0, 1.1])
    @pytest.mark.parametrize("p", [1, 2, np.inf])
    def test_bqce_uniform_is_pure_ghost(self, potential, f, p):
        m = E.bqce(potential, self.BLEND)
        a = X.modeling_error_audit(m, Deformation.uniform(LatticeConfig(self.N), f), p)
        assert a.lhs > 0
        # C1(2F) = |phi'(2F)| here, so the bound can be attained up to roundoff
        assert a.lhs <= a.rhs * (1 + 1e-12)
        assert a.rhs == pytest.approx(a.parts["ghost"])
        assert a.ghost_exact == pytest.approx(a.lhs, rel=1e-10)

    @pytest.mark.parametrize("tag", ["bqce", "bqnl", "qce", "qnl"])
    @pytest.mark.parametrize("p", [1, 2, np.inf])
    def test_random_states_bound(self, potential, rng, tag, p):
        m = E.build_model(tag, potential, self.N, self.BLEND)
        for _ in range(10):
            y = X.random_smooth_state(LatticeConfig(self.N), rng)
            a = X.modeling_error_audit(m, y, p)
            assert a.holds, (a.lhs, a.rhs)
            if tag in ("bqnl", "qnl"):
                assert a.parts["ghost"] == 0.0

    def test_ghost_exact_only_for_uniform(self, lj, rng):
        y = X.random_smooth_state(LatticeConfig(self.N), rng)
        assert X.modeling_error_audit(E.bqce(lj, self.BLEND), y).ghost_exact is None


class TestMapOrdered:
    def test_preserves_order(self):
        def slow(i):
            time.sleep(0.002 * (5 - i % 5))
            return i * i

        assert X.map_ordered(slow, range(20), threads=4) == [i * i for i in range(20)]

    def test_runs_concurrently(self):
        seen = set()

        def f(i):
            seen.add(threading.get_ident())
            time.sleep(0.01)
            return i

        X.map_ordered(f, range(8), threads=4)
        assert len(seen) > 1

    @pytest.mark.parametrize("raw,expected", [("3", 3), ("1", 1)])
    def test_thread_count_env(self, monkeypatch, raw, expected):
        monkeypatch.setenv("BQCLAB_THREADS", raw)
        assert X.thread_count() == expected

    def test_thread_count_auto(self, monkeypatch):
        monkeypatch.setenv("BQCLAB_THREADS", "0")
        assert X.thread_count() >= 1

    @pytest.mark.parametrize("raw", ["-1", "many"])
    def test_thread_count_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("BQCLAB_THREADS", raw)
        with pytest.raises(ValueError):
            X.thread_count()


class TestSweepSpec:
    def test_geometry_checked(self):
        with pytest.raises(ValueError):
            X.SweepSpec(n_list=(100,), k_list=(64,), atomistic_width=3)

    def test_empty_list(self):
        with pytest.raises(ValueError):
            X.SweepSpec(k_list=())

    def test_points_order(self):
        spec = X.SweepSpec(n_list=(128, 256), k_list=(4, 8), shape_list=("cubic", "linear"), atomistic_width=16)
        assert spec.points()[:3] == [(128, "cubic", 4), (128, "cubic", 8), (128, "linear", 4)]


class TestStudies:
    def test_convergence_small(self):
        spec = X.SweepSpec(model="bqce", n_list=(256,), k_list=(4, 8, 16), atomistic_width=32)
        res = X.convergence_study(spec)
        assert [r["k"] for r in res.rows] == [4, 8, 16]
        assert tuple(res.rows[0]) == X.CONVERGENCE_COLUMNS
        errs = [r["error_u12"] for r in res.rows]
        assert errs[0] > errs[1] > errs[2] > 0
        assert res.fit is not None and res.fit.slope < 0
        assert all(r["a_underline"] > 0 for r in res.rows)

    def test_convergence_threads_deterministic(self):
        spec = X.SweepSpec(model="bqnl", n_list=(256,), k_list=(4, 8, 16), atomistic_width=32)
        a = X.convergence_study(spec, threads=1).rows
        b = X.convergence_study(spec, threads=3).rows
        assert a == b

    def test_bqnl_first_order_in_eps_at_fixed_k(self):
        # atomistic region held at a fixed fraction of the period
        pts = []
        for n in (256, 512, 1024):
            spec = X.SweepSpec(model="bqnl", n_list=(n,), k_list=(8,), atomistic_width=n // 16)
            pts.append((1.0 / n, X.convergence_study(spec).rows[0]["error_u12"]))
        assert X.fit_rate(pts).slope >= 1.0

    def test_elastic_state_checked(self):
        spec = X.SweepSpec(n_list=(64,), k_list=(4,), atomistic_width=8, strain_f=1.3)
        with pytest.raises(Exception):
            X.convergence_study(spec)

    def test_critical_strain_small(self, lj):
        spec = X.SweepSpec(model="bqnl", n_list=(128,), k_list=(4, 8), atomistic_width=16)
        res = X.critical_strain_study(spec)
        assert res.fit is None
        for r in res.rows:
            assert abs(r["error"]) <= 2 * spec.tol

    def test_patch_test_rows(self, lj):
        c = LatticeConfig(64)
        rows = X.patch_test(lj, c, build_blend(c, cubic_shape(), 32, 10, 8), 1.05)
        by = {r["model"]: r["ghost_dual_norm"] for r in rows}
        for tag in ("atomistic", "cauchy_born", "qnl", "bqnl"):
            assert by[tag] <= 1e-12
        assert by["bqce"] > 1e-6 and by["qce"] > 1e-6
        assert tuple(rows[0]) == X.PATCH_COLUMNS

    @pytest.mark.parametrize("k", [2, 4, 8, 16])
    def test_ghost_table_linear(self, lj, k):
        n = 256
        c = LatticeConfig(n)
        t = X.ghost_force_table(lj, build_blend(c, linear_shape(), n // 2, 16, k), 1.0)
        expected = math.sqrt(2.0 / n) / k * abs(lj.derivative(1, 2.0))
        assert t["transition_dual_seminorm"] == pytest.approx(expected, rel=1e-12)
        assert t["ghost_dual_norm"] == pytest.approx(t["ghost_exact"], rel=1e-10)

    def test_ghost_exact_matches_definition(self, morse):
        c = LatticeConfig(128)
        blend = build_blend(c, cubic_shape(), 64, 16, 8)
        t = X.ghost_force_table(morse, blend, 0.97)
        m = E.bqce(morse, blend)
        assert t["ghost_exact"] == pytest.approx(abs(morse.derivative(1, 1.94)) * dual_norm(delta2(m.alpha), 2))
