"""Reproducible numerical studies: modeling-error audits, convergence in the
blending width ``k``, critical strains, patch tests and rate fitting.

Sweep points are independent and run on a thread pool whose size is capped
by the ``BQCLAB_THREADS`` environment variable (0 or unset means automatic).
Results are always returned in sweep order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .blend import BlendFunction, build_blend, get_shape, ghost_seminorm
from .energy import (
    AdmissibilityError,
    EnergyModel,
    atomistic,
    atomistic_hessian_coefficients,
    build_model,
    first_variation,
    stability_correction,
    strain_coefficients,
)
from .lattice import (
    Deformation,
    LatticeConfig,
    delta,
    delta2,
    diff1,
    diff2,
    diff3,
    dual_norm,
    lp_norm,
    u1p_norm,
)
from .potential import Potential, get_potential
from .solve import DeadLoad, SolveOptions, equilibrate
from .stability import (
    CRITICAL_STRAIN_TOL,
    cauchy_born_critical_strain,
    critical_strain,
)

# --- loads and test states -----------------------------------------------------


def load_profile(center: float, a: float = 0.1, b: float = 1.0, width: float = 0.05) -> Callable:
    """``f(x) = a sin(2 pi x) + b exp(-(x - x0)^2 / (2 w^2))`` with ``x0`` taken periodically."""

    def f(x):
        x = np.asarray(x, dtype=float)
        d = (x - center + 0.5) % 1.0 - 0.5
        return a * np.sin(2.0 * np.pi * x) + b * np.exp(-(d**2) / (2.0 * width**2))

    return f


def canonical_load(config: LatticeConfig, center: float, a: float = 0.1, b: float = 1.0, width: float = 0.05) -> DeadLoad:
    """Smooth global load plus a Gaussian bump at ``center`` (reference coordinate in [0, 1))."""
    return DeadLoad.from_profile(load_profile(center, a, b, width), config)


def smooth_strain(n: int, rng: np.random.Generator, amplitude: float, modes: int = 6) -> np.ndarray:
    """Random mean-zero strain built from ``modes`` Fourier modes, ``max |w| = amplitude``."""
    x = np.arange(n) / n
    w = np.zeros(n)
    for j in range(1, modes + 1):
        w += rng.normal() / j**2 * np.cos(2.0 * np.pi * j * x + rng.uniform(0.0, 2.0 * np.pi))
    w -= w.mean()
    return amplitude * w / np.max(np.abs(w))


def random_smooth_state(
    config: LatticeConfig,
    rng: np.random.Generator,
    strain_range: tuple[float, float] = (0.95, 1.1),
    amplitude: float = 0.05,
    modes: int = 6,
) -> Deformation:
    """Random smooth admissible deformation ``y' = F + w``."""
    f = float(rng.uniform(*strain_range))
    return Deformation.from_strain(config, f, smooth_strain(config.n_atoms, rng, amplitude, modes))


# --- modeling error ----------------------------------------------------------


@dataclass(frozen=True)
class ModelingAudit:
    lhs: float  # ||dPhi^a(y) - dPhi^model(y)||_{U^{-1,p}}
    rhs: float
    parts: dict  # ghost, coupling, cauchy_born
    ghost_exact: Optional[float] = None  # |phi'(2F)| ||Delta^2 alpha||_{U^{-1,p}}, uniform states only

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def modeling_error_audit(m: EnergyModel, y: Deformation, p: float = 2) -> ModelingAudit:
    """Exact modeling error against the atomistic first variation and its bound.

    The bound is ``C1 ||2 (mean(beta) + alpha - 1)||_p + eps C2 ||Delta beta y''||_p
    + eps^2 {C2 ||(1 - beta_{xi-1}) y'''||_p + C3 ||(1 - beta)(y'')^2||_p}``
    with ``C_i = C_i(2 min y')``; for BQCE the first term is ``C1 ||Delta^2 alpha||_p``.
    """
    yp = diff1(y)
    if np.min(yp) <= 0:
        raise AdmissibilityError(f"nonpositive strain: min y' = {np.min(yp):.6g}")
    pot = m.potential
    t_diff = strain_coefficients(atomistic(pot, y.n), y) - strain_coefficients(m, y)
    lhs = dual_norm(t_diff, p)
    c1, c2, c3 = (pot.envelope(i, 2.0 * float(np.min(yp))) for i in (1, 2, 3))
    eps = y.eps
    ypp, yppp = diff2(y), diff3(y)
    one_minus = 1.0 - m.beta
    ghost = c1 * lp_norm(2.0 * m.consistency_defect(), p)
    coupling = eps * c2 * lp_norm(delta(m.beta) * ypp, p)
    cb = eps**2 * (c2 * lp_norm(np.roll(one_minus, 1) * yppp, p) + c3 * lp_norm(one_minus * ypp**2, p))
    ghost_exact = None
    if np.ptp(yp) == 0:
        ghost_exact = abs(pot.derivative(1, 2.0 * y.strain_f)) * dual_norm(delta2(m.alpha), p)
    parts = {"ghost": ghost, "coupling": coupling, "cauchy_born": cb}
    return ModelingAudit(lhs, ghost + coupling + cb, parts, ghost_exact)


# --- rate fits ---------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple  # ((log x, log y), ...)

    def __post_init__(self):
        if len(self.points) < 3:
            raise ValueError("a rate fit needs at least 3 points")


def fit_rate(points) -> RateFit:
    """Least-squares line through ``(log x, log y)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    xs, ys = np.array(pts).T
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("rate fits need positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else float(np.clip(1.0 - np.sum(resid**2) / ss_tot, 0.0, 1.0))
    return RateFit(float(slope), float(intercept), r2, tuple(zip(lx.tolist(), ly.tolist())))


# --- sweeps ------------------------------------------------------------------


def thread_count() -> int:
    raw = os.environ.get("BQCLAB_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BQCLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("BQCLAB_THREADS must be >= 0")
    return n if n > 0 else min(8, os.cpu_count() or 1)


def map_ordered(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """``[fn(x) for x in items]`` evaluated concurrently, in input order."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepSpec:
    model: str = "bqce"
    potential: str = "lj"
    potential_params: dict = field(default_factory=dict)
    n_list: tuple = (1024,)
    k_list: tuple = (4, 8, 16, 32)
    shape_list: tuple = ("cubic",)
    strain_f: float = 1.0
    atomistic_width: int = 64
    atomistic_center: Optional[int] = None  # default N/2
    load_a: float = 0.1
    load_b: float = 1.0
    load_width: float = 0.05
    p: float = 2.0
    search: tuple = (1.0, 1.5)
    tol: float = CRITICAL_STRAIN_TOL
    solve: SolveOptions = SolveOptions()

    def __post_init__(self):
        for name in ("n_list", "k_list", "shape_list"):
            if not len(getattr(self, name)):
                raise ValueError(f"{name} must be nonempty")
        for n in self.n_list:
            for k in self.k_list:
                if self.atomistic_width + 2 * k + 4 > n:
                    raise ValueError(
                        f"blend geometry does not fit: atomistic_width + 2k + 4 = "
                        f"{self.atomistic_width + 2 * k + 4} > N = {n}"
                    )

    def make_potential(self) -> Potential:
        return get_potential(self.potential, **self.potential_params)

    def center(self, n: int) -> int:
        return n // 2 if self.atomistic_center is None else int(self.atomistic_center) % n

    def points(self) -> list[tuple[int, str, int]]:
        return [(n, s, k) for n in self.n_list for s in self.shape_list for k in self.k_list]


CONVERGENCE_COLUMNS = (
    "model", "shape", "n", "k", "error_u12", "a_underline", "delta1_lhs", "delta2_lhs",
    "iterations", "coercivity",
)


@dataclass
class StudyResult:
    rows: list
    fit: Optional[RateFit]
    columns: tuple
    meta: dict = field(default_factory=dict)


class ElasticStateError(RuntimeError):
    """The reference atomistic equilibrium is not an elastic state."""


def _reference_solution(spec: SweepSpec, pot: Potential, n: int):
    config = LatticeConfig(n)
    center = spec.center(n)
    load = canonical_load(config, center / n, spec.load_a, spec.load_b, spec.load_width)
    y0 = Deformation.uniform(config, spec.strain_f)
    ya, _ = equilibrate(atomistic(pot, n), load, y0, spec.solve)
    a_coef, _ = atomistic_hessian_coefficients(pot, ya)
    a_low = float(np.min(a_coef))
    if not a_low > 0:
        raise ElasticStateError(f"reference solution at N = {n} has A_underline = {a_low:.6g} <= 0")
    return config, center, load, y0, ya, a_low


def convergence_study(spec: SweepSpec, threads: Optional[int] = None) -> StudyResult:
    """Strain error ``||y_a - y_model||_{U^{1,2}}`` of the blended model over the sweep.

    The fit is against ``k`` when ``k_list`` has at least 3 entries, otherwise
    against ``eps = 1/N``. Solve failures propagate (partial tables are
    attached to the exception as ``rows``).
    """
    pot = spec.make_potential()
    refs = {n: _reference_solution(spec, pot, n) for n in spec.n_list}

    def run(point):
        n, shape_name, k = point
        config, center, load, y0, ya, a_low = refs[n]
        blend = build_blend(config, get_shape(shape_name), center, spec.atomistic_width, k)
        m = build_model(spec.model, pot, n, blend)
        ym, rep = equilibrate(m, load, y0, spec.solve)
        err = u1p_norm(ya.u - ym.u)
        delta1 = stability_correction(m, ya).total
        delta2_lhs = modeling_error_audit(m, ya, 2).rhs / math.sqrt(ya.eps)
        return {
            "model": spec.model, "shape": shape_name, "n": n, "k": k, "error_u12": err,
            "a_underline": a_low, "delta1_lhs": delta1, "delta2_lhs": delta2_lhs,
            "iterations": rep.iterations, "coercivity": rep.coercivity,
        }

    rows = map_ordered(run, spec.points(), threads)
    fit = None
    if len(spec.k_list) >= 3 and len(spec.shape_list) == 1 and len(spec.n_list) == 1:
        fit = fit_rate([(r["k"], r["error_u12"]) for r in rows])
    elif len(spec.n_list) >= 3 and len(spec.k_list) == 1 and len(spec.shape_list) == 1:
        fit = fit_rate([(1.0 / r["n"], r["error_u12"]) for r in rows])
    return StudyResult(rows, fit, CONVERGENCE_COLUMNS, {"x": "k" if len(spec.k_list) >= 3 else "eps"})


CRITICAL_COLUMNS = ("model", "shape", "n", "k", "critical_strain", "cb_critical_strain", "error")


def critical_strain_study(spec: SweepSpec, threads: Optional[int] = None) -> StudyResult:
    """``F*_model(k) - F*_cb`` over the sweep, with a log-log fit of ``|error|`` vs ``k``."""
    pot = spec.make_potential()
    f_cb = cauchy_born_critical_strain(pot, spec.search)

    def run(point):
        n, shape_name, k = point
        config = LatticeConfig(n)
        blend = build_blend(config, get_shape(shape_name), spec.center(n), spec.atomistic_width, k)
        m = build_model(spec.model, pot, n, blend)
        f_star = critical_strain(m, config, spec.search, spec.tol)
        return {
            "model": spec.model, "shape": shape_name, "n": n, "k": k,
            "critical_strain": f_star, "cb_critical_strain": f_cb, "error": f_star - f_cb,
        }

    rows = map_ordered(run, spec.points(), threads)
    fit = None
    errs = [abs(r["error"]) for r in rows]
    if len(spec.k_list) >= 3 and len(spec.n_list) == 1 and len(spec.shape_list) == 1 and min(errs) > 0:
        fit = fit_rate([(r["k"], e) for r, e in zip(rows, errs)])
    return StudyResult(rows, fit, CRITICAL_COLUMNS, {"cb_critical_strain": f_cb})


# --- patch test ----------------------------------------------------------------

PATCH_COLUMNS = ("model", "shape", "n", "k", "strain_f", "ghost_dual_norm")


def patch_test(
    pot: Potential,
    config: LatticeConfig,
    blend: Optional[BlendFunction],
    strain_f: float,
    models: Sequence[str] = ("atomistic", "cauchy_born", "qnl", "bqnl", "qce", "bqce"),
) -> list[dict]:
    """``||dPhi(y^F)||_{U^{-1,2}}`` for each model at the uniform state."""
    y = Deformation.uniform(config, strain_f)
    out = []
    for tag in models:
        m = build_model(tag, pot, config.n_atoms, blend)
        out.append({
            "model": tag,
            "shape": blend.shape.kind if blend is not None else "",
            "n": config.n_atoms,
            "k": blend.k if blend is not None else 0,
            "strain_f": strain_f,
            "ghost_dual_norm": first_variation(m, y).norm(2),
        })
    return out


def ghost_force_table(pot: Potential, blend: BlendFunction, strain_f: float, p: float = 2.0) -> dict:
    """Ghost-force norms of the BQCE model built from ``blend`` at ``y^F``."""
    rep = ghost_seminorm(blend, p)
    scale = abs(pot.derivative(1, 2.0 * strain_f))
    m = build_model("bqce", pot, blend.config.n_atoms, blend)
    y = Deformation.uniform(blend.config, strain_f)
    return {
        "n": blend.config.n_atoms,
        "k": blend.k,
        "shape": blend.shape.kind,
        "p": p,
        "delta2_alpha_norm": rep.value,
        "delta2_gamma_norm": rep.gamma_value,
        "transition_delta2_gamma_norm": rep.per_transition[-1] if rep.per_transition else float("nan"),
        "transition_dual_seminorm": scale * rep.per_transition[-1] if rep.per_transition else float("nan"),
        "transition_bound": rep.bound_per_transition if rep.bound_per_transition is not None else float("nan"),
        "ghost_dual_norm": first_variation(m, y).norm(p),
        "ghost_exact": scale * dual_norm(delta2(m.alpha), p),
    }
