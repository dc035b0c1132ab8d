"""Equilibria under dead loads.

Solves ``dPhi(y)[u] = <f, u>`` for all mean-zero ``u`` by Newton's method in
strain coordinates, with backtracking on admissibility and residual decrease.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .energy import AdmissibilityError, EnergyModel, hessian_matrix, strain_coefficients
from .lattice import (
    Deformation,
    DualFunctional,
    LatticeConfig,
    _check_mean_zero,
    diff1,
    dual_norm,
    forces_to_dual,
    project_mean_zero,
    strain_to_displacement,
)
from .stability import DENSE_CAP, mean_zero_basis

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
_SHIFT_FLOOR = 1e-6


class SolveError(RuntimeError):
    """Newton iteration failed; ``history`` holds the residuals so far."""

    def __init__(self, msg, history=None, state=None):
        super().__init__(msg)
        self.history = list(history or [])
        self.state = state


class ConvergenceError(SolveError):
    pass


class InadmissibleError(SolveError):
    pass


@dataclass(frozen=True, eq=False)
class DeadLoad:
    """Mean-zero site forces ``f``, paired as ``<f, u> = eps * sum f_xi u_xi``."""

    values: np.ndarray

    def __post_init__(self):
        f = np.array(self.values, dtype=float)
        if f.ndim != 1:
            raise ValueError("dead load must be one-dimensional")
        _check_mean_zero(f, "dead load")
        f.setflags(write=False)
        object.__setattr__(self, "values", f)

    @classmethod
    def from_profile(cls, profile: Callable, config: LatticeConfig) -> "DeadLoad":
        """Sample ``profile(x)`` at reference positions and project out the mean."""
        return cls(project_mean_zero(profile(config.reference_positions)))

    @classmethod
    def zero(cls, n: int) -> "DeadLoad":
        return cls(np.zeros(n))

    def scaled(self, c: float) -> "DeadLoad":
        return DeadLoad(c * self.values)

    @property
    def dual(self) -> DualFunctional:
        return forces_to_dual(self.values)


@dataclass(frozen=True)
class SolveOptions:
    newton_tol: float = 1e-10
    max_iter: int = 50
    continuation_steps: int = 1
    admissibility_floor: Optional[float] = None  # None means r*/2
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iter < 1 or self.continuation_steps < 1:
            raise ValueError("max_iter and continuation_steps must be >= 1")
        if self.admissibility_floor is not None and not self.admissibility_floor >= 0:
            raise ValueError("admissibility_floor must be nonnegative")

    def floor(self, m: EnergyModel) -> float:
        if self.admissibility_floor is None:
            return 0.5 * m.potential.inflection
        return self.admissibility_floor


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)
    halvings: int = 0
    shifted_steps: int = 0
    coercivity: float = math.nan


def _residual_rep(m: EnergyModel, y: Deformation, load_rep: np.ndarray) -> np.ndarray:
    return strain_coefficients(m, y) - load_rep


def _residual_norm(r: np.ndarray) -> float:
    return dual_norm(r, 2)


def _newton_step(h_red: np.ndarray, g_red: np.ndarray) -> tuple[np.ndarray, bool, float]:
    """Solve ``h z = -g``.

    If ``h`` is not positive definite it is shifted so that its smallest
    eigenvalue becomes ``max(|lambda_min|, 1e-6 * max diag)``.
    """
    try:
        cho = linalg.cho_factor(h_red, lower=True, check_finite=False)
        z = linalg.cho_solve(cho, -g_red, check_finite=False)
        return z, False, math.nan
    except linalg.LinAlgError:
        lam = linalg.eigh(h_red, eigvals_only=True, subset_by_index=[0, 0])[0]
        scale = max(1.0, float(np.max(np.abs(np.diag(h_red)))))
        shift = -lam + max(abs(lam), _SHIFT_FLOOR * scale)
        shifted = h_red + shift * np.eye(h_red.shape[0])
        z = linalg.solve(shifted, -g_red, assume_a="pos", check_finite=False)
        return z, True, float(lam)


def equilibrate(
    m: EnergyModel,
    f: DeadLoad,
    y0: Deformation,
    opts: SolveOptions = SolveOptions(),
) -> tuple[Deformation, SolveReport]:
    """Newton iteration for ``dPhi(y) = f`` on the mean-zero displacement space.

    The residual is measured in the exact ``U^{-1,2}`` dual norm. Raises
    :class:`ConvergenceError` after ``max_iter`` iterations and
    :class:`InadmissibleError` if no step halving keeps ``min y'`` above the
    admissibility floor.
    """
    n = y0.n
    if f.values.size != n:
        raise ValueError(f"load has {f.values.size} entries, state has {n}")
    if y0.n > opts.dense_cap:
        raise ValueError(f"N = {n} exceeds the dense solver cap {opts.dense_cap}")
    floor = opts.floor(m)
    if not y0.min_strain > floor:
        raise InadmissibleError(f"initial state has min y' = {y0.min_strain:.6g} <= floor {floor:.6g}")

    eps = y0.eps
    q = mean_zero_basis(n)
    load_rep = f.dual.strain_rep
    w = diff1(y0) - y0.strain_f
    y = y0
    r = _residual_rep(m, y, load_rep)
    res = _residual_norm(r)
    history = [res]
    report = SolveReport(False, 0, res, history)

    for it in range(1, opts.max_iter + 1):
        if res <= opts.newton_tol:
            break
        h_red = q.T @ hessian_matrix(m, y) @ q
        g_red = q.T @ (eps * r)
        z, shifted, _ = _newton_step(h_red, g_red)
        report.shifted_steps += shifted
        dw = q @ z
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            w_try = w + t * dw
            if np.min(y0.strain_f + w_try) > floor:
                y_try = Deformation.from_strain(y0.config, y0.strain_f, w_try - w_try.mean())
                r_try = _residual_rep(m, y_try, load_rep)
                res_try = _residual_norm(r_try)
                if res_try < res or res_try <= opts.newton_tol:
                    break
            t *= 0.5
            report.halvings += 1
        else:
            if np.min(y0.strain_f + w + dw) <= floor and np.min(y0.strain_f + w) > floor:
                raise InadmissibleError(
                    f"equilibrate: no admissible step after {MAX_HALVINGS} halvings", history, y
                )
            raise ConvergenceError(
                f"equilibrate: no residual decrease after {MAX_HALVINGS} halvings (residual {res:.3e})",
                history,
                y,
            )
        w = w_try - w_try.mean()
        y, r, res = y_try, r_try, res_try
        history.append(res)
        report.iterations = it
        log.debug("newton it=%d residual=%.3e step=%.3g", it, res, t)

    report.residual = res
    if res > opts.newton_tol:
        raise ConvergenceError(
            f"equilibrate: residual {res:.3e} above {opts.newton_tol:.1e} after {opts.max_iter} iterations",
            history,
            y,
        )
    report.converged = True
    h_red = q.T @ hessian_matrix(m, y) @ q
    report.coercivity = float(linalg.eigh(h_red, eigvals_only=True, subset_by_index=[0, 0])[0] / eps)
    return y, report


def solve_loaded(
    m: EnergyModel,
    f: DeadLoad,
    y0: Deformation,
    opts: SolveOptions = SolveOptions(),
) -> tuple[Deformation, SolveReport]:
    """:func:`equilibrate` with the load ramped in ``opts.continuation_steps`` increments."""
    steps = opts.continuation_steps
    y = y0
    report = None
    for s in range(1, steps + 1):
        y, report = equilibrate(m, f.scaled(s / steps) if steps > 1 else f, y, opts)
    return y, report


@dataclass
class ContinuationResult:
    strains: list
    states: list
    reports: list
    failed_at: Optional[int] = None  # index into the path of the first failure
    error: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.failed_at is None


def continuation(
    m: EnergyModel,
    f_profile,
    f_path: Sequence[float],
    opts: SolveOptions = SolveOptions(),
    config: Optional[LatticeConfig] = None,
) -> ContinuationResult:
    """Warm-started equilibria along a path of macroscopic strains.

    ``f_profile`` is a :class:`DeadLoad` or a callable sampled on ``config``.
    The path stops at the first solve failure or at the first converged state
    whose coercivity is not positive (an unstable equilibrium).
    """
    out = ContinuationResult([], [], [])
    f_path = list(f_path)
    if not f_path:
        return out
    if isinstance(f_profile, DeadLoad):
        load = f_profile
        config = config or LatticeConfig(load.values.size)
    else:
        if config is None:
            raise ValueError("a load profile callable needs a lattice config")
        load = DeadLoad.from_profile(f_profile, config) if f_profile is not None else DeadLoad.zero(config.n_atoms)
    y = Deformation.uniform(config, f_path[0])
    for i, strain in enumerate(f_path):
        y_start = y.with_strain_f(strain)
        try:
            if not y_start.min_strain > opts.floor(m):
                y_start = Deformation.uniform(config, strain)
            y, rep = solve_loaded(m, load, y_start, opts)
        except (SolveError, AdmissibilityError) as exc:
            out.failed_at, out.error = i, str(exc)
            return out
        if not rep.coercivity > 0:
            out.failed_at, out.error = i, f"unstable equilibrium at F = {strain:.17g} (coercivity {rep.coercivity:.3e})"
            return out
        out.strains.append(strain)
        out.states.append(y)
        out.reports.append(rep)
    return out
