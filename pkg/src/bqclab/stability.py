"""Coercivity of the second variation, stability bounds and critical strains.

The second variation is written in strain coordinates ``w = u'`` (mean-zero,
dimension ``N - 1``) with the ``l2_eps`` metric ``eps * w^T w``, so the
coercivity constant is the smallest eigenvalue of a symmetric matrix
restricted to the mean-zero subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .energy import (
    EnergyModel,
    atomistic_hessian_coefficients,
    hessian_matrix,
    stability_correction,
)
from .lattice import Deformation, LatticeConfig, diff1

DENSE_CAP = 4096
CRITICAL_STRAIN_TOL = 1e-8


@lru_cache(maxsize=16)
def _mean_zero_basis(n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the mean-zero subspace of R^n.

    Built from the Householder reflector mapping ``e_0`` to ``1/sqrt(n)``.
    """
    v = np.full(n, 1.0 / math.sqrt(n))
    h = -v
    h[0] += 1.0
    h /= np.linalg.norm(h)
    q = np.eye(n) - 2.0 * np.outer(h, h)
    q = q[:, 1:].copy()
    q.setflags(write=False)
    return q


def mean_zero_basis(n: int) -> np.ndarray:
    return _mean_zero_basis(int(n))


def reduced_matrix(h: np.ndarray) -> np.ndarray:
    """``Q^T H Q`` on the mean-zero subspace."""
    q = mean_zero_basis(h.shape[0])
    return q.T @ h @ q


def _check_size(n: int, cap: int):
    if n > cap:
        raise ValueError(f"N = {n} exceeds the dense eigensolver cap {cap}")


@dataclass(frozen=True)
class StabilityReport:
    coercivity: float
    minimizing_strain_mode: np.ndarray  # w = u' with eps * w.w = 1
    bound_a_priori: Optional[float] = None
    bound_a_posteriori: Optional[float] = None
    A_underline: Optional[float] = None


def smallest_eigenpair(m: EnergyModel, y: Deformation, cap: int = DENSE_CAP) -> tuple[float, np.ndarray]:
    _check_size(y.n, cap)
    h = hessian_matrix(m, y)
    q = mean_zero_basis(y.n)
    vals, vecs = linalg.eigh(q.T @ h @ q, subset_by_index=[0, 0])
    eps = y.eps
    w = q @ vecs[:, 0] / math.sqrt(eps)
    # sign convention: largest entry positive
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    return float(vals[0] / eps), w


def coercivity(m: EnergyModel, y: Deformation, cap: int = DENSE_CAP, bounds: bool = True) -> StabilityReport:
    """``inf d2Phi(y)[u,u]`` over mean-zero ``u`` with ``||u'||_{l2_eps} = 1``.

    With ``bounds`` set and ``min y' >= r*/2``, the report also carries the
    a priori and a posteriori bounds.
    """
    c, w = smallest_eigenpair(m, y, cap)
    a, _ = atomistic_hessian_coefficients(m.potential, y)
    a_low = float(np.min(a))
    prior = post = None
    if bounds and np.min(diff1(y)) >= 0.5 * m.potential.inflection:
        corr = stability_correction(m, y).total
        prior = a_low - corr
        post = c - corr
    return StabilityReport(c, w, prior, post, a_low)


def quadratic_form_strain(m: EnergyModel, y: Deformation, w) -> float:
    """``d2Phi(y)[u,u]`` for the displacement with strain ``w``."""
    w = np.asarray(w, dtype=float)
    return float(w @ hessian_matrix(m, y) @ w)


def a_priori_stability_bound(m: EnergyModel, y: Deformation) -> float:
    """``A_underline`` minus the stability correction.

    Lower bound for the model coercivity at ``y``; needs ``min y' >= r*/2``.
    """
    corr = stability_correction(m, y).total
    a, _ = atomistic_hessian_coefficients(m.potential, y)
    return float(np.min(a)) - corr


def a_posteriori_stability_bound(m: EnergyModel, y: Deformation, cap: int = DENSE_CAP) -> float:
    """Model coercivity minus the stability correction.

    Lower bound for the atomistic coercivity at ``y``.
    """
    corr = stability_correction(m, y).total
    c, _ = smallest_eigenpair(m, y, cap)
    return c - corr


def uniform_coercivity(m: EnergyModel, config: LatticeConfig, strain_f: float, cap: int = DENSE_CAP) -> float:
    return smallest_eigenpair(m, Deformation.uniform(config, strain_f), cap)[0]


def cauchy_born_modulus(potential, strain_f: float) -> float:
    """``A_F = phi''(F) + 4 phi''(2F)``."""
    return potential.derivative(2, strain_f) + 4.0 * potential.derivative(2, 2.0 * strain_f)


class BracketError(ValueError):
    """The search interval does not bracket a loss of stability."""


def critical_strain(
    m: EnergyModel,
    config: LatticeConfig,
    search: tuple[float, float],
    tol: float = CRITICAL_STRAIN_TOL,
    cap: int = DENSE_CAP,
) -> float:
    """``F* = inf{F : c(y^F) <= 0}`` by bisection on ``[F_lo, F_hi]``.

    Returns the upper end of the final bracket, which always has ``c <= 0``.
    """
    lo, hi = map(float, search)
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < F_lo < F_hi, got {search}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    c = lambda f: uniform_coercivity(m, config, f, cap)
    c_lo, c_hi = c(lo), c(hi)
    if not (c_lo > 0 and c_hi <= 0):
        raise BracketError(f"no stability loss in [{lo}, {hi}]: c = {c_lo:.6g}, {c_hi:.6g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if c(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def cauchy_born_critical_strain(potential, search: tuple[float, float] = (1.0, 1.5), xtol: float = 1e-14) -> float:
    """Root of ``A_F`` on ``search`` by a scalar root-find."""
    return float(optimize.brentq(lambda f: cauchy_born_modulus(potential, f), *search, xtol=xtol))
