"""The blended quasicontinuum (BQC) energy family.

Every model is the two-weight energy

    Phi_{alpha,beta}(y) = eps * sum_xi phi(y'_xi) + alpha_xi phi(2 y'_xi)
                                 + beta_xi phi(y'_xi + y'_{xi+1})

with per-site weights ``alpha, beta`` in ``[0, 1]``. Atomistic, Cauchy-Born,
QCE, QNL, BQCE and BQNL are constructors that fix the weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .blend import BlendFunction, BlendLike, bqce_alpha_beta, bqnl_alpha_beta, indicator
from .lattice import (
    Deformation,
    DualFunctional,
    delta,
    delta2,
    diff1,
    diff2,
    diff3,
    displacement_strain,
    lp_norm,
    mean_seq,
)
from .potential import Potential

TAGS = ("atomistic", "cauchy_born", "qce", "qnl", "bqce", "bqnl", "custom_bqc")
# models whose weights satisfy mean(beta) + alpha - 1 = 0 identically
PATCH_TEST_TAGS = ("atomistic", "cauchy_born", "qnl", "bqnl")
_WEIGHT_TOL = 1e-12


class AdmissibilityError(ValueError):
    """Raised when a deformation leaves the domain of the model."""


@dataclass(frozen=True, eq=False)
class EnergyModel:
    potential: Potential
    alpha: np.ndarray
    beta: np.ndarray
    tag: str = "custom_bqc"
    blend: Optional[BlendFunction] = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown model tag {self.tag!r}; known: {TAGS}")
        a = np.array(self.alpha, dtype=float)
        b = np.array(self.beta, dtype=float)
        if a.ndim != 1 or a.shape != b.shape:
            raise ValueError("alpha and beta must be 1D arrays of equal length")
        for name, w in (("alpha", a), ("beta", b)):
            if np.any(w < -_WEIGHT_TOL) or np.any(w > 1 + _WEIGHT_TOL):
                raise ValueError(f"{name} weights must lie in [0, 1]")
        if self.tag == "atomistic" and not (np.all(a == 0) and np.all(b == 1)):
            raise ValueError("atomistic model needs alpha = 0, beta = 1")
        if self.tag == "cauchy_born" and not (np.all(a == 1) and np.all(b == 0)):
            raise ValueError("Cauchy-Born model needs alpha = 1, beta = 0")
        if self.tag in ("qnl", "bqnl"):
            defect = np.max(np.abs(mean_seq(b) + a - 1.0))
            if defect > 1e-12:
                raise ValueError(f"{self.tag} weights violate mean(beta) + alpha = 1 (defect {defect:.2e})")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def patch_test_consistent(self) -> bool:
        return self.tag in PATCH_TEST_TAGS

    def consistency_defect(self) -> np.ndarray:
        """``mean(beta) + alpha - 1``; zero for patch-test consistent weights.

        For BQCE weights ``2 * (1 - alpha - mean(beta)) = Delta^2 alpha``.
        """
        return mean_seq(self.beta) + self.alpha - 1.0

    def value(self, y: Deformation) -> float:
        return value(self, y)

    def first_variation(self, y: Deformation) -> DualFunctional:
        return first_variation(self, y)

    def second_variation(self, y: Deformation):
        return second_variation(self, y)


# --- constructors ------------------------------------------------------------


def atomistic(potential: Potential, n: int) -> EnergyModel:
    return EnergyModel(potential, np.zeros(n), np.ones(n), "atomistic")


def cauchy_born(potential: Potential, n: int) -> EnergyModel:
    return EnergyModel(potential, np.ones(n), np.zeros(n), "cauchy_born")


def qce(potential: Potential, continuum_sites: Sequence[int], n: int) -> EnergyModel:
    """QCE: BQCE whose ``gamma`` is the indicator of the continuum region."""
    alpha, beta = bqce_alpha_beta(indicator(n, continuum_sites))
    return EnergyModel(potential, alpha, beta, "qce")


def qnl(potential: Potential, atomistic_sites: Sequence[int], n: int) -> EnergyModel:
    """QNL: BQNL whose ``eta`` is the indicator of the atomistic region."""
    alpha, beta = bqnl_alpha_beta(indicator(n, atomistic_sites))
    return EnergyModel(potential, alpha, beta, "qnl")


def bqce(potential: Potential, gamma: BlendLike) -> EnergyModel:
    alpha, beta = bqce_alpha_beta(gamma)
    blend = gamma if isinstance(gamma, BlendFunction) else None
    return EnergyModel(potential, alpha, beta, "bqce", blend)


def bqnl(potential: Potential, eta: BlendLike) -> EnergyModel:
    """BQNL; a :class:`BlendFunction` contributes ``eta = 1 - gamma``."""
    alpha, beta = bqnl_alpha_beta(eta)
    blend = eta if isinstance(eta, BlendFunction) else None
    return EnergyModel(potential, alpha, beta, "bqnl", blend)


def custom_bqc(potential: Potential, alpha, beta) -> EnergyModel:
    return EnergyModel(potential, alpha, beta, "custom_bqc")


def build_model(tag: str, potential: Potential, n: int, blend: Optional[BlendFunction] = None) -> EnergyModel:
    """Named constructor dispatch used by the experiments and CLI.

    For ``qce``/``qnl`` the sharp regions are taken from ``blend``: the
    continuum is ``gamma == 1`` and the atomistic region is ``gamma < 1``.
    """
    if tag == "atomistic":
        return atomistic(potential, n)
    if tag == "cauchy_born":
        return cauchy_born(potential, n)
    if blend is None:
        raise ValueError(f"model {tag!r} needs a blend")
    if tag == "bqce":
        return bqce(potential, blend)
    if tag == "bqnl":
        return bqnl(potential, blend)
    if tag == "qce":
        return qce(potential, np.flatnonzero(blend.gamma == 1.0), n)
    if tag == "qnl":
        return qnl(potential, np.flatnonzero(blend.gamma < 1.0), n)
    raise ValueError(f"cannot build model {tag!r} by name")


# --- evaluators ----------------------------------------------------------------


def _strain(m: EnergyModel, y: Deformation, floor: float = 0.0) -> np.ndarray:
    if y.n != m.n:
        raise ValueError(f"model has {m.n} sites but deformation has {y.n}")
    yp = diff1(y)
    if np.min(yp) <= floor:
        raise AdmissibilityError(f"nonpositive strain: min y' = {np.min(yp):.6g}")
    return yp


def value(m: EnergyModel, y: Deformation) -> float:
    """Total energy over one period."""
    yp = _strain(m, y)
    phi = m.potential
    s = yp + np.roll(yp, -1)
    e = phi(yp) + m.alpha * phi(2.0 * yp) + m.beta * phi(s)
    return float(np.sum(e) / m.n)


def strain_coefficients(m: EnergyModel, y: Deformation) -> np.ndarray:
    """Braced coefficient ``T`` with ``dPhi(y)[u] = eps * sum T_xi u'_xi`` (not mean-shifted)."""
    yp = _strain(m, y)
    d1 = lambda r: m.potential.derivative(1, r)
    s = yp + np.roll(yp, -1)  # y'_xi + y'_{xi+1}
    bond = m.beta * d1(s)
    return d1(yp) + 2.0 * m.alpha * d1(2.0 * yp) + np.roll(bond, 1) + bond


def first_variation(m: EnergyModel, y: Deformation) -> DualFunctional:
    return DualFunctional(strain_coefficients(m, y))


def site_forces(m: EnergyModel, y: Deformation) -> np.ndarray:
    """l2_eps representer of the first variation (the energy gradient per site)."""
    return first_variation(m, y).site_forces()


def second_variation(m: EnergyModel, y: Deformation) -> tuple[np.ndarray, np.ndarray]:
    """``(A_bar, B_bar)`` with

    ``d2Phi(y)[u,u] = eps * sum A_bar |u'|^2 + eps^2 B_bar |u''|^2``.
    """
    yp = _strain(m, y)
    d2 = lambda r: m.potential.derivative(2, r)
    s = yp + np.roll(yp, -1)
    bond = m.beta * d2(s)
    a_bar = d2(yp) + 2.0 * (bond + np.roll(bond, 1)) + 4.0 * m.alpha * d2(2.0 * yp)
    b_bar = -bond
    return a_bar, b_bar


def atomistic_hessian_coefficients(potential: Potential, y: Deformation) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` of the fully atomistic second variation."""
    return second_variation(atomistic(potential, y.n), y)


def hessian_form(m: EnergyModel, y: Deformation, u, v=None) -> float:
    """``d2Phi(y)[u, v]`` (``v = u`` by default)."""
    a_bar, b_bar = second_variation(m, y)
    wu = displacement_strain(u)
    wv = wu if v is None else displacement_strain(v)
    du = np.roll(wu, -1) - wu
    dv = np.roll(wv, -1) - wv
    return float(np.sum(a_bar * wu * wv + b_bar * du * dv) / m.n)


def hessian_matrix(m: EnergyModel, y: Deformation) -> np.ndarray:
    """Matrix ``H`` of the second variation in strain coordinates.

    ``d2Phi(y)[u,u] = w^T H w`` for ``w = u'`` (any mean-zero ``w``).
    """
    a_bar, b_bar = second_variation(m, y)
    return strain_form_matrix(a_bar, b_bar)


def strain_form_matrix(a_bar: np.ndarray, b_bar: np.ndarray) -> np.ndarray:
    """``eps * (diag(A) + D^T diag(B) D)`` with ``(D w)_xi = w_{xi+1} - w_xi``."""
    n = a_bar.size
    eps = 1.0 / n
    h = np.diag(a_bar + b_bar + np.roll(b_bar, 1))
    idx = np.arange(n)
    nxt = (idx + 1) % n
    np.add.at(h, (idx, nxt), -b_bar)
    np.add.at(h, (nxt, idx), -b_bar)
    return eps * h


# --- Hessian coefficient gap ----------------------------------------------------


def check_second_neighbor_bound(m: EnergyModel, y: Deformation) -> float:
    """Enforce ``min y' >= r*/2``; returns ``min y'``."""
    yp = _strain(m, y)
    r_star = m.potential.inflection
    ymin = float(np.min(yp))
    if ymin < 0.5 * r_star:
        raise AdmissibilityError(f"min y' = {ymin:.6g} is below r*/2 = {0.5 * r_star:.6g}")
    return ymin


@dataclass(frozen=True)
class StabilityCorrection:
    """Terms bounding ``max |A_bar - A|``; each is a nonnegative number."""

    ghost: float  # 4 C2 ||mean(beta) + alpha - 1||_inf  (= 2 C2 ||Delta^2 alpha||_inf for BQCE)
    coupling: float  # 2 eps C3 ||Delta beta y''||_inf
    cauchy_born: float  # 2 eps^2 {C3 ||(1-beta_{xi-1}) y'''||_inf + C4 ||(1-beta)(y'')^2||_inf}

    @property
    def total(self) -> float:
        return self.ghost + self.coupling + self.cauchy_born


def stability_correction(m: EnergyModel, y: Deformation) -> StabilityCorrection:
    ymin = check_second_neighbor_bound(m, y)
    r_min = 2.0 * ymin
    pot = m.potential
    c2, c3, c4 = (pot.envelope(i, r_min) for i in (2, 3, 4))
    eps = y.eps
    ypp, yppp = diff2(y), diff3(y)
    inf = np.inf
    one_minus = 1.0 - m.beta
    ghost = 4.0 * c2 * lp_norm(m.consistency_defect(), inf)
    coupling = 2.0 * eps * c3 * lp_norm(delta(m.beta) * ypp, inf)
    cb = 2.0 * eps**2 * (
        c3 * lp_norm(np.roll(one_minus, 1) * yppp, inf) + c4 * lp_norm(one_minus * ypp**2, inf)
    )
    return StabilityCorrection(ghost=ghost, coupling=coupling, cauchy_born=cb)


@dataclass(frozen=True)
class GapReport:
    gap: float  # max_xi |A_bar_xi - A_xi|
    bound: float
    correction: StabilityCorrection


def hessian_coeff_gap(m: EnergyModel, y: Deformation) -> GapReport:
    """Exact ``max |A_bar - A|`` and its bound for ``min y' >= r*/2``."""
    corr = stability_correction(m, y)
    a_bar, _ = second_variation(m, y)
    a, _ = atomistic_hessian_coefficients(m.potential, y)
    return GapReport(gap=float(np.max(np.abs(a_bar - a))), bound=corr.total, correction=corr)


def ghost_force_strain(m: EnergyModel, strain_f: float) -> np.ndarray:
    """Strain representation ``-Delta^2 alpha * phi'(2F)`` of the BQCE ghost force."""
    return -delta2(m.alpha) * m.potential.derivative(1, 2.0 * strain_f)
