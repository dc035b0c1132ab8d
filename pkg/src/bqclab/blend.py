"""Blending shapes, lattice blending functions and their seminorms.

A *shape* ``g`` maps ``[0, 1]`` onto ``[0, 1]`` with ``g(0) = 0`` and
``g(1) = 1`` and is extended by 0 below 0 and by 1 above 1. A lattice blending
function samples a shape across a ``k``-atom transition window,
``gamma(i + j) = g(j / k)`` for ``j = 0..k``.

``gamma`` is the continuum weight (0 in the atomistic region, 1 in the
continuum). The BQNL weight is ``eta = 1 - gamma``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .lattice import Deformation, LatticeConfig, delta, delta2, diff2, lp_norm, mean_seq

SHAPE_KINDS = ("characteristic", "linear", "cubic", "quintic", "custom")
_ENDPOINT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BlendShape:
    """A transition profile on ``[0, 1]``.

    ``coefficients`` are polynomial coefficients in increasing degree; the
    characteristic shape has none (it is the step ``x >= 1``).
    """

    kind: str
    coefficients: Optional[tuple] = None
    poly: Optional[Polynomial] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; known: {SHAPE_KINDS}")
        if self.kind == "characteristic":
            if self.coefficients is not None:
                raise ValueError("the characteristic shape takes no coefficients")
            return
        if not self.coefficients:
            raise ValueError(f"shape {self.kind!r} needs polynomial coefficients")
        coef = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coef)
        poly = Polynomial(coef)
        object.__setattr__(self, "poly", poly)
        if abs(poly(0.0)) > _ENDPOINT_TOL or abs(poly(1.0) - 1.0) > _ENDPOINT_TOL:
            raise ValueError(f"shape must satisfy g(0) = 0 and g(1) = 1 (got {poly(0.0)}, {poly(1.0)})")
        if not self._is_monotone():
            raise ValueError("shape must be nondecreasing on [0, 1]")

    def _is_monotone(self) -> bool:
        d = self.poly.deriv()
        xs = np.concatenate([np.linspace(0, 1, 1001), _real_roots_in_unit(d.deriv())])
        return bool(np.all(d(xs) >= -1e-12))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "characteristic":
            out = (x >= 1.0).astype(float)
        else:
            out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, self.poly(np.clip(x, 0.0, 1.0))))
        return float(out) if out.ndim == 0 else out

    def derivative(self, x, order: int = 1):
        """Derivative on the open interval ``(0, 1)``."""
        if self.kind == "characteristic":
            raise ValueError("the characteristic shape is not differentiable")
        return self.poly.deriv(order)(np.asarray(x, dtype=float))

    @property
    def flat_ends(self) -> bool:
        """``g'(0) = g'(1) = 0``, the condition behind the ``k^(1/p - 2)`` rate."""
        if self.kind == "characteristic":
            return False
        d = self.poly.deriv()
        return abs(d(0.0)) <= _ENDPOINT_TOL and abs(d(1.0)) <= _ENDPOINT_TOL

    def derivative_norm(self, order: int, p: float = 2) -> Optional[float]:
        """``||d^order g / dx^order||_{L^p([0,1])}``; None for the step."""
        if self.kind == "characteristic":
            return None
        return _poly_lp_norm(self.poly.deriv(order), p)

    def second_derivative_norm(self, p: float = 2) -> Optional[float]:
        """``||g''||_{L^p}``, only for shapes with flat ends.

        A kinked extension (e.g. the linear shape) has a measure-valued
        second derivative, so no finite norm is reported.
        """
        if not self.flat_ends:
            return None
        return self.derivative_norm(2, p)


def _real_roots_in_unit(poly: Polynomial) -> np.ndarray:
    if poly.degree() < 1:
        return np.empty(0)
    r = poly.roots()
    r = r[np.abs(r.imag) < 1e-12].real
    return r[(r >= 0) & (r <= 1)]


def _poly_lp_norm(poly: Polynomial, p: float) -> float:
    p = float(p)
    if math.isinf(p):
        xs = np.concatenate([[0.0, 1.0], _real_roots_in_unit(poly.deriv())])
        return float(np.max(np.abs(poly(xs))))
    if p == 2:
        sq = (poly * poly).integ()
        return float(math.sqrt(max(sq(1.0) - sq(0.0), 0.0)))
    breaks = sorted(set(_real_roots_in_unit(poly).tolist()))
    val, _ = integrate.quad(lambda x: abs(poly(x)) ** p, 0.0, 1.0, points=breaks or None, limit=200)
    return float(val ** (1.0 / p))


def characteristic_shape() -> BlendShape:
    return BlendShape("characteristic")


def linear_shape() -> BlendShape:
    return BlendShape("linear", (0.0, 1.0))


def cubic_shape() -> BlendShape:
    return BlendShape("cubic", (0.0, 0.0, 3.0, -2.0))


def quintic_shape() -> BlendShape:
    return BlendShape("quintic", (0.0, 0.0, 0.0, 10.0, -15.0, 6.0))


def custom_shape(coefficients: Sequence[float]) -> BlendShape:
    return BlendShape("custom", tuple(coefficients))


def optimal_shape() -> BlendShape:
    """Minimiser of ``||g''||_{L^2}`` under ``g(0)=0, g(1)=1, g'(0)=g'(1)=0``.

    The Euler-Lagrange equation is ``g'''' = 0``, so the answer is the cubic
    ``3x^2 - 2x^3``.
    """
    return cubic_shape()


_SHAPES = {
    "characteristic": characteristic_shape,
    "linear": linear_shape,
    "cubic": cubic_shape,
    "quintic": quintic_shape,
}


def get_shape(name: str, coefficients: Optional[Sequence[float]] = None) -> BlendShape:
    if name == "custom":
        if coefficients is None:
            raise ValueError("custom shape needs coefficients")
        return custom_shape(coefficients)
    try:
        return _SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; known: {sorted(_SHAPES) + ['custom']}") from None


@dataclass(frozen=True, eq=False)
class BlendFunction:
    """Site-sampled continuum weight ``gamma`` with its region bookkeeping.

    ``windows`` holds the two transition windows (each ``k + 1`` sites,
    ordered from the atomistic end to the continuum end).
    """

    config: LatticeConfig
    gamma: np.ndarray
    shape: BlendShape
    k: int
    windows: tuple
    atomistic: np.ndarray
    interface: np.ndarray
    continuum: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        """Atomistic weight ``1 - gamma`` (the BQNL blending function)."""
        return 1.0 - self.gamma

    @property
    def values(self) -> np.ndarray:
        return self.gamma


def build_blend(
    config: LatticeConfig,
    shape: BlendShape,
    atomistic_center: int,
    atomistic_width: int,
    k: int,
) -> BlendFunction:
    """Two-transition periodic layout.

    The atomistic plateau (``gamma = 0``) covers ``atomistic_width`` sites
    around ``atomistic_center``; each side ramps to 1 over ``k`` steps and the
    rest of the period is continuum.
    """
    n = config.n_atoms
    k = int(k)
    width = int(atomistic_width)
    if k < 1:
        raise ValueError(f"transition width k must be >= 1, got {k}")
    if width < 3:
        # the single-transition analysis needs three atomistic guard sites
        raise ValueError(f"atomistic_width must be >= 3, got {width}")
    if width + 2 * k + 4 > n:
        raise ValueError(
            f"blend geometry does not fit: atomistic_width + 2k + 4 = {width + 2 * k + 4} > N = {n}"
        )
    if k == 1 and shape.kind != "characteristic":
        warnings.warn("k = 1: the transition is a single jump (QCE-like limit)", stacklevel=2)

    left = int(atomistic_center) - width // 2
    right = left + width - 1
    ramp = shape(np.arange(k + 1) / k)
    gamma = np.ones(n)
    gamma[np.arange(left, right + 1) % n] = 0.0
    j2 = (right + np.arange(k + 1)) % n
    j1 = (left - np.arange(k + 1)) % n
    gamma[j2] = ramp
    gamma[j1] = ramp

    gamma.setflags(write=False)
    sites = np.arange(n)
    return BlendFunction(
        config=config,
        gamma=gamma,
        shape=shape,
        k=k,
        windows=(j1, j2),
        atomistic=sites[gamma == 0.0],
        interface=sites[(gamma > 0.0) & (gamma < 1.0)],
        continuum=sites[gamma == 1.0],
    )


def indicator(n: int, sites: Sequence[int]) -> np.ndarray:
    out = np.zeros(n)
    out[np.asarray(list(sites), dtype=int) % n] = 1.0
    return out


# --- alpha / beta -------------------------------------------------------------

BlendLike = Union[BlendFunction, np.ndarray, Sequence[float]]


def _gamma_of(g: BlendLike) -> np.ndarray:
    return g.gamma if isinstance(g, BlendFunction) else np.asarray(g, dtype=float)


def bqce_alpha_beta(gamma: BlendLike) -> tuple[np.ndarray, np.ndarray]:
    """``alpha = mean(gamma)``, ``beta = 1 - (gamma_{xi+1} + gamma_{xi-1}) / 2``."""
    g = _gamma_of(gamma)
    alpha = mean_seq(g)
    beta = 1.0 - 0.5 * (np.roll(g, -1) + np.roll(g, 1))
    return alpha, beta


def bqnl_alpha_beta(eta: BlendLike) -> tuple[np.ndarray, np.ndarray]:
    """``alpha = 1 - mean(eta)``, ``beta = eta``.

    A :class:`BlendFunction` contributes its atomistic weight ``1 - gamma``.
    """
    e = eta.eta if isinstance(eta, BlendFunction) else np.asarray(eta, dtype=float)
    return 1.0 - mean_seq(e), e.copy()


# --- seminorms ----------------------------------------------------------------


@dataclass(frozen=True)
class GhostReport:
    value: float  # ||Delta^2 alpha||_{l^p_eps}
    gamma_value: float  # ||Delta^2 gamma||_{l^p_eps}
    per_transition: tuple  # ||Delta^2 gamma||_{l^p_eps(J)} for each window
    bound_per_transition: Optional[float]  # eps^(1/p) k^(1/p-2) ||g''||_{L^p}
    bound: Optional[float]  # sum over windows


def transition_bound(shape: BlendShape, n: int, k: int, p: float) -> Optional[float]:
    """``eps^(1/p) k^(1/p - 2) ||g''||_{L^p}`` for one transition."""
    norm = shape.second_derivative_norm(p)
    if norm is None:
        return None
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return (1.0 / n) ** inv_p * k ** (inv_p - 2.0) * norm


def ghost_seminorm(gamma: BlendLike, p: float = 2) -> GhostReport:
    """Ghost-force seminorm ``||Delta^2 alpha||_{l^p_eps}`` of a BQCE blend."""
    g = _gamma_of(gamma)
    alpha, _ = bqce_alpha_beta(g)
    d2g = delta2(g)
    per = ()
    bound_one = bound = None
    if isinstance(gamma, BlendFunction):
        per = tuple(lp_norm(d2g, p, subset=w) for w in gamma.windows)
        bound_one = transition_bound(gamma.shape, g.size, gamma.k, p)
        if bound_one is not None:
            bound = bound_one * len(gamma.windows)
    return GhostReport(
        value=lp_norm(delta2(alpha), p),
        gamma_value=lp_norm(d2g, p),
        per_transition=per,
        bound_per_transition=bound_one,
        bound=bound,
    )


@dataclass(frozen=True)
class CouplingReport:
    value: float  # eps ||Delta beta y''||_{l^p_eps}
    bound: Optional[float]  # eps^(1+1/p) k^(1/p-1) C_beta ||y''||_{l^inf(I)}
    c_beta: Optional[float]


def coupling_seminorm(beta, y: Deformation, p: float = 2, blend: Optional[BlendFunction] = None) -> CouplingReport:
    """Coupling-error seminorm ``eps ||Delta beta * y''||_{l^p_eps}``.

    With ``blend`` given, also the bound with ``C_beta = 2 ||g'||_{L^p}``
    (two windows) and the sup of ``|y''|`` over the support of ``Delta beta``.
    """
    beta = np.asarray(beta, dtype=float)
    eps = y.eps
    ypp = diff2(y)
    db = delta(beta)
    value = eps * lp_norm(db * ypp, p)
    bound = c_beta = None
    if blend is not None and blend.shape.kind != "characteristic":
        c_beta = len(blend.windows) * blend.shape.derivative_norm(1, p)
        inv_p = 0.0 if math.isinf(p) else 1.0 / p
        support = np.flatnonzero(np.abs(db) > 0)
        ypp_sup = float(np.max(np.abs(ypp[support]))) if support.size else 0.0
        bound = eps ** (1.0 + inv_p) * blend.k ** (inv_p - 1.0) * c_beta * ypp_sup
    return CouplingReport(value=value, bound=bound, c_beta=c_beta)
