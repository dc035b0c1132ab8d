"""Periodic chain kinematics.

Sites are labelled by ``xi mod N``; array index ``i`` holds site ``i`` (so the
site usually written ``N`` lives at index 0). The reference spacing is always
``eps = 1/N``, which makes one period have unit reference length.

All sequences are plain 1D ``numpy`` arrays of length ``N`` with periodic
wrap-around implied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MIN_SITES = 5
_MEAN_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class LatticeConfig:
    """Period of the chain. The spacing is derived, never stored."""

    n_atoms: int

    def __post_init__(self):
        n = self.n_atoms
        if isinstance(n, bool) or int(n) != n:
            raise ValueError(f"n_atoms must be an integer, got {n!r}")
        if n < MIN_SITES:
            raise ValueError(f"n_atoms must be >= {MIN_SITES}, got {n}")
        object.__setattr__(self, "n_atoms", int(n))

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_atoms

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_atoms)

    @property
    def reference_positions(self) -> np.ndarray:
        return self.sites * self.spacing


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def project_mean_zero(values) -> np.ndarray:
    """Subtract the mean. Returns a new array."""
    v = np.asarray(values, dtype=float)
    return v - v.mean()


def _check_mean_zero(v: np.ndarray, what: str, rtol: float = _MEAN_ZERO_RTOL):
    scale = np.max(np.abs(v)) if v.size else 0.0
    if abs(v.sum()) > rtol * v.size * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{what} must have zero sum (got {v.sum():.3e})")


@dataclass(frozen=True, eq=False)
class Displacement:
    """N-periodic, mean-zero displacement.

    The constructor validates the mean-zero property; use
    :meth:`projected` to build one from arbitrary values.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("displacement must be one-dimensional")
        _check_mean_zero(v, "displacement")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def projected(cls, values) -> "Displacement":
        return cls(project_mean_zero(values))

    @classmethod
    def zeros(cls, n: int) -> "Displacement":
        return cls(np.zeros(n))

    def __len__(self):
        return self.values.size

    def __add__(self, other: "Displacement") -> "Displacement":
        return Displacement.projected(self.values + other.values)

    def __sub__(self, other: "Displacement") -> "Displacement":
        return Displacement.projected(self.values - other.values)

    def __mul__(self, c: float) -> "Displacement":
        return Displacement.projected(c * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Deformation:
    """``y_xi = F * eps * xi + u_xi`` for a mean-zero displacement ``u``."""

    config: LatticeConfig
    strain_f: float
    displacement: Displacement

    def __post_init__(self):
        if not self.strain_f > 0:
            raise ValueError(f"macroscopic strain must be positive, got {self.strain_f}")
        if len(self.displacement) != self.config.n_atoms:
            raise ValueError(
                f"displacement has {len(self.displacement)} entries, "
                f"expected {self.config.n_atoms}"
            )

    @classmethod
    def uniform(cls, config: LatticeConfig, strain_f: float) -> "Deformation":
        return cls(config, float(strain_f), Displacement.zeros(config.n_atoms))

    @classmethod
    def from_displacement(cls, config, strain_f, u) -> "Deformation":
        """Build from raw displacement values (mean is projected out)."""
        if isinstance(u, Displacement):
            return cls(config, float(strain_f), u)
        return cls(config, float(strain_f), Displacement.projected(u))

    @classmethod
    def from_strain(cls, config: LatticeConfig, strain_f: float, w) -> "Deformation":
        """Build the deformation whose strain is ``F + w`` (``w`` mean-zero)."""
        w = np.asarray(w, dtype=float)
        _check_mean_zero(w, "strain perturbation", rtol=1e-10)
        w = w - w.mean()
        return cls.from_displacement(config, strain_f, strain_to_displacement(w))

    @property
    def n(self) -> int:
        return self.config.n_atoms

    @property
    def eps(self) -> float:
        return self.config.spacing

    @property
    def u(self) -> np.ndarray:
        return self.displacement.values

    @property
    def positions(self) -> np.ndarray:
        return self.strain_f * self.config.reference_positions + self.u

    @property
    def min_strain(self) -> float:
        return float(np.min(diff1(self)))

    @property
    def is_admissible(self) -> bool:
        return self.min_strain > 0

    def perturbed(self, u, h: float = 1.0) -> "Deformation":
        """``y + h u`` at the same macroscopic strain."""
        du = u.values if isinstance(u, Displacement) else np.asarray(u, dtype=float)
        return Deformation.from_displacement(self.config, self.strain_f, self.u + h * du)

    def with_strain_f(self, strain_f: float) -> "Deformation":
        return Deformation(self.config, float(strain_f), self.displacement)


# --- difference and mean operators -------------------------------------------


def _seq(s) -> np.ndarray:
    return np.asarray(s, dtype=float)


def delta(s) -> np.ndarray:
    """Backward difference ``s_xi - s_{xi-1}``."""
    s = _seq(s)
    return s - np.roll(s, 1)


def delta2(s) -> np.ndarray:
    """Second difference ``s_{xi+1} - 2 s_xi + s_{xi-1}``."""
    s = _seq(s)
    return np.roll(s, -1) - 2.0 * s + np.roll(s, 1)


def mean_seq(s) -> np.ndarray:
    """Backward mean ``(s_xi + s_{xi-1}) / 2``."""
    s = _seq(s)
    return 0.5 * (s + np.roll(s, 1))


def displacement_strain(u) -> np.ndarray:
    """``u'`` of a periodic sequence (no macroscopic part)."""
    u = u.values if isinstance(u, Displacement) else _seq(u)
    return delta(u) * u.size


def strain_to_displacement(w) -> np.ndarray:
    """Invert :func:`displacement_strain` on mean-zero strains.

    Returns the unique mean-zero ``u`` with ``u' = w``.
    """
    w = _seq(w)
    u = np.cumsum(w) / w.size
    return u - u.mean()


def diff1(d: Deformation) -> np.ndarray:
    """``y'_xi = (y_xi - y_{xi-1}) / eps``."""
    return d.strain_f + displacement_strain(d.u)


def diff2(d: Deformation) -> np.ndarray:
    """``y''_xi = (y_{xi+1} - 2 y_xi + y_{xi-1}) / eps^2``."""
    return delta2(d.u) * d.n**2


def diff3(d: Deformation) -> np.ndarray:
    """``y'''_xi = (y_{xi+1} - 3 y_xi + 3 y_{xi-1} - y_{xi-2}) / eps^3``."""
    return delta(delta2(d.u)) * d.n**3


# --- norms -------------------------------------------------------------------


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"norm order must satisfy p >= 1, got {p}")
    return p


def lp_norm(s, p: float = 2, subset: Optional[Sequence[int]] = None) -> float:
    """``(eps * sum_{xi in subset} |s_xi|^p)^(1/p)`` with ``eps = 1/len(s)``.

    ``p = inf`` gives the max over the subset.
    """
    p = _check_p(p)
    s = _seq(s)
    eps = 1.0 / s.size
    if subset is not None:
        s = s[np.asarray(subset, dtype=int) % s.size]
    if s.size == 0:
        return 0.0
    a = np.abs(s)
    if math.isinf(p):
        return float(a.max())
    m = a.max()
    if m == 0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(m * (eps * np.sum((a / m) ** p)) ** (1.0 / p))


def u1p_norm(u, p: float = 2) -> float:
    """``||u||_{U^{1,p}} = ||u'||_{l^p_eps}``."""
    return lp_norm(displacement_strain(u), p)


def _golden_section(fun, a: float, b: float, tol: float, max_iter: int = 500) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return min((fun(x), x), (fc, c), (fd, d))[1]


@dataclass(frozen=True, eq=False)
class DualFunctional:
    """Element ``g`` of ``U^{-1,p}`` stored as ``g(u) = eps * sum T_xi u'_xi``.

    ``T`` is defined up to a constant; the stored representative is mean-zero.
    """

    strain_rep: np.ndarray

    def __post_init__(self):
        t = np.array(self.strain_rep, dtype=float)
        if t.ndim != 1:
            raise ValueError("strain representation must be one-dimensional")
        object.__setattr__(self, "strain_rep", _frozen(t - t.mean()))

    @property
    def n(self) -> int:
        return self.strain_rep.size

    def pair(self, u) -> float:
        """Evaluate ``g(u)``."""
        w = displacement_strain(u)
        return float(np.dot(self.strain_rep, w) / self.n)

    def site_forces(self) -> np.ndarray:
        """The l2_eps representer ``f`` with ``g(u) = eps * sum f_xi u_xi``."""
        t = self.strain_rep
        return (t - np.roll(t, -1)) * self.n

    def norm(self, p: float = 2) -> float:
        return dual_norm(self, p)

    def __sub__(self, other: "DualFunctional") -> "DualFunctional":
        return DualFunctional(self.strain_rep - other.strain_rep)

    def __add__(self, other: "DualFunctional") -> "DualFunctional":
        return DualFunctional(self.strain_rep + other.strain_rep)

    def __neg__(self) -> "DualFunctional":
        return DualFunctional(-self.strain_rep)


def dual_norm(g, p: float = 2) -> float:
    """``||g||_{U^{-1,p}} = min_c ||T - c||_{l^p_eps}``.

    Accepts a :class:`DualFunctional` or a raw strain representation.
    """
    p = _check_p(p)
    t = g.strain_rep if isinstance(g, DualFunctional) else _seq(g)
    if math.isinf(p):
        return float(0.5 * (t.max() - t.min()))
    if p == 2:
        return lp_norm(t - t.mean(), 2)
    if p == 1:
        return lp_norm(t - np.median(t), 1)
    lo, hi = float(t.min()), float(t.max())
    spread = hi - lo
    if spread == 0:
        return 0.0
    c = _golden_section(lambda c: lp_norm(t - c, p), lo, hi, 1e-12 * spread)
    return lp_norm(t - c, p)


def forces_to_dual(f, rtol: float = 1e-10) -> DualFunctional:
    """Strain representation of ``u -> eps * sum f_xi u_xi``.

    Uses ``T_{xi+1} = T_xi - eps f_xi``; requires ``sum f = 0`` (periodic
    energies are translation invariant).
    """
    f = _seq(f)
    scale = np.max(np.abs(f)) if f.size else 0.0
    if abs(f.sum()) > rtol * f.size * max(scale, np.finfo(float).tiny):
        raise ValueError(f"site forces must sum to zero (got {f.sum():.3e})")
    eps = 1.0 / f.size
    t = np.empty_like(f)
    t[0] = 0.0
    t[1:] = -eps * np.cumsum(f[:-1])
    return DualFunctional(t)
