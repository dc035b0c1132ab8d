"""Pair potentials with closed-form derivatives and derivative envelopes.

Each potential has an inflection point ``r*`` (``phi'' > 0`` below it,
``phi'' < 0`` above it), and ``envelope(i, r0)`` returns
``C_i(r0) = sup_{r >= r0} |phi^(i)(r)|``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

MAX_ORDER = 4
ENVELOPE_SAFETY = 1.01
_INFLECTION_XTOL = 1e-12


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("pair distance must be positive")
    return r


def _rising(a: float, n: int) -> float:
    """Pochhammer symbol ``a (a+1) ... (a+n-1)``."""
    out = 1.0
    for j in range(n):
        out *= a + j
    return out


class Potential(ABC):
    """A pair potential ``phi`` on ``(0, inf)``."""

    name: str = "potential"

    def derivative(self, order: int, r):
        """``phi^(order)(r)``; scalar in, float out; array in, array out."""
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
        r_arr = _check_r(r)
        out = self._derivative(order, r_arr)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, r):
        return self.derivative(0, r)

    @abstractmethod
    def _derivative(self, order: int, r: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _inflection_bracket(self) -> tuple[float, float]:
        ...

    def critical_points(self, order: int) -> Optional[list[float]]:
        """Roots of ``phi^(order)`` on ``(0, inf)``, or None if unknown."""
        return None

    @property
    def params(self) -> dict:
        return {}

    @cached_property
    def inflection(self) -> float:
        """``r*``, by bisection on ``phi''``."""
        lo, hi = self._inflection_bracket()
        d2 = lambda r: self.derivative(2, r)
        if not (d2(lo) > 0 > d2(hi)):
            raise ValueError(f"{self.name}: phi'' does not change sign on [{lo}, {hi}]")
        r_star = optimize.bisect(d2, lo, hi, xtol=_INFLECTION_XTOL, rtol=4 * np.finfo(float).eps)
        return float(r_star)

    def envelope(self, order: int, r0: float) -> float:
        """``C_order(r0) = sup_{r >= r0} |phi^(order)(r)|``.

        Exact when the critical points of ``phi^(order)`` are known; otherwise
        a log-grid sample on ``[r0, 1e3 r0]`` inflated by 1%.
        """
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"envelope order must be in 1..{MAX_ORDER}, got {order}")
        if not r0 > 0:
            raise ValueError("envelope base point must be positive")
        crit = self.critical_points(order + 1)
        if crit is not None:
            cands = [r0] + [c for c in crit if c > r0]
            return float(max(abs(self.derivative(order, c)) for c in cands))
        grid = np.geomspace(r0, 1e3 * r0, 10_000)
        return float(ENVELOPE_SAFETY * np.max(np.abs(self.derivative(order, grid))))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


class LennardJones(Potential):
    """``phi(r) = depth * ((r_min/r)^12 - 2 (r_min/r)^6)``; minimum ``-depth`` at ``r_min``."""

    name = "lj"

    def __init__(self, depth: float = 1.0, r_min: float = 1.0):
        if not (depth > 0 and r_min > 0):
            raise ValueError("Lennard-Jones depth and r_min must be positive")
        self.depth = float(depth)
        self.r_min = float(r_min)

    @property
    def params(self):
        return {"depth": self.depth, "r_min": self.r_min}

    def _derivative(self, order, r):
        s = (-1) ** order
        a12 = s * _rising(12, order) * self.r_min**12
        a6 = -2.0 * s * _rising(6, order) * self.r_min**6
        return self.depth * (a12 * r ** (-12.0 - order) + a6 * r ** (-6.0 - order))

    def critical_points(self, order):
        # phi^(n) = 0  <=>  r^6 = r_min^6 (12)_n / (2 (6)_n)
        return [self.r_min * (_rising(12, order) / (2.0 * _rising(6, order))) ** (1.0 / 6.0)]

    def _inflection_bracket(self):
        return self.r_min, 2.0 * self.r_min


class Morse(Potential):
    """``phi(r) = depth * (exp(-2a(r-r_min)) - 2 exp(-a(r-r_min)))``."""

    name = "morse"

    def __init__(self, a: float = 4.0, depth: float = 1.0, r_min: float = 1.0):
        if not (a > 0 and depth > 0 and r_min > 0):
            raise ValueError("Morse a, depth and r_min must be positive")
        self.a = float(a)
        self.depth = float(depth)
        self.r_min = float(r_min)

    @property
    def params(self):
        return {"a": self.a, "depth": self.depth, "r_min": self.r_min}

    def _derivative(self, order, r):
        a = self.a
        x = r - self.r_min
        return self.depth * (
            (-2.0 * a) ** order * np.exp(-2.0 * a * x) - 2.0 * (-a) ** order * np.exp(-a * x)
        )

    def critical_points(self, order):
        # phi^(n) = 0  <=>  exp(-a x) = 2^(1-n)
        r = self.r_min + (order - 1) * math.log(2.0) / self.a
        return [r] if r > 0 else []

    def _inflection_bracket(self):
        return self.r_min, self.r_min + 2.0 * math.log(2.0) / self.a


class CallablePotential(Potential):
    """Potential given by user callables for ``phi, phi', ..., phi''''``.

    Envelopes fall back to sampling.
    """

    def __init__(
        self,
        name: str,
        derivatives: Sequence[Callable],
        inflection_bracket: tuple[float, float],
    ):
        if len(derivatives) != MAX_ORDER + 1:
            raise ValueError(f"need {MAX_ORDER + 1} callables (orders 0..{MAX_ORDER})")
        self.name = name
        self._funcs = tuple(derivatives)
        self._bracket = tuple(float(b) for b in inflection_bracket)

    def _derivative(self, order, r):
        return np.asarray(self._funcs[order](r), dtype=float)

    def _inflection_bracket(self):
        return self._bracket


POTENTIALS = {
    "lj": LennardJones,
    "lennard-jones": LennardJones,
    "morse": Morse,
}


def get_potential(name: str, **params) -> Potential:
    try:
        cls = POTENTIALS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {sorted(set(POTENTIALS))}") from None
    return cls(**params)


def eval_derivative(pot: Potential, order: int, r):
    return pot.derivative(order, r)


def envelope(pot: Potential, order: int, r0: float) -> float:
    return pot.envelope(order, r0)
