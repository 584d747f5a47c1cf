"""Points, axis-parallel boxes and the Helmholtz kernel.

Points are plain float arrays of shape ``(3,)`` (or ``(n, 3)`` for point
sets).  All kernel evaluations are vectorized and broadcast over leading
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi


class SingularPointError(ValueError):
    """Raised when the kernel is evaluated at coincident points."""


@dataclass(frozen=True)
class AxisBox:
    """Half-open box ``(a1, b1] x (a2, b2] x (a3, b3]``."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("AxisBox needs three lower and three upper coordinates")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("AxisBox coordinates must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, points) -> np.ndarray:
        """Membership under the half-open convention ``a < x <= b``."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((p > lo) & (p <= hi), axis=1)


def box_diameter(b: AxisBox) -> float:
    return float(np.sqrt(np.sum(b.sides**2)))


def box_distance(t: AxisBox, s: AxisBox) -> float:
    """Distance between the closures of two boxes (0 if they touch)."""
    gap = np.maximum(
        0.0,
        np.maximum(
            np.subtract(s.lower, t.upper),
            np.subtract(t.lower, s.upper),
        ),
    )
    return float(np.sqrt(np.sum(gap**2)))


def _separation(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0.0):
        raise SingularPointError("Helmholtz kernel evaluated at coincident points")
    return d, r


def kernel(x, y, kappa: float):
    """Helmholtz kernel ``exp(i kappa |x-y|) / (4 pi |x-y|)``."""
    _, r = _separation(x, y)
    return np.exp(1j * kappa * r) / (FOUR_PI * r)


def kernel_directional(x, y, c, kappa: float):
    """Helmholtz kernel damped by the plane wave along direction ``c``.

    Evaluates ``exp(i kappa (|x-y| - <x-y, c>)) / (4 pi |x-y|)`` with the
    phase formed before exponentiation, so that for ``c`` parallel to
    ``x - y`` the result is real up to the rounding of the phase.
    """
    d, r = _separation(x, y)
    proj = np.sum(d * np.asarray(c, dtype=float), axis=-1)
    return np.exp(1j * kappa * (r - proj)) / (FOUR_PI * r)
