"""Curves, quadrature rules, receiver arrays and sampling grids.

Points are numpy arrays with a trailing axis of length 2. Curve maps accept
scalar or array parameters and return ``(..., 2)`` arrays.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2 * np.pi

# Admissible radii for the star-like ansatz (prior bounds 0 < a <= r <= b).
BOUND_LO = 0.3
BOUND_HI = 2.5
N_CHECK_ANGLES = 256

SHAPES = ("starfish", "circle", "kite1", "kite2")


def _stack(x, y):
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


@dataclass(frozen=True)
class ParametricCurve:
    """Closed 2pi-periodic curve with analytic first and second derivatives."""

    label: str
    point: Callable
    deriv: Callable
    deriv2: Callable

    def speed(self, t):
        d = self.deriv(t)
        return np.hypot(d[..., 0], d[..., 1])


def circle_curve(radius=1.0, label="circle"):
    def point(t):
        t = np.asarray(t, dtype=float)
        return radius * _stack(np.cos(t), np.sin(t))

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return radius * _stack(-np.sin(t), np.cos(t))

    def deriv2(t):
        return -point(t)

    return ParametricCurve(label, point, deriv, deriv2)


def _starfish():
    def rad(t):
        return 1 + 0.2 * np.cos(5 * t), -np.sin(5 * t), -5 * np.cos(5 * t)

    def point(t):
        t = np.asarray(t, dtype=float)
        r, _, _ = rad(t)
        return _stack(r * np.cos(t), r * np.sin(t))

    def deriv(t):
        t = np.asarray(t, dtype=float)
        r, dr, _ = rad(t)
        c, s = np.cos(t), np.sin(t)
        return _stack(dr * c - r * s, dr * s + r * c)

    def deriv2(t):
        t = np.asarray(t, dtype=float)
        r, dr, ddr = rad(t)
        c, s = np.cos(t), np.sin(t)
        return _stack(ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s)

    return ParametricCurve("starfish", point, deriv, deriv2)


def _kite(a, b, c, height, label):
    # x1 = cos t + a sin t + b cos 2t - c,  x2 = height sin t
    def point(t):
        t = np.asarray(t, dtype=float)
        return _stack(np.cos(t) + a * np.sin(t) + b * np.cos(2 * t) - c, height * np.sin(t))

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return _stack(-np.sin(t) + a * np.cos(t) - 2 * b * np.sin(2 * t), height * np.cos(t))

    def deriv2(t):
        t = np.asarray(t, dtype=float)
        return _stack(-np.cos(t) - a * np.sin(t) - 4 * b * np.cos(2 * t), -height * np.sin(t))

    return ParametricCurve(label, point, deriv, deriv2)


def make_shape(name: str) -> ParametricCurve:
    """Exact obstacle boundary by name: starfish, circle, kite1 or kite2."""
    if name == "starfish":
        return _starfish()
    if name == "circle":
        return circle_curve(1.0)
    if name == "kite1":
        return _kite(0.15, 0.35, 0.35, 1.2, "kite1")
    if name == "kite2":
        return _kite(0.0, 0.65, 0.65, 1.5, "kite2")
    raise ValueError(f"unknown shape {name!r}; expected one of {', '.join(SHAPES)}")


@dataclass(frozen=True, eq=False)
class StarCurve:
    """Star-like curve r_M(t) (cos t, sin t) with a truncated Fourier radius.

    r_M(t) = base_radius + a[0] + sum_m a[m] cos(mt) + b[m-1] sin(mt), so the
    all-zero coefficient vector reproduces the circle of radius base_radius.
    """

    base_radius: float
    a: np.ndarray
    b: np.ndarray
    bound_lo: float = BOUND_LO
    bound_hi: float = BOUND_HI

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 1 or b.shape != (a.size - 1,):
            raise ValueError("need len(a) == M + 1 and len(b) == M")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def degree(self) -> int:
        return self.b.size

    @classmethod
    def circle(cls, radius, base_radius, degree, **bounds):
        a = np.zeros(degree + 1)
        a[0] = radius - base_radius
        return cls(base_radius, a, np.zeros(degree), **bounds)

    @classmethod
    def from_vector(cls, coeffs, base_radius, **bounds):
        """Inverse of :meth:`to_vector` (order a_0, a_1..a_M, b_1..b_M)."""
        coeffs = np.asarray(coeffs, dtype=float)
        m = (coeffs.size - 1) // 2
        return cls(base_radius, coeffs[: m + 1], coeffs[m + 1 :], **bounds)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    def _harmonics(self, t):
        t = np.asarray(t, dtype=float)
        m = np.arange(1, self.degree + 1)
        mt = t[..., None] * m
        return m, np.cos(mt), np.sin(mt)

    def radius(self, t):
        _, c, s = self._harmonics(t)
        return self.base_radius + self.a[0] + c @ self.a[1:] + s @ self.b

    def radius_deriv(self, t):
        m, c, s = self._harmonics(t)
        return -s @ (m * self.a[1:]) + c @ (m * self.b)

    def radius_deriv2(self, t):
        m, c, s = self._harmonics(t)
        return -(c @ (m**2 * self.a[1:]) + s @ (m**2 * self.b))

    def point(self, t):
        t = np.asarray(t, dtype=float)
        r = self.radius(t)
        return _stack(r * np.cos(t), r * np.sin(t))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        r, dr = self.radius(t), self.radius_deriv(t)
        c, s = np.cos(t), np.sin(t)
        return _stack(dr * c - r * s, dr * s + r * c)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        r, dr, ddr = self.radius(t), self.radius_deriv(t), self.radius_deriv2(t)
        c, s = np.cos(t), np.sin(t)
        return _stack(ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s)

    def speed(self, t):
        return np.hypot(self.radius(t), self.radius_deriv(t))

    def check_radii(self):
        return self.radius(TWO_PI * np.arange(N_CHECK_ANGLES) / N_CHECK_ANGLES)

    def is_admissible(self) -> bool:
        r = self.check_radii()
        return bool(np.all(r >= self.bound_lo) and np.all(r <= self.bound_hi))

    def as_curve(self, label="star") -> ParametricCurve:
        return ParametricCurve(label, self.point, self.deriv, self.deriv2)


def star_point(curve: StarCurve, t):
    return curve.point(t)


@dataclass(frozen=True)
class AuxiliaryCurve:
    """Circle carrying the single-layer densities."""

    radius: float = 0.6
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("auxiliary radius must be positive")

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.center) + self.radius * _stack(np.cos(t), np.sin(t))

    def speed(self, t):
        return np.full(np.shape(t), float(self.radius))


@dataclass(frozen=True)
class ReceiverArray:
    """N_R equispaced receivers at angles r * aperture / N_R, r = 1..N_R."""

    R: float = 4.0
    aperture: float = TWO_PI
    count: int = 120

    def __post_init__(self):
        if not self.R > 0 or self.count < 1:
            raise ValueError("receiver radius and count must be positive")
        if not 0 < self.aperture <= TWO_PI + 1e-12:
            raise ValueError("aperture must lie in (0, 2pi]")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(1, self.count + 1) * self.aperture / self.count

    @property
    def points(self) -> np.ndarray:
        th = self.angles
        return self.R * np.stack([np.cos(th), np.sin(th)], axis=-1)

    @property
    def weight(self) -> float:
        """Arc-length weight of one receiver."""
        return self.R * self.aperture / self.count

    @property
    def full_aperture(self) -> bool:
        return abs(self.aperture - TWO_PI) < 1e-12


@dataclass(frozen=True)
class SamplingGrid:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("grid bounds must satisfy min < max")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid sizes must be positive")

    @classmethod
    def square(cls, half_width, n):
        return cls(-half_width, half_width, -half_width, half_width, n, n)

    @property
    def xs(self):
        return np.linspace(self.xmin, self.xmax, self.nx)

    @property
    def ys(self):
        return np.linspace(self.ymin, self.ymax, self.ny)

    @property
    def spacing(self):
        return ((self.xmax - self.xmin) / max(self.nx - 1, 1), (self.ymax - self.ymin) / max(self.ny - 1, 1))

    def contains(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax


def grid_points(grid: SamplingGrid) -> np.ndarray:
    """Row-major enumeration with x fastest and y slowest, shape (nx*ny, 2)."""
    X, Y = np.meshgrid(grid.xs, grid.ys)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def integrate(self, values):
        return np.sum(self.weights * values, axis=-1)


def trapezoid_rule(n: int) -> QuadratureRule:
    """Composite trapezoidal rule on [0, 2pi) with n equidistant nodes."""
    if n < 4 or n % 2:
        raise ValueError("trapezoidal rule needs an even n >= 4")
    return QuadratureRule(TWO_PI * np.arange(n) / n, np.full(n, TWO_PI / n))


def polygon(curve, n=1024) -> np.ndarray:
    return curve.point(TWO_PI * np.arange(n) / n)


def points_inside(curve, pts, n=1024) -> np.ndarray:
    """Even-odd ray test against a fine polygonal approximation of ``curve``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    poly = polygon(curve, n)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px, py = pts[:, 0:1], pts[:, 1:2]
    crosses = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    return np.count_nonzero(crosses & (px < xcross), axis=1) % 2 == 1
