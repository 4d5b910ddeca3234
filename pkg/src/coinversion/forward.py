"""Synthetic total-field data for sound-soft obstacles excited by point sources.

The exterior Dirichlet problem is solved with the combined double/single
layer ansatz

    u^s(x) = int_{dD} [dPhi(x,y)/dnu(y) - i eta Phi(x,y)] psi(y) ds(y),

which leads to the second-kind equation psi + K psi - i eta S psi = -2 u^i.
The weakly singular kernels are split into a log(4 sin^2((t-tau)/2)) part,
integrated with trigonometric interpolation weights, and a smooth part
handled by the trapezoidal rule (Kussmaul-Martensen).
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .geometry import ParametricCurve, ReceiverArray, points_inside
from .specfun import fundamental_solution, hankel1

EULER_GAMMA = 0.57721566490153286061


class ForwardError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Total field u(x_r; z_j), one column per source.

    ``sources`` is None when the data were read from disk without ground truth.
    """

    k: float
    receivers: ReceiverArray
    data: np.ndarray
    sources: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != self.receivers.count:
            raise ValueError("data must be N_R x N")
        if not np.all(np.isfinite(data)):
            raise ValueError("measurement data must be finite")
        if self.sources is not None:
            src = np.asarray(self.sources, dtype=float).reshape(-1, 2)
            if src.shape[0] != data.shape[1]:
                raise ValueError("source count does not match data columns")
            object.__setattr__(self, "sources", src)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_sources(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("noise level must be nonnegative")


def _log_weights(n):
    """R_j^{(n)} for the 2n-point rule, indexed by |i - j|."""
    m = np.arange(2 * n)
    p = np.arange(1, n)
    return -2 * np.pi / n * (np.cos(np.outer(m, p) * np.pi / n) @ (1.0 / p)) - np.pi / n**2 * (-1.0) ** m


class NystromSolver:
    """Factored Nystrom system for one obstacle and wavenumber."""

    def __init__(self, obstacle: ParametricCurve, k: float, n_quad: int = 64, eta: Optional[float] = None):
        if n_quad < 8 or n_quad % 2:
            raise ValueError("n_quad must be an even integer >= 8")
        self.obstacle = obstacle
        self.k = float(k)
        self.eta = self.k if eta is None else float(eta)
        n = n_quad // 2
        self.n = n
        t = np.pi * np.arange(2 * n) / n
        self.t = t
        self.x = obstacle.point(t)
        dx = obstacle.deriv(t)
        ddx = obstacle.deriv2(t)
        self.speed = np.hypot(dx[:, 0], dx[:, 1])
        self.normal = np.stack([dx[:, 1], -dx[:, 0]], axis=-1)  # unnormalized, outward for ccw curves
        self.matrix = self._assemble(dx, ddx)
        self._lu = scipy.linalg.lu_factor(self.matrix, check_finite=True)
        if np.min(np.abs(np.diag(self._lu[0]))) < 1e-13 * np.max(np.abs(self.matrix)):
            raise ForwardError("Nystrom matrix is numerically singular")

    def _assemble(self, dx, ddx):
        k, n, eta = self.k, self.n, self.eta
        size = 2 * n
        diff = self.x[:, None, :] - self.x[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        diag = np.eye(size, dtype=bool)
        r[diag] = 1.0
        nd = np.einsum("jc,ijc->ij", self.normal, diff)  # nu(tau_j) . (x(t_i) - x(tau_j))
        h0 = hankel1(0, k * r)
        h1 = hankel1(1, k * r)
        speed = self.speed[None, :]

        L = 0.5j * k * nd * h1 / r
        L1 = -k / (2 * np.pi) * nd * h1.real / r
        M = 0.5j * h0 * speed
        M1 = -h0.real * speed / (2 * np.pi)

        dt = self.t[:, None] - self.t[None, :]
        with np.errstate(divide="ignore"):
            logs = np.log(4 * np.sin(dt / 2) ** 2)
        logs[diag] = 0.0
        L2 = L - L1 * logs
        M2 = M - M1 * logs

        L1[diag] = 0.0
        L2[diag] = np.einsum("ic,ic->i", self.normal, ddx) / (2 * np.pi * self.speed**2)
        M1[diag] = -self.speed / (2 * np.pi)
        M2[diag] = (0.5j - EULER_GAMMA / np.pi - np.log(k * self.speed / 2) / np.pi) * self.speed

        idx = np.arange(size)
        R = _log_weights(n)[np.abs(idx[:, None] - idx[None, :])]
        K1 = L1 - 1j * eta * M1
        K2 = L2 - 1j * eta * M2
        return np.eye(size) + R * K1 + (np.pi / n) * K2

    def incident_rhs(self, sources):
        sources = np.asarray(sources, dtype=float).reshape(-1, 2)
        return -2 * fundamental_solution(self.k, self.x[:, None, :], sources[None, :, :])

    def density(self, sources):
        """Boundary density, one column per source."""
        return scipy.linalg.lu_solve(self._lu, self.incident_rhs(sources))

    def evaluate(self, psi, targets):
        """Scattered field at ``targets`` (M x 2) for densities ``psi`` (2n x N)."""
        targets = np.asarray(targets, dtype=float).reshape(-1, 2)
        k = self.k
        diff = targets[:, None, :] - self.x[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        nd = np.einsum("jc,ijc->ij", self.normal, diff)
        kernel = 0.25j * k * hankel1(1, k * r) * nd / r + 0.25 * self.eta * hankel1(0, k * r) * self.speed
        return (np.pi / self.n) * kernel @ psi


def _check_outside(obstacle, pts, what):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if pts.size and np.any(points_inside(obstacle, pts)):
        raise ForwardError(f"{what} lies inside the obstacle")


def solve_forward(obstacle: ParametricCurve, k: float, source, targets, n_quad: int = 64) -> np.ndarray:
    """Scattered field u^s(target; source) for each target."""
    _check_outside(obstacle, source, "source")
    _check_outside(obstacle, targets, "target")
    solver = NystromSolver(obstacle, k, n_quad)
    psi = solver.density(source)
    return solver.evaluate(psi, targets)[:, 0]


def mie_series_circle(radius: float, k: float, source, target, tol: float = 1e-14, max_order: int = 80) -> complex:
    """Scattered field of a sound-soft circle centred at the origin (series oracle)."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    rz, rx = np.hypot(*source), np.hypot(*target)
    if not rz > radius or rx < radius * (1 - 1e-14):
        raise ValueError("need |source| > radius and |target| >= radius")
    dtheta = np.arctan2(target[1], target[0]) - np.arctan2(source[1], source[0])
    total = 0j
    small = 0
    for n in range(max_order + 1):
        weight = 1.0 if n == 0 else 2.0
        ratio = hankel1(n, k * radius)
        term = weight * (float(np.real(ratio)) / ratio) * hankel1(n, k * rz) * hankel1(n, k * rx) * np.cos(n * dtheta)
        total += term
        small = small + 1 if abs(term) < tol else 0
        if small == 3:
            return -0.25j * total
    raise ForwardError(f"Mie series not converged by order {max_order}")


def synthesize_measurements(
    obstacle: ParametricCurve, k: float, sources, receivers: ReceiverArray, n_quad: int = 64
) -> MeasurementSet:
    """Total field Phi(x_r, z_j) + u^s(x_r; z_j) at every receiver and source."""
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    if sources.shape[0] == 0:
        return MeasurementSet(k, receivers, np.zeros((receivers.count, 0), complex), sources)
    _check_outside(obstacle, sources, "source")
    if np.any(np.hypot(sources[:, 0], sources[:, 1]) >= receivers.R):
        raise ForwardError("sources must lie inside the receiver circle")
    solver = NystromSolver(obstacle, k, n_quad)
    xr = receivers.points
    scattered = solver.evaluate(solver.density(sources), xr)
    incident = fundamental_solution(k, xr[:, None, :], sources[None, :, :])
    return MeasurementSet(k, receivers, incident + scattered, sources)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def uniform_draws(seed: int, count: int) -> np.ndarray:
    """Counter-based SplitMix64 stream mapped to [-1, 1).

    Draw i is splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2^64),
    converted via (z >> 11) * 2^-53 * 2 - 1.
    """
    state = np.uint64(seed % 2**64)
    counter = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = state + counter * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0


def add_noise(data: MeasurementSet, noise: NoiseModel) -> MeasurementSet:
    """u + eps r1 |u| exp(i pi r2) with r1, r2 drawn per entry in row-major order."""
    u = data.data
    if noise.epsilon == 0:
        return replace(data, data=u.copy())
    draws = uniform_draws(noise.seed, 2 * u.size).reshape(u.shape + (2,))
    r1, r2 = draws[..., 0], draws[..., 1]
    noisy = u + noise.epsilon * r1 * np.abs(u) * np.exp(1j * np.pi * r2)
    return replace(data, data=noisy)
