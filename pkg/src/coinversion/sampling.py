"""Sampling-type initial guesses: source points from the total-field
direct-sampling indicators, then an approximate reverse-time-migration image
of the obstacle built from the estimated sources.

Source indices are zero-based and follow the measurement columns.
"""

from dataclasses import dataclass

import numpy as np

from .forward import MeasurementSet
from .geometry import SamplingGrid, grid_points
from .specfun import fundamental_solution


@dataclass(frozen=True, eq=False)
class ImageField:
    """Values on a sampling grid, row-major with x fastest."""

    grid: SamplingGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.nx * self.grid.ny:
            raise ValueError("image size does not match grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))

    @property
    def peak(self) -> np.ndarray:
        return grid_points(self.grid)[self.argmax]

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.ny, self.grid.nx)


@dataclass(frozen=True, eq=False)
class SourceEstimate:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 2))

    def __len__(self):
        return self.points.shape[0]


def normalized(grid, raw) -> ImageField:
    top = np.max(raw)
    if not top > 0:
        raise ValueError("cannot normalise an image without a positive maximum")
    return ImageField(grid, raw / top)


def backprojection(data: MeasurementSet, grid: SamplingGrid, columns) -> np.ndarray:
    """int_{Gamma_R} conj(u(x)) Phi(x, y) ds(x) for every grid point y.

    ``columns`` is an N_R x m array of receiver values; returns (n_grid, m).
    """
    rec = data.receivers
    kernel = fundamental_solution(data.k, grid_points(grid)[:, None, :], rec.points[None, :, :])
    return kernel @ (rec.weight * np.conj(columns))


def dsm_indicator(data: MeasurementSet, j: int, grid: SamplingGrid, k: float = None) -> ImageField:
    """Normalised indicator I_j(y) = |int conj(u(x; z_j)) Phi(x, y) ds(x)|."""
    _check_k(data, k)
    if not 0 <= j < data.n_sources:
        raise IndexError(f"source index {j} out of range")
    raw = np.abs(backprojection(data, grid, data.data[:, j : j + 1])[:, 0])
    return normalized(grid, raw)


def dsm_indicators(data: MeasurementSet, grid: SamplingGrid, k: float = None) -> list:
    _check_k(data, k)
    raw = np.abs(backprojection(data, grid, data.data))
    return [normalized(grid, raw[:, j]) for j in range(data.n_sources)]


def locate_sources(data: MeasurementSet, grid: SamplingGrid, k: float = None, indicators=None) -> SourceEstimate:
    """Grid maximiser of each indicator; ties go to the lowest row-major index."""
    if indicators is None:
        indicators = dsm_indicators(data, grid, k)
    return SourceEstimate(np.array([img.peak for img in indicators]).reshape(-1, 2))


def approx_scattered(data: MeasurementSet, estimate: SourceEstimate, j: int, k: float = None) -> np.ndarray:
    """u(x_r; z_j) - Phi(x_r, z~_j) on the receivers."""
    _check_k(data, k)
    return data.data[:, j] - fundamental_solution(data.k, data.receivers.points, estimate.points[j])


def rtm_image(data: MeasurementSet, estimate: SourceEstimate, grid: SamplingGrid, k: float = None) -> ImageField:
    """Approximate RTM functional -k^2 Im sum_j Phi(y, z~_j) int conj(u_j^s) Phi(x, y) ds(x)."""
    _check_k(data, k)
    if len(estimate) != data.n_sources:
        raise ValueError("one estimated source per measurement column is required")
    scattered = np.stack([approx_scattered(data, estimate, j) for j in range(data.n_sources)], axis=1)
    back = backprojection(data, grid, scattered)
    incident = fundamental_solution(data.k, grid_points(grid)[:, None, :], estimate.points[None, :, :])
    raw = -data.k**2 * np.imag(np.sum(incident * back, axis=1))
    return normalized(grid, raw)


def initial_radius(image: ImageField) -> float:
    """Distance from the origin to the image maximiser."""
    if not np.any(image.values):
        raise ValueError("image is identically zero")
    radius = float(np.hypot(*image.peak))
    if radius < 1e-12:
        raise ValueError("image peaks at the origin; no usable initial radius")
    return radius


def _check_k(data, k):
    if k is not None and k != data.k:
        raise ValueError(f"wavenumber {k} differs from the measurement wavenumber {data.k}")
