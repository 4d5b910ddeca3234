"""Reconstruction error measures.

E_D is the discrete relative L2 error between the recovered radial function
and the polar radius of the exact boundary, sampled at n_knots parameter
values. Source errors are Euclidean distances matched by column index.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import TWO_PI, ParametricCurve, StarCurve

ERROR_CSV_HEADER = "label,E_D,max_source_error,source_errors"


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """E_D as a fraction plus per-source distances."""

    E_D: float
    source_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        errs = np.asarray(self.source_errors, dtype=float).ravel()
        if not self.E_D >= 0 or np.any(errs < 0):
            raise ValueError("errors must be nonnegative")
        object.__setattr__(self, "source_errors", errs)

    @property
    def max_source_error(self) -> float:
        return float(errs.max()) if (errs := self.source_errors).size else 0.0

    @property
    def percent(self) -> float:
        return 100.0 * self.E_D

    def to_dict(self) -> dict:
        return {
            "E_D": float(self.E_D),
            "source_errors": [float(v) for v in self.source_errors],
            "max_source_error": self.max_source_error,
        }

    def csv_row(self, label="") -> str:
        from .files import fmt

        errs = ";".join(fmt(v) for v in self.source_errors)
        return f"{label},{fmt(self.E_D)},{fmt(self.max_source_error)},{errs}"


def boundary_error(recon: StarCurve, truth: ParametricCurve, truth_is_starlike: bool = True, n_knots: int = 256) -> float:
    """Relative discrete L2 error of the recovered radius against the truth.

    With ``truth_is_starlike`` the truth is assumed to be parametrised by
    polar angle, so r_M is compared at the knots themselves. Otherwise r_M is
    evaluated at the polar angle atan2(x2, x1) in [0, 2pi) of each truth
    point.
    """
    if n_knots < 16:
        raise ValueError("n_knots must be at least 16")
    t = TWO_PI * np.arange(n_knots) / n_knots
    pts = truth.point(t)
    r_true = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r_true == 0):
        raise ValueError("truth curve passes through the origin; polar angle undefined")
    tau = t if truth_is_starlike else np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
    diff = recon.radius(tau) - r_true
    return float(np.sqrt(np.sum(diff**2)) / np.sqrt(np.sum(r_true**2)))


def source_error(recovered, truth) -> np.ndarray:
    """Distance |recovered_j - truth_j| for each column j."""
    rec = np.asarray(recovered, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth, dtype=float).reshape(-1, 2)
    if rec.shape != tru.shape:
        raise ValueError(f"source lists differ in length ({len(rec)} vs {len(tru)})")
    return np.hypot(*(rec - tru).T)


def error_report(recon: StarCurve, truth: ParametricCurve, recovered, true_sources, truth_is_starlike=True, n_knots=256):
    return ErrorReport(
        boundary_error(recon, truth, truth_is_starlike, n_knots),
        source_error(recovered, true_sources),
    )
