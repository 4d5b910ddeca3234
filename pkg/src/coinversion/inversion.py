"""Decomposition-type co-inversion for the boundary and the source points.

For a trial pair (Gamma, z') each measured column is reduced by the incident
field of z'_j, the remainder is represented as a single-layer potential on an
auxiliary circle Lambda via a Tikhonov-regularised density, and the defect is
the total field u^i(.; z'_j) + S1 phi_j on Gamma. The boundary (Fourier
radius) and the source coordinates are found by Levenberg-Marquardt on the
stacked, quadrature-weighted defect.

Discrete inner products: <f, g>_{Gamma_R} = sum_r w_R f_r conj(g_r) with the
receiver arc weight w_R, <phi, psi>_Lambda = sum_l c_l phi_l conj(psi_l) with
c_l = 2 pi r_Lambda / n. Residual entries carry square-root weights so the
Euclidean norm is the discrete L2 norm.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .forward import MeasurementSet
from .geometry import (
    BOUND_HI,
    BOUND_LO,
    N_CHECK_ANGLES,
    TWO_PI,
    AuxiliaryCurve,
    QuadratureRule,
    ReceiverArray,
    StarCurve,
    trapezoid_rule,
)
from .specfun import fundamental_solution

logger = logging.getLogger(__name__)

PENALTY_WEIGHT = 1e3
# Gamma must keep this clearance (relative) from the auxiliary circle.
LAMBDA_CLEARANCE = 1.02


@dataclass(frozen=True)
class InversionParams:
    alpha: float = 1e-8
    M: int = 8
    lm_ftol: float = 1e-6
    lm_xtol: float = 1e-6
    max_iters: int = 100
    fd_step: float = 1e-6
    n_gamma: int = 64
    n_lambda: int = 64
    bound_lo: float = BOUND_LO
    bound_hi: float = BOUND_HI

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.M < 1:
            raise ValueError("ansatz degree M must be at least 1")
        if min(self.lm_ftol, self.lm_xtol, self.fd_step) <= 0 or self.max_iters < 1:
            raise ValueError("LM tolerances, fd_step and max_iters must be positive")


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Boundary coefficients (a_0, a_1..a_M, b_1..b_M) and source points (N x 2)."""

    boundary: np.ndarray
    sources: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundary, dtype=float).ravel()
        if b.size % 2 != 1 or b.size < 3:
            raise ValueError("boundary vector must have 2M+1 entries")
        object.__setattr__(self, "boundary", b)
        object.__setattr__(self, "sources", np.asarray(self.sources, dtype=float).reshape(-1, 2))

    @property
    def degree(self):
        return (self.boundary.size - 1) // 2

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.boundary, self.sources.ravel()])

    @classmethod
    def from_array(cls, x, degree):
        x = np.asarray(x, dtype=float)
        nb = 2 * degree + 1
        return cls(x[:nb], x[nb:].reshape(-1, 2))

    def curve(self, base_radius, bound_lo=BOUND_LO, bound_hi=BOUND_HI) -> StarCurve:
        return StarCurve.from_vector(self.boundary, base_radius, bound_lo=bound_lo, bound_hi=bound_hi)

    @classmethod
    def initial(cls, radius, base_radius, degree, sources):
        return cls(StarCurve.circle(radius, base_radius, degree).to_vector(), sources)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Kernel matrix with quadrature weights on both sides.

    Applying the operator to nodal density values is ``matrix @ (col_weights * phi)``.
    """

    matrix: np.ndarray
    col_weights: np.ndarray
    row_weights: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape != (self.row_weights.size, self.col_weights.size):
            raise ValueError("weights do not match matrix dimensions")
        if np.any(self.col_weights <= 0) or np.any(self.row_weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, phi):
        return self.matrix @ (self.col_weights[:, None] * phi if np.ndim(phi) == 2 else self.col_weights * phi)

    def adjoint(self, g):
        w = self.row_weights[:, None] if np.ndim(g) == 2 else self.row_weights
        return self.matrix.conj().T @ (w * g)

    def tikhonov_map(self, alpha) -> np.ndarray:
        """Matrix T with T @ rhs solving alpha phi + S*S phi = S* rhs."""
        sc = np.sqrt(self.col_weights)
        sr = np.sqrt(self.row_weights)
        B = sr[:, None] * self.matrix * sc[None, :]
        U, s, Vh = np.linalg.svd(B, full_matrices=False)
        filt = s / (s**2 + alpha)
        return (Vh.conj().T * filt / sc[:, None]) @ (U.conj().T * sr[None, :])


def inner(f, g, weights):
    return np.sum(weights * f * np.conj(g))


def wnorm(f, weights):
    return float(np.sqrt(np.sum(weights * np.abs(f) ** 2)))


def assemble_S(lambda_curve: AuxiliaryCurve, rule: QuadratureRule, receivers: ReceiverArray, k: float) -> DiscreteOperator:
    """Single-layer operator from Lambda to the receiver curve."""
    y = lambda_curve.point(rule.nodes)
    if np.max(np.hypot(y[:, 0], y[:, 1])) >= receivers.R:
        raise ValueError("auxiliary curve must lie inside the receiver circle")
    matrix = fundamental_solution(k, receivers.points[:, None, :], y[None, :, :])
    col = rule.weights * lambda_curve.speed(rule.nodes)
    row = np.full(receivers.count, receivers.weight)
    return DiscreteOperator(matrix, col, row)


def assemble_S1(
    lambda_curve: AuxiliaryCurve, rule: QuadratureRule, gamma: StarCurve, gamma_rule: QuadratureRule, k: float
) -> DiscreteOperator:
    """Single-layer operator from Lambda to the trial boundary Gamma."""
    if np.any(gamma.radius(gamma_rule.nodes) <= lambda_curve.radius) or np.any(lambda_curve.center):
        raise ValueError("auxiliary curve is not interior to Gamma")
    y = lambda_curve.point(rule.nodes)
    x = gamma.point(gamma_rule.nodes)
    matrix = fundamental_solution(k, x[:, None, :], y[None, :, :])
    col = rule.weights * lambda_curve.speed(rule.nodes)
    row = gamma_rule.weights * gamma.speed(gamma_rule.nodes)
    return DiscreteOperator(matrix, col, row)


def tikhonov_solve(S: DiscreteOperator, rhs, alpha: float) -> np.ndarray:
    """Regularised density solving alpha phi + S*S phi = S* rhs."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.shape[0] != S.shape[0]:
        raise ValueError("rhs length must equal the number of operator rows")
    phi = S.tikhonov_map(alpha) @ rhs
    if not np.all(np.isfinite(phi)):
        raise np.linalg.LinAlgError("Tikhonov system is numerically singular")
    return phi


class DefectModel:
    """Residual map x -> weighted defect for fixed data, Lambda and parameters.

    The receiver operator and its Tikhonov map do not depend on (Gamma, z') and
    are built once.
    """

    def __init__(self, data: MeasurementSet, cfg: InversionParams, lambda_curve: AuxiliaryCurve = None):
        self.data = data
        self.cfg = cfg
        self.k = data.k
        self.lam = lambda_curve or AuxiliaryCurve()
        self.lam_rule = trapezoid_rule(cfg.n_lambda)
        self.gamma_rule = trapezoid_rule(cfg.n_gamma)
        self.S = assemble_S(self.lam, self.lam_rule, data.receivers, self.k)
        self.T = self.S.tikhonov_map(cfg.alpha)
        self.check_t = TWO_PI * np.arange(N_CHECK_ANGLES) / N_CHECK_ANGLES

    @property
    def n_sources(self):
        return self.data.n_sources

    def unpack(self, x):
        p = ParameterVector.from_array(x, self.cfg.M)
        return p.curve(self.lam.radius, self.cfg.bound_lo, self.cfg.bound_hi), p.sources

    def densities(self, sources):
        xr = self.data.receivers.points
        rhs = self.data.data - fundamental_solution(self.k, xr[:, None, :], sources[None, :, :])
        return self.T @ rhs

    def boundary_fields(self, gamma, sources, phis=None):
        """Total field u^i(.; z'_j) + S1 phi_j at the Gamma nodes, one column per j."""
        if phis is None:
            phis = self.densities(sources)
        S1 = assemble_S1(self.lam, self.lam_rule, gamma, self.gamma_rule, self.k)
        xg = gamma.point(self.gamma_rule.nodes)
        incident = fundamental_solution(self.k, xg[:, None, :], sources[None, :, :])
        return incident + S1.apply(phis), S1.row_weights

    def residual(self, x) -> np.ndarray:
        gamma, sources = self.unpack(x)
        fields, w = self.boundary_fields(gamma, sources)
        weighted = np.sqrt(w)[:, None] * fields
        # per source: Re over Gamma nodes, then Im
        return np.concatenate([weighted.real, weighted.imag], axis=0).T.ravel()

    def penalty(self, x) -> np.ndarray:
        """Violation of the admissible class, zero inside it.

        One entry per check angle (radius bounds and clearance from Lambda) and
        one per source (outside Gamma, inside the receiver circle).
        """
        gamma, sources = self.unpack(x)
        lo = max(self.cfg.bound_lo, LAMBDA_CLEARANCE * self.lam.radius)
        r = gamma.radius(self.check_t)
        shape = np.maximum(lo - r, 0) + np.maximum(r - self.cfg.bound_hi, 0)
        dist = np.hypot(sources[:, 0], sources[:, 1])
        inside = np.maximum(gamma.radius(np.arctan2(sources[:, 1], sources[:, 0])) - dist, 0)
        outside = np.maximum(dist - self.data.receivers.R, 0)
        return PENALTY_WEIGHT * np.concatenate([shape, inside + outside])

    def admissible(self, x) -> bool:
        return not np.any(self.penalty(x))

    def __call__(self, x) -> np.ndarray:
        pen = self.penalty(x)
        if np.any(pen[:N_CHECK_ANGLES]):
            gamma, _ = self.unpack(x)
            if np.any(gamma.radius(self.gamma_rule.nodes) <= self.lam.radius):
                # S1 undefined; keep the residual length and let the penalty steer
                return np.concatenate([np.full(2 * self.cfg.n_gamma * self.n_sources, 1.0), pen])
        return np.concatenate([self.residual(x), pen])


def defect_residual(p: ParameterVector, data: MeasurementSet, cfg: InversionParams, lambda_curve=None) -> np.ndarray:
    """Weighted boundary defect, length 2 * n_gamma * N (Re/Im stacked per source)."""
    model = DefectModel(data, cfg, lambda_curve)
    return model.residual(p.to_array())


def admissibility_penalty(p: ParameterVector, data: MeasurementSet, cfg: InversionParams, lambda_curve=None):
    return DefectModel(data, cfg, lambda_curve).penalty(p.to_array())


def evaluate_mu(phis, p: ParameterVector, data: MeasurementSet, cfg: InversionParams, lambda_curve=None) -> float:
    """Full cost: receiver misfit + alpha ||phi||^2 + boundary defect (diagnostic)."""
    model = DefectModel(data, cfg, lambda_curve)
    phis = np.asarray(phis, dtype=complex).reshape(model.n_sources, -1).T
    gamma, sources = model.unpack(p.to_array())
    xr = data.receivers.points
    misfit = data.data - fundamental_solution(data.k, xr[:, None, :], sources[None, :, :]) - model.S.apply(phis)
    fields, w = model.boundary_fields(gamma, sources, phis)
    wr, wc = model.S.row_weights, model.S.col_weights
    total = np.sum(wr[:, None] * np.abs(misfit) ** 2)
    total += cfg.alpha * np.sum(wc[:, None] * np.abs(phis) ** 2)
    total += np.sum(w[:, None] * np.abs(fields) ** 2)
    return float(total)


@dataclass
class ReconstructionResult:
    """Outcome of the LM iteration.

    ``params`` is None when the driver was started from a plain array; the
    raw solution vector is always available as ``x``.
    """

    x: np.ndarray
    params: Optional[ParameterVector]
    defect_history: np.ndarray
    iterations: int
    converged: bool
    reason: str = ""

    @property
    def recovered_sources(self):
        return None if self.params is None else self.params.sources


def fd_jacobian(fn, x, f0, rel_step):
    """Forward-difference Jacobian; step max(rel_step * |x_i|, 1e-8)."""
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        xh = x.copy()
        xh[i] += max(rel_step * abs(x[i]), 1e-8)
        J[:, i] = (fn(xh) - f0) / (xh[i] - x[i])
    return J


def levenberg_marquardt(residual_fn, p0, cfg: InversionParams) -> ReconstructionResult:
    """Levenberg-Marquardt with Marquardt scaling and a forward-difference Jacobian.

    ``p0`` is a ParameterVector (decoded with degree ``cfg.M``) or a plain
    array. Damping starts at 1e-3, is divided by 10 after an accepted step
    and multiplied by 10 after a rejected one; an accepted step whose actual
    decrease matches the linearised prediction to 1e-6 drops the damping to
    zero for the next step. Stops when the relative defect decrease is below
    lm_ftol, the step norm is below lm_xtol, no damped step decreases the
    defect, or after max_iters Jacobians.
    """
    as_params = isinstance(p0, ParameterVector)
    x = p0.to_array() if as_params else np.asarray(p0, dtype=float).copy()
    r = residual_fn(x)
    cost = float(r @ r)
    history = [np.sqrt(cost)]
    lam = 1e-3
    converged, reason = False, "max_iters"
    it = 0
    while it < cfg.max_iters:
        it += 1
        J = fd_jacobian(residual_fn, x, r, cfg.fd_step)
        g = J.T @ r
        JtJ = J.T @ J
        d = np.diag(JtJ).copy()
        d[d <= 0] = 1.0
        accepted = False
        while True:
            A = JtJ + lam * np.diag(d)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(A, -g, rcond=None)[0]
            r_new = residual_fn(x + step)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam = 1e-3 if lam == 0 else lam * 10
            if lam > 1e16:
                break
        if not accepted:
            converged, reason = True, "no decrease"
            break
        lin = r + J @ step
        predicted = cost - float(lin @ lin)
        gain = (cost - cost_new) / predicted if predicted > 0 else 0.0
        decrease = 1 - np.sqrt(cost_new / cost)
        x, r, cost = x + step, r_new, cost_new
        history.append(np.sqrt(cost))
        logger.debug("LM iter %d defect %.6e lambda %.1e gain %.6f", it, history[-1], lam, gain)
        lam = 0.0 if abs(gain - 1) < 1e-6 else lam / 10
        if decrease < cfg.lm_ftol:
            converged, reason = True, "ftol"
            break
        if np.linalg.norm(step) < cfg.lm_xtol:
            converged, reason = True, "xtol"
            break
    params = ParameterVector.from_array(x, cfg.M) if as_params else None
    return ReconstructionResult(x, params, np.array(history), it, converged, reason)


def admissible_start_radius(r0: float, lambda_radius: float, cfg: InversionParams, margin: float = 0.01) -> float:
    """Clamp a starting circle radius into the admissible band.

    The band is [max(bound_lo, clearance * r_Lambda), bound_hi], shrunk by a
    relative ``margin`` so finite-difference probes start inside it.
    """
    lo = max(cfg.bound_lo, LAMBDA_CLEARANCE * lambda_radius) * (1 + margin)
    hi = cfg.bound_hi * (1 - margin)
    return float(min(max(r0, lo), hi))


def reconstruct(data: MeasurementSet, p0: ParameterVector, cfg: InversionParams, lambda_curve=None) -> ReconstructionResult:
    """Minimise the penalised defect starting from ``p0``."""
    model = DefectModel(data, cfg, lambda_curve)
    if not model.admissible(p0.to_array()):
        raise ValueError("initial parameters are not admissible")
    return levenberg_marquardt(model, p0, cfg)
