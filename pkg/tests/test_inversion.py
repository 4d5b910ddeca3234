import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coinversion.forward import synthesize_measurements
from coinversion.geometry import AuxiliaryCurve, ReceiverArray, StarCurve, make_shape, trapezoid_rule
from coinversion.inversion import (
    PENALTY_WEIGHT,
    DefectModel,
    DiscreteOperator,
    InversionParams,
    ParameterVector,
    admissibility_penalty,
    admissible_start_radius,
    assemble_S,
    assemble_S1,
    defect_residual,
    evaluate_mu,
    fd_jacobian,
    inner,
    levenberg_marquardt,
    reconstruct,
    tikhonov_solve,
    wnorm,
)
from coinversion.specfun import fundamental_solution

K = 5.0
LAM = AuxiliaryCurve(0.6)
RULE = trapezoid_rule(64)
REC = ReceiverArray()
SOURCES = np.array([(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)])
CFG = InversionParams(alpha=1e-8, M=8)


def unit_circle_params(sources=SOURCES, degree=8):
    return ParameterVector.initial(1.0, LAM.radius, degree, sources)


@pytest.fixture(scope="module")
def S():
    return assemble_S(LAM, RULE, REC, K)


@pytest.fixture(scope="module")
def clean():
    return synthesize_measurements(make_shape("circle"), K, SOURCES, REC)


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# -- operators -----------------------------------------------------------------


def test_assemble_S_shape_and_entries(S):
    assert S.shape == (120, 64)
    y = LAM.point(RULE.nodes)
    for r, l in [(0, 0), (17, 40), (119, 63)]:
        assert S.matrix[r, l] == fundamental_solution(K, REC.points[r], y[l])
    assert np.allclose(S.col_weights, 2 * np.pi * 0.6 / 64, rtol=1e-15)
    assert np.allclose(S.row_weights, 4 * 2 * np.pi / 120, rtol=1e-15)


def test_assemble_S_hankel_bound(S):
    d_min = REC.R - LAM.radius
    assert np.max(np.abs(S.matrix)) <= 0.25 * np.sqrt(2 / (np.pi * K * d_min))


def test_assemble_S_lambda_outside():
    with pytest.raises(ValueError):
        assemble_S(AuxiliaryCurve(5.0), RULE, REC, K)


def test_discrete_operator_weight_checks():
    with pytest.raises(ValueError):
        DiscreteOperator(np.ones((2, 3)), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        DiscreteOperator(np.ones((2, 3)), np.array([1.0, 0.0, 1.0]), np.ones(2))


@pytest.mark.parametrize("seed", range(5))
def test_adjoint_identity(S, seed):
    rng = np.random.default_rng(seed)
    phi, g = rand_c(rng, 64), rand_c(rng, 120)
    lhs = inner(S.apply(phi), g, S.row_weights)
    rhs = inner(phi, S.adjoint(g), S.col_weights)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_tikhonov_zero_rhs(S):
    assert np.array_equal(tikhonov_solve(S, np.zeros(120), 1e-6), np.zeros(64))


@pytest.mark.parametrize("alpha", [1e-2, 1e-4])
@pytest.mark.parametrize("seed", range(3))
def test_tikhonov_normal_equation(S, alpha, seed):
    rhs = rand_c(np.random.default_rng(seed), 120)
    phi = tikhonov_solve(S, rhs, alpha)
    Sr = S.adjoint(rhs)
    res = alpha * phi + S.adjoint(S.apply(phi)) - Sr
    assert wnorm(res, S.col_weights) <= 1e-10 * wnorm(Sr, S.col_weights)
    assert wnorm(phi, S.col_weights) <= wnorm(Sr, S.col_weights) / alpha


def test_tikhonov_path_monotone(S):
    rhs = rand_c(np.random.default_rng(7), 120)
    norms = [wnorm(tikhonov_solve(S, rhs, a), S.col_weights) for a in (1e-10, 1e-8, 1e-6, 1e-4)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_tikhonov_guards(S):
    with pytest.raises(ValueError):
        tikhonov_solve(S, np.ones(120), 0.0)
    with pytest.raises(ValueError):
        tikhonov_solve(S, np.ones(10), 1e-6)


def test_tikhonov_multiple_columns(S):
    rhs = rand_c(np.random.default_rng(3), 120, 3)
    block = tikhonov_solve(S, rhs, 1e-6)
    for j in range(3):
        assert np.allclose(block[:, j], tikhonov_solve(S, rhs[:, j], 1e-6), rtol=1e-13, atol=0)


def test_S1_circle_weights():
    gamma = StarCurve.circle(1.0, 0.6, 8)
    assert gamma.a[0] == pytest.approx(0.4)
    S1 = assemble_S1(LAM, RULE, gamma, RULE, K)
    assert np.allclose(S1.row_weights, 2 * np.pi / 64, rtol=1e-14)


def test_S1_kernel_symmetry():
    gamma = StarCurve.circle(1.0, 0.6, 8)
    S1 = assemble_S1(LAM, RULE, gamma, RULE, K)
    x, y = gamma.point(RULE.nodes), LAM.point(RULE.nodes)
    swapped = fundamental_solution(K, y[None, :, :], x[:, None, :])
    assert np.array_equal(S1.matrix, swapped)


def test_S1_perturbation_changes_rows_only():
    base = StarCurve.circle(1.0, 0.6, 8)
    a = base.a.copy()
    a[1] = 0.1
    bumped = StarCurve(0.6, a, base.b)
    S0 = assemble_S1(LAM, RULE, base, RULE, K)
    S1 = assemble_S1(LAM, RULE, bumped, RULE, K)
    assert np.array_equal(S0.col_weights, S1.col_weights)
    assert not np.allclose(S0.row_weights, S1.row_weights)
    assert np.any(S0.matrix != S1.matrix)


def test_S1_lambda_not_interior():
    with pytest.raises(ValueError):
        assemble_S1(LAM, RULE, StarCurve.circle(0.5, 0.6, 4), RULE, K)


# -- defect --------------------------------------------------------------------


def test_defect_length(clean):
    assert defect_residual(unit_circle_params(), clean, CFG).shape == (2 * 64 * 4,)


def test_defect_small_at_truth(clean):
    r = defect_residual(unit_circle_params(), clean, CFG)
    data_norm = wnorm(clean.data, REC.weight)
    assert 0 < np.linalg.norm(r) <= 1e-2 * data_norm


def test_defect_grows_when_source_moves(clean):
    moved = SOURCES.copy()
    moved[1] += (0.5, 0.0)
    r0 = np.linalg.norm(defect_residual(unit_circle_params(), clean, CFG))
    r1 = np.linalg.norm(defect_residual(unit_circle_params(moved), clean, CFG))
    assert r1 > r0


def test_defect_layout(clean):
    model = DefectModel(clean, CFG)
    p = unit_circle_params()
    fields, w = model.boundary_fields(p.curve(0.6), SOURCES)
    r = model.residual(p.to_array()).reshape(4, 2, 64)
    assert np.allclose(r[2, 0], np.sqrt(w) * fields[:, 2].real, rtol=0, atol=0)
    assert np.allclose(r[2, 1], np.sqrt(w) * fields[:, 2].imag, rtol=0, atol=0)


def _first_two_terms(phis, sources, data, S):
    xr = REC.points
    misfit = data.data - fundamental_solution(K, xr[:, None, :], sources[None, :, :]) - S.apply(phis)
    reg = CFG.alpha * np.sum(S.col_weights[:, None] * np.abs(phis) ** 2)
    return np.sum(S.row_weights[:, None] * np.abs(misfit) ** 2) + reg


def _third_term(phis, p):
    gamma = p.curve(0.6)
    S1 = assemble_S1(LAM, RULE, gamma, RULE, K)
    ui = fundamental_solution(K, gamma.point(RULE.nodes)[:, None, :], p.sources[None, :, :])
    return np.sum(S1.row_weights[:, None] * np.abs(ui + S1.apply(phis)) ** 2)


def test_variable_projection_consistency(clean, S):
    p = unit_circle_params(SOURCES + 0.05)
    model = DefectModel(clean, CFG)
    phis = model.densities(p.sources)
    r = model.residual(p.to_array())
    mu = evaluate_mu(phis.T, p, clean, CFG)
    third = mu - _first_two_terms(phis, p.sources, clean, S)
    assert third == pytest.approx(float(r @ r), rel=1e-9)
    assert _third_term(phis, p) == pytest.approx(float(r @ r), rel=1e-12)


def test_mu_at_zero_density(clean):
    p = unit_circle_params()
    mu = evaluate_mu(np.zeros((4, 64)), p, clean, CFG)
    us = clean.data - fundamental_solution(K, REC.points[:, None, :], SOURCES[None, :, :])
    expected = REC.weight * np.sum(np.abs(us) ** 2) + _third_term(np.zeros((64, 4)), p)
    assert mu == pytest.approx(expected, rel=1e-12)
    assert mu >= 0


def test_mu_tikhonov_optimality(clean, S):
    p = unit_circle_params()
    phis = DefectModel(clean, CFG).densities(SOURCES)
    best = _first_two_terms(phis, SOURCES, clean, S)
    rng = np.random.default_rng(11)
    for _ in range(100):
        trial = phis + 1e-3 * np.abs(phis).max() * rand_c(rng, *phis.shape)
        assert _first_two_terms(trial, SOURCES, clean, S) >= best
    direct = evaluate_mu(phis.T, p, clean, CFG) - _third_term(phis, p)
    assert direct == pytest.approx(best, rel=1e-9)


def test_penalty_zero_when_admissible(clean):
    assert not np.any(admissibility_penalty(unit_circle_params(), clean, CFG))


def test_penalty_source_inside(clean):
    bad = SOURCES.copy()
    bad[0] = (0.5, 0.0)
    pen = admissibility_penalty(unit_circle_params(bad), clean, CFG)
    assert pen[-4] == pytest.approx(PENALTY_WEIGHT * 0.5)
    assert not np.any(pen[:-4])


def test_penalty_radius_bounds(clean):
    p = ParameterVector.initial(2.7, 0.6, 8, SOURCES * 1.5)
    pen = admissibility_penalty(p, clean, CFG)
    assert np.allclose(pen[:256], PENALTY_WEIGHT * 0.2)


def test_start_radius_clamped_into_band(clean):
    cfg = InversionParams()
    assert admissible_start_radius(1.3, 0.6, cfg) == 1.3
    lo = admissible_start_radius(0.5, 0.6, cfg)
    assert lo == pytest.approx(1.02 * 0.6 * 1.01)
    assert admissible_start_radius(3.0, 0.6, cfg) == pytest.approx(2.5 * 0.99)
    p = ParameterVector.initial(lo, 0.6, 8, SOURCES)
    assert not np.any(admissibility_penalty(p, clean, CFG))


def test_model_keeps_length_when_lambda_outside_gamma(clean):
    model = DefectModel(clean, CFG)
    p = ParameterVector.initial(0.5, 0.6, 8, SOURCES)
    out = model(p.to_array())
    assert out.shape == (512 + 256 + 4,)
    assert np.all(np.isfinite(out))


def test_reconstruct_rejects_inadmissible(clean):
    bad = SOURCES.copy()
    bad[0] = (0.2, 0.0)
    with pytest.raises(ValueError):
        reconstruct(clean, unit_circle_params(bad), CFG)


def test_params_roundtrip():
    p = unit_circle_params()
    q = ParameterVector.from_array(p.to_array(), 8)
    assert np.array_equal(q.boundary, p.boundary)
    assert np.array_equal(q.sources, p.sources)
    with pytest.raises(ValueError):
        ParameterVector(np.zeros(4), SOURCES)


def test_inversion_params_validation():
    with pytest.raises(ValueError):
        InversionParams(alpha=0)
    with pytest.raises(ValueError):
        InversionParams(M=0)


# -- Levenberg-Marquardt ---------------------------------------------------------


def test_fd_jacobian_richardson(clean):
    model = DefectModel(clean, InversionParams(alpha=1e-8, M=2))
    x = ParameterVector.initial(1.05, 0.6, 2, SOURCES + 0.03).to_array()
    x[1:5] = [0.02, -0.01, 0.015, 0.01]
    f0 = model.residual(x)
    J5 = fd_jacobian(model.residual, x, f0, 1e-5)
    J6 = fd_jacobian(model.residual, x, f0, 1e-6)
    assert np.linalg.norm(J5 - J6) <= 1e-3 * np.linalg.norm(J6)


def test_lm_linear_exact():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 6))
    b = rng.standard_normal(30)
    exact = np.linalg.lstsq(A, b, rcond=None)[0]
    res = levenberg_marquardt(lambda p: A @ p - b, np.ones(6), InversionParams(fd_step=1e-2, max_iters=2))
    assert res.params is None and res.iterations <= 2
    assert np.linalg.norm(res.x - exact) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lm_history_monotone(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.5, 2.0, 3)

    def rosen(p):
        return np.array([10 * (p[1] - p[0] ** 2), 1 - p[0], c[0] * (p[2] - c[1]), np.sin(p[2]) * c[2]])

    res = levenberg_marquardt(rosen, rng.uniform(-1, 1, 3), InversionParams(max_iters=50))
    assert np.all(np.diff(res.defect_history) <= 0)
    assert len(res.defect_history) == res.iterations + 1 or res.reason == "no decrease"


def test_lm_stays_at_minimizer(clean):
    cfg = InversionParams(alpha=1e-8, M=2)
    model = DefectModel(clean, cfg)
    p0 = ParameterVector.initial(1.0, 0.6, 2, SOURCES)
    first = levenberg_marquardt(model, p0, cfg)
    again = levenberg_marquardt(model, first.params, cfg)
    assert again.converged
    assert np.linalg.norm(again.x - first.x) <= 10 * cfg.lm_xtol


def test_reconstruct_noiseless_circle_small(clean):
    cfg = InversionParams(alpha=1e-8, M=2)
    p0 = ParameterVector.initial(1.1, 0.6, 2, SOURCES + 0.02)
    res = reconstruct(clean, p0, cfg)
    assert np.all(np.diff(res.defect_history) <= 0)
    r = res.params.curve(0.6).check_radii()
    assert np.max(np.abs(r - 1.0)) < 0.02
    assert np.max(np.hypot(*(res.recovered_sources - SOURCES).T)) < 0.02
