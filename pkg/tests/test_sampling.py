import numpy as np
import pytest

from coinversion.forward import MeasurementSet, NoiseModel, add_noise, synthesize_measurements
from coinversion.geometry import ReceiverArray, SamplingGrid, grid_points, make_shape
from coinversion.sampling import (
    ImageField,
    SourceEstimate,
    approx_scattered,
    backprojection,
    dsm_indicator,
    dsm_indicators,
    initial_radius,
    locate_sources,
    rtm_image,
)
from coinversion.specfun import fundamental_solution

K = 5.0
REC = ReceiverArray()
OMEGA1 = SamplingGrid.square(2.5, 200)
CIRCLE_SOURCES = np.array([(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)])


def incident_only(sources, k=K):
    sources = np.atleast_2d(sources)
    data = fundamental_solution(k, REC.points[:, None, :], sources[None, :, :])
    return MeasurementSet(k, REC, data, sources)


@pytest.fixture(scope="module")
def circle_clean():
    return synthesize_measurements(make_shape("circle"), K, CIRCLE_SOURCES, REC)


@pytest.fixture(scope="module")
def circle_noisy(circle_clean):
    return add_noise(circle_clean, NoiseModel(0.1, 0))


def test_indicator_normalized():
    img = dsm_indicator(incident_only([(2.0, 2.0)]), 0, OMEGA1)
    assert img.values.max() == 1.0
    assert np.all(np.isfinite(img.values)) and np.all(img.values >= 0)


def test_indicator_peaks_at_free_source():
    img = dsm_indicator(incident_only([(2.0, 2.0)]), 0, OMEGA1)
    dx, _ = OMEGA1.spacing
    assert np.hypot(*(img.peak - (2.0, 2.0))) <= dx * np.sqrt(2) + 1e-12
    assert np.max(np.abs(img.peak - (2.0, 2.0))) <= dx


def test_indicator_decay_along_ray():
    ms = incident_only([(2.0, 2.0)])
    pts = SamplingGrid(2.1, 3.0, 2.0, 2.0 + 1e-9, 2, 1)
    vals = np.abs(backprojection(ms, pts, ms.data)[:, 0])
    assert vals[1] < vals[0]


def test_indicator_index_checks():
    ms = incident_only([(2.0, 2.0)])
    with pytest.raises(IndexError):
        dsm_indicator(ms, 1, OMEGA1)
    with pytest.raises(ValueError):
        dsm_indicator(ms, 0, OMEGA1, k=4.0)


def test_indicator_phase_invariance(circle_noisy):
    grid = SamplingGrid.square(2.5, 40)
    rotated = MeasurementSet(K, REC, circle_noisy.data * np.exp(0.7j))
    for j in range(4):
        a = dsm_indicator(circle_noisy, j, grid).values
        b = dsm_indicator(rotated, j, grid).values
        assert np.max(np.abs(a - b)) < 1e-12


def test_indicator_scale_invariance(circle_noisy):
    grid = SamplingGrid.square(2.5, 40)
    scaled = MeasurementSet(K, REC, circle_noisy.data * 3.7)
    raw = np.abs(backprojection(circle_noisy, grid, circle_noisy.data))
    raw_s = np.abs(backprojection(scaled, grid, scaled.data))
    assert np.allclose(raw_s, 3.7 * raw, rtol=1e-12)
    a, b = dsm_indicator(circle_noisy, 2, grid), dsm_indicator(scaled, 2, grid)
    assert a.argmax == b.argmax
    assert np.allclose(a.values, b.values, rtol=1e-12)


def test_locate_noiseless_circle(circle_clean):
    est = locate_sources(circle_clean, OMEGA1)
    dx, dy = OMEGA1.spacing
    assert len(est) == 4
    assert np.all(np.hypot(*(est.points - CIRCLE_SOURCES).T) <= np.hypot(dx, dy))


def test_locate_deterministic(circle_noisy):
    a = locate_sources(circle_noisy, OMEGA1).points
    b = locate_sources(circle_noisy, OMEGA1).points
    assert np.array_equal(a, b)


def test_locate_tie_break_lowest_index():
    grid = SamplingGrid.square(1.0, 3)
    img = ImageField(grid, np.array([0, 1, 0, 0, 0, 0, 1, 0, 0.0]))
    assert img.argmax == 1
    assert np.array_equal(img.peak, [0.0, -1.0])
    est = locate_sources(None, grid, indicators=[img])
    assert np.array_equal(est.points, [[0.0, -1.0]])


def test_locate_starfish_s1_reference_point():
    # reference DSM estimate (1.98, 1.98) for the exact (2, 2)
    S1 = np.array([(2, 2), (-0.5, 1.8), (-1.6, -1), (0, -2.2), (2, -1.2)], dtype=float)
    ms = add_noise(synthesize_measurements(make_shape("starfish"), K, S1, REC), NoiseModel(0.1, 0))
    est = locate_sources(ms, OMEGA1)
    assert np.hypot(*(est.points[0] - (1.98, 1.98))) < 0.04
    assert np.all(np.hypot(*(est.points - S1).T) < 0.08)


def test_approx_scattered_exact_cancellation(circle_clean):
    est = SourceEstimate(CIRCLE_SOURCES)
    for j in range(4):
        us = approx_scattered(circle_clean, est, j)
        exact = circle_clean.data[:, j] - fundamental_solution(K, REC.points, CIRCLE_SOURCES[j])
        assert np.array_equal(us, exact)


def test_approx_scattered_zero_data():
    ms = MeasurementSet(K, REC, np.zeros((REC.count, 1), dtype=complex))
    est = SourceEstimate([(1.5, 0.3)])
    assert np.allclose(approx_scattered(ms, est, 0), -fundamental_solution(K, REC.points, (1.5, 0.3)), atol=0)


def test_approx_scattered_perturbation_identity(circle_clean):
    z = CIRCLE_SOURCES[1]
    zt = z + (0.03, -0.02)
    a = approx_scattered(circle_clean, SourceEstimate(np.vstack([CIRCLE_SOURCES[:1], zt])), 1)
    b = approx_scattered(circle_clean, SourceEstimate(CIRCLE_SOURCES[:2]), 1)
    expected = np.abs(fundamental_solution(K, REC.points, z) - fundamental_solution(K, REC.points, zt))
    assert np.allclose(np.abs(a - b), expected, rtol=1e-10, atol=1e-15)


def test_rtm_normalized_and_real(circle_noisy):
    est = locate_sources(circle_noisy, OMEGA1)
    img = rtm_image(circle_noisy, est, SamplingGrid.square(1.2, 100))
    assert img.values.max() == 1.0
    assert img.values.dtype == np.float64


def test_rtm_peak_near_circle(circle_noisy):
    est = locate_sources(circle_noisy, OMEGA1)
    img = rtm_image(circle_noisy, est, SamplingGrid.square(1.2, 100))
    assert abs(np.hypot(*img.peak) - 1.0) <= 0.15
    assert 0.8 <= initial_radius(img) <= 1.2


def test_rtm_matches_classical_functional(circle_clean):
    grid = SamplingGrid.square(1.2, 15)
    img = rtm_image(circle_clean, SourceEstimate(CIRCLE_SOURCES), grid)
    y = grid_points(grid)
    us = circle_clean.data - fundamental_solution(K, REC.points[:, None, :], CIRCLE_SOURCES[None, :, :])
    raw = np.zeros(len(y))
    for j in range(4):
        for i, p in enumerate(y):
            back = np.sum(REC.weight * np.conj(us[:, j]) * fundamental_solution(K, REC.points, p))
            raw[i] += -(K**2) * np.imag(fundamental_solution(K, p, CIRCLE_SOURCES[j]) * back)
    assert np.allclose(img.values, raw / raw.max(), atol=1e-12)


def test_rtm_source_count_mismatch(circle_clean):
    with pytest.raises(ValueError):
        rtm_image(circle_clean, SourceEstimate(CIRCLE_SOURCES[:3]), SamplingGrid.square(1.2, 10))


def test_initial_radius_definition():
    grid = SamplingGrid(1.02, 2.0, 0.1, 1.0, 2, 2)
    img = ImageField(grid, np.array([1.0, 0.2, 0.3, 0.1]))
    assert initial_radius(img) == pytest.approx(np.sqrt(1.02**2 + 0.1**2), abs=1e-15)
    assert initial_radius(img) == pytest.approx(1.02489, abs=1e-5)


def test_initial_radius_errors():
    grid = SamplingGrid.square(1.0, 3)
    with pytest.raises(ValueError):
        initial_radius(ImageField(grid, np.zeros(9)))
    centre = np.zeros(9)
    centre[4] = 1.0
    with pytest.raises(ValueError):
        initial_radius(ImageField(grid, centre))


def test_image_field_validation():
    grid = SamplingGrid.square(1.0, 3)
    with pytest.raises(ValueError):
        ImageField(grid, np.ones(8))
    with pytest.raises(ValueError):
        ImageField(grid, np.full(9, np.nan))


def test_dsm_indicators_match_single(circle_noisy):
    grid = SamplingGrid.square(2.5, 30)
    many = dsm_indicators(circle_noisy, grid)
    for j, img in enumerate(many):
        assert np.allclose(img.values, dsm_indicator(circle_noisy, j, grid).values, atol=1e-15)
