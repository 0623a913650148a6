import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gazepersist.errors import ArgumentError, DegenerateError, TooShortError
from gazepersist.preprocess import (
    NormalizationStats,
    PreprocessConfig,
    apply_gaze_bounds,
    clamp_velocity,
    fit_normalization,
    normalize_and_fill,
    preprocess_corpus,
    preprocess_pipeline,
    segment_sequences,
    sg_velocity,
)

from .conftest import make_recording

CFG = PreprocessConfig()


def _lsq_derivative(x, window=7, order=2):
    """Independent oracle: fit a polynomial to each window, differentiate at the centre."""
    half = window // 2
    t = np.arange(-half, half + 1, dtype=float)
    out = np.full(x.size, np.nan)
    for i in range(half, x.size - half):
        coef = np.polyfit(t, x[i - half : i + half + 1], order)
        out[i] = np.polyval(np.polyder(coef), 0.0)
    return out


# --- config ---


def test_config_defaults():
    assert CFG.h_bounds == (-23.3, 23.3)
    assert CFG.v_bounds == (-18.5, 11.7)
    assert (CFG.sg_window, CFG.sg_polyorder) == (7, 2)
    assert CFG.clamp_deg_per_s == 1000.0
    assert CFG.samples_per_sequence(1000.0) == 5000
    assert CFG.samples_per_sequence(250.0) == 1250


@pytest.mark.parametrize(
    "kwargs", [{"sg_window": 6}, {"sg_window": 3, "sg_polyorder": 3}, {"clamp_deg_per_s": 0}, {"sequence_duration_s": 0}]
)
def test_config_invariants(kwargs):
    with pytest.raises(ArgumentError):
        PreprocessConfig(**kwargs)


def test_config_json_roundtrip():
    cfg = PreprocessConfig(sequences_per_stream=9)
    assert PreprocessConfig.from_json(cfg.to_json()) == cfg


# --- bounds ---


@pytest.mark.parametrize(
    "h, v, valid",
    [(30.0, 0.0, False), (0.0, 11.7, True), (0.0, -20.0, False), (23.3, -18.5, True), (-23.31, 0.0, False), (0.0, 11.71, False)],
)
def test_gaze_bounds(h, v, valid):
    r = apply_gaze_bounds(make_recording([h], [v]), CFG)
    assert bool(r.invalid[0]) is not valid


def test_bounds_keep_valid_samples_and_missing_markers():
    r = make_recording([1.0, np.nan, 2.0, 40.0], [0.5, 0.5, np.nan, 0.0])
    out = apply_gaze_bounds(r, CFG)
    np.testing.assert_array_equal(out.horizontal_deg, [1.0, np.nan, 2.0, np.nan])
    np.testing.assert_array_equal(out.vertical_deg, [0.5, 0.5, np.nan, np.nan])


# --- Savitzky-Golay ---


def test_ramp_velocity():
    t = np.arange(2000)
    vel = sg_velocity(make_recording(0.01 * t, -0.02 * t), CFG)
    np.testing.assert_allclose(vel[0], 10.0, atol=1e-9)
    np.testing.assert_allclose(vel[1], -20.0, atol=1e-9)


def test_quadratic_velocity():
    c, fs = 1e-6, 500.0
    t = np.arange(3000, dtype=float)
    vel = sg_velocity(make_recording(c * t**2, fs=fs), CFG)
    np.testing.assert_allclose(vel[0, 3:-3], 2 * c * t[3:-3] * fs, atol=1e-9)


def test_invalid_sample_poisons_window():
    h = np.full(50, 2.0)
    h[20] = np.nan
    vel = sg_velocity(make_recording(h), CFG)[0]
    bad = np.flatnonzero(np.isnan(vel))
    np.testing.assert_array_equal(bad, np.arange(17, 24))
    assert np.all(vel[~np.isnan(vel)] == 0.0)


def test_invalid_edge_sample():
    h = np.zeros(30)
    h[0] = np.nan
    vel = sg_velocity(make_recording(h), CFG)[0]
    np.testing.assert_array_equal(np.flatnonzero(np.isnan(vel)), np.arange(0, 4))


def test_matches_local_least_squares_oracle():
    x = np.random.default_rng(3).normal(0, 1, 400).cumsum()
    vel = sg_velocity(make_recording(x, fs=1000.0), CFG)[0]
    oracle = _lsq_derivative(x) * 1000.0
    np.testing.assert_allclose(vel[3:-3], oracle[3:-3], rtol=0, atol=1e-8)


def test_too_short():
    with pytest.raises(TooShortError):
        sg_velocity(make_recording(np.zeros(6)), CFG)


@settings(max_examples=60, deadline=None)
@given(
    coeffs=st.tuples(*[st.floats(-5, 5)] * 3),
    fs=st.sampled_from([250.0, 500.0, 1000.0]),
)
def test_exact_on_polynomials(coeffs, fs):
    a, b, c = coeffs
    t = np.arange(200, dtype=float) / fs
    vel = sg_velocity(make_recording(a + b * t + c * t**2, fs=fs), CFG)[0]
    np.testing.assert_allclose(vel[3:-3], b + 2 * c * t[3:-3], rtol=0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    x=hnp.arrays(float, 60, elements=st.floats(-20, 20)),
    y=hnp.arrays(float, 60, elements=st.floats(-20, 20)),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
)
def test_linearity(x, y, a, b):
    v = lambda s: sg_velocity(make_recording(s), CFG)[0]  # noqa: E731
    np.testing.assert_allclose(v(a * x + b * y), a * v(x) + b * v(y), rtol=0, atol=1e-9)


# --- segmentation, clamping ---


def test_segment_61_seconds():
    seqs = segment_sequences(np.zeros((2, 61000)), CFG, 1000.0)
    assert seqs.shape == (12, 2, 5000)


def test_segment_keeps_order_and_drops_remainder():
    v = np.arange(2 * 11000, dtype=float).reshape(2, 11000)
    seqs = segment_sequences(v, CFG, 1000.0)
    assert seqs.shape == (2, 2, 5000)
    np.testing.assert_array_equal(seqs[1, 0], v[0, 5000:10000])
    np.testing.assert_array_equal(seqs[1, 1], v[1, 5000:10000])


def test_segment_too_short():
    with pytest.raises(TooShortError):
        segment_sequences(np.zeros((2, 4000)), CFG, 1000.0)


def test_segment_250hz():
    cfg = PreprocessConfig(sequences_per_stream=9)
    assert segment_sequences(np.zeros((2, 45 * 250)), cfg, 250.0).shape == (9, 2, 1250)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(50, 2000), per_stream=st.integers(1, 15), dur=st.sampled_from([0.05, 0.1, 0.37]))
def test_segment_count(n, per_stream, dur):
    cfg = PreprocessConfig(sequence_duration_s=dur, sequences_per_stream=per_stream)
    L = cfg.samples_per_sequence(1000.0)
    if n < L:
        return
    seqs = segment_sequences(np.zeros((2, n)), cfg, 1000.0)
    assert seqs.shape == (min(n // L, per_stream), 2, L)


def test_clamp_examples():
    out = clamp_velocity(np.array([1500.0, -999.0, np.nan, -2000.0]), CFG)
    np.testing.assert_array_equal(out, [1000.0, -999.0, np.nan, -1000.0])


@given(hnp.arrays(float, 30, elements=st.one_of(st.floats(-1e5, 1e5), st.just(np.nan))))
def test_clamp_idempotent(x):
    once = clamp_velocity(x, CFG)
    np.testing.assert_array_equal(clamp_velocity(once, CFG), once)


# --- normalization ---


def test_fit_normalization_examples():
    s = fit_normalization(np.array([1.0, 2.0, 3.0]))
    assert s.mean == 2.0
    assert s.sd == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    s = fit_normalization([np.array([-1.0]), np.array([1.0, np.nan])])
    assert (s.mean, s.sd) == (0.0, 1.0)
    with pytest.raises(DegenerateError):
        fit_normalization(np.full(10, 5.0))
    with pytest.raises(DegenerateError):
        fit_normalization(np.array([1.0, np.nan]))


def test_fit_normalization_order_independent():
    rng = np.random.default_rng(1)
    parts = [rng.normal(1e6, 1e-3, size=rng.integers(1, 500)) for _ in range(30)]
    a = fit_normalization(parts)
    b = fit_normalization(parts[::-1])
    assert (a.mean, a.sd) == (b.mean, b.sd)


def test_normalize_and_fill_examples():
    stats = NormalizationStats(3.0, 2.0)
    out = normalize_and_fill(np.array([3.0, np.nan, 5.0]), stats)
    np.testing.assert_array_equal(out, [0.0, 0.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(hnp.arrays(float, st.integers(1, 40), elements=st.floats(-1e3, 1e3)), min_size=1, max_size=5))
def test_normalized_corpus_is_standard(parts):
    values = np.concatenate(parts)
    if values.size < 2 or np.ptp(values) < 1e-3:
        return
    stats = fit_normalization(parts)
    z = np.concatenate([normalize_and_fill(p, stats) for p in parts])
    assert abs(z.mean()) < 1e-9
    assert abs(z.std() - 1.0) < 1e-9


# --- pipeline ---


def test_constant_recording_gives_zero_sequences():
    r = make_recording(np.full(6000, 3.0), np.full(6000, -1.0))
    b = preprocess_pipeline(r, PreprocessConfig(sequences_per_stream=1), NormalizationStats(0.0, 50.0))
    assert b.sequences.shape == (1, 2, 5000)
    assert np.all(b.sequences == 0.0)


def test_clean_ramp_gives_equal_values():
    t = np.arange(60000)
    r = make_recording(-20.0 + t * 4e-4, np.zeros(60000))
    b = preprocess_pipeline(r, CFG, NormalizationStats(0.0, 100.0))
    assert len(b) == 12
    np.testing.assert_allclose(b.sequences[:, 0], 0.004, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(b.sequences[:, 1], 0.0)


def test_out_of_bounds_burst_becomes_zero():
    rng = np.random.default_rng(0)
    h = rng.normal(0, 1, 5200)
    h[1000:1100] = 40.0
    b = preprocess_pipeline(make_recording(h, rng.normal(0, 1, 5200)), PreprocessConfig(sequences_per_stream=1))
    seq = b.sequences[0]
    assert np.all(seq[:, 997:1103] == 0.0)
    assert np.count_nonzero(seq[:, 1103:]) > 0


def test_corpus_stats_pool_everything():
    rng = np.random.default_rng(2)
    recs = [make_recording(rng.normal(0, 1, 5100).cumsum() * 0.01, subject=f"s{i}") for i in range(3)]
    batches, stats = preprocess_corpus(recs, PreprocessConfig(sequences_per_stream=1))
    pooled = np.concatenate([b.sequences.ravel() for b in batches])
    assert abs(pooled.mean()) < 1e-9
    assert len(batches) == 3
    _, again = preprocess_corpus(recs[::-1], PreprocessConfig(sequences_per_stream=1))
    assert again == stats
