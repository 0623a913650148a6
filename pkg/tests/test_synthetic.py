import json
from dataclasses import replace

import numpy as np
import pytest

from gazepersist.errors import ArgumentError
from gazepersist.model import load_manifest, load_recording, validate_manifest
from gazepersist.synthetic import (
    H_BOUNDS,
    V_BOUNDS,
    SyntheticSpec,
    draw_traits,
    generate_synthetic,
    session_traits,
    synthesize_recording,
)

SMALL = SyntheticSpec(n_subjects=3, duration_s=6.0, seed=7)


def test_spec_validation():
    with pytest.raises(ArgumentError):
        SyntheticSpec(n_subjects=2)
    with pytest.raises(ArgumentError):
        SyntheticSpec(session_perturbation=1.5)
    with pytest.raises(ArgumentError):
        SyntheticSpec(drift_sd_range=(0.0, 1.0))
    with pytest.raises(ArgumentError):
        SyntheticSpec(saccade_rate_range=(4.0, 1.0))
    with pytest.raises(ArgumentError):
        SyntheticSpec(duration_s=0)


def test_spec_json_roundtrip():
    assert SyntheticSpec.from_json(json.loads(json.dumps(SMALL.to_json()))) == SMALL
    with pytest.raises(ArgumentError):
        SyntheticSpec.from_json({"bogus": 1})


def test_byte_identical_reruns(tmp_path):
    generate_synthetic(SMALL, tmp_path / "a")
    generate_synthetic(SMALL, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) == 2 * 3 + 2
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_seed_changes_output():
    a = synthesize_recording(SMALL, 0, "S1")
    b = synthesize_recording(replace(SMALL, seed=8), 0, "S1")
    assert not np.array_equal(a.horizontal_deg, b.horizontal_deg, equal_nan=True)


def test_zero_perturbation_shares_traits():
    spec = replace(SMALL, session_perturbation=0.0)
    for i in range(3):
        assert session_traits(spec, i, "S2") == session_traits(spec, i, "S1") == draw_traits(spec, i)
        s1 = synthesize_recording(spec, i, "S1")
        s2 = synthesize_recording(spec, i, "S2")
        assert not np.array_equal(s1.horizontal_deg, s2.horizontal_deg, equal_nan=True)


def test_perturbation_bounded():
    base = draw_traits(SMALL, 1)
    other = session_traits(SMALL, 1, "S2")
    for name in ("saccade_rate", "amplitude_scale", "drift_sd", "tremor_rms", "blink_rate"):
        ratio = getattr(other, name) / getattr(base, name)
        assert 0.9 - 1e-12 <= ratio <= 1.1 + 1e-12


def test_traits_inside_ranges():
    for i in range(20):
        t = draw_traits(SyntheticSpec(seed=3), i)
        assert 1.0 <= t.saccade_rate <= 4.0
        assert 1.5 <= t.amplitude_scale <= 6.0
        assert 0.05 <= t.drift_sd <= 0.6


@pytest.mark.parametrize("index", range(3))
@pytest.mark.parametrize("session", ["S1", "S2"])
def test_positions_within_bounds(index, session):
    r = synthesize_recording(SMALL, index, session)
    assert len(r) == 6000 and r.sampling_rate_hz == 1000.0
    for x, (lo, hi) in ((r.horizontal_deg, H_BOUNDS), (r.vertical_deg, V_BOUNDS)):
        ok = x[~np.isnan(x)]
        assert ok.size > 0.5 * x.size
        assert ok.min() >= lo and ok.max() <= hi
    assert np.array_equal(np.isnan(r.horizontal_deg), np.isnan(r.vertical_deg))


def test_contains_saccades_and_fixations():
    r = synthesize_recording(replace(SMALL, duration_s=20.0), 0, "S1")
    vel = np.abs(np.diff(r.horizontal_deg)) * 1000.0
    vel = vel[~np.isnan(vel)]
    assert np.median(vel) < 5.0
    assert vel.max() > 50.0


def test_manifest_written(tmp_path):
    m = generate_synthetic(SMALL, tmp_path)
    loaded = load_manifest(tmp_path / "manifest.json")
    assert loaded.subjects() == ["sub001", "sub002", "sub003"]
    assert validate_manifest(loaded) == []
    assert m.enrollment_selector.session == "S1" and m.authentication_selector.session == "S2"
    assert m.enrollment_selector.duration_s == 6.0
    e = loaded.recordings[0]
    r = load_recording(loaded.resolve(e), e)
    ref = synthesize_recording(SMALL, 0, "S1")
    # files carry six decimals
    assert np.allclose(r.horizontal_deg, ref.horizontal_deg, rtol=0, atol=5e-7, equal_nan=True)
    assert np.allclose(r.vertical_deg, ref.vertical_deg, rtol=0, atol=5e-7, equal_nan=True)
    assert json.loads((tmp_path / "synthetic_spec.json").read_text()) == SMALL.to_json()
