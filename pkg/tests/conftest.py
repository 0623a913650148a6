import json
from pathlib import Path

import numpy as np
import pytest

from gazepersist.model import DatasetManifest, GazeRecording, RecordingEntry, Selector, write_recording
from gazepersist.synthetic import SyntheticSpec, generate_synthetic


def make_recording(h, v=None, subject="s1", session="S1", fs=1000.0, task="TEX"):
    h = np.asarray(h, dtype=float)
    v = np.zeros_like(h) if v is None else np.asarray(v, dtype=float)
    return GazeRecording(subject, session, task, fs, h, v)


@pytest.fixture
def recording_factory():
    return make_recording


@pytest.fixture
def small_manifest(tmp_path):
    """Three subjects with random-walk recordings in both sessions."""
    rng = np.random.default_rng(5)
    entries = []
    for i in range(3):
        for session in ("S1", "S2"):
            rel = f"r/sub{i}_{session}.csv"
            (tmp_path / "r").mkdir(exist_ok=True)
            h = np.cumsum(rng.normal(0, 0.01, 2000))
            write_recording(make_recording(h, -h, f"sub{i}", session), tmp_path / rel)
            entries.append(RecordingEntry(rel, f"sub{i}", session, "TEX", 1000.0))
    return DatasetManifest(
        "tiny", entries, Selector("S1", "TEX", 2.0), Selector("S2", "TEX", 2.0), root=tmp_path
    )


FIXTURE_PATH = Path(__file__).parent / "fixtures" / "synthetic_fixture.json"


def frozen_fixture() -> dict:
    return json.loads(FIXTURE_PATH.read_text())


def frozen_spec(seed: int) -> SyntheticSpec:
    return SyntheticSpec.from_json({**frozen_fixture()["synthetic"], "seed": seed})


@pytest.fixture(scope="session")
def desk_manifest(tmp_path_factory):
    """The frozen 60-subject synthetic dataset at seed 0."""
    return generate_synthetic(frozen_spec(0), tmp_path_factory.mktemp("desk0"))


@pytest.fixture(scope="session")
def mini_spec():
    """Six short subjects: two 5 s sequences per stream."""
    return SyntheticSpec(n_subjects=6, duration_s=12.0, seed=3)


# acceptance lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
