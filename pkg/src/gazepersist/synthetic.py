"""Desk-scale synthetic gaze recordings with subject-specific oculomotor traits.

Each recording alternates fixations and saccades. A subject is described by a
saccade rate, a saccade amplitude scale, a main-sequence peak-velocity
asymptote, a horizontal-direction preference, a fixational drift strength, a
tremor amplitude and a blink rate. Session 2 reuses the subject's traits,
each scaled by ``1 + perturbation * U(-1, 1)``, and redraws every event.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ArgumentError
from .model import (
    DatasetManifest,
    GazeRecording,
    RecordingEntry,
    Selector,
    ensure_dir,
    save_manifest,
    write_recording,
)

H_BOUNDS = (-23.3, 23.3)
V_BOUNDS = (-18.5, 11.7)
# saccade targets are kept inside this box; clipping to the tracker range is a backstop
_TARGET_H = (-16.0, 16.0)
_TARGET_V = (-13.0, 7.0)
_TREMOR_BAND_HZ = (40.0, 100.0)


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 60
    duration_s: float = 65.0
    sampling_rate_hz: float = 1000.0
    task: str = "TEX"
    saccade_rate_range: tuple = (1.0, 4.0)  # saccades per second
    amplitude_scale_range: tuple = (1.5, 6.0)  # median saccade amplitude, deg
    peak_velocity_range: tuple = (350.0, 750.0)  # main-sequence asymptote, deg/s
    horizontal_bias_range: tuple = (0.3, 0.95)  # probability a saccade is near-horizontal
    drift_sd_range: tuple = (0.05, 0.6)  # drift diffusion, deg / sqrt(s)
    tremor_rms_range: tuple = (0.001, 0.01)  # deg
    blink_rate_range: tuple = (0.05, 0.4)  # blinks per second
    session_perturbation: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 3:
            raise ArgumentError("synthetic datasets need at least 3 subjects")
        if not self.duration_s > 0 or not self.sampling_rate_hz > 0:
            raise ArgumentError("duration_s and sampling_rate_hz must be positive")
        if not 0.0 <= self.session_perturbation <= 1.0:
            raise ArgumentError("session_perturbation must be in [0, 1]")
        for f in fields(self):
            if f.name.endswith("_range"):
                lo, hi = getattr(self, f.name)
                if not 0 < lo <= hi:
                    raise ArgumentError(f"{f.name} must satisfy 0 < low <= high")
                object.__setattr__(self, f.name, (float(lo), float(hi)))

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown synthetic fields {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass(frozen=True)
class SubjectTraits:
    saccade_rate: float
    amplitude_scale: float
    peak_velocity: float
    horizontal_bias: float
    drift_sd: float
    tremor_rms: float
    blink_rate: float

    def perturbed(self, fraction: float, rng: np.random.Generator) -> "SubjectTraits":
        if fraction == 0:
            return self
        vals = {f.name: getattr(self, f.name) * (1 + fraction * rng.uniform(-1, 1)) for f in fields(self)}
        vals["horizontal_bias"] = min(vals["horizontal_bias"], 1.0)
        return SubjectTraits(**vals)


def subject_id(i: int) -> str:
    return f"sub{i + 1:03d}"


def draw_traits(spec: SyntheticSpec, index: int) -> SubjectTraits:
    rng = np.random.default_rng([spec.seed, index, 0])

    def u(rng_range, log=False):
        lo, hi = rng_range
        if log:
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        return float(rng.uniform(lo, hi))

    return SubjectTraits(
        saccade_rate=u(spec.saccade_rate_range),
        amplitude_scale=u(spec.amplitude_scale_range, log=True),
        peak_velocity=u(spec.peak_velocity_range),
        horizontal_bias=u(spec.horizontal_bias_range),
        drift_sd=u(spec.drift_sd_range, log=True),
        tremor_rms=u(spec.tremor_rms_range, log=True),
        blink_rate=u(spec.blink_rate_range, log=True),
    )


def session_traits(spec: SyntheticSpec, index: int, session: str) -> SubjectTraits:
    base = draw_traits(spec, index)
    if session == "S1":
        return base
    rng = np.random.default_rng([spec.seed, index, 1, 0])
    return base.perturbed(spec.session_perturbation, rng)


def _min_jerk(n: int) -> np.ndarray:
    tau = np.arange(1, n + 1) / n
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


def _reflect_into(target: float, current: float, lo: float, hi: float) -> float:
    if lo <= target <= hi:
        return target
    mirrored = 2 * current - target
    return float(np.clip(mirrored, lo, hi))


def _scanpath(traits: SubjectTraits, n: int, fs: float, rng: np.random.Generator):
    """Piecewise fixation/saccade positions, shape (2, n)."""
    pos = np.empty((2, n))
    x, y = rng.uniform(-5, 5), rng.uniform(-5, 3)
    t = 0
    mean_interval = 1.0 / traits.saccade_rate
    while t < n:
        fix = max(int(rng.gamma(4.0, mean_interval / 4.0) * fs), 1)
        end = min(t + fix, n)
        pos[0, t:end] = x
        pos[1, t:end] = y
        t = end
        if t >= n:
            break
        amp = traits.amplitude_scale * math.exp(rng.normal(0, 0.45))
        if rng.random() < traits.horizontal_bias:
            angle = rng.normal(0.0, 0.15) + (0.0 if rng.random() < 0.8 else math.pi)
        else:
            angle = rng.uniform(-math.pi, math.pi)
        tx = _reflect_into(x + amp * math.cos(angle), x, *_TARGET_H)
        ty = _reflect_into(y + amp * math.sin(angle), y, *_TARGET_V)
        real_amp = math.hypot(tx - x, ty - y)
        vpeak = traits.peak_velocity * (1 - math.exp(-real_amp / 8.0))
        dur = max(int(round(1.875 * real_amp / max(vpeak, 1e-6) * fs)), 2)
        end = min(t + dur, n)
        prof = _min_jerk(dur)[: end - t]
        pos[0, t:end] = x + (tx - x) * prof
        pos[1, t:end] = y + (ty - y) * prof
        x, y = tx, ty
        t = end
    return pos


def _drift(traits: SubjectTraits, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    # Ornstein-Uhlenbeck offset with a 1 s time constant
    dt = 1.0 / fs
    steps = rng.standard_normal((2, n)) * traits.drift_sd * math.sqrt(dt)
    return signal.lfilter([1.0], [1.0, -(1.0 - dt)], steps, axis=1)


def _tremor(traits: SubjectTraits, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal((2, n))
    hi = min(_TREMOR_BAND_HZ[1], 0.45 * fs)
    lo = min(_TREMOR_BAND_HZ[0], 0.5 * hi)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    band = signal.sosfiltfilt(sos, white, axis=1)
    scale = band.std(axis=1, keepdims=True)
    return band / np.where(scale > 0, scale, 1.0) * traits.tremor_rms


def _blinks(traits: SubjectTraits, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    t = rng.exponential(1.0 / traits.blink_rate)
    while True:
        start = int(t * fs)
        if start >= n:
            break
        length = int(rng.uniform(0.08, 0.25) * fs)
        mask[start : start + length] = True
        t += length / fs + rng.exponential(1.0 / traits.blink_rate)
    return mask


def synthesize_recording(spec: SyntheticSpec, index: int, session: str) -> GazeRecording:
    """One deterministic recording for subject ``index`` and ``session``."""
    traits = session_traits(spec, index, session)
    fs = spec.sampling_rate_hz
    n = int(round(spec.duration_s * fs))
    rng = np.random.default_rng([spec.seed, index, 2, 0 if session == "S1" else 1])
    pos = _scanpath(traits, n, fs, rng) + _drift(traits, n, fs, rng) + _tremor(traits, n, fs, rng)
    h = np.clip(pos[0], *H_BOUNDS)
    v = np.clip(pos[1], *V_BOUNDS)
    blink = _blinks(traits, n, fs, rng)
    h[blink] = np.nan
    v[blink] = np.nan
    return GazeRecording(subject_id(index), session, spec.task, fs, h, v)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write recording CSVs plus ``manifest.json`` under ``out_dir``."""
    out = ensure_dir(out_dir)
    rec_dir = ensure_dir(out / "recordings")
    entries = []
    for i in range(spec.n_subjects):
        for session in ("S1", "S2"):
            r = synthesize_recording(spec, i, session)
            rel = f"recordings/{r.subject_id}_{session}_{spec.task}.csv"
            write_recording(r, rec_dir / Path(rel).name)
            entries.append(RecordingEntry(rel, r.subject_id, session, spec.task, spec.sampling_rate_hz))
    stream_s = 60.0 if spec.duration_s >= 60 else float(spec.duration_s)
    manifest = DatasetManifest(
        dataset_name=f"synthetic-seed{spec.seed}",
        recordings=entries,
        enrollment_selector=Selector("S1", spec.task, stream_s),
        authentication_selector=Selector("S2", spec.task, stream_s),
        root=out,
    )
    save_manifest(manifest, out / "manifest.json")
    (out / "synthetic_spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n")
    return manifest
