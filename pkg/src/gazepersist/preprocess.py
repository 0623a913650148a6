"""Gaze positions to normalized fixed-length velocity sequences.

The order of steps is fixed: gaze bounds, Savitzky-Golay velocity,
segmentation into non-overlapping windows, velocity clamping, pooled z-score,
and finally NaN -> 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.signal import savgol_coeffs

from .errors import ArgumentError, DegenerateError, TooShortError
from .model import GazeRecording, SequenceBatch


@dataclass(frozen=True)
class PreprocessConfig:
    h_bounds: tuple = (-23.3, 23.3)
    v_bounds: tuple = (-18.5, 11.7)
    sg_window: int = 7
    sg_polyorder: int = 2
    clamp_deg_per_s: float = 1000.0
    sequence_duration_s: float = 5.0
    sequences_per_stream: int = 12

    def __post_init__(self):
        object.__setattr__(self, "h_bounds", tuple(float(b) for b in self.h_bounds))
        object.__setattr__(self, "v_bounds", tuple(float(b) for b in self.v_bounds))
        if self.sg_window % 2 != 1 or self.sg_window <= self.sg_polyorder:
            raise ArgumentError("sg_window must be odd and greater than sg_polyorder")
        if self.sg_polyorder < 1:
            raise ArgumentError("sg_polyorder must be at least 1 for a first derivative")
        if not self.clamp_deg_per_s > 0:
            raise ArgumentError("clamp_deg_per_s must be positive")
        if not self.sequence_duration_s > 0:
            raise ArgumentError("sequence_duration_s must be positive")
        if self.sequences_per_stream < 1:
            raise ArgumentError("sequences_per_stream must be >= 1")

    def samples_per_sequence(self, sampling_rate_hz: float) -> int:
        return int(math.floor(self.sequence_duration_s * sampling_rate_hz + 0.5))

    def to_json(self) -> dict:
        d = asdict(self)
        d["h_bounds"] = list(self.h_bounds)
        d["v_bounds"] = list(self.v_bounds)
        return d

    @classmethod
    def from_json(cls, data: dict | None) -> "PreprocessConfig":
        return cls(**(data or {}))


@dataclass(frozen=True)
class NormalizationStats:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DegenerateError("normalization sd must be positive")


def apply_gaze_bounds(r: GazeRecording, cfg: PreprocessConfig) -> GazeRecording:
    """Invalidate samples outside the tracker's gaze range (bounds inclusive)."""
    h = np.array(r.horizontal_deg)
    v = np.array(r.vertical_deg)
    with np.errstate(invalid="ignore"):
        out = (h < cfg.h_bounds[0]) | (h > cfg.h_bounds[1]) | (v < cfg.v_bounds[0]) | (v > cfg.v_bounds[1])
    h[out] = np.nan
    v[out] = np.nan
    return r.with_samples(h, v)


@lru_cache(maxsize=None)
def _derivative_kernel(window: int, polyorder: int) -> np.ndarray:
    # 'dot' ordering: kernel[j] multiplies x[i - half + j]
    return savgol_coeffs(window, polyorder, deriv=1, delta=1.0, use="dot")


def _sg_channel(x: np.ndarray, window: int, polyorder: int, fs: float) -> np.ndarray:
    half = window // 2
    bad = np.isnan(x)
    # odd (point) reflection keeps linear trends linear, so a ramp has constant velocity at the edges too
    padded = np.pad(np.where(bad, 0.0, x), half, mode="reflect", reflect_type="odd")
    # first-derivative kernels are antisymmetric; summing weighted central differences
    # makes the velocity of a constant signal exactly zero
    k = _derivative_kernel(window, polyorder)
    n = x.size
    vel = np.zeros(n)
    for j in range(1, half + 1):
        w = 0.5 * (k[half + j] - k[half - j])
        vel += w * (padded[half + j : half + j + n] - padded[half - j : half - j + n])
    vel *= fs
    if bad.any():
        bad_pad = np.pad(bad.astype(float), half, mode="reflect")
        poisoned = np.correlate(bad_pad, np.ones(window), mode="valid") > 0
        vel[poisoned] = np.nan
    return vel


def sg_velocity(r: GazeRecording, cfg: PreprocessConfig) -> np.ndarray:
    """Savitzky-Golay first-derivative velocity in deg/s, shape ``(2, n)``.

    Edges use point-mirrored padding so the output has the input's length. Any
    window touching an invalid sample yields NaN.
    """
    if len(r) < cfg.sg_window:
        raise TooShortError(f"recording has {len(r)} samples, filter window needs {cfg.sg_window}")
    fs = r.sampling_rate_hz
    return np.stack(
        [
            _sg_channel(r.horizontal_deg, cfg.sg_window, cfg.sg_polyorder, fs),
            _sg_channel(r.vertical_deg, cfg.sg_window, cfg.sg_polyorder, fs),
        ]
    )


def segment_sequences(velocity: np.ndarray, cfg: PreprocessConfig, sampling_rate_hz: float) -> np.ndarray:
    """Cut ``(2, n)`` velocity into non-overlapping ``(k, 2, L)`` windows.

    Only the first ``cfg.sequences_per_stream`` windows are kept; the trailing
    partial window is dropped.
    """
    L = cfg.samples_per_sequence(sampling_rate_hz)
    n = velocity.shape[1]
    if L < 1 or n < L:
        raise TooShortError(f"{n} samples is shorter than one {cfg.sequence_duration_s} s sequence ({L} samples)")
    k = min(n // L, cfg.sequences_per_stream)
    return velocity[:, : k * L].reshape(2, k, L).transpose(1, 0, 2).copy()


def clamp_velocity(seqs: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    # np.clip leaves NaN untouched
    return np.clip(seqs, -cfg.clamp_deg_per_s, cfg.clamp_deg_per_s)


def fit_normalization(corpus: Sequence[np.ndarray] | np.ndarray) -> NormalizationStats:
    """Pooled mean and population SD over every valid value in the corpus.

    Two passes; per-array partial sums are combined with exactly rounded
    summation, so the result does not depend on the order of the arrays.
    """
    if isinstance(corpus, np.ndarray):
        corpus = [corpus]
    valid = [np.asarray(a, dtype=float).ravel() for a in corpus]
    valid = [a[~np.isnan(a)] for a in valid]
    n = sum(a.size for a in valid)
    if n < 2:
        raise DegenerateError(f"need at least 2 valid samples, got {n}")
    mean = math.fsum(float(a.sum()) for a in valid) / n
    ss = math.fsum(float(np.square(a - mean).sum()) for a in valid)
    sd = math.sqrt(ss / n)
    if sd == 0.0:
        raise DegenerateError("velocity distribution has zero variance")
    return NormalizationStats(mean, sd)


def normalize_and_fill(seqs: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    out = (np.asarray(seqs, dtype=float) - stats.mean) / stats.sd
    out[np.isnan(out)] = 0.0
    return out


def raw_sequences(r: GazeRecording, cfg: PreprocessConfig) -> np.ndarray:
    """Everything up to (and including) clamping; NaN still marks invalid samples."""
    bounded = apply_gaze_bounds(r, cfg)
    vel = sg_velocity(bounded, cfg)
    seqs = segment_sequences(vel, cfg, r.sampling_rate_hz)
    return clamp_velocity(seqs, cfg)


def preprocess_corpus(
    recordings: Sequence[GazeRecording],
    cfg: PreprocessConfig,
    stats: NormalizationStats | None = None,
) -> tuple[list[SequenceBatch], NormalizationStats]:
    """Preprocess a set of recordings with one shared normalization.

    When ``stats`` is None they are fitted on the clamped velocities of the
    whole corpus.
    """
    raws = [raw_sequences(r, cfg) for r in recordings]
    if stats is None:
        stats = fit_normalization(raws)
    batches = [
        SequenceBatch(r.subject_id, r.session, normalize_and_fill(raw, stats), cfg.sequence_duration_s)
        for r, raw in zip(recordings, raws)
    ]
    return batches, stats


def preprocess_pipeline(
    r: GazeRecording, cfg: PreprocessConfig, stats: NormalizationStats | None = None
) -> SequenceBatch:
    batches, _ = preprocess_corpus([r], cfg, stats)
    return batches[0]
