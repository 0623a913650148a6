"""Signal-quality manipulations and the spatial-precision estimator.

Decimation and noise act on raw positions, percentage truncation on
normalized sequences, and the sequence count at centroid time.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import ArgumentError, InsufficientDataError, TooShortError
from .model import MANIPULATIONS, GazeRecording, SequenceBatch

MAX_STAGE_FACTOR = 13
FILTER_ORDER = 8
FILTER_RIPPLE_DB = 0.05
CUTOFF_FRACTION = 0.8
SUPPORT_TOLERANCE = 1e-3

PRECISION_SEGMENT_S = 0.08
PRECISION_PERCENTILE = 5.0
MIN_PRECISION_SEGMENTS = 20


@dataclass(frozen=True)
class ManipulationSpec:
    """One manipulation at one level.

    ``level`` is in the manipulation's own unit: target Hz for Decimate,
    percent for Percentage, a count for NumSequences and degrees SD for Noise.
    """

    kind: str
    level: float

    def __post_init__(self):
        if self.kind not in MANIPULATIONS:
            raise ArgumentError(f"unknown manipulation {self.kind!r}; expected one of {MANIPULATIONS}")
        lv = float(self.level)
        if self.kind == "Decimate" and not lv > 0:
            raise ArgumentError("decimation target must be a positive frequency")
        if self.kind == "Percentage" and not 0 < lv <= 100:
            raise ArgumentError("percentage must be in (0, 100]")
        if self.kind == "NumSequences" and (lv < 1 or lv != int(lv)):
            raise ArgumentError("number of sequences must be a positive integer")
        if self.kind == "Noise" and not lv >= 0:
            raise ArgumentError("noise SD must be non-negative")

    @property
    def stage(self) -> str:
        return {"Decimate": "raw", "Noise": "raw", "Percentage": "sequence", "NumSequences": "centroid"}[self.kind]


def decimation_factor(sampling_rate_hz: float, target_hz: float, rel_tol: float = 0.01) -> int:
    """Integer factor realizing ``target_hz``; 333 Hz from 1000 Hz gives q=3."""
    q = int(round(sampling_rate_hz / target_hz))
    if q < 1 or abs(sampling_rate_hz / q - target_hz) > rel_tol * target_hz:
        raise ArgumentError(f"{target_hz} Hz is not an integer division of {sampling_rate_hz} Hz")
    return q


def stage_factors(q: int) -> list[int]:
    """Split ``q`` into as few factors <= 13 as possible, most balanced first.

    >>> stage_factors(100)
    [10, 10]
    >>> stage_factors(40)
    [8, 5]
    """
    if q <= MAX_STAGE_FACTOR:
        return [q]

    def splits(n, max_factor):
        if n == 1:
            yield []
            return
        for f in range(min(n, max_factor), 1, -1):
            if n % f == 0:
                for rest in splits(n // f, f):
                    yield [f] + rest

    options = list(splits(q, MAX_STAGE_FACTOR))
    if not options:
        raise ArgumentError(f"decimation factor {q} has a prime factor above {MAX_STAGE_FACTOR}")
    return min(options, key=lambda fs: (len(fs), max(fs), fs))


@lru_cache(maxsize=None)
def _antialias_sos(q: int) -> np.ndarray:
    sos = signal.cheby1(FILTER_ORDER, FILTER_RIPPLE_DB, CUTOFF_FRACTION / q, output="sos")
    # even-order type I filters sit at the bottom of the ripple at DC; rescale to unit DC gain
    dc = np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1))
    sos[0, :3] /= dc
    return sos


@lru_cache(maxsize=None)
def _support_radius(q: int) -> int:
    """Half-width of the zero-phase impulse response above tolerance."""
    sos = _antialias_sos(q)
    n = 400 * q + 1
    impulse = np.zeros(n)
    impulse[n // 2] = 1.0
    h = np.abs(signal.sosfiltfilt(sos, impulse))
    above = np.nonzero(h > SUPPORT_TOLERANCE * h.max())[0]
    return int(max(n // 2 - above[0], above[-1] - n // 2))


def _fill_gaps(x: np.ndarray, bad: np.ndarray) -> np.ndarray:
    idx = np.arange(x.size)
    return np.interp(idx, idx[~bad], x[~bad])


def _decimate_stage(x: np.ndarray, q: int) -> np.ndarray:
    bad = np.isnan(x)
    if bad.all():
        return np.full(math.ceil(x.size / q), np.nan)
    filled = _fill_gaps(x, bad) if bad.any() else x
    sos = _antialias_sos(q)
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    y = signal.sosfiltfilt(sos, filled, padlen=padlen)[::q].copy()
    if bad.any():
        # invalid inputs within the support radius of each kept sample
        radius = _support_radius(q)
        counts = np.concatenate([[0], np.cumsum(bad)])
        centers = np.arange(0, x.size, q)
        hi = np.minimum(centers + radius + 1, x.size)
        lo = np.maximum(centers - radius, 0)
        y[counts[hi] - counts[lo] > 0] = np.nan
    return y


def decimate(r: GazeRecording, q: int) -> GazeRecording:
    """Anti-alias and keep every ``q``-th sample.

    Each stage applies an 8th-order Chebyshev type I low-pass (0.05 dB ripple,
    cutoff at 0.8 of the new Nyquist) forward and backward. Factors above 13
    are split into stages. Outputs within the filter support of an invalid
    input sample are invalid.
    """
    if isinstance(q, bool) or int(q) != q:
        raise ArgumentError("decimation factor must be an integer")
    q = int(q)
    if q < 1:
        raise ArgumentError("decimation factor must be >= 1")
    if q == 1:
        return r
    if len(r) < 8 * q:
        raise TooShortError(f"{len(r)} samples is too short to decimate by {q} (need {8 * q})")
    h, v = r.horizontal_deg, r.vertical_deg
    for f in stage_factors(q):
        h = _decimate_stage(h, f)
        v = _decimate_stage(v, f)
    return r.with_samples(h, v, sampling_rate_hz=r.sampling_rate_hz / q)


def decimate_to(r: GazeRecording, target_hz: float) -> GazeRecording:
    return decimate(r, decimation_factor(r.sampling_rate_hz, target_hz))


def percentage_width(length: int, p: float) -> int:
    return int(math.floor(p * length / 100.0 + 0.5))


def percentage_truncate(seq: np.ndarray, p: float) -> np.ndarray:
    """Keep the first ``p`` percent of the last axis and centre it in zeros."""
    if not 0 < p <= 100:
        raise ArgumentError(f"percentage must be in (0, 100], got {p}")
    seq = np.asarray(seq, dtype=float)
    L = seq.shape[-1]
    w = percentage_width(L, p)
    if w == L:
        return seq.copy()
    if w == 0:
        raise ArgumentError(f"{p}% of {L} samples rounds to zero samples")
    left = (L - w) // 2
    out = np.zeros_like(seq)
    out[..., left : left + w] = seq[..., :w]
    return out


def truncate_batch(b: SequenceBatch, p: float) -> SequenceBatch:
    return b.with_sequences(percentage_truncate(b.sequences, p))


def take_first_sequences(b: SequenceBatch, n: int) -> SequenceBatch:
    if n < 1:
        raise ArgumentError("number of sequences must be >= 1")
    if n > len(b):
        raise ArgumentError(
            f"subject {b.subject_id} session {b.session}: requested {n} sequences, "
            f"only {len(b)} available (short by {n - len(b)})"
        )
    return b.with_sequences(b.sequences[:n])


def noise_generator(seed: int, subject_id: str, session: str) -> np.random.Generator:
    """Counter-based stream keyed on (seed, subject, session)."""
    digest = hashlib.sha256(f"{int(seed)}\x1f{subject_id}\x1f{session}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def inject_noise(r: GazeRecording, sigma_deg: float, seed: int) -> GazeRecording:
    """Add i.i.d. Gaussian noise to every valid sample of both channels."""
    if not sigma_deg >= 0:
        raise ArgumentError("noise SD must be non-negative")
    if sigma_deg == 0:
        return r
    noise = noise_generator(seed, r.subject_id, r.session).standard_normal((2, len(r))) * sigma_deg
    # NaN + noise stays NaN
    return r.with_samples(r.horizontal_deg + noise[0], r.vertical_deg + noise[1])


def segment_rms(r: GazeRecording) -> np.ndarray:
    """Sample-to-sample RMS of the horizontal channel per valid 80 ms segment."""
    k = int(math.floor(PRECISION_SEGMENT_S * r.sampling_rate_hz + 0.5))
    if k < 2:
        raise InsufficientDataError("80 ms segments need at least 2 samples")
    n = len(r) // k
    x = r.horizontal_deg[: n * k].reshape(n, k)
    valid = ~r.invalid[: n * k].reshape(n, k).any(axis=1)
    x = x[valid]
    return np.sqrt(np.mean(np.diff(x, axis=1) ** 2, axis=1))


def spatial_precision(r: GazeRecording) -> float:
    """Median of the segment RMS values at or below their 5th percentile, in degrees."""
    rms = segment_rms(r)
    if rms.size < MIN_PRECISION_SEGMENTS:
        raise InsufficientDataError(
            f"subject {r.subject_id} {r.session}: {rms.size} valid 80 ms segments, need {MIN_PRECISION_SEGMENTS}"
        )
    cut = np.percentile(rms, PRECISION_PERCENTILE)
    return float(np.median(rms[rms <= cut]))
