"""Embedding providers and centroid aggregation.

Two providers ship with the package:

* :class:`StatFeatureEmbedder` computes a fixed menu of per-channel
  statistics. It is deterministic and carries enough subject identity to
  exercise the whole evaluation pipeline without a trained network.
* :class:`SeededConvEmbedder` is an untrained densely connected dilated
  1-D convolution stack (8 layers -> global average pooling -> 128) with
  weights drawn from a seeded generator.

Embeddings produced elsewhere enter through :func:`gazepersist.model.read_embeddings`.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy.linalg import hadamard

from .errors import ArgumentError
from .model import EmbeddingMatrix, SequenceBatch

EMBEDDING_DIM = 128
MIN_SEQUENCE_LENGTH = 40

QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)
ACF_LAGS = (1, 2, 5, 10, 20)
N_BANDS = 8
N_HAAR = 4
_LOG_FLOOR = 1e-12


class EmbeddingProvider:
    """Maps ``(n, 2, L)`` sequence stacks to ``(n, dimension)`` embeddings."""

    name = "abstract"
    dimension = EMBEDDING_DIM
    deterministic = True

    def embed_batch(self, seqs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, seqs: np.ndarray) -> np.ndarray:
        seqs = np.asarray(seqs, dtype=float)
        if seqs.ndim == 2:
            return self(seqs[None])[0]
        if seqs.ndim != 3 or seqs.shape[1] != 2:
            raise ArgumentError(f"expected (n, 2, L) sequences, got shape {seqs.shape}")
        if seqs.shape[2] < MIN_SEQUENCE_LENGTH:
            raise ArgumentError(f"sequence length {seqs.shape[2]} below minimum {MIN_SEQUENCE_LENGTH}")
        out = self.embed_batch(seqs)
        if out.shape != (seqs.shape[0], self.dimension) or not np.isfinite(out).all():
            raise RuntimeError(f"{self.name} produced malformed embeddings")
        return out


def embed_sequence(p: EmbeddingProvider, seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2:
        raise ArgumentError(f"expected one (2, L) sequence, got shape {seq.shape}")
    return p(seq)


# --- statistical features ---------------------------------------------------


@lru_cache(maxsize=None)
def _band_edges(n_bins: int) -> tuple:
    """Log-spaced band edges over rfft bins 1..n_bins, each band non-empty."""
    raw = np.floor(np.geomspace(1, n_bins + 1, N_BANDS + 1)).astype(int)
    edges = [1]
    for e in raw[1:]:
        edges.append(max(int(e), edges[-1] + 1))
    # squeeze back under the upper limit when the spectrum is short
    edges[-1] = n_bins + 1
    for i in range(len(edges) - 2, 0, -1):
        edges[i] = min(edges[i], edges[i + 1] - 1)
    return tuple(edges)


def _sorted_quantiles(xs: np.ndarray, qs) -> list[np.ndarray]:
    """Linear-interpolation quantiles of row-sorted ``xs`` (numpy's default method)."""
    n = xs.shape[1]
    out = []
    for q in qs:
        pos = q * (n - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        out.append(xs[:, lo] + frac * (xs[:, hi] - xs[:, lo]))
    return out


def _haar_scales(length: int) -> list[int]:
    return [max(1, length // 2 ** (j + 2)) for j in range(N_HAAR)]


def _menu(x: np.ndarray) -> np.ndarray:
    """31 features per row of ``x`` (shape ``(m, L)``), returned as ``(m, 31)``."""
    m, L = x.shape
    mean = x.mean(axis=1)
    c = x - mean[:, None]
    c2 = c * c
    ss = c2.sum(axis=1)
    var = ss / L
    flat = var <= 1e-24
    safe_var = np.where(flat, 1.0, var)
    skew = np.where(flat, 0.0, np.einsum("ij,ij->i", c2, c) / L / safe_var**1.5)
    kurt = np.where(flat, 0.0, np.einsum("ij,ij->i", c2, c2) / L / safe_var**2 - 3.0)
    del c2
    xs = np.sort(x, axis=1)
    q = _sorted_quantiles(xs, QUANTILES)
    mean_abs = np.abs(x).mean(axis=1)
    rms = np.sqrt(var + mean * mean)
    zcr = (x[:, :-1] * x[:, 1:] < 0).mean(axis=1)

    safe_ss = np.where(flat, 1.0, ss)
    acf = [np.where(flat, 0.0, np.einsum("ij,ij->i", c[:, :-k], c[:, k:]) / safe_ss) for k in ACF_LAGS]

    # padded to a fast length: a prime L (e.g. 4999 for differences) is slow
    spec = sfft.rfft(x, n=sfft.next_fast_len(L, real=True), axis=1)
    power = (spec.real**2 + spec.imag**2) / L
    edges = _band_edges(power.shape[1] - 1)
    bands = [np.log(power[:, a:b].mean(axis=1) + _LOG_FLOOR) for a, b in zip(edges[:-1], edges[1:])]

    haar = []
    for b in _haar_scales(L):
        pairs = L // (2 * b)
        blocks = x[:, : pairs * 2 * b].reshape(m, pairs, 2, b).mean(axis=3)
        haar.append((blocks[:, :, 1] - blocks[:, :, 0]).mean(axis=1))

    cols = [mean, np.sqrt(var), skew, kurt, xs[:, 0], xs[:, -1], *q, mean_abs, rms, zcr, *acf, *bands, *haar]
    return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def _mixing(n: int) -> np.ndarray:
    h = hadamard(n) / np.sqrt(n)
    h.setflags(write=False)
    return h


def _signed_log(f: np.ndarray) -> np.ndarray:
    return np.sign(f) * np.log1p(np.abs(f))


class StatFeatureEmbedder(EmbeddingProvider):
    """Hand-crafted statistics, 64 per channel.

    Per channel: the 31-feature menu (moments, extremes, quantiles, mean
    absolute value, RMS, zero-crossing rate, autocorrelation at lags
    1/2/5/10/20, 8 log-spaced log band powers, 4 Haar mean differences) on the
    signal and again on its first difference, plus the fraction of exact zeros
    and the log ratio of difference SD to signal SD. Everything is passed
    through ``sign(f) * log1p(|f|)`` to keep feature scales comparable.

    With ``mix=True`` (the default) the 128 statistics are rotated by the
    normalized Sylvester-Hadamard matrix, so every output coordinate is a
    fixed +-1 blend of all statistics. The rotation is orthogonal: cosine
    similarities and hence EER are unchanged, but per-coordinate rank
    stability then reflects the whole feature vector the way the scores
    do, instead of single statistics that are immune or fragile to one
    particular degradation. ``mix=False`` returns the raw statistics.
    """

    name = "stat"

    def __init__(self, mix: bool = True):
        self.mix = bool(mix)

    def features(self, seqs: np.ndarray) -> np.ndarray:
        """Unmixed signed-log statistics, shape ``(n, 128)``."""
        n, _, L = seqs.shape
        x = seqs.reshape(n * 2, L)
        dx = np.diff(x, axis=1)
        sd_x = x.std(axis=1)
        sd_dx = dx.std(axis=1)
        smooth = np.log((sd_dx + 1e-9) / (sd_x + 1e-9))
        smooth[sd_x == 0] = 0.0
        extra = np.stack([(x == 0).mean(axis=1), smooth], axis=1)
        feats = np.concatenate([_menu(x), _menu(dx), extra], axis=1)
        return _signed_log(feats).reshape(n, 2 * feats.shape[1])

    def embed_batch(self, seqs: np.ndarray) -> np.ndarray:
        f = self.features(seqs)
        return f @ _mixing(f.shape[1]) if self.mix else f


# --- seeded convolutional stack ---------------------------------------------


class SeededConvEmbedder(EmbeddingProvider):
    """Untrained dense-concatenation dilated CNN with a fixed random head.

    Layer ``i`` sees the input plus the ReLU outputs of every earlier layer,
    convolves with a width-3 kernel at dilation ``2**i`` (zero 'same'
    padding), and appends its 32 channels. All 2 + 8*32 channels are
    averaged over time and projected to 128 values.
    """

    name = "seeded-conv"
    n_layers = 8
    channels = 32
    kernel = 3

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.layers = []
        c_in = 2
        for i in range(self.n_layers):
            fan_in = c_in * self.kernel
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(self.kernel, self.channels, c_in))
            b = rng.uniform(-1 / np.sqrt(fan_in), 1 / np.sqrt(fan_in), size=(self.channels, 1))
            self.layers.append((w, b, 2**i))
            c_in += self.channels
        bound = np.sqrt(6.0 / (c_in + self.dimension))
        self.head = rng.uniform(-bound, bound, size=(c_in, self.dimension))
        for w, b, _ in self.layers:
            w.setflags(write=False)
            b.setflags(write=False)
        self.head.setflags(write=False)

    def _conv(self, x: np.ndarray, w: np.ndarray, b: np.ndarray, dilation: int) -> np.ndarray:
        L = x.shape[-1]
        xp = np.pad(x, ((0, 0), (0, 0), (dilation, dilation)))
        out = b + np.matmul(w[0], xp[..., :L])
        out += np.matmul(w[1], xp[..., dilation : dilation + L])
        out += np.matmul(w[2], xp[..., 2 * dilation : 2 * dilation + L])
        return np.maximum(out, 0.0)

    def embed_batch(self, seqs: np.ndarray) -> np.ndarray:
        out = np.empty((seqs.shape[0], self.dimension))
        # one sequence at a time keeps peak memory at ~258 x L floats
        for i, s in enumerate(seqs):
            feats = s[None]
            pooled = [feats.mean(axis=-1)]
            for w, b, d in self.layers:
                y = self._conv(feats, w, b, d)
                pooled.append(y.mean(axis=-1))
                feats = np.concatenate([feats, y], axis=1)
            out[i] = np.concatenate(pooled, axis=1)[0] @ self.head
        return out


def make_provider(spec: str, seed: int = 0) -> EmbeddingProvider:
    """Build a provider from a config string: ``stat``, ``stat-raw`` or ``seeded-conv``."""
    if spec == "stat":
        return StatFeatureEmbedder()
    if spec == "stat-raw":
        return StatFeatureEmbedder(mix=False)
    if spec == "seeded-conv":
        return SeededConvEmbedder(seed)
    raise ArgumentError(f"unknown embedder {spec!r}")


# --- aggregation ------------------------------------------------------------


def centroid(embeddings: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    if len(embeddings) == 0:
        raise ArgumentError("centroid of an empty list")
    arr = np.asarray(embeddings, dtype=float)
    if arr.ndim != 2:
        raise ArgumentError("embeddings must share one dimension")
    return arr.mean(axis=0)


def embed_batches(provider: EmbeddingProvider, batches: Sequence[SequenceBatch]) -> list[np.ndarray]:
    """Per-sequence embeddings for every batch, shape ``(n_sequences, d)`` each."""
    return [provider(b.sequences) for b in batches]


def centroid_matrix(batches: Sequence[SequenceBatch], per_sequence: Sequence[np.ndarray], n_sequences: int) -> EmbeddingMatrix:
    rows = []
    for b, emb in zip(batches, per_sequence):
        if emb.shape[0] < n_sequences:
            raise ArgumentError(
                f"subject {b.subject_id} session {b.session}: {emb.shape[0]} sequences, need {n_sequences}"
            )
        rows.append(((b.subject_id, b.session), centroid(emb[:n_sequences])))
    return EmbeddingMatrix.from_rows(rows)


def build_embedding_matrix(
    provider: EmbeddingProvider, batches: Sequence[SequenceBatch], n_sequences: int
) -> EmbeddingMatrix:
    """Centroid of the first ``n_sequences`` sequence embeddings per (subject, session)."""
    if n_sequences < 1:
        raise ArgumentError("n_sequences must be >= 1")
    for b in batches:
        if len(b) < n_sequences:
            raise ArgumentError(f"subject {b.subject_id} session {b.session}: {len(b)} sequences, need {n_sequences}")
    trimmed = [b.with_sequences(b.sequences[:n_sequences]) for b in batches]
    return centroid_matrix(trimmed, embed_batches(provider, trimmed), n_sequences)
