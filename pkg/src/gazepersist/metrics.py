"""Biometric performance (EER), temporal persistence (Kendall's W) and
intercorrelation (Spearman) of embedding sets."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, DegenerateError, InsufficientDataError, SubjectMismatchError
from .model import EmbeddingMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreSets:
    genuine: np.ndarray
    impostor: np.ndarray
    subjects: tuple = ()


@dataclass(frozen=True)
class PersistenceResult:
    per_dimension_w: np.ndarray
    mean_w: float
    skipped: tuple = ()


@dataclass(frozen=True)
class IntercorrResult:
    mean_abs: float
    sd_abs: float
    n_pairs: int
    skipped: tuple = ()


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ArgumentError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _enroll_auth(enroll: EmbeddingMatrix, auth: EmbeddingMatrix):
    e = enroll.by_subject()
    a = auth.by_subject()
    if set(e) != set(a):
        only_e = sorted(set(e) - set(a))
        only_a = sorted(set(a) - set(e))
        raise SubjectMismatchError(f"subject sets differ: enrollment-only {only_e}, authentication-only {only_a}")
    subjects = sorted(e)
    return subjects, np.array([e[s] for s in subjects]), np.array([a[s] for s in subjects])


def build_score_sets(enroll: EmbeddingMatrix, auth: EmbeddingMatrix) -> ScoreSets:
    """Genuine = same-subject enrollment/authentication similarity; impostor = all s != t."""
    subjects, E, A = _enroll_auth(enroll, auth)
    if (np.linalg.norm(E, axis=1) == 0).any() or (np.linalg.norm(A, axis=1) == 0).any():
        raise ArgumentError("cosine similarity undefined for a zero embedding")
    En = E / np.linalg.norm(E, axis=1, keepdims=True)
    An = A / np.linalg.norm(A, axis=1, keepdims=True)
    sim = np.clip(En @ An.T, -1.0, 1.0)
    off = ~np.eye(len(subjects), dtype=bool)
    return ScoreSets(np.diag(sim).copy(), sim[off], tuple(subjects))


def eer(s: ScoreSets) -> float:
    """Equal error rate with linear interpolation at the FAR/FRR crossing.

    FAR(t) counts impostor scores >= t, FRR(t) genuine scores < t; t runs
    over the sorted distinct scores followed by +inf.
    """
    g = np.sort(np.asarray(s.genuine, dtype=float))
    imp = np.sort(np.asarray(s.impostor, dtype=float))
    if g.size == 0 or imp.size == 0:
        raise ArgumentError("EER needs non-empty genuine and impostor score sets")
    thresholds = np.append(np.unique(np.concatenate([g, imp])), np.inf)
    far = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    frr = np.searchsorted(g, thresholds, side="left") / g.size
    diff = far - frr
    j = int(np.argmax(diff <= 0))  # diff ends at -1, so a crossing always exists
    if diff[j] == 0 or j == 0:
        return float(far[j])
    t = diff[j - 1] / (diff[j - 1] - diff[j])
    return float(far[j - 1] + t * (far[j] - far[j - 1]))


def _tie_term(ranks_or_values: np.ndarray) -> float:
    _, counts = np.unique(ranks_or_values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def kendalls_w(rankings) -> float:
    """Kendall's coefficient of concordance with tie correction.

    ``rankings`` holds k lists (raters) of n values each; values are converted
    to average ranks first.
    """
    data = np.asarray(rankings, dtype=float)
    if data.ndim != 2:
        raise ArgumentError("rankings must be a k x n table")
    k, n = data.shape
    if k < 2 or n < 2:
        raise ArgumentError(f"need k >= 2 rankings of n >= 2 items, got k={k}, n={n}")
    ranks = np.vstack([rankdata(row, method="average") for row in data])
    rank_sums = ranks.sum(axis=0)
    s = float(np.sum((rank_sums - k * (n + 1) / 2.0) ** 2))
    ties = sum(_tie_term(row) for row in data)
    denom = k**2 * (n**3 - n) - k * ties
    if denom <= 0:
        raise DegenerateError("every ranking is constant; concordance undefined")
    return float(np.clip(12.0 * s / denom, 0.0, 1.0))


def temporal_persistence(
    enroll: EmbeddingMatrix, auth: EmbeddingMatrix, aggregate: str = "mean"
) -> PersistenceResult:
    """Per-dimension Kendall's W over subjects with the two sessions as raters."""
    subjects, E, A = _enroll_auth(enroll, auth)
    if len(subjects) < 3:
        raise InsufficientDataError(f"temporal persistence needs >= 3 subjects, got {len(subjects)}")
    if E.shape[1] != A.shape[1]:
        raise ArgumentError("enrollment and authentication dimensions differ")
    ws = np.full(E.shape[1], np.nan)
    skipped = []
    for d in range(E.shape[1]):
        try:
            ws[d] = kendalls_w([E[:, d], A[:, d]])
        except DegenerateError:
            skipped.append(d)
    if skipped:
        log.info("kendall's W: skipped %d dimension(s) constant in both sessions: %s", len(skipped), skipped)
    valid = ws[~np.isnan(ws)]
    if valid.size == 0:
        raise DegenerateError("every embedding dimension is constant")
    if aggregate == "mean":
        agg = float(np.mean(valid))
    elif aggregate == "median":
        agg = float(np.median(valid))
    else:
        raise ArgumentError(f"unknown aggregate {aggregate!r}")
    return PersistenceResult(ws, agg, tuple(skipped))


def spearman_matrix(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spearman correlation between columns; returns (matrix, constant-column mask)."""
    values = np.asarray(values, dtype=float)
    ranks = np.apply_along_axis(rankdata, 0, values)
    ranks = ranks - ranks.mean(axis=0)
    norms = np.sqrt((ranks**2).sum(axis=0))
    constant = norms == 0
    safe = np.where(constant, 1.0, norms)
    z = ranks / safe
    corr = np.clip(z.T @ z, -1.0, 1.0)
    return corr, constant


def intercorrelation(m: EmbeddingMatrix, session: str | None = "S1") -> IntercorrResult:
    """Mean and SD of |Spearman rho| over all unordered pairs of dimensions.

    Correlations are taken across subjects using the rows of ``session``
    (the enrollment centroids by default; ``None`` uses every row).
    """
    if session is None:
        values = m.values
    else:
        rows = m.by_subject(session)
        values = np.array(list(rows.values()))
    if values.shape[0] < 3:
        raise InsufficientDataError(f"intercorrelation needs >= 3 subjects, got {values.shape[0]}")
    corr, constant = spearman_matrix(values)
    iu = np.triu_indices(values.shape[1], k=1)
    keep = ~(constant[iu[0]] | constant[iu[1]])
    skipped = tuple(int(i) for i in np.nonzero(constant)[0])
    if skipped:
        log.info("intercorrelation: skipped constant dimension(s) %s", list(skipped))
    vals = np.abs(corr[iu][keep])
    if vals.size == 0:
        raise DegenerateError("no non-constant dimension pairs")
    return IntercorrResult(float(vals.mean()), float(vals.std()), int(vals.size), skipped)
