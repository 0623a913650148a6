"""Configuration-driven sweeps over the four signal-quality manipulations.

A sweep evaluates every (manipulation, level) pair independently, writes one
report row per pair, and fits level -> KCC / EER per manipulation plus a
pooled KCC -> EER line over every successful row.
"""
from __future__ import annotations

import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Sequence

import numpy as np

from . import manipulate as mp
from .embed import centroid_matrix, embed_batches, make_provider
from .errors import ArgumentError, DegenerateError, FormatError, GazeDataError, InsufficientDataError
from .fitting import FitResult, fit
from .manipulate import ManipulationSpec
from .metrics import build_score_sets, eer, intercorrelation, temporal_persistence
from .model import (
    MANIPULATIONS,
    DatasetManifest,
    EmbeddingMatrix,
    GazeRecording,
    MetricReport,
    _fmt,
    ensure_dir,
    load_manifest,
    load_recording,
    read_embeddings,
    write_reports,
)
from .preprocess import PreprocessConfig, preprocess_corpus
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "decimate_hz": (1000, 500, 333, 250, 100, 50, 25, 10),
    "percentage": (100, 50, 33, 25, 10, 5, 2.5, 1),
    "n_sequences": tuple(range(1, 13)),
    "noise_sd": (0, 0.05, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2),
}
GRID_KIND = {
    "decimate_hz": "Decimate",
    "percentage": "Percentage",
    "n_sequences": "NumSequences",
    "noise_sd": "Noise",
}
FIT_MODEL = {"Decimate": "Log", "Percentage": "Log", "NumSequences": "Log", "Noise": "Linear"}
FIT_COLUMNS = ("x_name", "y_name", "model", "a", "b", "r2", "n_points")


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str | None = None
    synthetic: SyntheticSpec | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    embedder: str = "stat"
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    seed: int = 0
    out_dir: str | None = None
    kcc_aggregate: str = "mean"
    intercorr_population: str = "enrollment"

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None) and not self.embedder.startswith("external:"):
            raise ArgumentError("config needs exactly one of 'data' or 'synthetic'")
        grids = {}
        for name, levels in self.grids.items():
            if name not in GRID_KIND:
                raise ArgumentError(f"unknown grid {name!r}; expected {sorted(GRID_KIND)}")
            levels = tuple(float(x) for x in levels)
            if len(set(levels)) != len(levels):
                raise ArgumentError(f"grid {name} repeats a level")
            for lv in levels:
                ManipulationSpec(GRID_KIND[name], lv)
            grids[name] = levels
        if not any(grids.values()):
            raise ArgumentError("every manipulation grid is empty")
        object.__setattr__(self, "grids", grids)
        if self.kcc_aggregate not in ("mean", "median"):
            raise ArgumentError("kcc_aggregate must be 'mean' or 'median'")
        if self.intercorr_population not in ("enrollment", "all"):
            raise ArgumentError("intercorr_population must be 'enrollment' or 'all'")

    def specs(self) -> list[ManipulationSpec]:
        out = [ManipulationSpec(GRID_KIND[name], lv) for name, levels in self.grids.items() for lv in levels]
        return sorted(out, key=_spec_order)

    @classmethod
    def from_json(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        base = Path(base_dir)
        known = {"data", "synthetic", "preprocess", "embedder", "grids", "seed", "out_dir", "metrics"}
        unknown = set(data) - known
        if unknown:
            raise FormatError(f"unknown config sections {sorted(unknown)}")
        manifest = None
        if "data" in data:
            path = Path(data["data"]["manifest"])
            manifest = str(path if path.is_absolute() else base / path)
        synthetic = SyntheticSpec.from_json(data["synthetic"]) if "synthetic" in data else None
        grids = dict(DEFAULT_GRIDS)
        grids.update(data.get("grids", {}))
        embedder = str(data.get("embedder", "stat"))
        if embedder.startswith("external:"):
            path = Path(embedder[len("external:"):])
            embedder = "external:" + str(path if path.is_absolute() else base / path)
        metrics = data.get("metrics", {})
        out_dir = data.get("out_dir")
        return cls(
            manifest=manifest,
            synthetic=synthetic,
            preprocess=PreprocessConfig.from_json(data.get("preprocess")),
            embedder=embedder,
            grids=grids,
            seed=int(data.get("seed", 0)),
            out_dir=None if out_dir is None else str(base / out_dir),
            kcc_aggregate=metrics.get("kcc_aggregate", "mean"),
            intercorr_population=metrics.get("intercorr_population", "enrollment"),
        )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_json(data, base_dir=path.parent)


def _spec_order(s: ManipulationSpec):
    return (MANIPULATIONS.index(s.kind), s.level)


# --- data -------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Enrollment and authentication recordings, paired and sorted by subject."""

    enroll: tuple
    auth: tuple
    stream_s: float

    @property
    def subjects(self) -> list[str]:
        return [r.subject_id for r in self.enroll]


def load_dataset(manifest: DatasetManifest) -> Dataset:
    enroll = manifest.selected(manifest.enrollment_selector)
    auth = manifest.selected(manifest.authentication_selector)
    unpaired = sorted(set(enroll) ^ set(auth))
    if unpaired:
        raise InsufficientDataError(f"subjects without both enrollment and authentication recordings: {unpaired}")
    subjects = sorted(enroll)
    if len(subjects) < 3:
        raise InsufficientDataError(f"need at least 3 subjects, manifest has {len(subjects)}")
    load = lambda e: load_recording(manifest.resolve(e), e)  # noqa: E731
    stream = min(manifest.enrollment_selector.duration_s, manifest.authentication_selector.duration_s)
    return Dataset(tuple(load(enroll[s]) for s in subjects), tuple(load(auth[s]) for s in subjects), stream)


def prepare_data(cfg: ExperimentConfig, out_dir) -> DatasetManifest | None:
    """Generate the synthetic dataset under ``out_dir/data`` or load the manifest.

    The master seed replaces the generator's own seed so one number fixes
    both the data and the noise streams.
    """
    if cfg.synthetic is not None:
        return generate_synthetic(replace(cfg.synthetic, seed=cfg.seed), Path(out_dir) / "data")
    if cfg.manifest is not None:
        return load_manifest(cfg.manifest)
    return None


# --- evaluation -------------------------------------------------------------


def evaluate_embeddings(
    enroll: EmbeddingMatrix,
    auth: EmbeddingMatrix,
    kcc_aggregate: str = "mean",
    intercorr_population: str = "enrollment",
) -> dict:
    """KCC, EER and intercorrelation for one enrollment/authentication pair."""
    scores = build_score_sets(enroll, auth)
    persistence = temporal_persistence(enroll, auth, aggregate=kcc_aggregate)
    if intercorr_population == "enrollment":
        inter = intercorrelation(enroll, session=None)
    else:
        both = EmbeddingMatrix(enroll.keys + auth.keys, np.vstack([enroll.values, auth.values]))
        inter = intercorrelation(both, session=None)
    return {
        "kcc": persistence.mean_w,
        "eer": eer(scores),
        "intercorr_mean_abs": inter.mean_abs,
        "intercorr_sd": inter.sd_abs,
        "n_subjects": len(scores.genuine),
    }


class ConditionRunner:
    """Evaluates manipulations on one dataset, reusing unmanipulated work.

    The baseline preprocessing and per-sequence embeddings are computed once
    and shared by Percentage and NumSequences levels. Caching never changes
    results, so reports do not depend on how conditions are distributed
    across workers.
    """

    def __init__(self, cfg: ExperimentConfig, data: Dataset | None):
        self.cfg = cfg
        self.data = data
        self.provider = None if cfg.embedder.startswith("external:") else make_provider(cfg.embedder, cfg.seed)
        self._baseline = None
        if data is not None:
            per_stream = int(data.stream_s // cfg.preprocess.sequence_duration_s)
            if per_stream < cfg.preprocess.sequences_per_stream:
                self.pcfg = replace(cfg.preprocess, sequences_per_stream=max(per_stream, 1))
            else:
                self.pcfg = cfg.preprocess

    @property
    def n_stream(self) -> int:
        return self.pcfg.sequences_per_stream

    def _recordings(self) -> list[GazeRecording]:
        return list(self.data.enroll) + list(self.data.auth)

    def _preprocess(self, recordings):
        batches, stats = preprocess_corpus(recordings, self.pcfg)
        short = [b for b in batches if len(b) < self.n_stream]
        if short:
            b = short[0]
            raise InsufficientDataError(
                f"subject {b.subject_id} session {b.session}: {len(b)} sequences, need {self.n_stream}"
            )
        return batches, stats

    def baseline(self):
        if self._baseline is None:
            batches, stats = self._preprocess(self._recordings())
            self._baseline = (batches, stats, embed_batches(self.provider, batches))
        return self._baseline

    def _is_identity(self, spec: ManipulationSpec) -> bool:
        if spec.kind == "Decimate":
            fs = self.data.enroll[0].sampling_rate_hz
            return mp.decimation_factor(fs, spec.level) == 1
        if spec.kind == "Noise":
            return spec.level == 0
        if spec.kind == "Percentage":
            return spec.level == 100
        return False

    def embeddings(self, spec: ManipulationSpec):
        """Enrollment and authentication centroids plus normalization stats."""
        n_centroid = self.n_stream
        if spec.kind == "NumSequences":
            n_centroid = int(spec.level)
            if n_centroid > self.n_stream:
                raise ArgumentError(f"{n_centroid} sequences requested, streams hold {self.n_stream}")
        if spec.kind == "NumSequences" or self._is_identity(spec):
            batches, stats, per_seq = self.baseline()
        elif spec.kind == "Percentage":
            batches, stats, _ = self.baseline()
            batches = [mp.truncate_batch(b, spec.level) for b in batches]
            per_seq = embed_batches(self.provider, batches)
        else:
            recs = self._recordings()
            if spec.kind == "Decimate":
                recs = [mp.decimate_to(r, spec.level) for r in recs]
            else:
                recs = [mp.inject_noise(r, spec.level, self.cfg.seed) for r in recs]
            batches, stats = self._preprocess(recs)
            per_seq = embed_batches(self.provider, batches)
        m = centroid_matrix(batches, per_seq, n_centroid)
        n = len(self.data.enroll)
        enroll = EmbeddingMatrix(m.keys[:n], m.values[:n])
        auth = EmbeddingMatrix(m.keys[n:], m.values[n:])
        return enroll, auth, stats

    def _external(self, spec: ManipulationSpec):
        root = Path(self.cfg.embedder[len("external:"):]) / spec.kind / _fmt(float(spec.level))
        return read_embeddings(root / "enroll.csv"), read_embeddings(root / "auth.csv"), None

    def run(self, spec: ManipulationSpec) -> MetricReport:
        try:
            if self.provider is None:
                enroll, auth, stats = self._external(spec)
            else:
                enroll, auth, stats = self.embeddings(spec)
            m = evaluate_embeddings(enroll, auth, self.cfg.kcc_aggregate, self.cfg.intercorr_population)
        except Exception as exc:  # one bad condition must not sink the sweep
            if not isinstance(exc, (GazeDataError, OSError)):
                log.error("condition %s %s failed:\n%s", spec.kind, spec.level, traceback.format_exc())
            return MetricReport.failed(spec.kind, spec.level, f"{type(exc).__name__}: {exc}", self.cfg.seed)
        return MetricReport(
            manipulation=spec.kind,
            level=spec.level,
            seed=self.cfg.seed,
            norm_mean=None if stats is None else stats.mean,
            norm_sd=None if stats is None else stats.sd,
            **m,
        )


def run_condition(cfg: ExperimentConfig, manipulation: ManipulationSpec, data: Dataset | None = None) -> MetricReport:
    if data is None and not cfg.embedder.startswith("external:"):
        data = load_dataset(load_manifest(cfg.manifest))
    return ConditionRunner(cfg, data).run(manipulation)


# --- sweeps -----------------------------------------------------------------

_worker_runner: ConditionRunner | None = None


def _init_worker(cfg: ExperimentConfig, manifest_json, manifest_root):
    global _worker_runner
    data = None
    if manifest_json is not None:
        data = load_dataset(DatasetManifest.from_json(manifest_json, root=manifest_root))
    _worker_runner = ConditionRunner(cfg, data)


def _run_in_worker(spec: ManipulationSpec) -> MetricReport:
    return _worker_runner.run(spec)


def _group_for_workers(specs: Sequence[ManipulationSpec]) -> list[list[ManipulationSpec]]:
    # baseline-sharing conditions travel together so one worker computes the baseline once
    shared = [s for s in specs if s.kind in ("Percentage", "NumSequences")]
    rest = [[s] for s in specs if s.kind not in ("Percentage", "NumSequences")]
    return ([shared] if shared else []) + rest


def _run_group(group: Sequence[ManipulationSpec]) -> list[MetricReport]:
    return [_run_in_worker(s) for s in group]


def run_conditions(cfg: ExperimentConfig, manifest: DatasetManifest | None, jobs: int = 1) -> list[MetricReport]:
    specs = cfg.specs()
    manifest_json = None if manifest is None else manifest.to_json()
    root = None if manifest is None else str(manifest.root)
    if jobs <= 1:
        _init_worker(cfg, manifest_json, root)
        reports = [_run_in_worker(s) for s in specs]
    else:
        groups = _group_for_workers(specs)
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(cfg, manifest_json, root)) as ex:
            reports = [r for chunk in ex.map(_run_group, groups) for r in chunk]
    return sorted(reports, key=lambda r: (MANIPULATIONS.index(r.manipulation), r.level))


def sweep_fits(reports: Sequence[MetricReport]) -> list[tuple[str, str, FitResult]]:
    """Per-manipulation level fits plus the pooled KCC -> EER line."""
    ok = [r for r in reports if not r.error]
    out = []
    for kind in MANIPULATIONS:
        rows = [r for r in ok if r.manipulation == kind]
        for metric in ("kcc", "eer"):
            pts = [(r.level, getattr(r, metric)) for r in rows]
            try:
                out.append((f"{kind}:level", metric, fit(pts, FIT_MODEL[kind])))
            except GazeDataError as exc:
                if rows:
                    log.warning("skipping %s level->%s fit: %s", kind, metric, exc)
    try:
        out.append(("kcc", "eer", fit([(r.kcc, r.eer) for r in ok], "Linear")))
    except GazeDataError as exc:
        log.warning("skipping pooled kcc->eer fit: %s", exc)
    return out


def write_fits(fits: Sequence[tuple[str, str, FitResult]], path) -> None:
    lines = [",".join(FIT_COLUMNS)]
    for x_name, y_name, f in fits:
        lines.append(",".join([x_name, y_name, f.model, repr(f.a), repr(f.b), repr(f.r2), str(f.n_points)]))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SweepResult:
    reports: list
    fits: list
    report_path: Path
    fit_path: Path


def run_sweep(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> SweepResult:
    """Run every grid level, then write ``report.csv`` and ``fits.csv`` under ``out_dir``."""
    out = ensure_dir(out_dir or cfg.out_dir or ".")
    manifest = prepare_data(cfg, out)
    reports = run_conditions(cfg, manifest, jobs)
    fits = sweep_fits(reports)
    report_path = out / "report.csv"
    fit_path = out / "fits.csv"
    write_reports(reports, report_path)
    write_fits(fits, fit_path)
    return SweepResult(reports, fits, report_path, fit_path)


# --- spatial precision per subject -----------------------------------------


@dataclass(frozen=True)
class PrecisionRow:
    subject_id: str
    n_recordings: int
    precision: float
    warning: str = ""


def subject_spatial_precision(manifest: DatasetManifest, noise_sd: float, seed: int):
    """Per-subject median of recording precisions, and the median over subjects.

    Returns ``(rows, dataset_median)``. Recordings with too few valid
    segments are skipped and reported in the subject's warning.
    """
    per_subject: dict[str, list[float]] = {}
    problems: dict[str, list[str]] = {}
    for e in manifest.recordings:
        r = load_recording(manifest.resolve(e), e)
        r = mp.inject_noise(r, noise_sd, seed)
        try:
            per_subject.setdefault(e.subject_id, []).append(mp.spatial_precision(r))
        except InsufficientDataError as exc:
            problems.setdefault(e.subject_id, []).append(str(exc))
    rows = []
    for subject in manifest.subjects():
        values = per_subject.get(subject, [])
        warn = "; ".join(problems.get(subject, []))
        rows.append(PrecisionRow(subject, len(values), float(median(values)) if values else math.nan, warn))
    valid = [r.precision for r in rows if not math.isnan(r.precision)]
    if not valid:
        raise InsufficientDataError("no recording has enough valid 80 ms segments")
    return rows, float(median(valid))


def write_precision(rows: Sequence[PrecisionRow], dataset_median: float, path, noise_sd: float, seed: int) -> None:
    lines = ["subject_id,n_recordings,precision_deg,noise_sd,seed,warning"]
    for r in rows:
        warn = r.warning.replace(",", ";")
        lines.append(f"{r.subject_id},{r.n_recordings},{_fmt(r.precision)},{_fmt(float(noise_sd))},{seed},{warn}")
    lines.append(f"ALL,{sum(r.n_recordings for r in rows)},{_fmt(dataset_median)},{_fmt(float(noise_sd))},{seed},")
    Path(path).write_text("\n".join(lines) + "\n")
