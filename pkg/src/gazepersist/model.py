"""Core data types and file I/O for recordings, manifests and embeddings.

Invalid gaze samples are carried as NaN from parse time onward. Every other
non-finite value is rejected at construction.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DuplicateKeyError,
    EmptyRecordingError,
    FormatError,
    ParseError,
)

SESSIONS = ("S1", "S2")
RECORDING_HEADER = ("x_deg", "y_deg")
MANIPULATIONS = ("Decimate", "Percentage", "NumSequences", "Noise")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_session(session: str) -> str:
    if session not in SESSIONS:
        raise ArgumentError(f"session must be one of {SESSIONS}, got {session!r}")
    return session


@dataclass(frozen=True, eq=False)
class GazeRecording:
    """Monocular gaze positions in degrees of visual angle, NaN = invalid."""

    subject_id: str
    session: str
    task: str
    sampling_rate_hz: float
    horizontal_deg: np.ndarray
    vertical_deg: np.ndarray

    def __post_init__(self):
        _check_session(self.session)
        if not self.sampling_rate_hz > 0:
            raise ArgumentError("sampling_rate_hz must be positive")
        h = _frozen(self.horizontal_deg)
        v = _frozen(self.vertical_deg)
        if h.ndim != 1 or v.ndim != 1 or h.shape != v.shape:
            raise ArgumentError("horizontal and vertical arrays must be 1-D and equal length")
        if np.isinf(h).any() or np.isinf(v).any():
            raise ArgumentError("valid samples must be finite")
        object.__setattr__(self, "horizontal_deg", h)
        object.__setattr__(self, "vertical_deg", v)

    def __len__(self):
        return self.horizontal_deg.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GazeRecording):
            return NotImplemented
        return (
            (self.subject_id, self.session, self.task, self.sampling_rate_hz)
            == (other.subject_id, other.session, other.task, other.sampling_rate_hz)
            and np.array_equal(self.horizontal_deg, other.horizontal_deg, equal_nan=True)
            and np.array_equal(self.vertical_deg, other.vertical_deg, equal_nan=True)
        )

    __hash__ = None

    @property
    def duration_s(self) -> float:
        return len(self) / self.sampling_rate_hz

    @property
    def invalid(self) -> np.ndarray:
        """Boolean mask of samples where either channel is invalid."""
        return np.isnan(self.horizontal_deg) | np.isnan(self.vertical_deg)

    def with_samples(self, horizontal, vertical, sampling_rate_hz=None) -> "GazeRecording":
        return GazeRecording(
            self.subject_id,
            self.session,
            self.task,
            self.sampling_rate_hz if sampling_rate_hz is None else sampling_rate_hz,
            horizontal,
            vertical,
        )


@dataclass(frozen=True)
class RecordingEntry:
    path: str
    subject_id: str
    session: str
    task: str
    sampling_rate_hz: float

    def __post_init__(self):
        _check_session(self.session)
        if not float(self.sampling_rate_hz) > 0:
            raise ArgumentError(f"{self.path}: sampling_rate_hz must be positive")


@dataclass(frozen=True)
class Selector:
    session: str
    task: str
    duration_s: float

    def __post_init__(self):
        _check_session(self.session)

    def matches(self, entry: RecordingEntry) -> bool:
        return entry.session == self.session and entry.task == self.task


@dataclass(frozen=True)
class DatasetManifest:
    """Recordings plus the enrollment/authentication selectors.

    Relative recording paths are resolved against ``root`` (the directory the
    manifest was loaded from).
    """

    dataset_name: str
    recordings: tuple
    enrollment_selector: Selector
    authentication_selector: Selector
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        seen = set()
        for e in self.recordings:
            key = (e.subject_id, e.session, e.task)
            if key in seen:
                raise DuplicateKeyError(f"duplicate recording for {key}")
            seen.add(key)
        if self.enrollment_selector.session == self.authentication_selector.session:
            raise ArgumentError("enrollment and authentication selectors must use different sessions")

    def resolve(self, entry: RecordingEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else Path(self.root) / p

    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.recordings})

    def selected(self, selector: Selector) -> dict[str, RecordingEntry]:
        return {e.subject_id: e for e in self.recordings if selector.matches(e)}

    def to_json(self) -> dict:
        def sel(s):
            return {"session": s.session, "task": s.task, "duration_s": s.duration_s}

        return {
            "dataset_name": self.dataset_name,
            "recordings": [
                {
                    "path": e.path,
                    "subject_id": e.subject_id,
                    "session": e.session,
                    "task": e.task,
                    "sampling_rate_hz": e.sampling_rate_hz,
                }
                for e in self.recordings
            ],
            "enrollment_selector": sel(self.enrollment_selector),
            "authentication_selector": sel(self.authentication_selector),
        }

    @classmethod
    def from_json(cls, data: Mapping, root=".") -> "DatasetManifest":
        try:
            recs = [
                RecordingEntry(
                    str(r["path"]),
                    str(r["subject_id"]),
                    str(r["session"]),
                    str(r["task"]),
                    float(r["sampling_rate_hz"]),
                )
                for r in data["recordings"]
            ]
            enroll = Selector(**data["enrollment_selector"])
            auth = Selector(**data["authentication_selector"])
            name = str(data["dataset_name"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed manifest: {exc}") from exc
        return cls(name, recs, enroll, auth, Path(root))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return DatasetManifest.from_json(data, root=path.parent)


def save_manifest(m: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(m.to_json(), indent=2) + "\n")


def validate_manifest(m: DatasetManifest) -> list[str]:
    """Return human-readable warnings; an empty list means the manifest is usable."""
    warnings = []
    for e in m.recordings:
        if not m.resolve(e).is_file():
            warnings.append(f"missing file: {e.path}")
    enroll = m.selected(m.enrollment_selector)
    auth = m.selected(m.authentication_selector)
    for subject in m.subjects():
        if subject not in enroll:
            warnings.append(
                f"subject {subject} has no enrollment recording "
                f"({m.enrollment_selector.session}/{m.enrollment_selector.task})"
            )
        if subject not in auth:
            warnings.append(
                f"subject {subject} has no authentication recording "
                f"({m.authentication_selector.session}/{m.authentication_selector.task})"
            )
    return warnings


# --- recordings -------------------------------------------------------------

_EMPTY_CELL = re.compile(r"(?m)(^|,)[ \t]*(?=,|\r?$)")


def _parse_cell(cell: str, row: int) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", row=row) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {cell!r}", row=row)
    return value


def _parse_rows_slow(lines: Sequence[str]) -> np.ndarray:
    out = np.empty((len(lines), 2))
    for i, line in enumerate(lines, start=1):
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError(f"expected 2 columns, found {len(cells)}", row=i)
        out[i - 1, 0] = _parse_cell(cells[0], i)
        out[i - 1, 1] = _parse_cell(cells[1], i)
    return out


def parse_recording_text(text: str) -> np.ndarray:
    """Parse recording CSV text into an ``(n, 2)`` array with NaN for missing cells.

    The ``x_deg,y_deg`` header is optional. Row numbers in errors count data
    rows from 1.
    """
    lines = text.splitlines()
    if lines and tuple(c.strip().lower() for c in lines[0].split(",")) == RECORDING_HEADER:
        lines = lines[1:]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyRecordingError("recording contains no samples")
    joined = "\n".join(lines)
    # plain empty cells are common (blinks); the regex also handles blank padding
    quick = ("\n" + joined + "\n").replace("\n,", "\nnan,").replace(",\n", ",nan\n")
    for body in (quick, _EMPTY_CELL.sub(r"\1nan", joined)):
        data = _loadtxt(body, len(lines))
        if data is not None:
            return data
    # slow path pinpoints the offending row
    return _parse_rows_slow(lines)


def _loadtxt(body: str, n_rows: int) -> np.ndarray | None:
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2, dtype=float)
    except ValueError:
        return None
    if data.shape != (n_rows, 2) or np.isinf(data).any():
        return None
    return data


def load_recording(path, meta: RecordingEntry) -> GazeRecording:
    text = Path(path).read_text()
    try:
        data = parse_recording_text(text)
    except ParseError as exc:
        err = ParseError(f"{path}: {exc}")
        err.row = exc.row
        raise err from None
    except EmptyRecordingError as exc:
        raise EmptyRecordingError(f"{path}: {exc}") from None
    return GazeRecording(
        meta.subject_id,
        meta.session,
        meta.task,
        float(meta.sampling_rate_hz),
        data[:, 0],
        data[:, 1],
    )


def write_recording(r: GazeRecording, path, fmt: str = "%.6f") -> None:
    """Write a recording CSV; NaN samples become empty cells."""
    pairs = np.column_stack([r.horizontal_deg, r.vertical_deg]).ravel().tolist()
    body = (f"{fmt},{fmt}\n" * len(r)) % tuple(pairs)
    Path(path).write_text(",".join(RECORDING_HEADER) + "\n" + body.replace("nan", ""))


# --- sequences --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SequenceBatch:
    """Normalized two-channel velocity sequences, shape ``(n_sequences, 2, L)``."""

    subject_id: str
    session: str
    sequences: np.ndarray
    sequence_duration_s: float = 5.0

    def __post_init__(self):
        _check_session(self.session)
        s = _frozen(self.sequences)
        if s.ndim != 3 or s.shape[1] != 2:
            raise ArgumentError(f"sequences must have shape (n, 2, L), got {s.shape}")
        if not np.isfinite(s).all():
            raise ArgumentError("sequence batch contains invalid values")
        object.__setattr__(self, "sequences", s)

    def __len__(self):
        return self.sequences.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SequenceBatch):
            return NotImplemented
        return (
            (self.subject_id, self.session, self.sequence_duration_s)
            == (other.subject_id, other.session, other.sequence_duration_s)
            and np.array_equal(self.sequences, other.sequences)
        )

    __hash__ = None

    @property
    def samples_per_sequence(self) -> int:
        return self.sequences.shape[2]

    def with_sequences(self, sequences) -> "SequenceBatch":
        return SequenceBatch(self.subject_id, self.session, sequences, self.sequence_duration_s)


# --- embeddings -------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Embedding vectors keyed by ``(subject_id, session)``.

    ``values[i]`` belongs to ``keys[i]``.
    """

    keys: tuple
    values: np.ndarray

    def __post_init__(self):
        keys = tuple((str(s), str(sess)) for s, sess in self.keys)
        if len(set(keys)) != len(keys):
            dup = sorted({k for k in keys if keys.count(k) > 1})
            raise DuplicateKeyError(f"duplicate (subject, session) keys: {dup}")
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[0] != len(keys):
            raise FormatError(f"values shape {values.shape} does not match {len(keys)} keys")
        if not np.isfinite(values).all():
            raise FormatError("embedding entries must be finite")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_rows(cls, rows: Mapping | Iterable) -> "EmbeddingMatrix":
        items = list(rows.items()) if isinstance(rows, Mapping) else list(rows)
        keys = [k for k, _ in items]
        dims = {len(v) for _, v in items}
        if len(dims) > 1:
            raise FormatError(f"inconsistent embedding dimensions {sorted(dims)}")
        d = dims.pop() if dims else 0
        values = np.array([np.asarray(v, dtype=float) for _, v in items]).reshape(len(items), d)
        return cls(keys, values)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.keys)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.keys == other.keys and np.array_equal(self.values, other.values)

    def get(self, subject_id: str, session: str) -> np.ndarray:
        return self.values[self.keys.index((subject_id, session))]

    def by_subject(self, session: str | None = None) -> dict[str, np.ndarray]:
        """Rows of one session (or all rows if unambiguous), keyed by subject, sorted."""
        out = {}
        for (subject, sess), v in zip(self.keys, self.values):
            if session is not None and sess != session:
                continue
            if subject in out:
                raise DuplicateKeyError(f"subject {subject} appears in several sessions; pass session=")
            out[subject] = v
        return dict(sorted(out.items()))


def write_embeddings(m: EmbeddingMatrix, path) -> None:
    if len(m) == 0:
        raise ArgumentError("cannot write an empty embedding matrix")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "session"] + [f"e{i}" for i in range(m.dimension)])
        for (subject, session), v in zip(m.keys, m.values):
            w.writerow([subject, session] + [repr(float(x)) for x in v])


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty embedding file")
    header, body = rows[0], rows[1:]
    if header[:2] != ["subject_id", "session"]:
        raise FormatError(f"{path}: header must start with subject_id,session")
    d = len(header) - 2
    if header[2:] != [f"e{i}" for i in range(d)]:
        raise FormatError(f"{path}: embedding columns must be e0..e{d - 1}")
    items = []
    for i, row in enumerate(body, start=1):
        if not row:
            continue
        if len(row) != d + 2:
            raise FormatError(f"{path}: row {i} has dimension {len(row) - 2}, expected {d}")
        try:
            vec = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from None
        items.append(((row[0], row[1]), vec))
    if not items:
        raise FormatError(f"{path}: no embedding rows")
    return EmbeddingMatrix.from_rows(items)


# --- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    manipulation: str
    level: float
    kcc: float
    eer: float
    intercorr_mean_abs: float
    intercorr_sd: float
    n_subjects: int
    seed: int | None = None
    norm_mean: float | None = None
    norm_sd: float | None = None
    error: str = ""

    def __post_init__(self):
        if self.error:
            return
        for name in ("kcc", "eer", "intercorr_mean_abs"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ArgumentError(f"{name}={value} outside [0, 1]")
        if self.intercorr_sd < 0:
            raise ArgumentError("intercorr_sd must be non-negative")

    @classmethod
    def failed(cls, manipulation, level, error, seed=None) -> "MetricReport":
        nan = math.nan
        return cls(manipulation, level, nan, nan, nan, nan, 0, seed, None, None, str(error) or "error")


REPORT_COLUMNS = (
    "manipulation",
    "level",
    "kcc",
    "eer",
    "intercorr_mean_abs",
    "intercorr_sd",
    "n_subjects",
    "seed",
    "norm_mean",
    "norm_sd",
    "error",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        if x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def write_reports(reports: Sequence[MetricReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = [getattr(r, c) for c in REPORT_COLUMNS]
            row[1] = _fmt(float(r.level)) if r.level is not None else ""
            w.writerow([_fmt(x) for x in row])


def read_reports(path) -> list[MetricReport]:
    def num(s):
        return math.nan if s == "" else float(s)

    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(REPORT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"{path}: missing report columns {sorted(missing)}")
        for row in reader:
            try:
                out.append(
                    MetricReport(
                        manipulation=row["manipulation"],
                        level=num(row["level"]),
                        kcc=num(row["kcc"]),
                        eer=num(row["eer"]),
                        intercorr_mean_abs=num(row["intercorr_mean_abs"]),
                        intercorr_sd=num(row["intercorr_sd"]),
                        n_subjects=int(row["n_subjects"] or 0),
                        seed=int(row["seed"]) if row["seed"] else None,
                        norm_mean=num(row["norm_mean"]) if row["norm_mean"] else None,
                        norm_sd=num(row["norm_sd"]) if row["norm_sd"] else None,
                        error=row["error"],
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}: line {reader.line_num}: {exc}") from None
    return out


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
