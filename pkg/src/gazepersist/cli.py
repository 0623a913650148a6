"""Command-line front end.

Every subcommand writes machine-readable files under ``--out`` and prints a
one-line summary. Exit codes: 0 success, 1 usage error, 2 data error,
3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import manipulate as mp
from .errors import GazeDataError
from .experiment import (
    ConditionRunner,
    ExperimentConfig,
    evaluate_embeddings,
    load_config,
    load_dataset,
    run_sweep,
    subject_spatial_precision,
    write_fits,
    write_precision,
)
from .fitting import fit
from .manipulate import ManipulationSpec
from .model import (
    DatasetManifest,
    MetricReport,
    ensure_dir,
    load_manifest,
    load_recording,
    read_embeddings,
    read_reports,
    save_manifest,
    validate_manifest,
    write_embeddings,
    write_recording,
    write_reports,
)
from .preprocess import PreprocessConfig, preprocess_corpus
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _preprocess_config(path) -> PreprocessConfig:
    if path is None:
        return PreprocessConfig()
    data = json.loads(Path(path).read_text())
    return PreprocessConfig.from_json(data.get("preprocess", data))


def _dataset_or_fail(manifest: DatasetManifest):
    for w in validate_manifest(manifest):
        logging.warning("manifest: %s", w)
    return load_dataset(manifest)


# --- subcommands ------------------------------------------------------------


def cmd_gen_synthetic(args) -> str:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data = data.get("synthetic", data)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.n_subjects is not None:
        data["n_subjects"] = args.n_subjects
    spec = SyntheticSpec.from_json(data)
    manifest = generate_synthetic(spec, args.out)
    return f"wrote {len(manifest.recordings)} recordings for {spec.n_subjects} subjects to {Path(args.out) / 'manifest.json'}"


def cmd_preprocess(args) -> str:
    cfg = _preprocess_config(args.config)
    manifest = load_manifest(args.manifest)
    data = _dataset_or_fail(manifest)
    recs = list(data.enroll) + list(data.auth)
    batches, stats = preprocess_corpus(recs, cfg)
    out = ensure_dir(args.out)
    seq_dir = ensure_dir(out / "sequences")
    for b in batches:
        n, _, L = b.sequences.shape
        idx_seq = np.repeat(np.arange(n), L)
        idx_t = np.tile(np.arange(L), n)
        h = b.sequences[:, 0, :].ravel()
        v = b.sequences[:, 1, :].ravel()
        body = "\n".join(f"{s},{t},{x!r},{y!r}" for s, t, x, y in zip(idx_seq, idx_t, h.tolist(), v.tolist()))
        (seq_dir / f"{b.subject_id}_{b.session}.csv").write_text("sequence,sample,h_vel,v_vel\n" + body + "\n")
    (out / "normalization.json").write_text(json.dumps({"mean": stats.mean, "sd": stats.sd}, indent=2) + "\n")
    return f"preprocessed {len(batches)} recordings into {sum(len(b) for b in batches)} sequences (mean={stats.mean:.6g}, sd={stats.sd:.6g})"


def cmd_manipulate(args) -> str:
    kind = {"decimate": "Decimate", "noise": "Noise"}[args.kind]
    spec = ManipulationSpec(kind, args.level)
    manifest = load_manifest(args.manifest)
    out = ensure_dir(args.out)
    rec_dir = ensure_dir(out / "recordings")
    entries = []
    for e in manifest.recordings:
        r = load_recording(manifest.resolve(e), e)
        r = mp.decimate_to(r, spec.level) if kind == "Decimate" else mp.inject_noise(r, spec.level, args.seed)
        name = Path(e.path).name
        write_recording(r, rec_dir / name)
        entries.append(type(e)(f"recordings/{name}", e.subject_id, e.session, e.task, r.sampling_rate_hz))
    new = DatasetManifest(
        f"{manifest.dataset_name}-{args.kind}{args.level:g}",
        entries,
        manifest.enrollment_selector,
        manifest.authentication_selector,
        out,
    )
    save_manifest(new, out / "manifest.json")
    return f"{args.kind} {args.level:g}: wrote {len(entries)} recordings to {out / 'manifest.json'}"


def cmd_embed(args) -> str:
    cfg = _preprocess_config(args.config)
    manifest = load_manifest(args.manifest)
    data = _dataset_or_fail(manifest)
    exp = ExperimentConfig(manifest=str(args.manifest), preprocess=cfg, embedder=args.embedder, seed=args.seed)
    runner = ConditionRunner(exp, data)
    if args.percentage != 100:
        spec = ManipulationSpec("Percentage", args.percentage)
        if args.n_sequences is not None:
            raise UsageError("--percentage and --n-sequences cannot be combined")
    elif args.n_sequences is not None:
        spec = ManipulationSpec("NumSequences", args.n_sequences)
    else:
        spec = ManipulationSpec("Percentage", 100)
    enroll, auth, _ = runner.embeddings(spec)
    out = ensure_dir(args.out)
    write_embeddings(enroll, out / "enroll.csv")
    write_embeddings(auth, out / "auth.csv")
    return f"embedded {len(enroll)} subjects with {args.embedder} (d={enroll.dimension}) into {out}"


def cmd_evaluate(args) -> str:
    enroll = read_embeddings(args.enroll)
    auth = read_embeddings(args.auth)
    m = evaluate_embeddings(enroll, auth)
    report = MetricReport(manipulation="External", level=math.nan, seed=None, **m)
    out = ensure_dir(args.out)
    write_reports([report], out / "report.csv")
    return (
        f"n_subjects={report.n_subjects} eer={report.eer:.4f} kcc={report.kcc:.4f} "
        f"intercorr={report.intercorr_mean_abs:.3f} ({report.intercorr_sd:.3f})"
    )


def cmd_fit(args) -> str:
    reports = [r for r in read_reports(args.report) if not r.error]
    if args.manipulation:
        reports = [r for r in reports if r.manipulation == args.manipulation]
    pts = []
    for r in reports:
        try:
            pts.append((float(getattr(r, args.x)), float(getattr(r, args.y))))
        except AttributeError:
            raise UsageError(f"unknown report column {args.x!r} or {args.y!r}") from None
    model = {"linear": "Linear", "log": "Log"}[args.model]
    result = fit(pts, model)
    out = ensure_dir(args.out)
    x_name = f"{args.manipulation}:{args.x}" if args.manipulation else args.x
    write_fits([(x_name, args.y, result)], out / "fit.csv")
    return f"{model} fit {args.y} ~ {args.x}: a={result.a:.6g} b={result.b:.6g} r2={result.r2:.4f} (n={result.n_points})"


def cmd_sweep(args) -> str:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.embedder is not None:
        cfg = replace(cfg, embedder=args.embedder)
    result = run_sweep(cfg, args.out, jobs=args.jobs)
    failed = sum(1 for r in result.reports if r.error)
    pooled = [f for x, y, f in result.fits if (x, y) == ("kcc", "eer")]
    tail = f"; pooled eer~kcc slope={pooled[0].a:.4f} r2={pooled[0].r2:.3f}" if pooled else ""
    return f"{len(result.reports)} conditions ({failed} failed), {len(result.fits)} fits -> {result.report_path.parent}{tail}"


def cmd_precision(args) -> str:
    manifest = load_manifest(args.manifest)
    rows, dataset_median = subject_spatial_precision(manifest, args.noise_sd, args.seed)
    out = ensure_dir(args.out)
    write_precision(rows, dataset_median, out / "precision.csv", args.noise_sd, args.seed)
    return f"spatial precision (noise sd {args.noise_sd:g}): dataset median {dataset_median:.4f} deg over {len(rows)} subjects"


# --- parser -----------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gazepersist", description="Eye-movement embedding persistence benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def out_flag(sp):
        sp.add_argument("--out", required=True, help="output directory (created if missing)")

    sp = sub.add_parser("gen-synthetic", help="generate a synthetic dataset and manifest")
    sp.add_argument("--config", help="JSON with synthetic generator fields (or a 'synthetic' section)")
    sp.add_argument("--seed", type=int, help="generator seed (overrides the config)")
    sp.add_argument("--n-subjects", type=int, help="number of subjects (overrides the config)")
    out_flag(sp)
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("preprocess", help="write normalized velocity sequences")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--config", help="JSON with preprocessing fields (or a 'preprocess' section)")
    out_flag(sp)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("manipulate", help="decimate or add noise to raw recordings")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--kind", required=True, choices=("decimate", "noise"), help="raw-signal manipulation")
    sp.add_argument("--level", required=True, type=float, help="target Hz (decimate) or noise SD in degrees (noise)")
    sp.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
    out_flag(sp)
    sp.set_defaults(func=cmd_manipulate)

    sp = sub.add_parser("embed", help="write enrollment/authentication centroid embeddings")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--config", help="JSON with preprocessing fields (or a 'preprocess' section)")
    sp.add_argument("--embedder", default="stat", choices=("stat", "seeded-conv"), help="embedding provider")
    sp.add_argument("--seed", type=int, default=0, help="seed for the seeded-conv provider")
    sp.add_argument("--n-sequences", type=_positive_int, help="sequences per centroid (default: whole stream)")
    sp.add_argument("--percentage", type=float, default=100.0, help="keep this percent of each sequence, centred")
    out_flag(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("evaluate", help="KCC, EER and intercorrelation of supplied embeddings")
    sp.add_argument("--enroll", required=True, help="enrollment embedding CSV")
    sp.add_argument("--auth", required=True, help="authentication embedding CSV")
    out_flag(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("fit", help="fit a linear or logarithmic model to report columns")
    sp.add_argument("--report", required=True, help="report CSV from sweep or evaluate")
    sp.add_argument("--x", required=True, help="independent column, e.g. level or kcc")
    sp.add_argument("--y", required=True, help="dependent column, e.g. eer or kcc")
    sp.add_argument("--model", required=True, choices=("linear", "log"), help="f(x)=ax+b or f(x)=a*ln(x)+b")
    sp.add_argument("--manipulation", help="only use rows of this manipulation")
    out_flag(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sweep", help="run every manipulation grid from a config")
    sp.add_argument("--config", required=True, help="experiment config JSON")
    sp.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--embedder", help="override the config embedder")
    out_flag(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("precision", help="per-subject spatial precision after noise injection")
    sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    sp.add_argument("--noise-sd", type=float, default=0.0, help="Gaussian noise SD in degrees (default 0)")
    sp.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
    out_flag(sp)
    sp.set_defaults(func=cmd_precision)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        print(args.func(args))
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (GazeDataError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
