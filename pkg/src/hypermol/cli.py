"""Command line: ``hypermol {simulate,preprocess,reconstruct,evaluate,export-volume,selftest}``.

Exit codes: 0 success, 1 validation failure, 2 I/O or format error,
64 usage error (unknown flag or subcommand).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .config import ConfigError, RunConfig
from .evalreport import ParamMapping, evaluate_reconstruction, instance_correlations, write_shell_correlation_csv
from .hypervolume import instance_at, synthesize_grid
from .pipeline import preprocess, run_reconstruction, simulate, truth_volume

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64

log = logging.getLogger("hypermol")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "phantom": getattr(args, "preset", None),
        "N": getattr(args, "n", None),
        "images": getattr(args, "images", None),
        "snr": getattr(args, "snr", None),
        "seed": getattr(args, "seed", None),
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
            if k == "phantom":
                cfg.blobs = []
    return cfg.validate()


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    stack = simulate(cfg)
    formats.write_images(out / "images.hvimg", stack)
    formats.write_labels_csv(out / "labels.csv", stack.rotations, stack.ts)
    formats.write_volume(out / "truth.hvvol", truth_volume(cfg))
    formats.atomic_write_text(out / "config.txt", cfg.to_text())
    log.info("wrote %d images to %s", stack.count, out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config_from_args(args)
    stack = formats.read_images(args.image_file)
    if stack.N != cfg.N:
        cfg.N = stack.N
    formats.write_circles(args.out, preprocess(stack, cfg))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config_from_args(args)
    circles = formats.read_circles(args.circles)
    if circles.grid != cfg.grid():
        raise ConfigError("circle file shell grid differs from the configured grid")
    out = Path(args.out)
    res = run_reconstruction(circles, cfg)
    formats.write_volume(out / "recon.hvvol", res.hv)
    formats.write_assignments_csv(out / "assignments.csv", res.assignments)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "K", "Q", "step", "mean_score", "degenerate"] + [f"t_bin{i}" for i in range(10)])
    for d in res.diagnostics:
        w.writerow([d.stage, d.K, d.Q, repr(d.step), repr(d.mean_score), d.degenerate] + d.t_histogram.tolist())
    formats.atomic_write_text(out / "diagnostics.csv", buf.getvalue())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = formats.read_volume(args.truth)
    rec = formats.read_volume(args.recon)
    if truth.grid != rec.grid:
        raise ConfigError("volumes live on different shell grids")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.labels and args.assignments:
        labels = formats.read_labels_csv(args.labels)
        asg = formats.read_assignments_csv(args.assignments)
        order = np.argsort(asg["image_index"])
        mapping = ParamMapping(labels["t"], asg["t"][order])
        summary = evaluate_reconstruction(rec, truth, mapping)
        mapping.write_csv(out / "mapping.csv")
        mapping.write_histogram_csv(out / "histogram.csv")
        corr, ts = summary.correlations, np.linspace(0.1, 0.9, 9)
        rows = [
            ("spearman_abs", summary.spearman),
            ("mean_shell_correlation", summary.mean_shell_correlation),
            ("reflected", int(summary.alignment.reflected)),
            ("flipped_t", int(summary.alignment.flipped_t)),
        ]
        if summary.degeneracy is not None:
            rows += [
                ("degenerate_flag", int(summary.degeneracy.flagged)),
                ("degenerate_p", summary.degeneracy.p_value),
                ("used_range", summary.degeneracy.used_range),
            ]
    else:
        ts = np.linspace(0.1, 0.9, 9)
        corr = instance_correlations(rec, truth, ts)
        K_eval = (2 * truth.grid.K) // 3
        rows = [("mean_shell_correlation", float(np.nanmean(corr[:, :K_eval])))]
    write_shell_correlation_csv(out / "shell_correlation.csv", ts, corr)
    formats.atomic_write_text(out / "summary.csv", "metric,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows))
    for k, v in rows:
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_export(args) -> int:
    hv = formats.read_volume(args.volume)
    if not 0.0 <= args.t <= 1.0:
        raise ConfigError("t must lie in [0, 1]")
    h = 1.0 / args.n if args.pixel_size is None else args.pixel_size
    grid = synthesize_grid(instance_at(hv, args.t), args.n, mode=args.mode, pixel_size=h)
    out = Path(args.out)
    formats.atomic_write_bytes(out, np.ascontiguousarray(grid, dtype="<f4").tobytes())
    meta = (
        f"shape = {args.n} {args.n} {args.n}\ndtype = float32 little-endian\norder = C (x1, x2, x3)\n"
        f"pixel_size = {h!r}\ncoordinates = x_j = (j - (N - 1) / 2) * pixel_size\n"
        f"t = {args.t!r}\nsource = {args.volume}\n"
    )
    formats.atomic_write_text(out.with_name(out.name + ".txt"), meta)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(seed=args.seed)
    for f in failures:
        print(f"FAIL {f}")
    print("selftest: " + ("ok" if not failures else f"{len(failures)} failure(s)"))
    return EXIT_OK if not failures else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypermol", description="Simulate and reconstruct continuously heterogeneous objects from projections.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, sim: bool = False):
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        if sim:
            sp.add_argument("--preset")
            sp.add_argument("--n", type=int)
            sp.add_argument("--images", type=int)
            sp.add_argument("--snr", type=float)

    sp = sub.add_parser("simulate", help="render noisy projections, labels and the truth volume")
    common(sp, sim=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("preprocess", help="polar Fourier analysis of an image stack")
    common(sp)
    sp.add_argument("--images", dest="image_file", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("reconstruct", help="ab-initio reconstruction from circle coefficients")
    common(sp)
    sp.add_argument("--circles", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("evaluate", help="compare a reconstruction with the truth")
    sp.add_argument("--truth", required=True)
    sp.add_argument("--recon", required=True)
    sp.add_argument("--labels")
    sp.add_argument("--assignments")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("export-volume", help="synthesize a real-space instance on an N^3 grid")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--n", type=int, default=33)
    sp.add_argument("--pixel-size", type=float)
    sp.add_argument("--mode", choices=["direct", "accelerated"], default="accelerated")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("selftest", help="run the built-in property checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except formats.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
