"""Command-line driver: ``ttvdespeckle {noise,despeckle,batch,profile,phantom}``.

Exit status: 0 success, 1 runtime failure (including any failed batch
cell), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import DespeckleError, NumericalBlowup
from .experiment import PlanError, batch_report, json_safe, load_plan, params_dict, rows_to_csv, run_batch
from .fuzzy import load_templates
from .imageio import ImageFormatError, ratio_display, read_image, write_image
from .metrics import MetricsReport, line_profile, mssim, psnr, ratio_image, speckle_index
from .noise import NoiseSpec, apply_speckle
from .phantoms import KINDS, phantom
from .solvers import SOLVERS, SolverParams, effective_params, run_filter

log = logging.getLogger("ttvdespeckle")

USAGE_ERROR = 2

# CLI flag -> SolverParams field
SOLVER_FLAGS = {
    "tau": "tau", "gamma": "gamma", "lambda_": "lambda_fid", "eps_stop": "eps_stop",
    "eps_tv": "eps_tv", "delta": "delta", "mode": "mode", "theta": "theta_schedule",
    "max_iter": "max_iter", "min_iter": "min_iter", "xi": "xi", "k_edge": "k_edge",
    "k_gray": "k_gray", "flux": "flux", "fidelity": "fidelity",
}


class UsageError(Exception):
    pass


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def seed_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return value


def add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver parameters (unset flags keep the defaults)")
    g.add_argument("--tau", type=float, help="time step (default 0.1)")
    g.add_argument("--gamma", type=float, help="damping coefficient (default 1)")
    g.add_argument("--lambda", dest="lambda_", type=float, help="fidelity weight (default 1)")
    g.add_argument("--eps-stop", type=float, help="relative-change stop threshold (default 1e-4)")
    g.add_argument("--eps-tv", type=float, help="TV regularizer in gray levels (default per filter)")
    g.add_argument("--delta", type=float, help="edge-indicator floor (default 0.05)")
    g.add_argument("--mode", choices=["direct", "regularized"])
    g.add_argument("--theta", choices=["per-step", "frozen"], help="edge-indicator schedule")
    g.add_argument("--max-iter", type=positive_int)
    g.add_argument("--min-iter", type=positive_int)
    g.add_argument("--xi", type=float, help="Gaussian width (regularized mode, Dong)")
    g.add_argument("--k-edge", type=float, help="TDM diffusivity threshold, gray levels")
    g.add_argument("--k-gray", type=float, help="Dong gray-indicator constant, 1/gray^2")
    g.add_argument("--flux", choices=["conservative", "central"])
    g.add_argument("--fidelity", choices=["explicit", "implicit"])
    g.add_argument("--templates", type=Path, help="fuzzy template file")


def solver_overrides(args, filt: str | None = None) -> dict:
    out = {}
    for flag, name in SOLVER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if name == "theta_schedule":
            value = value.replace("-", "_")
        out[name] = value
    if filt == "tdm" and "lambda_fid" in out:
        print("warning: --lambda has no effect with --filter tdm (no fidelity term)", file=sys.stderr)
        del out["lambda_fid"]
    return out


def _templates(args):
    return load_templates(args.templates) if getattr(args, "templates", None) else None


def _read(path: Path):
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    try:
        return read_image(path)
    except ImageFormatError as exc:
        raise UsageError(str(exc)) from None


def _params(overrides: dict) -> SolverParams:
    try:
        return SolverParams(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- commands ----------------------------------------------------------------


def cmd_noise(args) -> int:
    img = _read(args.input)
    noisy = apply_speckle(img, NoiseSpec(args.looks, args.seed))
    write_image(args.output, noisy)
    print(f"looks={args.looks} seed={args.seed} -> {args.output}")
    return 0


def cmd_despeckle(args) -> int:
    noisy = _read(args.input)
    clean = _read(args.clean) if args.clean else None
    overrides = solver_overrides(args, args.filter)
    params = _params(overrides)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = args.prefix or args.input.stem
    try:
        restored, runlog = run_filter(args.filter, noisy, params, _templates(args))
    except NumericalBlowup as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return 1

    written = []
    path = out_dir / f"{stem}_{args.filter}.{args.format}"
    write_image(path, restored)
    written.append(path)
    path = out_dir / f"{stem}_{args.filter}_ratio.{args.format}"
    write_image(path, ratio_display(ratio_image(noisy, restored)))
    written.append(path)
    path = out_dir / f"{stem}_{args.filter}_log.csv"
    path.write_text(runlog.to_csv())
    written.append(path)
    if clean is not None:
        report = MetricsReport(
            psnr_db=psnr(clean, restored),
            mssim=mssim(clean, restored),
            speckle_index=speckle_index(restored),
            iterations=runlog.iterations,
            wall_seconds=runlog.wall_seconds,
        )
        record = report.as_dict()
        if not args.timing:
            del record["wall_seconds"]
        record.update(
            filter=args.filter,
            stop_reason=runlog.stop_reason,
            noisy={"psnr_db": psnr(clean, noisy), "mssim": mssim(clean, noisy),
                   "speckle_index": speckle_index(noisy)},
            params=params_dict(effective_params(args.filter, params, noisy.max_level)),
        )
        path = out_dir / f"{stem}_{args.filter}_metrics.json"
        path.write_text(json.dumps(json_safe(record), indent=2, sort_keys=True) + "\n")
        written.append(path)
    print(f"{args.filter}: {runlog.iterations} iterations ({runlog.stop_reason})")
    for p in written:
        print(f"  wrote {p}")
    return 0


def cmd_batch(args) -> int:
    try:
        plan = load_plan(args.plan)
    except FileNotFoundError:
        raise UsageError(f"{args.plan}: no such file") from None
    except PlanError as exc:
        raise UsageError(f"{args.plan}: {exc}") from None
    if args.out_dir is not None:
        plan.out_dir = str(args.out_dir)
    overrides = solver_overrides(args)
    _params(overrides)
    rows = run_batch(plan, overrides, _templates(args), args.workers, args.save_images, args.timing)
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows, args.timing))
    (out / "report.json").write_text(batch_report(plan, rows, overrides))
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells, {failed} failed -> {out / 'results.csv'}")
    return 1 if failed else 0


def cmd_profile(args) -> int:
    img = _read(args.input)
    if not 0 <= args.row < img.height:
        raise UsageError(f"row {args.row} outside [0, {img.height})")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["column", "intensity"])
    for col, value in line_profile(img, args.row):
        writer.writerow([col, repr(value)])
    if args.output:
        args.output.write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_phantom(args) -> int:
    img = phantom(args.kind, args.size, args.lo, args.hi, args.tile)
    write_image(args.output, img)
    print(f"{args.kind} {args.size}x{args.size} -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttvdespeckle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", help="add L-look gamma speckle to an image")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--looks", type=positive_int, required=True)
    p.add_argument("--seed", type=seed_int, default=0)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("despeckle", help="restore one speckled image")
    p.add_argument("input", type=Path)
    p.add_argument("--filter", choices=sorted(SOLVERS), default="proposed")
    p.add_argument("--clean", type=Path, help="clean reference; enables the metrics report")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--prefix", help="output file stem (default: input stem)")
    p.add_argument("--format", choices=["pgm", "png"], default="pgm")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")
    add_solver_flags(p)
    p.set_defaults(func=cmd_despeckle)

    p = sub.add_parser("batch", help="run an experiment plan")
    p.add_argument("plan", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--workers", type=positive_int, default=1)
    p.add_argument("--save-images", action="store_true")
    p.add_argument("--timing", action="store_true", help="add a wall_seconds column")
    add_solver_flags(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("profile", help="write one image row as CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("phantom", help="write a synthetic test image")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("output", type=Path)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--lo", type=float, default=50.0)
    p.add_argument("--hi", type=float, default=200.0)
    p.add_argument("--tile", type=positive_int, default=16)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(USAGE_ERROR, f"{parser.prog} {args.command}: error: {exc}\n")
    except DespeckleError as exc:
        if isinstance(exc, ValueError):
            parser.exit(USAGE_ERROR, f"{parser.prog} {args.command}: error: {exc}\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
