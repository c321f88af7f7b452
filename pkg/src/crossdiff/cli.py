"""Command line front end.

Exit codes: 0 ok, 1 I/O failure, 2 bad arguments, 3 numerical failure.

Parameters may also come from ``--config FILE``, a ``key = value`` file
with ``#`` comments whose keys are the long flag names without dashes
(``T``, ``lambda``, ``patch-radius``, ...). Flags given on the command line
take precedence.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path


from . import bench, image, synthetic
from .errors import (
    ConstantImage,
    HypothesisViolated,
    MalformedHeader,
    NumericalError,
    TooSmall,
    TruncatedData,
    UnstableTimeStep,
    UnsupportedMaxval,
)

EXIT_OK, EXIT_IO, EXIT_ARGS, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> (argparse dest, params key)
PARAM_FLAGS = {
    "T": ("T", "T"),
    "tau": ("tau", "tau"),
    "tol": ("tol", "tol"),
    "lambda": ("lam", "lambda"),
    "theta": ("theta", "theta"),
    "beta1": ("beta1", "beta1"),
    "beta2": ("beta2", "beta2"),
    "h": ("h", "h"),
    "rho": ("rho", "rho"),
    "sigma": ("sigma", "sigma"),
    "patch-radius": ("patch_radius", "patch_radius"),
    "search-radius": ("search_radius", "search_radius"),
}
OTHER_KEYS = {
    "in": "input",
    "out": "output",
    "ref": "ref",
    "method": "method",
    "snr": "snr",
    "seed": "seed",
    "diag": "diag",
    "jobs": "jobs",
}


class UsageError(Exception):
    pass


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file; keys are case-sensitive."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in PARAM_FLAGS and key not in OTHER_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def apply_config(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    for key, value in cfg.items():
        dest = PARAM_FLAGS[key][0] if key in PARAM_FLAGS else OTHER_KEYS[key]
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


def _floats(text, name) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected number(s), got {text!r}") from None


def _ints(text, name) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected integer(s), got {text!r}") from None


def _single(text, name, cast=float):
    values = _ints(text, name) if cast is int else _floats(text, name)
    if len(values) != 1:
        raise UsageError(f"--{name}: expected a single value")
    return values[0]


def collect_params(args, as_lists=False) -> dict:
    params = {}
    for flag, (dest, key) in PARAM_FLAGS.items():
        raw = getattr(args, dest, None)
        if raw is None:
            continue
        cast = int if key in bench.INT_PARAMS else float
        if as_lists:
            params[key] = _ints(raw, flag) if cast is int else _floats(raw, flag)
        else:
            params[key] = _single(raw, flag, cast)
    return params


def _need(args, dest, flag):
    if getattr(args, dest, None) in (None, ""):
        raise UsageError(f"the following argument is required: --{flag}")
    return getattr(args, dest)


def write_csv(path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    Path(path).write_text(buf.getvalue())


def _num(v: float) -> str:
    return format(v, ".15g") if math.isfinite(v) else ("inf" if v > 0 else "-inf")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_add_noise(args) -> int:
    src, dst = _need(args, "input", "in"), _need(args, "output", "out")
    snr_target = _single(_need(args, "snr", "snr"), "snr")
    seed = _single(args.seed if args.seed is not None else 0, "seed", int)
    clean = image.read_image(src)
    noisy = image.add_gaussian_noise(clean, image.NoiseSpec(snr_target, seed))
    image.write_image(dst, noisy)
    print(f"snr={_num(image.snr(clean, noisy))}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    method = _need(args, "method", "method")
    if method not in bench.METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {', '.join(bench.METHODS)}")
    src, dst = _need(args, "input", "in"), _need(args, "output", "out")
    try:
        params = bench.resolve_params(method, collect_params(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    loaded = image.read_image(src)
    ref = image.read_image(args.ref) if args.ref else None
    if args.snr is not None:
        # the input is clean: add seeded noise in memory and score against it
        seed = _single(args.seed if args.seed is not None else 0, "seed", int)
        noisy = bench.make_noisy(loaded, seed, _single(args.snr, "snr"))
        ref = loaded if ref is None else ref
    else:
        noisy = loaded
    denoised, records = bench.run_method(method, noisy, params)
    image.write_image(dst, denoised)
    if args.diag:
        rows = [list(bench.model.StepRecord.FIELDS)]
        rows += [[str(r.step), str(r.fp_iters), bench.fmt(r.fp_residual), bench.fmt(r.mass_drift), bench.fmt(r.energy)] for r in records]
        write_csv(args.diag, rows)
    if ref is not None:
        q = image.QualityReport.compare(ref, denoised)
        print(f"method={method} psnr={_num(q.psnr)} ncc={_num(q.ncc)} ssim={_num(q.ssim)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    method = _need(args, "method", "method")
    if method not in bench.METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {', '.join(bench.METHODS)}")
    src, dst = _need(args, "input", "in"), _need(args, "output", "out")
    grids = collect_params(args, as_lists=True)
    if not grids or any(not v for v in grids.values()):
        raise UsageError("sweep needs at least one nonempty parameter grid, e.g. --T 0.1,0.2")
    seeds = _ints(args.seed if args.seed is not None else "0", "seed")
    snr_target = _single(args.snr if args.snr is not None else 10.0, "snr")
    try:
        bench.resolve_params(method, {k: v[0] for k, v in grids.items()})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    clean = image.read_image(src)
    jobs = _single(args.jobs, "jobs", int) if args.jobs is not None else None
    rows = bench.sweep(method, clean, grids, seeds, snr_target, jobs=jobs)
    write_csv(dst, bench.sweep_csv_rows(rows))
    best = rows[0]
    fields = " ".join(f"{k}={_num(float(v))}" for k, v in best.params.items())
    print(f"best: {fields} psnr={_num(best.psnr)} ncc={_num(best.ncc)} ssim={_num(best.ssim)}")
    return EXIT_OK


def _load_corpus(args) -> dict:
    images = {}
    if args.images:
        folder = Path(args.images)
        if not folder.is_dir():
            raise UsageError(f"--images: {folder} is not a directory")
        for path in sorted(folder.iterdir()):
            if path.suffix.lower() in (".pgm", ".png"):
                images[path.stem] = image.read_image(path)
    for kind in (args.synthetic or "").split(","):
        kind = kind.strip()
        if kind:
            if kind not in synthetic.KINDS:
                raise UsageError(f"--synthetic: unknown kind {kind!r}")
            images[f"synthetic-{kind}"] = synthetic.generate_synthetic(kind, args.size, 1)
    if not images:
        raise UsageError("no test images: give --images DIR with .pgm files or --synthetic shapes,texture")
    return images


def cmd_reproduce_tables(args) -> int:
    dst = _need(args, "output", "out")
    images = _load_corpus(args)
    seeds = _ints(args.seed if args.seed is not None else "0", "seed")
    snr_target = _single(args.snr if args.snr is not None else 10.0, "snr")
    jobs = _single(args.jobs, "jobs", int) if args.jobs is not None else None
    results = bench.reproduce_tables(images, args.preset, seeds, snr_target, jobs=jobs)
    rows = bench.table_csv_rows(results)
    write_csv(dst, rows)
    for row in rows:
        print(",".join(row))
    return EXIT_OK


def cmd_generate(args) -> int:
    dst = _need(args, "output", "out")
    seed = _single(args.seed if args.seed is not None else 0, "seed", int)
    image.write_image(dst, synthetic.generate_synthetic(args.kind, args.size, seed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p, params=True):
    p.add_argument("--in", dest="input", metavar="PATH")
    p.add_argument("--out", dest="output", metavar="PATH")
    p.add_argument("--seed", help="noise seed (comma list for sweeps)")
    p.add_argument("--snr", help="target signal to noise ratio")
    p.add_argument("--config", metavar="FILE", help="key = value parameter file")
    if params:
        for flag, (dest, _) in PARAM_FLAGS.items():
            p.add_argument(f"--{flag}", dest=dest)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossdiff", description="Cross-diffusion and reference image denoisers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add-noise", help="add Gaussian noise at a target SNR")
    _add_common(p, params=False)
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("denoise", help="denoise one image")
    _add_common(p)
    p.add_argument("--method")
    p.add_argument("--ref", metavar="PATH", help="clean reference for metrics")
    p.add_argument("--diag", metavar="CSV", help="write per-step diagnostics")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("sweep", help="PSNR-maximizing parameter sweep")
    _add_common(p)
    p.add_argument("--method")
    p.add_argument("--jobs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-tables", help="sweep all methods over a set of images")
    _add_common(p, params=False)
    p.add_argument("--images", metavar="DIR")
    p.add_argument("--synthetic", metavar="KINDS", help="comma list of synthetic kinds: shapes,texture")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--preset", choices=sorted(bench.PRESETS), default="quick")
    p.add_argument("--jobs")
    p.set_defaults(func=cmd_reproduce_tables)

    p = sub.add_parser("generate", help="write a synthetic test image")
    _add_common(p, params=False)
    p.add_argument("--kind", choices=synthetic.KINDS, default="shapes")
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"crossdiff: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ConstantImage as exc:
        print(f"crossdiff: constant image: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"crossdiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, MalformedHeader, TruncatedData, UnsupportedMaxval) as exc:
        print(f"crossdiff: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HypothesisViolated, UnstableTimeStep, TooSmall, ValueError) as exc:
        print(f"crossdiff: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
