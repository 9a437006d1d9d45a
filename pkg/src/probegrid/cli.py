"""Command-line front end: fit, decode, info, sweep, psnr.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Expected errors
print a single-line diagnostic instead of a traceback.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .errors import ProbeGridError


def _pow2_flag(name):
    def parse(text):
        value = int(text)
        if value < 1 or value & (value - 1):
            raise argparse.ArgumentTypeError(
                f"{name} must be a power of two, got {text}")
        return value
    return parse


def _pow2_list(name):
    single = _pow2_flag(name)

    def parse(text):
        return [single(part) for part in text.split(",")]
    return parse


def _int_list(text):
    return [int(part) for part in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probegrid",
        description="Image codec built on a multiresolution hash grid "
                    "with learned hash probing.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="BLAS thread budget (default: logical cores)")

    p_fit = sub.add_parser("fit", help="fit a PNG into a .cngp model")
    p_fit.add_argument("--input", required=True, help="input PNG")
    p_fit.add_argument("--output", required=True, help="output .cngp model")
    p_fit.add_argument("--nf", type=_pow2_flag("--nf"), default=2**6,
                       help="feature table rows per level (default 64)")
    p_fit.add_argument("--nc", type=_pow2_flag("--nc"), default=2**14,
                       help="index table rows per level (default 16384)")
    p_fit.add_argument("--np", type=_pow2_flag("--np"), default=2**4,
                       dest="n_p", help="probing range; 1 disables probing "
                       "(default 16)")
    p_fit.add_argument("--levels", type=int, default=16,
                       help="multiresolution levels (default 16)")
    p_fit.add_argument("--neurons", type=int, default=64,
                       help="decoder hidden width (default 64)")
    p_fit.add_argument("--nmin", type=int, default=16,
                       help="coarsest grid resolution (default 16)")
    p_fit.add_argument("--nmax", type=int, default=512,
                       help="finest grid resolution (default 512)")
    p_fit.add_argument("--steps", type=int, default=10_000,
                       help="training steps (default 10000)")
    p_fit.add_argument("--batch", type=int, default=8192,
                       help="pixels per step (default 8192)")
    p_fit.add_argument("--lr", type=float, default=1e-2,
                       help="Adam learning rate (default 0.01)")
    p_fit.add_argument("--seed", type=int, default=0,
                       help="seed for all randomness (default 0)")
    p_fit.add_argument("--target-size", type=int, default=None,
                       help="pick nf/nc/np automatically for this byte budget")
    p_fit.add_argument("--metrics", default=None,
                       help="metrics JSONL path (default <output>.metrics.jsonl)")
    common(p_fit)

    p_dec = sub.add_parser("decode", help="decode a .cngp model to PNG")
    p_dec.add_argument("--model", required=True)
    p_dec.add_argument("--output", required=True)
    p_dec.add_argument("--rect", nargs=4, type=int, metavar=("X0", "Y0", "X1", "Y1"),
                       default=None, help="decode only this half-open pixel rect")
    common(p_dec)

    p_info = sub.add_parser("info", help="print header and size breakdown")
    p_info.add_argument("--model", required=True)

    p_sweep = sub.add_parser("sweep", help="grid of fits reported as CSV")
    p_sweep.add_argument("--input", help="input PNG")
    p_sweep.add_argument("--out", help="output CSV path")
    p_sweep.add_argument("--nf", type=_pow2_list("--nf"), action="append",
                         default=None, help="comma list, repeatable")
    p_sweep.add_argument("--nc", type=_pow2_list("--nc"), action="append",
                         default=None)
    p_sweep.add_argument("--np", type=_pow2_list("--np"), action="append",
                         dest="n_p", default=None)
    p_sweep.add_argument("--levels", type=_int_list, action="append", default=None)
    p_sweep.add_argument("--neurons", type=_int_list, action="append", default=None)
    p_sweep.add_argument("--seeds", type=_int_list, default=None,
                         help="comma list of seeds (default 0)")
    p_sweep.add_argument("--steps", type=int, default=None)
    p_sweep.add_argument("--batch", type=int, default=None)
    p_sweep.add_argument("--nmin", type=int, default=None)
    p_sweep.add_argument("--nmax", type=int, default=None)
    p_sweep.add_argument("--config", default=None,
                         help="key=value file supplying any of the flags above")
    common(p_sweep)

    p_psnr = sub.add_parser("psnr", help="PSNR between two PNGs")
    p_psnr.add_argument("--ref", required=True)
    p_psnr.add_argument("--test", required=True)

    return parser


def _limit_threads(n: int | None):
    if not n or n < 1:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        os.environ.setdefault("OMP_NUM_THREADS", str(n))


def cmd_fit(args) -> int:
    from .model import HyperParams
    from .model_io import serialize, size_report
    from .pngio import load_image
    from .trainer import TrainConfig, fit, select_hyperparams

    image = load_image(args.input)
    if args.target_size is not None:
        base = HyperParams(n_levels=args.levels, n_neurons=args.neurons,
                           n_min=args.nmin, n_max=args.nmax)
        hyper = select_hyperparams(args.target_size, base)
        print(f"selected nf={hyper.n_f} nc={hyper.n_c} np={hyper.n_p} "
              f"for target {args.target_size} B")
    else:
        hyper = HyperParams(n_f=args.nf, n_c=args.nc, n_p=args.n_p,
                            n_levels=args.levels, n_neurons=args.neurons,
                            n_min=args.nmin, n_max=args.nmax).validate()
    metrics = args.metrics or args.output + ".metrics.jsonl"
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch, lr=args.lr,
                      seed=args.seed, metrics_path=metrics)
    result = fit(image, hyper, cfg)
    with open(args.output, "wb") as f:
        f.write(serialize(result.inference))
    rep = size_report(hyper)
    print(f"wrote {args.output} ({rep.total_bytes} bytes)")
    print(f"  header   {rep.header_bytes:>10} B")
    print(f"  features {rep.feature_bytes:>10} B")
    print(f"  indices  {rep.index_bytes:>10} B")
    print(f"  mlp      {rep.mlp_bytes:>10} B")
    print(f"final PSNR {result.final_psnr:.2f} dB "
          f"({result.ms_per_step:.1f} ms/step, {result.wall_time_s:.1f} s)")
    return 0


def cmd_decode(args) -> int:
    from .model_io import decode_image, decode_rect, deserialize
    from .pngio import save_image

    with open(args.model, "rb") as f:
        inf = deserialize(f.read())
    if args.rect is not None:
        pixels = decode_rect(inf, tuple(args.rect))
    else:
        pixels = decode_image(inf)
    save_image(args.output, pixels)
    print(f"wrote {args.output} ({pixels.shape[1]}x{pixels.shape[0]})")
    return 0


def cmd_info(args) -> int:
    from .model_io import HEADER_BYTES, read_header, size_report

    with open(args.model, "rb") as f:
        header = f.read(HEADER_BYTES)  # header-only read by construction
    hyper, width, height = read_header(header)
    rep = size_report(hyper)
    print(f"probegrid model v1: {width}x{height}, d={hyper.d}")
    print(f"  levels={hyper.n_levels} n_min={hyper.n_min} n_max={hyper.n_max} "
          f"F={hyper.feature_dim}")
    print(f"  nf={hyper.n_f} nc={hyper.n_c} np={hyper.n_p}")
    print(f"  mlp: {hyper.n_hidden_layers}x{hyper.n_neurons} neurons, "
          f"out={hyper.out_dim}, sigmoid={hyper.out_sigmoid}")
    print(f"  header   {rep.header_bytes:>10} B")
    print(f"  features {rep.feature_bytes:>10} B")
    print(f"  indices  {rep.index_bytes:>10} B")
    print(f"  mlp      {rep.mlp_bytes:>10} B")
    print(f"  total    {rep.total_bytes:>10} B")
    return 0


def _read_config_file(path) -> dict:
    values = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ProbeGridError(f"{path}:{ln}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _flatten(lists):
    if not lists:
        return None
    return [x for chunk in lists for x in chunk]


def cmd_sweep(args) -> int:
    from .model import HyperParams
    from .pngio import load_image
    from .sweep import expand_grid, run_sweep, write_csv
    from .trainer import TrainConfig

    cfgfile = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key, conv, default=None):
        if flag_value is not None:
            return flag_value
        if key in cfgfile:
            return conv(cfgfile[key])
        return default

    pow2 = lambda text: _pow2_list("config")(text)
    input_path = pick(args.input, "image", str)
    out_path = pick(args.out, "out", str)
    nf = pick(_flatten(args.nf), "nf", pow2)
    nc = pick(_flatten(args.nc), "nc", pow2)
    n_p = pick(_flatten(args.n_p), "np", pow2)
    levels = pick(_flatten(args.levels), "levels", _int_list)
    neurons = pick(_flatten(args.neurons), "neurons", _int_list)
    seeds = pick(args.seeds, "seeds", _int_list, [0])
    steps = pick(args.steps, "steps", int, 2000)
    batch = pick(args.batch, "batch", int, 4096)
    n_min = pick(args.nmin, "nmin", int, 16)
    n_max = pick(args.nmax, "nmax", int, 512)

    if input_path is None or out_path is None:
        raise ProbeGridError("sweep needs --input and --out (or config keys "
                             "image= and out=)")
    if not (nf and nc and n_p):
        raise ProbeGridError("empty sweep grid: give --nf, --nc and --np")

    image = load_image(input_path)
    base = HyperParams(n_min=n_min, n_max=n_max)
    grid = expand_grid(base, nf, nc, n_p, levels, neurons)
    cfg = TrainConfig(steps=steps, batch_size=batch)
    points = run_sweep(image, grid, seeds, cfg,
                       progress=lambda p: print(p.csv_row(), flush=True))
    write_csv(points, out_path)
    print(f"wrote {out_path} ({len(points)} rows)")
    return 0


def cmd_psnr(args) -> int:
    from .metrics import psnr
    from .pngio import load_image

    value = psnr(load_image(args.ref), load_image(args.test))
    print("PSNR: inf" if value == float("inf") else f"PSNR: {value:.4f} dB")
    return 0


_HANDLERS = {"fit": cmd_fit, "decode": cmd_decode, "info": cmd_info,
             "sweep": cmd_sweep, "psnr": cmd_psnr}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(getattr(args, "threads", None))
    try:
        return _HANDLERS[args.command](args)
    except (ProbeGridError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
