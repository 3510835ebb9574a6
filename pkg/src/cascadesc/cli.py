"""``cascadesc`` command-line tool."""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import io
from .apps import (
    DEFAULT_GAIN,
    RatePoint,
    baseline_code,
    code_image,
    denoise,
    denoise_config,
    fit_baseline,
    inpaint,
    inpaint_config,
    tolerance_schedule,
)
from .cascade import (
    CascadeConfig,
    decode,
    encode_with_estimate,
    first_pass,
    fit_model,
    second_pass_train,
)
from .image import psnr
from .ksvd import TrainConfig
from .omp import Budget, set_num_threads


class UsageError(Exception):
    pass


def parse_budgets(text: str, levels: int) -> tuple[int, ...]:
    """One integer for every level, or a comma list given coarsest first.

    Returned finest first, the library's level order.
    """
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"invalid budgets {text!r}") from None
    if any(v < 1 for v in values):
        raise UsageError("budgets must be positive integers")
    if len(values) == 1:
        return tuple(values) * levels
    if len(values) != levels:
        raise UsageError(f"{len(values)} budgets given for {levels} levels")
    return tuple(reversed(values))


def parse_grid(text: str, kind=float) -> list:
    try:
        values = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"invalid grid {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise UsageError("grid values must be positive")
    return values


def _cascade_flags(p, *, levels=4, stride=7, iters=20):
    p.add_argument("--levels", type=int, default=levels)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--stride", type=int, default=stride)
    p.add_argument("--atoms", type=int, default=256)
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-patches", type=int, default=None,
                   help="train on a random subset of this many patches")


def _print_psnr(label, img, ref):
    ref = io.load_image(ref)
    if ref.shape != img.shape:
        raise UsageError(f"reference is {ref.shape}, image is {img.shape}")
    print(f"{label}_psnr_db,{psnr(ref, img):.4f}")


def cmd_train(args):
    images = [io.load_image(p) for p in args.inputs]
    cfg = CascadeConfig(
        levels=args.levels, b=args.patch, s=args.stride, global_m=args.atoms,
        budgets=parse_budgets(args.budgets, args.levels),
        train=TrainConfig(iterations=args.iters, seed=args.seed, max_patches=args.max_patches),
    )
    for img in images:
        cfg.check_dims(*img.shape)
    passes = [first_pass(img, cfg) for img in images]
    print("iteration,error_before_sweep,error_after_sweep")
    model = second_pass_train(
        [fp.residuals for fp in passes], cfg, dims=passes[0].dims,
        on_iteration=lambda i, a, b: print(f"{i},{a:.6g},{b:.6g}", flush=True),
    )
    io.save_model(args.out, model)


def cmd_encode(args):
    model = io.load_model(args.model)
    img = io.load_image(args.image)
    stops = None
    if args.budgets:
        stops = [Budget(t) for t in parse_budgets(args.budgets, model.config.levels)]
    codes, point, _ = code_image(img, model, stops)
    io.save_codes(args.out, codes, model)
    print(point)


def cmd_decode(args):
    model = io.load_model(args.model)
    codes = io.load_codes(args.codes, model)
    img = decode(codes, model)
    io.save_image(args.out, img)
    if args.ref:
        ref = io.load_image(args.ref)
        if ref.shape != img.shape:
            raise UsageError(f"reference is {ref.shape}, image is {img.shape}")
        print(RatePoint(codes.nnz / img.size, psnr(ref, img)))


def cmd_denoise(args):
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    noisy = io.load_image(args.image)
    cfg = denoise_config(*noisy.shape, levels=args.levels, b=args.patch, s=args.stride,
                         iterations=args.iters, max_patches=args.max_patches,
                         m=args.atoms, seed=args.seed)
    out = denoise(noisy, args.sigma, args.C, cfg)
    io.save_image(args.out, out)
    if args.ref:
        _print_psnr("input", noisy, args.ref)
        _print_psnr("output", out, args.ref)


def cmd_inpaint(args):
    img = io.load_image(args.image)
    mask = io.load_image(args.mask)
    if mask.shape != img.shape:
        raise UsageError(f"mask is {mask.shape}, image is {img.shape}")
    mask = (mask != 0).astype(np.float64)
    extra = {}
    if args.budgets:
        extra["budgets"] = parse_budgets(args.budgets, args.levels)
    cfg = inpaint_config(*img.shape, levels=args.levels, b=args.patch, s=args.stride,
                         iterations=args.iters,
                         max_patches=args.max_patches, m=args.atoms, seed=args.seed, **extra)
    out = inpaint(img, mask, cfg)
    io.save_image(args.out, out)
    if args.ref:
        _print_psnr("output", out, args.ref)


def cmd_rd_sweep(args):
    images = [io.load_image(p) for p in args.images]
    model = io.load_model(args.model) if args.model else None
    if args.tolerance_grid:
        grid = parse_grid(args.tolerance_grid)
    else:
        grid = parse_grid(args.budget_grid, int)
    train_cfg = TrainConfig(iterations=args.iters, seed=args.seed, max_patches=args.max_patches)

    rows = {"cascade": [], "baseline": []}
    for img in images:
        if model is not None:
            m = model
        else:
            cfg = CascadeConfig(
                levels=args.levels, b=args.patch, s=args.stride, global_m=args.atoms,
                budgets=(4,) * args.levels, train=train_cfg,
            ).fit(*img.shape)
            m = fit_model(img, cfg)
        cfg = m.config
        D = fit_baseline(img, cfg.b, cfg.s, cfg.global_m, Budget(4), train_cfg)
        for i, g in enumerate(grid):
            if args.tolerance_grid:
                stops = tolerance_schedule(g, cfg.levels, cfg.b)
                base_stop = stops[0]
            else:
                stops = [Budget(g)] * cfg.levels
                base_stop = Budget(g)
            codes, recon = encode_with_estimate(img, m, stops)
            bcodes, brecon = baseline_code(img, D, cfg.s, base_stop)
            rows["cascade"].append((i, codes.nnz / img.size, _mse(img, recon)))
            rows["baseline"].append((i, bcodes.nnz / img.size, _mse(img, brecon)))

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["method", "coeffs_per_pixel", "psnr_db"])
        for method, entries in rows.items():
            # average over images at each grid point
            for i in range(len(grid)):
                pts = [(c, e) for j, c, e in entries if j == i]
                cpp = sum(c for c, _ in pts) / len(pts)
                mse = sum(e for _, e in pts) / len(pts)
                db = math.inf if mse == 0 else 10 * math.log10(255.0**2 / mse)
                writer.writerow([method, f"{cpp:.6f}", f"{db:.4f}"])
    finally:
        if out is not sys.stdout:
            out.close()


def _mse(a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    return float(np.mean(d * d))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadesc", description="Cascaded residual sparse coding for grayscale images."
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn a cascade model from images")
    p.add_argument("inputs", nargs="+")
    _cascade_flags(p)
    p.add_argument("--budgets", default="4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="code an image with a model")
    p.add_argument("model")
    p.add_argument("image")
    p.add_argument("--budgets", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="rebuild an image from a code file")
    p.add_argument("model")
    p.add_argument("codes")
    p.add_argument("--ref", default=None, help="clean image for a PSNR report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("denoise", help="remove Gaussian noise of known sigma")
    p.add_argument("image")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--C", type=float, default=DEFAULT_GAIN)
    _cascade_flags(p, stride=1, iters=10)
    p.set_defaults(max_patches=20000)
    p.add_argument("--ref", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("inpaint", help="fill pixels where the mask is zero")
    p.add_argument("image")
    p.add_argument("mask")
    _cascade_flags(p, stride=2, iters=10)
    p.set_defaults(max_patches=20000)
    p.add_argument("--budgets", default=None, help="default: 6,4,3,2 coarsest first")
    p.add_argument("--ref", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("rd-sweep", help="rate-distortion CSV for cascade and baseline")
    p.add_argument("images", nargs="+")
    p.add_argument("--model", default=None,
                   help="cascade model (default: train one per image)")
    _cascade_flags(p, iters=10)
    p.add_argument("--budget-grid", default="1,2,3,4,6,8")
    p.add_argument("--tolerance-grid", default=None,
                   help="per-pixel RMS error targets; overrides --budget-grid")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_rd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be at least 1")
        set_num_threads(args.threads)
    try:
        args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"cascadesc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
