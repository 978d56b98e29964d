"""Command-line front end: ``palign <subcommand> [options]``.

Exit status is 0 on success, 1 when a computation fails and 2 for usage or
file errors.  Machine-readable reports are JSON with a fixed key order and
floats written to 9 significant digits.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, align, dataset, diagnose, loss, simulate, tensor, verify
from .align import AlignmentFamily, Formulation
from .errors import PalignError, PngFormatError
from .loss import LossConfig, Norm

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Raised for flag combinations argparse cannot reject by itself."""


def _round(obj):
    if isinstance(obj, float):
        return dataset.round9(obj) if np.isfinite(obj) else obj
    if isinstance(obj, (np.floating, np.integer)):
        return _round(obj.item())
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def to_json(obj) -> str:
    """Pretty JSON with insertion-ordered keys and 9-significant-digit floats."""
    return json.dumps(_round(obj), indent=2) + "\n"


def _emit(args, name: str, obj) -> None:
    """Print a JSON report and, with ``--output``, also write it to ``<output>/<name>``."""
    text = to_json(obj)
    sys.stdout.write(text)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def _output_dir(args) -> Path:
    out = Path(args.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PALIGN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"PALIGN_THREADS must be an integer, got {env!r}") from None
    return 1


def _load_pair(args):
    pred, gt = tensor.load_png(args.pred), tensor.load_png(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"{args.pred} is {pred.shape} but {args.gt} is {gt.shape}")
    return pred, gt


def _loss_config(args, default_norm: Norm = Norm.L1) -> LossConfig:
    return LossConfig(
        alpha=args.alpha,
        eps=args.eps,
        norm=Norm(args.norm) if args.norm else default_norm,
        pixel_norm=Norm(args.pixel_norm) if args.pixel_norm else default_norm,
        formulation=Formulation(args.formulation),
    )


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    summaries, regs = dataset.analyze_dataset(args.input_dir, args.gt_dir, args.pairing,
                                              args.cap, _threads(args))
    out = _output_dir(args)
    dataset.export_scatter_csv(summaries, out / "scatter.csv")
    dataset.export_regressions_json(regs, out / "regressions.json")
    print(f"{len(summaries)} pairs")
    print(f"{'channel':<8}{'slope':>10}{'intercept':>12}{'r2':>10}{'resid_std':>12}")
    for r in regs:
        print(f"{r.channel:<8}{r.slope:10.3f}{r.intercept:12.3f}{r.r_squared:10.3f}"
              f"{r.residual_std:12.4f}")
    return EXIT_OK


def cmd_align(args) -> int:
    family = AlignmentFamily(args.family)
    pred, gt = _load_pair(args)
    mask = None
    if family is AlignmentFamily.MASKED_AFFINE:
        if not args.mask:
            raise UsageError("family 'masked' requires --mask")
        mask = tensor.Mask.from_image(tensor.load_png(args.mask))
        if mask.shape != pred.shape:
            raise UsageError(f"mask {args.mask} is {mask.shape}, images are {pred.shape}")
    elif args.mask:
        raise UsageError(f"--mask is only valid with family 'masked', not {family.value!r}")

    t = align.solve_family(family, pred, gt, args.eps, args.formulation, mask)
    if mask is not None:
        aligned = align.apply_masked_transform(t, pred, mask)
    else:
        aligned = align.apply_transform(t, pred)
    out = _output_dir(args)
    # export path: clamp; the sse figures use the unclamped aligned values
    tensor.save_png(tensor.ImageRGB(np.clip(aligned.data, 0.0, 1.0)), out / "aligned.png")
    (out / "transform.json").write_text(to_json(t.to_dict()), encoding="utf-8")
    summary = {
        "family": family.value,
        "sseBefore": align.sse(pred, gt),
        "sseAfter": align.sse(aligned, gt),
    }
    (out / "summary.json").write_text(to_json(summary), encoding="utf-8")
    sys.stdout.write(to_json(summary))
    return EXIT_OK


def cmd_loss(args) -> int:
    pred, gt = _load_pair(args)
    res = loss.pal_loss(pred, gt, _loss_config(args))
    _emit(args, "loss.json", res.to_dict())
    return EXIT_OK


def cmd_decompose(args) -> int:
    pred, gt = _load_pair(args)
    d = diagnose.decompose(pred, gt, args.eps, args.formulation)
    report = d.to_dict()
    report["signDominance"] = diagnose.sign_dominance(d).frac_phot_dominant
    report["transform"] = d.transform.to_dict()
    if args.error_map:
        tensor.save_gray_png(diagnose.error_map(d), args.error_map)
    _emit(args, "decomposition.json", report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    pairs = simulate.SyntheticPairConfig(image_size=args.size, shifts=not args.no_shifts)
    cfg = simulate.SimulationConfig(pairs=pairs, loss=_loss_config(args, Norm.L2), lr=args.lr)
    cfg = cfg.with_seed(args.seed)
    out = _output_dir(args)
    finals = {}
    for name, enabled in (("baseline", False), ("pal", True)):
        trace = simulate.run_experiment(cfg, args.steps, enabled)
        trace.to_csv(out / f"trace_{name}.csv")
        finals[name] = trace
    b, p = finals["baseline"], finals["pal"]
    print(f"steps {args.steps}  seed {args.seed}")
    print(f"baseline: final content error {b.final.val_content_error:.6g}  mean rho {b.mean_rho():.3f}")
    print(f"pal:      final content error {p.final.val_content_error:.6g}  mean rho {p.mean_rho():.3f}")
    better = p.final.val_content_error < b.final.val_content_error
    print("pal lower content error" if better else "pal not lower")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = verify.run_suite(args.seed, args.quick)
    print(verify.format_table(rows))
    failed = [r.name for r in rows if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed", file=sys.stderr)
        return EXIT_COMPUTE
    print("all checks passed")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--eps", type=float, default=align.DEFAULT_EPS,
                   help="ridge strength (default: %(default)g)")
    g.add_argument("--alpha", type=float, default=0.6, help="PAL weight (default: %(default)g)")
    g.add_argument("--formulation", choices=[f.value for f in Formulation],
                   default=Formulation.AUGMENTED.value)
    g.add_argument("--norm", choices=[n.value for n in Norm], default=None,
                   help="PAL residual norm (default: l1; l2 for simulate)")
    g.add_argument("--pixel-norm", choices=[n.value for n in Norm], default=None,
                   help="pixel-loss norm (default: same default as --norm)")
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads for per-pair work (fallback: $PALIGN_THREADS, else 1)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", "-o", default=None, help="output directory")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="palign", description="Photometric alignment toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="per-pair channel-mean statistics")
    p.add_argument("input_dir")
    p.add_argument("gt_dir")
    p.add_argument("--pairing", choices=[x.value for x in dataset.Pairing], default="name")
    p.add_argument("--cap", type=int, default=dataset.DEFAULT_CAP)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("align", parents=[common], help="fit and apply one alignment family")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--family", choices=[f.value for f in AlignmentFamily], default="affine")
    p.add_argument("--mask", default=None, help="mask PNG (bright = inside); masked family only")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("loss", parents=[common], help="pixel, PAL and total loss as JSON")
    p.add_argument("pred")
    p.add_argument("gt")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("decompose", parents=[common], help="photometric/structural split")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--error-map", default=None, help="write normalized |delta_s| as grey PNG")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", parents=[common], help="baseline vs PAL toy training")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--size", type=int, default=16, help="synthetic image side length")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--no-shifts", action="store_true", help="disable per-pair colour shifts")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run the seeded oracle suite")
    p.add_argument("--quick", action="store_true", help="reduced instance counts")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.eps < 0:
            raise UsageError("--eps must be non-negative")
        return args.func(args)
    except UsageError as exc:
        print(f"palign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PngFormatError, OSError) as exc:
        print(f"palign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PalignError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"palign: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
