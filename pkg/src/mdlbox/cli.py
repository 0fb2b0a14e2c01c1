"""Command-line interface: ``sweep``, ``gradcheck`` and ``dota-eval``.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

import argparse
import sys

from . import dota, gradcheck, sweep
from .errors import InvalidInputError
from .geometry import BoxCWHA


def _parse_base(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("expected cx,cy,w,h,theta")
    try:
        return BoxCWHA(*(float(p) for p in parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric base box {text!r}")


def _parse_losses(text):
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    bad = [n for n in names if n not in sweep.LOSS_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown losses {bad}; choose from {', '.join(sweep.LOSS_NAMES)}")
    return names


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdlbox",
        description="Rotated-box loss sweeps, gradient checks and DOTA evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="sweep one geometric factor and emit a loss table")
    sw.add_argument("--factor", required=True, choices=sweep.FACTORS)
    sw.add_argument("--lo", type=float, required=True)
    sw.add_argument("--hi", type=float, required=True)
    sw.add_argument("--steps", type=int, required=True)
    sw.add_argument("--losses", type=_parse_losses, default=sweep.LOSS_NAMES,
                    help="comma-separated subset of " + ",".join(sweep.LOSS_NAMES))
    sw.add_argument("--boundary-min", action="store_true",
                    help="score box losses with the cyclic-relabeling minimum")
    sw.add_argument("--base", type=_parse_base, default=sweep.DEFAULT_BASE,
                    metavar="CX,CY,W,H,THETA")
    sw.add_argument("--pred-shift", type=float, default=sweep.DEFAULT_PRED_SHIFT,
                    help="fixed +x center offset of the prediction "
                         "(ignored for --factor shift)")
    sw.add_argument("--out", required=True, help="output CSV path")
    sw.add_argument("--plot", default=None, metavar="PATH",
                    help="also render the loss curves to an image file")

    gc = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--cases", type=int, default=100)
    gc.add_argument("--tol", type=float, default=gradcheck.DEFAULT_TOL)

    ev = sub.add_parser("dota-eval", help="rotated-box mAP on DOTA-format files")
    ev.add_argument("--gt", required=True, help="directory of annotation .txt files")
    ev.add_argument("--pred", required=True,
                    help="directory of per-class Task-1 prediction files")
    ev.add_argument("--iou", type=float, default=0.5)
    ev.add_argument("--out", required=True, help="output CSV path")
    ev.add_argument("--all-point", action="store_true",
                    help="use all-point AP instead of 11-point interpolation")
    ev.add_argument("--plot", default=None, metavar="PATH",
                    help="also render per-class AP bars to an image file")
    return parser


def _cmd_sweep(args):
    spec = sweep.SweepSpec(args.factor, args.lo, args.hi, args.steps,
                           loss_names=args.losses, boundary_min=args.boundary_min,
                           base_box=args.base, pred_shift=args.pred_shift)
    rows = sweep.run_sweep(spec)
    try:
        sweep.emit_csv(rows, args.out)
        if args.plot:
            sweep.plot_sweep(rows, args.plot, title=f"{args.factor} sweep")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_gradcheck(args):
    if args.cases < 1 or args.tol <= 0:
        print("error: --cases must be >= 1 and --tol positive", file=sys.stderr)
        return 1
    reports = gradcheck.check_all(args.seed, args.cases, args.tol)
    width = max(len(r.op_name) for r in reports)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.op_name:<{width}}  max_rel_error={r.max_rel_error:.3e}  {status}")
    return 0 if all(r.passed for r in reports) else 1


def _cmd_dota_eval(args):
    if not 0.0 <= args.iou <= 1.0:
        print("error: --iou must lie in [0, 1]", file=sys.stderr)
        return 1
    try:
        gts = dota.load_ground_truth_dir(args.gt)
        preds = dota.load_predictions_dir(args.pred)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = dota.evaluate_map(gts, preds, iou_threshold=args.iou,
                               use_07_metric=not args.all_point)
    try:
        dota.write_results_csv(result, args.out)
        if args.plot:
            dota.plot_class_ap(result, args.plot)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for category in dota.CATEGORIES:
        print(f"{category:<18} {result.per_class_ap[category]:.4f}")
    print(f"{'mAP':<18} {result.map_score:.4f}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; the contract reserves 2 for I/O
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        return _cmd_dota_eval(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
