"""One-factor loss sweeps: scale, angle, center shift, aspect ratio.

Each sweep fixes a target box, perturbs a prediction in exactly one factor
across a grid, evaluates the requested losses per grid point, and emits the
table as CSV (optionally with a rendered figure of the curves).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .errors import InvalidInputError
from .geometry import BoxCWHA, skew_iou, vertices_from_cwha
from .losses import CovarianceSource, NormKind

FACTORS = ("scale", "angle", "shift", "aspect")

# Column order is fixed; CSV columns follow this declaration order.
LOSS_NAMES = ("MDLt", "MDLp", "L1", "L2", "SmoothL1", "OneMinusSkewIoU")

DEFAULT_BASE = BoxCWHA(0.0, 0.0, 4.0, 2.0, 0.0)

# Default +x offset applied to the prediction so that scale/angle/aspect
# sweeps compare non-identical boxes (a shift of zero makes every loss
# trivially constant). Ignored for the shift sweep, where the shift is the
# swept factor itself.
DEFAULT_PRED_SHIFT = 0.5


@dataclass(frozen=True)
class SweepSpec:
    factor: str
    lo: float
    hi: float
    steps: int
    loss_names: tuple = LOSS_NAMES
    boundary_min: bool = False
    base_box: BoxCWHA = DEFAULT_BASE
    pred_shift: float = DEFAULT_PRED_SHIFT

    def __post_init__(self):
        if self.factor not in FACTORS:
            raise InvalidInputError(f"unknown factor {self.factor!r}")
        if not self.lo < self.hi:
            raise InvalidInputError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.steps < 2:
            raise InvalidInputError("steps must be >= 2")
        bad = [n for n in self.loss_names if n not in LOSS_NAMES]
        if bad or not self.loss_names:
            raise InvalidInputError(f"bad loss names {bad or self.loss_names}")


@dataclass(frozen=True)
class SweepRow:
    factor_value: float
    loss_values: dict = field(default_factory=dict)


def _perturbed_pair(spec, v):
    """(pred, target) vertex arrays at grid value v; the prediction differs
    from the target in the single swept factor (plus the fixed shift)."""
    base = spec.base_box
    target = vertices_from_cwha(base)
    if spec.factor == "shift":
        pred_cwha = BoxCWHA(base.cx + v, base.cy, base.w, base.h, base.theta)
        return vertices_from_cwha(pred_cwha), target
    shifted = BoxCWHA(base.cx + spec.pred_shift, base.cy, base.w, base.h, base.theta)
    if spec.factor == "scale":
        # Both boxes scale jointly: only overall size changes, not geometry.
        return vertices_from_cwha(shifted) * v, target * v
    if spec.factor == "angle":
        return vertices_from_cwha(
            BoxCWHA(shifted.cx, shifted.cy, shifted.w, shifted.h,
                    shifted.theta + v)), target
    # aspect: adjust w/h ratio to v at fixed area
    area = base.w * base.h
    if v <= 0 or area <= 0:
        raise InvalidInputError("aspect sweep needs positive ratio and area")
    return vertices_from_cwha(
        BoxCWHA(shifted.cx, shifted.cy, math.sqrt(area * v),
                math.sqrt(area / v), shifted.theta)), target


def _evaluate(name, pred, target, boundary_min):
    if name == "MDLt" or name == "MDLp":
        source = (CovarianceSource.TARGET if name == "MDLt"
                  else CovarianceSource.PREDICTION)
        fn = losses.mdl_boundary_min if boundary_min else losses.mdl
        return fn(pred, target, source)
    if name == "OneMinusSkewIoU":
        return 1.0 - skew_iou(pred, target)
    kind = {"L1": NormKind.L1, "L2": NormKind.L2,
            "SmoothL1": NormKind.SMOOTH_L1}[name]
    fn = losses.ln_norm_boundary_min if boundary_min else losses.ln_norm_loss
    return fn(pred, target, kind)


def run_sweep(spec: SweepSpec):
    """Evaluate every requested loss on the factor grid; degenerate grid
    points yield NaN-valued rows instead of aborting the sweep."""
    grid = np.linspace(spec.lo, spec.hi, spec.steps)
    rows = []
    for v in grid:
        try:
            pred, target = _perturbed_pair(spec, float(v))
            if losses.covariance_from_vertices(pred).trace() < 1e-12 \
                    or losses.covariance_from_vertices(target).trace() < 1e-12:
                raise InvalidInputError("degenerate zero-area boxes")
            values = {name: _evaluate(name, pred, target, spec.boundary_min)
                      for name in spec.loss_names}
        except (InvalidInputError, ValueError):
            values = {name: float("nan") for name in spec.loss_names}
        rows.append(SweepRow(float(v), values))
    return rows


def _fmt(x):
    return "NaN" if math.isnan(x) else f"{x:.9g}"


def emit_csv(rows, path):
    """Write sweep rows as CSV: header ``factor,<losses>``, 9 significant
    digits, NaN literal for error-sentinel rows. Deterministic output."""
    if not rows:
        raise InvalidInputError("no rows to emit")
    names = [n for n in LOSS_NAMES if n in rows[0].loss_values]
    with open(path, "w", newline="\n") as fh:
        fh.write("factor," + ",".join(names) + "\n")
        for row in rows:
            vals = ",".join(_fmt(row.loss_values[n]) for n in names)
            fh.write(f"{row.factor_value:.9g},{vals}\n")


def plot_sweep(rows, path, title=None):
    """Render the loss curves of a sweep to an image file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [n for n in LOSS_NAMES if n in rows[0].loss_values]
    xs = [r.factor_value for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in names:
        ax.plot(xs, [r.loss_values[name] for r in rows], label=name)
    ax.set_xlabel("factor value")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
