"""Finite-difference verification of every analytic loss gradient.

The central-difference oracle is the independent reference; ``check_all``
runs it against each differentiable loss on randomized, well-conditioned
instances and reports the worst relative error per operation.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import losses
from .errors import OracleFailureError
from .geometry import BoxCWHA, vertices_from_cwha
from .losses import CovarianceSource, NormKind

DEFAULT_STEP = 1e-6
DEFAULT_TOL = 1e-4

# Rejection margins: finite differences are meaningless at kinks and
# permutation ties.
KINK_MARGIN = 1e-3
PERM_MARGIN = 1e-3
MIN_VERTEX_DIST = 1e-2


@dataclass(frozen=True)
class GradReport:
    op_name: str
    max_rel_error: float
    worst_input: str
    passed: bool


def central_difference(f, x, step=DEFAULT_STEP) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x, elementwise."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        fp = f(x + e)
        fm = f(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleFailureError(f"non-finite probe at index {i}")
        grad.flat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=float).ravel()
    g = np.asarray(numeric, dtype=float).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(g)), 1e-8)
    return float((np.abs(a - g) / denom).max())


def _random_pair(rng):
    """A target box and a perturbed prediction, both well-conditioned
    (aspect ratio <= 10, sides >= 0.1)."""
    w = rng.uniform(0.5, 5.0)
    h = w * rng.uniform(0.2, 2.0)
    base = BoxCWHA(rng.uniform(-5, 5), rng.uniform(-5, 5), w, h,
                   rng.uniform(-np.pi, np.pi))
    target = vertices_from_cwha(base)
    pred = vertices_from_cwha(BoxCWHA(
        base.cx + rng.uniform(-0.5, 0.5), base.cy + rng.uniform(-0.5, 0.5),
        max(0.1, w * rng.uniform(0.8, 1.2)), max(0.1, h * rng.uniform(0.8, 1.2)),
        base.theta + rng.uniform(-0.3, 0.3)))
    return pred, target


def _vertices_ok(pred, target):
    d = np.linalg.norm(pred - target, axis=1)
    return (d >= MIN_VERTEX_DIST).all()


def _smooth_l1_ok(pred, target):
    ax = np.abs(pred - target)
    return (np.abs(ax - 1.0) >= KINK_MARGIN).all() and (ax >= KINK_MARGIN).all()


def _perm_margin_ok(pred, target, source):
    vals = sorted(losses.mdl(np.roll(pred, -k, axis=0), target, source)
                  for k in losses.CYCLIC_SHIFTS)
    return vals[1] - vals[0] >= PERM_MARGIN


def _sample(rng, accept):
    for _ in range(1000):
        pred, target = _random_pair(rng)
        if _vertices_ok(pred, target) and accept(pred, target):
            return pred, target
    raise RuntimeError("rejection sampling failed to find a valid case")


def _box_op_cases(op_name):
    """(analytic, oracle_fn_builder, accept) for each vertex-domain loss."""

    def mdl_case(source, through_sigma):
        def analytic(pred, target):
            return losses.mdl_grad(pred, target, source, through_sigma)[1]

        def oracle(pred, target):
            if source is CovarianceSource.PREDICTION and not through_sigma:
                # The constant-covariance gradient differentiates the loss
                # with the covariance frozen at the current prediction.
                _, _, inv = losses._box_sigma_inv(pred)
                return lambda x: losses._mdl_fixed_sigma_inv(
                    x.reshape(4, 2), target, inv)
            return lambda x: losses.mdl(x.reshape(4, 2), target, source)

        return analytic, oracle, _vertices_ok

    def bmin_case(source):
        def analytic(pred, target):
            return losses.mdl_boundary_min_grad(pred, target, source, True)[1]

        def oracle(pred, target):
            return lambda x: losses.mdl_boundary_min(x.reshape(4, 2), target, source)

        return analytic, oracle, lambda p, t: (
            _vertices_ok(p, t) and _perm_margin_ok(p, t, source))

    def norm_case(kind):
        def analytic(pred, target):
            return losses.ln_norm_loss_grad(pred, target, kind)[1]

        def oracle(pred, target):
            return lambda x: losses.ln_norm_loss(x.reshape(4, 2), target, kind)

        accept = _smooth_l1_ok if kind is not NormKind.L2 else _vertices_ok
        return analytic, oracle, accept

    table = {
        "mdl_t": mdl_case(CovarianceSource.TARGET, False),
        "mdl_p_const_sigma": mdl_case(CovarianceSource.PREDICTION, False),
        "mdl_p_full_sigma": mdl_case(CovarianceSource.PREDICTION, True),
        "mdl_boundary_min_t": bmin_case(CovarianceSource.TARGET),
        "mdl_boundary_min_p": bmin_case(CovarianceSource.PREDICTION),
        "l1": norm_case(NormKind.L1),
        "l2": norm_case(NormKind.L2),
        "smooth_l1": norm_case(NormKind.SMOOTH_L1),
    }
    return table[op_name]


BOX_OPS = ("mdl_t", "mdl_p_const_sigma", "mdl_p_full_sigma",
           "mdl_boundary_min_t", "mdl_boundary_min_p",
           "l1", "l2", "smooth_l1")


def _check_box_op(op_name, rng, n_cases, tolerance, step):
    analytic_fn, oracle_builder, accept = _box_op_cases(op_name)
    worst_err, worst_input = 0.0, ""
    for _ in range(n_cases):
        pred, target = _sample(rng, accept)
        analytic = analytic_fn(pred, target)
        numeric = central_difference(oracle_builder(pred, target), pred.ravel(), step)
        err = relative_error(analytic.ravel(), numeric)
        if err >= worst_err:
            worst_err = err
            worst_input = json.dumps(
                {"pred": pred.tolist(), "target": target.tolist()})
    return GradReport(op_name, worst_err, worst_input, worst_err <= tolerance)


def _check_focal(rng, n_cases, tolerance, step):
    worst_err, worst_input = 0.0, ""
    for _ in range(n_cases):
        h, w = rng.integers(2, 7), rng.integers(2, 7)
        target = np.where(rng.random((h, w)) < 0.2, 1.0,
                          rng.uniform(0.0, 0.9, (h, w)))
        pred = rng.uniform(0.05, 0.95, (h, w))
        analytic = losses.focal_heatmap_loss_grad(pred, target)[1]
        numeric = central_difference(
            lambda x: losses.focal_heatmap_loss(x.reshape(h, w), target),
            pred.ravel(), step)
        err = relative_error(analytic.ravel(), numeric)
        if err >= worst_err:
            worst_err = err
            worst_input = json.dumps(
                {"pred": pred.tolist(), "target": target.tolist()})
    return GradReport("focal_heatmap", worst_err, worst_input, worst_err <= tolerance)


def _check_offset(rng, n_cases, tolerance, step):
    worst_err, worst_input = 0.0, ""
    for _ in range(n_cases):
        _, target_box = _random_pair(rng)
        sigma = losses.regularize_covariance(
            losses.covariance_from_vertices(target_box))
        target = rng.uniform(0.0, 1.0, 2)
        pred = target + rng.uniform(0.05, 1.0, 2) * rng.choice([-1.0, 1.0], 2)
        analytic = losses.offset_loss_grad(pred, target, sigma)[1]
        numeric = central_difference(
            lambda x: losses.offset_loss(x, target, sigma), pred, step)
        err = relative_error(analytic, numeric)
        if err >= worst_err:
            worst_err = err
            worst_input = json.dumps(
                {"pred": pred.tolist(), "target": target.tolist(),
                 "sigma": sigma.tolist()})
    return GradReport("offset", worst_err, worst_input, worst_err <= tolerance)


def check_all(seed, n_cases=100, tolerance=DEFAULT_TOL, step=DEFAULT_STEP):
    """Check every differentiable loss op; deterministic given the arguments."""
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    reports = []
    for idx, op in enumerate(BOX_OPS):
        rng = np.random.default_rng([seed, idx])
        reports.append(_check_box_op(op, rng, n_cases, tolerance, step))
    reports.append(_check_focal(np.random.default_rng([seed, 100]),
                                n_cases, tolerance, step))
    reports.append(_check_offset(np.random.default_rng([seed, 101]),
                                 n_cases, tolerance, step))
    return reports
