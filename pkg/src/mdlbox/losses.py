"""Loss stack for eight-parameter rotated boxes.

Core pieces: vertex covariance, Mahalanobis distance, the Mahalanobis
distance loss (MDL) in its target-covariance (MDL-t) and
prediction-covariance (MDL-p) forms, the cyclic-relabeling boundary minimum,
l_n-norm baselines, the keypoint focal heatmap loss, the covariance-scaled
offset loss, and the total-loss combination.

Every differentiable loss has a companion ``*_grad`` returning
(value, gradient with respect to the prediction).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError, SingularCovarianceError

# Regularization added to the vertex covariance before inversion; keeps
# degenerate (zero-width) boxes from producing a singular matrix.
COV_REG_REL = 1e-7
COV_REG_ABS = 1e-12

# Predicted heatmap values are clamped to this interval before the logs.
FOCAL_CLAMP = 1e-6

CYCLIC_SHIFTS = (0, 1, 2, 3)


class CovarianceSource(Enum):
    """Which box supplies the covariance in MDL: the target (MDL-t) or the
    prediction (MDL-p)."""

    TARGET = "target"
    PREDICTION = "prediction"


class NormKind(Enum):
    L1 = "l1"
    L2 = "l2"
    SMOOTH_L1 = "smooth_l1"


@dataclass(frozen=True)
class LossBreakdown:
    """Per-image loss components; ``total`` is their sum divided by the
    ground-truth object count."""

    heatmap: float
    box: float
    offset: float
    total: float


def _check_vertices(v):
    v = np.asarray(v, dtype=float)
    if v.shape != (4, 2):
        raise InvalidInputError(f"expected (4, 2) vertices, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise InvalidInputError("non-finite vertex coordinates")
    return v


def covariance_from_vertices(verts) -> np.ndarray:
    """Sample covariance (divisor N-1 = 3) of the four vertex points.

    Translation of the box leaves the result unchanged; uniform scaling by s
    multiplies it by s**2.
    """
    v = _check_vertices(verts)
    centered = v - v.mean(axis=0)
    return centered.T @ centered / 3.0


def _min_eigenvalue(sigma):
    half_tr = 0.5 * float(np.trace(sigma))
    det = float(sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0])
    return half_tr - np.sqrt(max(half_tr * half_tr - det, 0.0))


def regularize_covariance(sigma) -> np.ndarray:
    """Add lambda*I, lambda = max(1e-7 trace, 1e-12), when the matrix is
    near-singular; well-conditioned covariances pass through untouched so
    hand-computed loss values stay exact."""
    sigma = np.asarray(sigma, dtype=float)
    lam = max(COV_REG_REL * float(np.trace(sigma)), COV_REG_ABS)
    if _min_eigenvalue(sigma) > lam:
        return sigma
    return sigma + lam * np.eye(2)


def _inverse_2x2(sigma):
    a, b, c, d = sigma[0, 0], sigma[0, 1], sigma[1, 0], sigma[1, 1]
    det = a * d - b * c
    if det <= 0 or not np.isfinite(det):
        raise SingularCovarianceError(f"covariance not positive definite (det={det})")
    return np.array([[d, -b], [-c, a]]) / det


def mahalanobis_distance(m, n, sigma) -> float:
    """sqrt((m - n)^T Sigma^-1 (m - n)) with a closed-form 2x2 inverse."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    if not (np.isfinite(m).all() and np.isfinite(n).all()):
        raise InvalidInputError("non-finite point coordinates")
    d = m - n
    inv = _inverse_2x2(np.asarray(sigma, dtype=float))
    return float(np.sqrt(max(d @ inv @ d, 0.0)))


def _box_sigma_inv(source_verts):
    raw = covariance_from_vertices(source_verts)
    sigma = regularize_covariance(raw)
    return raw, sigma, _inverse_2x2(sigma)


def _mdl_fixed_sigma_inv(pred, target, inv):
    diffs = pred - target
    dists = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", diffs, inv, diffs), 0.0))
    return float(dists.mean())


def mdl(pred, target, source=CovarianceSource.TARGET) -> float:
    """Mean Mahalanobis distance over the four positionally paired vertices.

    The covariance comes from the target vertices (MDL-t) or the predicted
    vertices (MDL-p). Pairing is strictly positional; no vertex sorting.
    """
    pred = _check_vertices(pred)
    target = _check_vertices(target)
    src = pred if source is CovarianceSource.PREDICTION else target
    _, _, inv = _box_sigma_inv(src)
    return _mdl_fixed_sigma_inv(pred, target, inv)


def mdl_grad(pred, target, source=CovarianceSource.TARGET, through_sigma=False):
    """MDL value and its gradient with respect to the predicted vertices.

    For MDL-p the covariance depends on the prediction; by default it is
    treated as a constant (no gradient through it). ``through_sigma=True``
    differentiates through the covariance and its trace-scaled
    regularization as well.
    """
    pred = _check_vertices(pred)
    target = _check_vertices(target)
    from_pred = source is CovarianceSource.PREDICTION
    src = pred if from_pred else target
    raw, _, inv = _box_sigma_inv(src)

    diffs = pred - target
    u = diffs @ inv                       # u_i = Sigma^-1 d_i (inv symmetric)
    dists = np.sqrt(np.maximum(np.einsum("ij,ij->i", diffs, u), 0.0))
    value = float(dists.mean())

    safe = np.where(dists > 0, dists, 1.0)
    grad = u / (4.0 * safe[:, None])

    if from_pred and through_sigma:
        centered = pred - pred.mean(axis=0)
        # d MD_i / d Sigma = -(1/(2 MD_i)) u_i u_i^T and
        # d Sigma / d v_mc = (1/3)(e_c w_m^T + w_m e_c^T); contracting gives
        # -(1/(3 MD_i)) u_ic (u_i . w_m) per vertex m, coordinate c.
        uw = u @ centered.T               # uw[i, m] = u_i . w_m
        grad -= (uw / (3.0 * safe[:, None] * 4.0)).T @ u
        # When the trace-proportional regularization is active, its lambda
        # also moves with the prediction.
        lam = max(COV_REG_REL * float(np.trace(raw)), COV_REG_ABS)
        if _min_eigenvalue(raw) <= lam and COV_REG_REL * float(np.trace(raw)) > COV_REG_ABS:
            unorm2 = np.einsum("ij,ij->i", u, u)
            coef = float((unorm2 / (2.0 * safe)).sum()) / 4.0
            grad -= coef * COV_REG_REL * (2.0 / 3.0) * centered
    return value, grad


def mdl_boundary_min(pred, target, source=CovarianceSource.TARGET) -> float:
    """Minimum MDL over the four cyclic relabelings of the predicted vertices."""
    pred = _check_vertices(pred)
    target = _check_vertices(target)
    return min(mdl(np.roll(pred, -k, axis=0), target, source) for k in CYCLIC_SHIFTS)


def mdl_boundary_min_grad(pred, target, source=CovarianceSource.TARGET,
                          through_sigma=False):
    """Value and prediction gradient of the cyclic boundary minimum.

    Ties pick the first (identity-first) shift; the gradient is that of the
    selected relabeling mapped back to the original vertex order.
    """
    pred = _check_vertices(pred)
    target = _check_vertices(target)
    losses = [mdl(np.roll(pred, -k, axis=0), target, source) for k in CYCLIC_SHIFTS]
    k = int(np.argmin(losses))
    _, g = mdl_grad(np.roll(pred, -k, axis=0), target, source, through_sigma)
    return losses[k], np.roll(g, k, axis=0)


def _elementwise_norm(x, kind):
    ax = np.abs(x)
    if kind is NormKind.L1:
        return ax
    if kind is NormKind.L2:
        return x * x
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def ln_norm_loss(pred, target, kind: NormKind) -> float:
    """Baseline l_n-norm loss averaged over the 8 vertex coordinates."""
    diffs = _check_vertices(pred) - _check_vertices(target)
    return float(_elementwise_norm(diffs, kind).mean())


def ln_norm_loss_grad(pred, target, kind: NormKind):
    diffs = _check_vertices(pred) - _check_vertices(target)
    value = float(_elementwise_norm(diffs, kind).mean())
    if kind is NormKind.L1:
        g = np.sign(diffs)
    elif kind is NormKind.L2:
        g = 2.0 * diffs
    else:
        g = np.clip(diffs, -1.0, 1.0)
    return value, g / 8.0


def ln_norm_boundary_min(pred, target, kind: NormKind) -> float:
    """Minimum l_n-norm loss over cyclic relabelings of the prediction."""
    pred = _check_vertices(pred)
    target = _check_vertices(target)
    return min(ln_norm_loss(np.roll(pred, -k, axis=0), target, kind)
               for k in CYCLIC_SHIFTS)


def gaussian_radius(width, height, min_overlap=0.7):
    """Radius such that any shifted box still overlaps the original by
    ``min_overlap``; the CornerNet rule used to size heatmap kernels."""
    a1 = 1.0
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 - np.sqrt(b1 * b1 - 4 * a1 * c1)) / (2 * a1)

    a2 = 4.0
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 - np.sqrt(b2 * b2 - 4 * a2 * c2)) / (2 * a2)

    a3 = 4.0 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + np.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)
    return min(r1, r2, r3)


def heatmap_sigma(width, height, min_overlap=0.7):
    """Kernel deviation adapted to object size: max(1, r/3)."""
    return max(1.0, gaussian_radius(width, height, min_overlap) / 3.0)


def gaussian_heatmap_target(width, height, centers, sigmas) -> np.ndarray:
    """Ground-truth heatmap: per-cell max of per-object Gaussian kernels.

    Returns a (height, width) array. The rounded center cell of each object
    is set to exactly 1.0.
    """
    if width < 1 or height < 1:
        raise InvalidInputError(f"bad grid dimensions {width}x{height}")
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    sigmas = np.asarray(sigmas, dtype=float).reshape(-1)
    if len(centers) != len(sigmas):
        raise InvalidInputError("centers and sigmas length mismatch")
    if (sigmas <= 0).any():
        raise InvalidInputError("sigmas must be positive")
    grid = np.zeros((height, width))
    ys, xs = np.mgrid[0:height, 0:width]
    for (cx, cy), sig in zip(centers, sigmas):
        if not (0 <= cx < width and 0 <= cy < height):
            raise InvalidInputError(f"center ({cx}, {cy}) outside {width}x{height} grid")
        kern = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sig * sig))
        np.maximum(grid, kern, out=grid)
        grid[int(round(cy)), int(round(cx))] = 1.0
    return grid


def _check_heatmaps(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InvalidInputError(f"heatmap shapes differ: {pred.shape} vs {target.shape}")
    return pred, target


def focal_heatmap_loss(pred, target, alpha=2.0, beta=4.0) -> float:
    """Keypoint focal loss over all heatmap cells, unnormalized.

    Cells with target exactly 1 are positives; every other cell is a
    negative down-weighted by (1 - target)**beta. Natural log; predictions
    clamped away from 0 and 1.
    """
    pred, target = _check_heatmaps(pred, target)
    p = np.clip(pred, FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    pos = target == 1.0
    pos_loss = -((1.0 - p) ** alpha * np.log(p))[pos].sum()
    neg_loss = -(((1.0 - target) ** beta) * p ** alpha * np.log(1.0 - p))[~pos].sum()
    return float(pos_loss + neg_loss)


def focal_heatmap_loss_grad(pred, target, alpha=2.0, beta=4.0):
    pred, target = _check_heatmaps(pred, target)
    p = np.clip(pred, FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    pos = target == 1.0
    value = focal_heatmap_loss(pred, target, alpha, beta)
    grad = np.zeros_like(p)
    gp = alpha * (1.0 - p) ** (alpha - 1) * np.log(p) - (1.0 - p) ** alpha / p
    gn = -((1.0 - target) ** beta) * (
        alpha * p ** (alpha - 1) * np.log(1.0 - p) - p ** alpha / (1.0 - p))
    grad[pos] = gp[pos]
    grad[~pos] = gn[~pos]
    # clamp saturates the gradient
    grad[(pred < FOCAL_CLAMP) | (pred > 1.0 - FOCAL_CLAMP)] = 0.0
    return value, grad


def offset_loss(pred, target, sigma) -> float:
    """Mahalanobis distance between predicted and true sub-cell offsets,
    under the covariance of the associated box."""
    return mahalanobis_distance(pred, target, sigma)


def offset_loss_grad(pred, target, sigma):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    d = pred - target
    inv = _inverse_2x2(np.asarray(sigma, dtype=float))
    value = float(np.sqrt(max(d @ inv @ d, 0.0)))
    grad = (inv @ d) / value if value > 0 else np.zeros(2)
    return value, grad


def total_loss(heatmap_loss_value, box_losses, offset_losses, n_objects) -> LossBreakdown:
    """Combine the three components: (L_h + sum L_b + sum L_o) / N.

    N = 0 (empty crop) yields an all-zero breakdown.
    """
    box_losses = list(box_losses)
    offset_losses = list(offset_losses)
    if n_objects != len(box_losses) or n_objects != len(offset_losses):
        raise InvalidInputError("n_objects must match per-object loss counts")
    if n_objects == 0:
        return LossBreakdown(0.0, 0.0, 0.0, 0.0)
    box = float(sum(box_losses))
    off = float(sum(offset_losses))
    return LossBreakdown(heatmap_loss_value, box, off,
                         (heatmap_loss_value + box + off) / n_objects)
