import numpy as np
import pytest

from mdlbox.geometry import BoxCWHA, vertices_from_cwha


def random_box(rng, lo=0.0, hi=100.0, min_side=1.0, max_side=40.0):
    w = rng.uniform(min_side, max_side)
    h = rng.uniform(min_side, max_side)
    return BoxCWHA(rng.uniform(lo, hi), rng.uniform(lo, hi), w, h,
                   rng.uniform(-np.pi, np.pi))


def random_pair(rng):
    """A target box plus a nearby perturbed prediction (both as vertices)."""
    base = random_box(rng, lo=-5, hi=5, min_side=0.5, max_side=6.0)
    target = vertices_from_cwha(base)
    pred = vertices_from_cwha(BoxCWHA(
        base.cx + rng.uniform(-1, 1), base.cy + rng.uniform(-1, 1),
        base.w * rng.uniform(0.7, 1.3), base.h * rng.uniform(0.7, 1.3),
        base.theta + rng.uniform(-0.5, 0.5)))
    return pred, target


def monte_carlo_iou(p, q, n_samples, rng):
    """Rasterization estimate of SkewIoU: uniform samples over the joint
    bounding box, counting membership in each convex quad by edge-side
    tests. Independent of the clipping implementation."""
    pts = np.vstack([p, q])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    samples = rng.uniform(lo, hi, size=(n_samples, 2))

    sx, sy = samples[:, 0], samples[:, 1]

    def inside(quad):
        quad = np.asarray(quad, float)
        all_pos = np.ones(len(samples), bool)
        all_neg = np.ones(len(samples), bool)
        for i in range(4):
            ax, ay = quad[i]
            ex, ey = quad[(i + 1) % 4] - quad[i]
            cross = ex * (sy - ay) - ey * (sx - ax)
            all_pos &= cross >= 0
            all_neg &= cross <= 0
        return all_pos | all_neg

    in_p = inside(np.asarray(p, float))
    in_q = inside(np.asarray(q, float))
    union = (in_p | in_q).sum()
    if union == 0:
        return 0.0
    return (in_p & in_q).sum() / union


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)
