"""Scale-invariant Mahalanobis distance losses for rotated boxes, with
oriented-box geometry, gradient checking, loss sweeps and DOTA evaluation."""

from .errors import InvalidInputError, OracleFailureError, SingularCovarianceError
from .geometry import (
    BoxCWHA,
    Detection,
    intersect_convex,
    polygon_area,
    rotated_nms,
    skew_iou,
    vertices_from_cwha,
)
from .losses import (
    CovarianceSource,
    LossBreakdown,
    NormKind,
    covariance_from_vertices,
    focal_heatmap_loss,
    gaussian_heatmap_target,
    ln_norm_boundary_min,
    ln_norm_loss,
    mahalanobis_distance,
    mdl,
    mdl_boundary_min,
    offset_loss,
    total_loss,
)

__all__ = [
    "BoxCWHA", "CovarianceSource", "Detection", "InvalidInputError",
    "LossBreakdown", "NormKind", "OracleFailureError",
    "SingularCovarianceError", "covariance_from_vertices",
    "focal_heatmap_loss", "gaussian_heatmap_target", "intersect_convex",
    "ln_norm_boundary_min", "ln_norm_loss", "mahalanobis_distance", "mdl",
    "mdl_boundary_min", "offset_loss", "polygon_area", "rotated_nms",
    "skew_iou", "total_loss", "vertices_from_cwha",
]

__version__ = "0.1.0"
