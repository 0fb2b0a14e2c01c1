"""DOTA-v1.0 ingestion, patch planning, prediction decoding and mAP.

Works purely at the coordinate level: annotations are parsed from the DOTA
text format, large images are tiled into overlapping patch windows with
instances remapped into window-local coordinates, network outputs are
decoded into detections, multi-scale results are merged with rotated NMS,
and accuracy is reported as VOC-style mAP over the 15 categories.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import Detection, intersect_convex, polygon_area, rotated_nms, skew_iou

# The 15 DOTA-v1.0 categories, annotation tokens in reporting order
# (plane PL, ship SH, storage tank ST, ..., swimming pool SP).
CATEGORIES = (
    "plane", "ship", "storage-tank", "baseball-diamond", "tennis-court",
    "basketball-court", "ground-track-field", "harbor", "bridge",
    "large-vehicle", "small-vehicle", "helicopter", "roundabout",
    "soccer-ball-field", "swimming-pool",
)

PATCH_SIZE = 600
PATCH_GAP = 100
PATCH_SCALES = (0.5, 1.0)

# An instance stays in a window iff at least this fraction of its area lies
# inside (public devkit convention); the box itself is never clipped.
KEEP_AREA_FRACTION = 0.7


@dataclass(frozen=True)
class Instance:
    box: np.ndarray  # (4, 2) vertices
    category: str
    difficult: int = 0


@dataclass(frozen=True)
class DotaAnnotation:
    image_id: str
    instances: list


@dataclass(frozen=True)
class PatchWindow:
    image_id: str
    scale: float
    x0: int
    y0: int
    x1: int
    y1: int
    remapped_instances: list = field(default_factory=list)


@dataclass(frozen=True)
class DecodedDetection:
    """A detection tagged with its source window; coordinates are
    window-local until :func:`to_original_frame`."""

    detection: Detection
    image_id: str
    scale: float
    x0: int
    y0: int


class AnnotationParseError(InvalidInputError):
    pass


def parse_annotation(text, image_id="") -> DotaAnnotation:
    """Parse a DOTA v1.0 annotation file body.

    Optional ``imagesource:``/``gsd:`` header lines, then one instance per
    line: 8 vertex coordinates, category token, difficult flag.
    """
    instances = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("imagesource:", "gsd:")):
            continue
        parts = line.split()
        if len(parts) not in (9, 10):
            raise AnnotationParseError(f"line {lineno}: expected 9 or 10 fields, got {len(parts)}")
        try:
            coords = [float(p) for p in parts[:8]]
        except ValueError:
            raise AnnotationParseError(f"line {lineno}: non-numeric coordinate") from None
        category = parts[8]
        if category not in CATEGORIES:
            raise AnnotationParseError(f"line {lineno}: unknown category {category!r}")
        difficult = 0
        if len(parts) == 10:
            if parts[9] not in ("0", "1"):
                raise AnnotationParseError(f"line {lineno}: bad difficult flag {parts[9]!r}")
            difficult = int(parts[9])
        box = np.array(coords, dtype=float).reshape(4, 2)
        if not np.isfinite(box).all():
            raise AnnotationParseError(f"line {lineno}: non-finite coordinate")
        instances.append(Instance(box, category, difficult))
    return DotaAnnotation(image_id, instances)


def _axis_origins(length, patch, stride):
    if length <= patch:
        return [0]
    origins = []
    x = 0
    while True:
        if x + patch >= length:
            origins.append(length - patch)
            break
        origins.append(x)
        x += stride
    return sorted(set(origins))


def _window_fraction(box, x0, y0, x1, y1):
    window = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    area = polygon_area(box)
    if area <= 0:
        return 0.0
    inter = intersect_convex(box, window)
    return (polygon_area(inter) / area) if len(inter) >= 3 else 0.0


def plan_patches(image_width, image_height, patch=PATCH_SIZE, gap=PATCH_GAP,
                 scales=PATCH_SCALES, annotation=None):
    """Tile each scaled image with patch windows of stride patch - gap.

    The final window per axis is shifted so its far edge meets the image
    edge; windows never exceed bounds. When an annotation is supplied,
    instances with >= 70% of their area inside a window are remapped (whole,
    unclipped) into that window's local coordinates.
    """
    if image_width <= 0 or image_height <= 0:
        raise InvalidInputError("image dimensions must be positive")
    stride = patch - gap
    image_id = annotation.image_id if annotation is not None else ""
    windows = []
    for scale in scales:
        sw = int(round(image_width * scale))
        sh = int(round(image_height * scale))
        scaled = None
        if annotation is not None:
            scaled = [(inst.box * scale, inst) for inst in annotation.instances]
        for y0 in _axis_origins(sh, patch, stride):
            for x0 in _axis_origins(sw, patch, stride):
                x1 = min(x0 + patch, sw)
                y1 = min(y0 + patch, sh)
                kept = []
                if scaled is not None:
                    for box, inst in scaled:
                        if _window_fraction(box, x0, y0, x1, y1) >= KEEP_AREA_FRACTION:
                            kept.append(Instance(box - np.array([x0, y0], dtype=float),
                                                 inst.category, inst.difficult))
                windows.append(PatchWindow(image_id, scale, x0, y0, x1, y1, kept))
    return windows


def decode_predictions(heatmap, box_field, offset_field, class_id=None,
                       top_k=500, score_min=0.1, downsample=4):
    """Decode per-cell network outputs into detections.

    A cell is a candidate iff it is the maximum of its 3x3 neighborhood and
    its score exceeds ``score_min``; the ``top_k`` highest-scored candidates
    are kept. Vertices are (cell + offset + vertex vector) * downsample,
    matching the add-then-multiply decode order.
    """
    heatmap = np.asarray(heatmap, dtype=float)
    box_field = np.asarray(box_field, dtype=float)
    offset_field = np.asarray(offset_field, dtype=float)
    h, w = heatmap.shape
    if box_field.shape != (h, w, 8) or offset_field.shape != (h, w, 2):
        raise InvalidInputError(
            f"field shapes {box_field.shape}/{offset_field.shape} do not match "
            f"heatmap {heatmap.shape}")

    padded = np.pad(heatmap, 1, constant_values=-np.inf)
    neighborhoods = np.stack([padded[dy:dy + h, dx:dx + w]
                              for dy in range(3) for dx in range(3)])
    is_peak = heatmap >= neighborhoods.max(axis=0)

    ys, xs = np.nonzero(is_peak & (heatmap > score_min))
    scores = heatmap[ys, xs]
    # descending score, ties by cell index (row-major)
    order = np.lexsort((ys * w + xs, -scores))[:top_k]

    dets = []
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        center = np.array([x, y], dtype=float) + offset_field[y, x]
        verts = (center + box_field[y, x].reshape(4, 2)) * downsample
        dets.append(Detection(verts, float(scores[i]), class_id))
    return dets


def to_original_frame(dd: DecodedDetection) -> Detection:
    """Undo the window offset and scale of a patch-level detection."""
    box = (dd.detection.box + np.array([dd.x0, dd.y0], dtype=float)) / dd.scale
    return Detection(box, dd.detection.score, dd.detection.class_id)


def merge_multiscale(decoded, nms_threshold=0.1):
    """Map all window detections to the original frame and apply per-class
    rotated NMS across windows and scales."""
    return rotated_nms([to_original_frame(d) for d in decoded], nms_threshold)


def _voc_ap_11point(recall, precision):
    peaks = []
    for t in np.arange(0.0, 1.01, 0.1):
        mask = recall >= t - 1e-12
        peaks.append(precision[mask].max() if mask.any() else 0.0)
    return float(sum(peaks) / 11.0)


def _voc_ap_allpoint(recall, precision):
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]).sum())


@dataclass(frozen=True)
class EvalResult:
    per_class_ap: dict
    map_score: float


def evaluate_map(gts, preds, iou_threshold=0.5, use_07_metric=True) -> EvalResult:
    """Rotated-box mAP over the 15 categories.

    ``gts``: list of DotaAnnotation. ``preds``: dict image_id -> list of
    Detection (class_id is a category token). Greedy matching in descending
    score order against unmatched ground truths with SkewIoU >= threshold;
    difficult ground truths neither count toward recall nor consume matches.
    """
    gt_by_image = {}
    npos = {c: 0 for c in CATEGORIES}
    for ann in gts:
        per_class = {}
        for inst in ann.instances:
            per_class.setdefault(inst.category, []).append(
                {"box": inst.box, "difficult": inst.difficult, "matched": False})
            if not inst.difficult:
                npos[inst.category] += 1
        gt_by_image[ann.image_id] = per_class

    flat = []
    for image_id, dets in preds.items():
        for j, d in enumerate(dets):
            flat.append((image_id, j, d))

    per_class_ap = {}
    for category in CATEGORIES:
        cls = [(img, j, d) for img, j, d in flat if d.class_id == category]
        cls.sort(key=lambda t: (-t[2].score, t[0], t[1]))
        tp = np.zeros(len(cls))
        fp = np.zeros(len(cls))
        for i, (img, _, det) in enumerate(cls):
            candidates = gt_by_image.get(img, {}).get(category, [])
            best_iou, best = -1.0, None
            best_difficult_iou = -1.0
            for g in candidates:
                iou = skew_iou(det.box, g["box"])
                if g["difficult"]:
                    best_difficult_iou = max(best_difficult_iou, iou)
                elif not g["matched"] and iou > best_iou:
                    best_iou, best = iou, g
            if best is not None and best_iou >= iou_threshold:
                best["matched"] = True
                tp[i] = 1
            elif best_difficult_iou >= iou_threshold:
                pass  # ignorable match against a difficult ground truth
            else:
                fp[i] = 1
        if npos[category] == 0:
            per_class_ap[category] = 0.0
            continue
        ctp, cfp = np.cumsum(tp), np.cumsum(fp)
        recall = ctp / npos[category]
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(ctp + cfp > 0, ctp / np.maximum(ctp + cfp, 1), 0.0)
        if len(cls) == 0:
            per_class_ap[category] = 0.0
        elif use_07_metric:
            per_class_ap[category] = _voc_ap_11point(recall, precision)
        else:
            per_class_ap[category] = _voc_ap_allpoint(recall, precision)
    map_score = float(np.mean([per_class_ap[c] for c in CATEGORIES]))
    return EvalResult(per_class_ap, map_score)


def load_ground_truth_dir(path):
    """Read every ``*.txt`` annotation in a directory; the stem is the
    image id."""
    anns = []
    for name in sorted(os.listdir(path)):
        if not name.endswith(".txt"):
            continue
        image_id = name[:-4]
        with open(os.path.join(path, name)) as fh:
            try:
                anns.append(parse_annotation(fh.read(), image_id))
            except AnnotationParseError as exc:
                raise AnnotationParseError(f"{name}: {exc}") from None
    return anns


def load_predictions_dir(path):
    """Read DOTA Task-1 submission files: one file per class, lines
    ``image_id score x1 y1 ... y4``. The class is identified from the file
    stem (``Task1_plane.txt`` or ``plane.txt``)."""
    preds = {}
    for name in sorted(os.listdir(path)):
        if not name.endswith(".txt"):
            continue
        stem = name[:-4]
        category = next((c for c in CATEGORIES
                         if stem == c or stem.endswith("_" + c)), None)
        if category is None:
            raise InvalidInputError(f"{name}: cannot identify class from filename")
        with open(os.path.join(path, name)) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 10:
                    raise InvalidInputError(f"{name} line {lineno}: expected 10 fields")
                try:
                    score = float(parts[1])
                    coords = [float(p) for p in parts[2:]]
                except ValueError:
                    raise InvalidInputError(
                        f"{name} line {lineno}: non-numeric value") from None
                box = np.array(coords).reshape(4, 2)
                preds.setdefault(parts[0], []).append(Detection(box, score, category))
    return preds


def write_results_csv(result: EvalResult, path):
    """Per-class AP rows plus an mAP row, four decimal places."""
    with open(path, "w", newline="\n") as fh:
        fh.write("class,ap\n")
        for category in CATEGORIES:
            fh.write(f"{category},{result.per_class_ap[category]:.4f}\n")
        fh.write(f"mAP,{result.map_score:.4f}\n")


def plot_class_ap(result: EvalResult, path):
    """Render per-class AP as a bar chart alongside the CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 4.5))
    aps = [result.per_class_ap[c] for c in CATEGORIES]
    ax.bar(range(len(CATEGORIES)), aps)
    ax.axhline(result.map_score, color="k", linestyle="--",
               label=f"mAP = {result.map_score:.4f}")
    ax.set_xticks(range(len(CATEGORIES)))
    ax.set_xticklabels(CATEGORIES, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("AP")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
