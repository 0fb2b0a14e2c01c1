"""End-to-end acceptance suite.

Each test covers one numbered criterion and prints a PASS line on success
(run with ``pytest -s tests/test_acceptance.py`` to see them).
"""

import time

import numpy as np
import pytest

from conftest import monte_carlo_iou, random_pair
from mdlbox.cli import main as cli_main
from mdlbox.dota import (
    CATEGORIES,
    DotaAnnotation,
    Instance,
    decode_predictions,
    evaluate_map,
)
from mdlbox.gradcheck import check_all
from mdlbox.geometry import BoxCWHA, Detection, skew_iou, vertices_from_cwha
from mdlbox.losses import (
    CovarianceSource,
    NormKind,
    focal_heatmap_loss,
    ln_norm_loss,
    mdl,
    mdl_boundary_min,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SQUARE10 = UNIT_SQUARE * 10.0


def report(n, message):
    print(f"PASS criterion {n}: {message}")


def test_criterion_1_scale_invariance():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    worst_mdl, worst_l1 = 0.0, 0.0
    for _ in range(1000):
        pred, target = random_pair(rng)
        base = {src: mdl(pred, target, src) for src in CovarianceSource}
        l1_base = ln_norm_loss(pred, target, NormKind.L1)
        for s in (0.5, 2.0, 10.0, 100.0):
            for src in CovarianceSource:
                worst_mdl = max(worst_mdl,
                                abs(mdl(s * pred, s * target, src) - base[src]))
            l1_scaled = ln_norm_loss(s * pred, s * target, NormKind.L1)
            worst_l1 = max(worst_l1, abs(l1_scaled - s * l1_base) / (s * l1_base))
    elapsed = time.perf_counter() - start
    assert worst_mdl <= 1e-9
    assert worst_l1 <= 1e-9
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report(1, f"MDL scale drift {worst_mdl:.2e}, L1 homogeneity error "
              f"{worst_l1:.2e}, {elapsed:.2f}s")


def test_criterion_2_similarity_invariance():
    rng = np.random.default_rng(1002)
    worst_mdl, worst_iou = 0.0, 0.0
    for _ in range(1000):
        pred, target = random_pair(rng)
        ang = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        scale = rng.uniform(0.1, 10)
        t = rng.uniform(-50, 50, 2)
        tp = scale * pred @ rot.T + t
        tt = scale * target @ rot.T + t
        for src in CovarianceSource:
            worst_mdl = max(worst_mdl, abs(mdl(tp, tt, src) - mdl(pred, target, src)))
        worst_iou = max(worst_iou, abs(skew_iou(tp, tt) - skew_iou(pred, target)))
    assert worst_mdl <= 1e-9
    assert worst_iou <= 1e-9
    report(2, f"MDL drift {worst_mdl:.2e}, SkewIoU drift {worst_iou:.2e}")


def test_criterion_3_skew_iou_oracles():
    rng = np.random.default_rng(1003)
    start = time.perf_counter()
    worst_mc = 0.0
    for _ in range(100):
        cx, cy = rng.uniform(10, 90, 2)
        p = vertices_from_cwha(BoxCWHA(cx, cy, rng.uniform(10, 50),
                                       rng.uniform(10, 50), rng.uniform(0, np.pi)))
        q = vertices_from_cwha(BoxCWHA(cx + rng.uniform(-15, 15),
                                       cy + rng.uniform(-15, 15),
                                       rng.uniform(10, 50), rng.uniform(10, 50),
                                       rng.uniform(0, np.pi)))
        estimate = monte_carlo_iou(p, q, 1_000_000, rng)
        worst_mc = max(worst_mc, abs(skew_iou(p, q) - estimate))
    worst_rect = 0.0
    for _ in range(100):
        x0, y0 = rng.uniform(0, 80, 2)
        w0, h0 = rng.uniform(1, 20, 2)
        x1, y1 = x0 + rng.uniform(-15, 15), y0 + rng.uniform(-15, 15)
        w1, h1 = rng.uniform(1, 20, 2)
        p = vertices_from_cwha(BoxCWHA(x0, y0, w0, h0, 0))
        q = vertices_from_cwha(BoxCWHA(x1, y1, w1, h1, 0))
        ow = max(0.0, min(x0 + w0 / 2, x1 + w1 / 2) - max(x0 - w0 / 2, x1 - w1 / 2))
        oh = max(0.0, min(y0 + h0 / 2, y1 + h1 / 2) - max(y0 - h0 / 2, y1 - h1 / 2))
        inter = ow * oh
        expected = inter / (w0 * h0 + w1 * h1 - inter)
        worst_rect = max(worst_rect, abs(skew_iou(p, q) - expected))
    elapsed = time.perf_counter() - start
    assert worst_mc <= 3e-3
    assert worst_rect <= 1e-12
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    report(3, f"Monte-Carlo gap {worst_mc:.2e}, rectangle-formula gap "
              f"{worst_rect:.2e}, {elapsed:.1f}s")


def test_criterion_4_boundary_continuity():
    target = vertices_from_cwha(BoxCWHA(0, 0, 2, 2, 0))
    offset = np.array([0.15, 0.1])

    def rotated_pred(theta):
        return vertices_from_cwha(BoxCWHA(0, 0, 2, 2, theta)) + offset

    thetas = np.pi / 2 + np.arange(-50, 51) * 1e-6
    values = [mdl_boundary_min(rotated_pred(t), target) for t in thetas]
    max_jump = max(abs(b - a) for a, b in zip(values, values[1:]))
    assert max_jump <= 1e-4
    at_boundary = rotated_pred(np.pi / 2)
    margin = mdl(at_boundary, target) - mdl_boundary_min(at_boundary, target)
    assert margin > 0
    report(4, f"max step discontinuity {max_jump:.2e}, plain-vs-min margin "
              f"{margin:.3f}")


def test_criterion_5_gradient_suite():
    start = time.perf_counter()
    reports = check_all(seed=42, n_cases=100, tolerance=1e-4)
    elapsed = time.perf_counter() - start
    failing = [r for r in reports if not r.passed]
    assert not failing, failing
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    worst = max(r.max_rel_error for r in reports)
    report(5, f"{len(reports)} ops, worst rel. error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_6_hand_oracle_values():
    got = mdl(UNIT_SQUARE + [0.1, 0.0], UNIT_SQUARE, CovarianceSource.TARGET)
    assert abs(got - 0.1 * np.sqrt(3)) <= 1e-12
    assert abs(focal_heatmap_loss([[0.5]], [[1.0]]) - 0.25 * np.log(2)) <= 1e-12
    assert abs(focal_heatmap_loss([[0.5]], [[0.0]]) - 0.25 * np.log(2)) <= 1e-12
    gt = DotaAnnotation("img", [Instance(SQUARE10, "plane", 0),
                                Instance(SQUARE10 + 100, "plane", 0)])
    preds = {"img": [Detection(SQUARE10, 0.9, "plane"),
                     Detection(SQUARE10 + 50, 0.8, "plane"),
                     Detection(SQUARE10 + 100, 0.7, "plane")]}
    ap = evaluate_map([gt], preds).per_class_ap["plane"]
    assert abs(ap - 0.8485) <= 5e-5
    report(6, f"MDL shift, focal cells and 11-point AP ({ap:.4f}) all exact")


def test_criterion_7_sweep_csv_determinism_and_trends(tmp_path):
    args = ["sweep", "--factor", "scale", "--lo", "1", "--hi", "10",
            "--steps", "20"]
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(args + ["--out", str(out_a)]) == 0
    assert cli_main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()

    lines = out_a.read_text().splitlines()
    names = lines[0].split(",")[1:]
    cols = {n: [] for n in names}
    for line in lines[1:]:
        for n, v in zip(names, line.split(",")[1:]):
            cols[n].append(float(v))
    for n in ("MDLt", "MDLp"):
        assert max(cols[n]) - min(cols[n]) <= 1e-9
    for n in ("L1", "SmoothL1"):
        assert all(b > a for a, b in zip(cols[n], cols[n][1:])), n
    report(7, "byte-identical CSVs; MDL columns flat, L1/SmoothL1 increasing")


def test_criterion_8_evaluation_sanity():
    rng = np.random.default_rng(1008)
    gts, preds = [], {}
    for i in range(3):
        # all 15 categories represented so the class mean is over matched APs
        boxes = [SQUARE10 + rng.uniform(0, 400, 2) for _ in range(5)]
        cats = [CATEGORIES[(5 * i + k) % 15] for k in range(5)]
        gts.append(DotaAnnotation(f"im{i}", [Instance(b, c, 0)
                                             for b, c in zip(boxes, cats)]))
        preds[f"im{i}"] = [Detection(b, 1.0, c) for b, c in zip(boxes, cats)]
    perfect = evaluate_map(gts, preds).map_score
    empty = evaluate_map(gts, {}).map_score
    assert perfect == 1.0
    assert empty == 0.0
    report(8, f"gt-as-predictions mAP {perfect:.4f}, empty predictions {empty:.4f}")


def test_criterion_9_decode_arithmetic():
    hm = np.zeros((16, 16))
    bf = np.zeros((16, 16, 8))
    of = np.zeros((16, 16, 2))
    hm[7, 8] = 0.9
    bf[7, 8, 0:2] = [-2.0, -1.0]
    dets = decode_predictions(hm, bf, of)
    assert len(dets) == 1
    assert np.array_equal(dets[0].box[0], [24.0, 24.0])
    # with a fractional offset, the add happens before the multiply
    of[7, 8] = [0.5, 0.25]
    dets = decode_predictions(hm, bf, of)
    assert np.array_equal(dets[0].box[0], [(8 + 0.5 - 2) * 4, (7 + 0.25 - 1) * 4])
    report(9, "decode reproduces (cell + offset + vector) * 4 exactly")
