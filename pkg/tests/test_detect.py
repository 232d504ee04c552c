import numpy as np
import pytest
from scipy import ndimage

from gprscan.detect import (CLASSES, FLIP_H, FLIP_V, Detection,
                            DetectionError, RuleConfig, augment,
                            canonical_order, detect_bscan_rule,
                            detect_cscan_rule, export_detections,
                            import_detections, nms, rotate, run_detectors)
from gprscan.evaluation import iou
from gprscan.synth import make_benchmark
from gprscan.volume import b_scan, c_scan


# ---------------------------------------------------------------- Detection

def det(view="C", idx=0, bbox=(0, 0, 4, 4), cls="void", score=0.5, window=(0, 64)):
    return Detection(view=view, slice_index=idx, window=window, bbox=bbox,
                     cls=cls, score=score)


def test_detection_validation():
    with pytest.raises(DetectionError):
        det(view="E")
    with pytest.raises(DetectionError):
        det(cls="pothole")
    with pytest.raises(DetectionError):
        det(bbox=(4, 0, 4, 4))
    with pytest.raises(DetectionError):
        det(score=1.5)


def test_detection_coerces_numpy_scalars():
    d = det(bbox=tuple(np.int64(v) for v in (0, 0, 4, 4)), score=np.float32(0.5))
    assert all(isinstance(b, int) for b in d.bbox)
    assert isinstance(d.score, float)


def test_canonical_order_permutation_invariant():
    dets = [det(idx=i % 3, bbox=(i, 0, i + 2, 4), score=0.1 * (i + 1)) for i in range(9)]
    rng = np.random.default_rng(3)
    shuffled = list(rng.permutation(np.arange(9)))
    assert canonical_order([dets[i] for i in shuffled]) == canonical_order(dets)


# ---------------------------------------------------------------------- NMS

def nms_reference(dets, iou_thresh):
    """O(n^2) reference: per class, keep a box iff no higher-priority kept
    box of the same class overlaps it above the threshold."""
    kept = []
    for cls in sorted({d.cls for d in dets}):
        pool = sorted((d for d in dets if d.cls == cls),
                      key=lambda d: (-d.score, d.bbox))
        chosen = []
        for d in pool:
            if not any(iou(d.bbox, k.bbox) > iou_thresh for k in chosen):
                chosen.append(d)
        kept.extend(chosen)
    return sorted(kept, key=lambda d: (-d.score, d.bbox, d.cls))


def random_dets(rng, n, view="C", idx=0):
    out = []
    for _ in range(n):
        r0, c0 = rng.integers(0, 40, 2)
        out.append(det(view=view, idx=idx,
                       bbox=(int(r0), int(c0), int(r0 + rng.integers(2, 20)),
                             int(c0 + rng.integers(2, 20))),
                       cls=("void", "loose", "manhole")[rng.integers(0, 3)],
                       score=float(rng.uniform(0.05, 1.0))))
    return out


def test_nms_trivial_cases():
    assert nms([]) == []
    d = det(score=0.9)
    assert nms([d]) == [d]


def test_nms_suppresses_duplicates():
    a = det(score=0.9)
    b = det(score=0.5)  # same box, lower score
    assert nms([a, b]) == [a]


def test_nms_keeps_disjoint_and_other_classes():
    a = det(score=0.9)
    b = det(bbox=(20, 20, 24, 24), score=0.5)
    c = det(cls="loose", score=0.4)
    assert set(nms([a, b, c])) == {a, b, c}


def test_nms_rejects_mixed_slices():
    with pytest.raises(DetectionError):
        nms([det(idx=0), det(idx=1)])


def test_nms_matches_reference_bulk():
    rng = np.random.default_rng(17)
    for _ in range(50):
        dets = random_dets(rng, int(rng.integers(0, 65)))
        assert nms(dets, 0.45) == nms_reference(dets, 0.45)


# -------------------------------------------------------------- rule logic

def test_cscan_rule_uniform_slice_is_healthy():
    rng = np.random.default_rng(0)
    px = rng.normal(0.0, 0.01, (8, 64))
    slc = c_scan_like(px)
    dets = detect_cscan_rule(slc, (0, 64), RuleConfig())
    assert [d.cls for d in dets] == ["healthy"]
    assert dets[0].score > 0.9


def c_scan_like(px):
    from gprscan.volume import SliceImage
    return SliceImage(view="C", index=100, pixels=np.asarray(px, dtype=np.float64),
                      axis_labels=("channel", "trace"))


def test_cscan_rule_compact_blob_is_anomaly():
    px = np.zeros((8, 64))
    px[2:6, 20:32] = 1.0
    dets = detect_cscan_rule(c_scan_like(px), (0, 64), RuleConfig())
    anomalous = [d for d in dets if d.cls != "healthy"]
    assert len(anomalous) == 1
    r0, c0, r1, c1 = anomalous[0].bbox
    assert (r0, c0, r1, c1) == (2, 20, 6, 32)


def test_cscan_rule_speckle_is_loose():
    rng = np.random.default_rng(5)
    px = np.zeros((16, 64))
    for _ in range(12):
        r, c = rng.integers(0, 14), rng.integers(0, 60)
        px[r:r + 2, c:c + 3] = 1.0
    dets = detect_cscan_rule(c_scan_like(px), (0, 64), RuleConfig())
    assert any(d.cls == "loose" for d in dets)


def test_bscan_rule_finds_hyperbola(meta):
    bench = make_benchmark(4, n_healthy=0, n_void=1, n_loose=0, n_manhole=0)
    v, gt = bench[0]
    c_mid = (gt[0].voxel_box.c0 + gt[0].voxel_box.c1) // 2
    dets = detect_bscan_rule(b_scan(v, min(c_mid, v.n_channels - 1)), v.meta,
                             (0, v.n_traces), RuleConfig())
    assert dets, "expected at least one B detection over a rendered void"
    k0_gt, k1_gt = gt[0].voxel_box.k0, gt[0].voxel_box.k1
    assert any(d.bbox[0] < k1_gt and d.bbox[2] > k0_gt for d in dets)


def test_run_detectors_deterministic():
    bench = make_benchmark(6, n_healthy=0, n_void=1, n_loose=0, n_manhole=0)
    v, _ = bench[0]
    assert run_detectors(v) == run_detectors(v)


# ------------------------------------------------------------ serialization

def test_detections_round_trip(tmp_path):
    dets = [det(score=0.75), det(view="B", cls="manhole", bbox=(1, 2, 3, 4))]
    p = tmp_path / "dets.jsonl"
    export_detections(dets, p)
    assert import_detections(p) == dets


def test_import_rejects_unknown_field(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"view": "C", "slice_index": 0, "window": [0, 64], '
                 '"bbox": [0, 0, 4, 4], "cls": "void", "score": 0.5, '
                 '"source": "rule", "extra": 1}\n')
    with pytest.raises(DetectionError, match="unknown fields"):
        import_detections(p)


def test_import_rejects_missing_field_with_line_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"view": "C"}\n')
    with pytest.raises(DetectionError, match=":1:"):
        import_detections(p)


def test_import_rejects_malformed_json(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{oops\n")
    with pytest.raises(DetectionError, match="malformed"):
        import_detections(p)


# ------------------------------------------------------------- augmentation

def test_flips_are_exact_involutions():
    rng = np.random.default_rng(1)
    img = rng.standard_normal((37, 53))
    boxes = [(2, 3, 10, 12), (20, 40, 30, 50)]
    for t in (FLIP_H, FLIP_V):
        img2, boxes2 = augment(*augment(img, boxes, t), t)
        assert np.array_equal(img, img2)
        assert boxes2 == boxes


def test_flip_h_mirrors_columns():
    img = np.arange(12, dtype=float).reshape(3, 4)
    out, bx = augment(img, [(0, 0, 2, 1)], FLIP_H)
    assert np.array_equal(out, img[:, ::-1])
    assert bx == [(0, 3, 2, 4)]


def test_rotate_bounds_enforced():
    with pytest.raises(ValueError):
        rotate(15.1)
    with pytest.raises(ValueError):
        rotate(-16.0)


def test_rotate_zero_is_near_identity():
    rng = np.random.default_rng(2)
    img = rng.standard_normal((32, 32))
    out, bx = augment(img, [(4, 5, 10, 12)], rotate(0.0))
    assert np.allclose(out, img)
    assert bx == [(4, 5, 10, 12)]


def test_rotate_hull_matches_mask_oracle():
    """Box hull after rotation stays within 1 px/edge of the bbox of the
    identically rotated binary mask."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, w = rng.integers(40, 120, 2)
        r0 = int(rng.integers(5, h - 15)); r1 = int(rng.integers(r0 + 4, min(h - 2, r0 + 25)))
        c0 = int(rng.integers(5, w - 15)); c1 = int(rng.integers(c0 + 4, min(w - 2, c0 + 25)))
        theta = float(rng.uniform(-15, 15))
        img = rng.standard_normal((h, w))
        _, bx = augment(img, [(r0, c0, r1, c1)], rotate(theta))
        mask = np.zeros((h, w))
        mask[r0:r1, c0:c1] = 1.0
        rm = ndimage.rotate(mask, theta, reshape=False, order=1, mode="constant")
        ys, xs = np.where(rm > 0.5)
        oracle = (ys.min(), xs.min(), ys.max() + 1, xs.max() + 1)
        assert max(abs(a - b) for a, b in zip(bx[0], oracle)) <= 1
