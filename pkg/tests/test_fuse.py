import numpy as np
import pytest

from gprscan.detect import Detection
from gprscan.fuse import (Finding, Thresholds, associate, cross_verify,
                          cross_verify_stages, export_findings,
                          import_findings, step1_sift_healthy,
                          step2_filter_manholes, step3_classify)
from gprscan.volume import VoxelBox

SHAPE = (8, 128, 512)


def det(view="C", idx=100, bbox=(0, 0, 4, 16), cls="void", score=0.8, window=(0, 64)):
    return Detection(view=view, slice_index=idx, window=window, bbox=bbox,
                     cls=cls, score=score)


def b_det(**kw):
    kw.setdefault("view", "B")
    kw.setdefault("idx", 4)
    kw.setdefault("bbox", (80, 0, 130, 16))
    return det(**kw)


def d_det(**kw):
    kw.setdefault("view", "D")
    kw.setdefault("idx", 8)
    kw.setdefault("bbox", (80, 0, 130, 8))
    return det(**kw)


# ------------------------------------------------------------- thresholds

def test_thresholds_validation():
    with pytest.raises(ValueError):
        Thresholds(tau_h=0.0)
    with pytest.raises(ValueError):
        Thresholds(tau_m=1.0)
    with pytest.raises(ValueError):
        Thresholds(thickness={"B": 0, "C": 16, "D": 4})


# -------------------------------------------------------------- associate

def test_associate_empty():
    assert associate([], SHAPE, Thresholds()) == []


def test_associate_overlapping_views_merge():
    # a C detection and a B detection over the same spot become one candidate
    c = det(view="C", idx=100, bbox=(0, 0, 8, 16))
    b = b_det(bbox=(84, 0, 116, 16))
    cands = associate([c, b], SHAPE, Thresholds())
    assert len(cands) == 1
    assert set(cands[0].members) == {c, b}


def test_associate_disjoint_footprints_stay_apart():
    a = det(window=(0, 64), bbox=(0, 0, 4, 8))
    b = det(window=(0, 64), bbox=(4, 40, 8, 60), idx=400)
    cands = associate([a, b], SHAPE, Thresholds())
    assert len(cands) == 2


def test_associate_ignores_healthy():
    h = det(cls="healthy", score=0.9)
    assert associate([h], SHAPE, Thresholds()) == []


def test_associate_candidate_box_contains_members():
    dets = [det(), b_det(), d_det()]
    t = Thresholds()
    for cand in associate(dets, SHAPE, t):
        for m in cand.members:
            from gprscan.fuse import project
            mb = project(m, t, SHAPE)
            u = cand.box.union(mb)
            assert u == cand.box


def test_associate_permutation_invariant():
    rng = np.random.default_rng(0)
    dets = [det(idx=int(rng.integers(50, 400)),
                bbox=(int(r), int(c), int(r) + 3, int(c) + 10),
                cls=("void", "loose", "manhole")[rng.integers(0, 3)],
                score=float(rng.uniform(0.1, 1.0)))
            for r, c in zip(rng.integers(0, 5, 20), rng.integers(0, 40, 20))]
    base = associate(dets, SHAPE, Thresholds())
    for _ in range(5):
        perm = [dets[i] for i in rng.permutation(len(dets))]
        assert associate(perm, SHAPE, Thresholds()) == base


# ------------------------------------------------------------------ steps

def test_step1_empty():
    assert step1_sift_healthy([], [], 0.5) == ([], [])


def test_step1_healthy_cover_sifts():
    # candidate built from B evidence only, fully covered by a healthy C det
    cand = associate([b_det(cls="void", score=0.6)], SHAPE, Thresholds())
    healthy = det(cls="healthy", score=0.95, bbox=(0, 0, 8, 64))
    kept, sifted = step1_sift_healthy(cand, [healthy], 0.5)
    assert kept == [] and sifted == cand


def test_step1_contrary_c_evidence_keeps():
    # the candidate has a C void member: never sifted, recall preserved
    void = det(cls="void", score=0.6)
    cand = associate([void], SHAPE, Thresholds())
    healthy = det(cls="healthy", score=0.99, bbox=(0, 0, 8, 64))
    kept, sifted = step1_sift_healthy(cand, [healthy, void], 0.5)
    assert kept == cand and sifted == []


def test_step1_low_score_healthy_does_not_sift():
    cand = associate([det(cls="void", score=0.6)], SHAPE, Thresholds())
    healthy = det(cls="healthy", score=0.3, bbox=(0, 0, 8, 64))
    kept, sifted = step1_sift_healthy(cand, [healthy], 0.5)
    assert kept == cand


def test_step2_manhole_threshold():
    b = b_det(cls="manhole", score=0.9)
    cand = associate([b], SHAPE, Thresholds())
    distress, manholes = step2_filter_manholes(cand, [b], 0.5, SHAPE, Thresholds())
    assert distress == [] and len(manholes) == 1
    f = manholes[0]
    assert f.cls == "manhole" and f.stage_provenance == "step2"
    assert f.confidence == pytest.approx(0.9)


def test_step2_below_threshold_passes_through():
    # weak manhole evidence on a candidate that also has void evidence
    v = b_det(cls="void", score=0.6)
    m = b_det(cls="manhole", score=0.4)
    cand = associate([v, m], SHAPE, Thresholds())
    distress, manholes = step2_filter_manholes(cand, [v, m], 0.5, SHAPE, Thresholds())
    assert manholes == [] and distress == cand


def test_step2_unanimous_manhole_evidence_filters():
    # all-members-manhole candidates never reach the distress pool
    m = b_det(cls="manhole", score=0.4)
    cand = associate([m], SHAPE, Thresholds())
    distress, manholes = step2_filter_manholes(cand, [m], 0.5, SHAPE, Thresholds())
    assert distress == [] and [f.cls for f in manholes] == ["manhole"]


def test_step2_void_members_stay():
    b = b_det(cls="void", score=0.95)
    cand = associate([b], SHAPE, Thresholds())
    distress, manholes = step2_filter_manholes(cand, [b], 0.5, SHAPE, Thresholds())
    assert manholes == [] and distress == cand


def test_step3_d_wins():
    dv = d_det(cls="void", score=0.8)
    dl = d_det(cls="loose", score=0.3)
    cand = associate([dv, dl], SHAPE, Thresholds())
    out = step3_classify(cand, [dv, dl], SHAPE, Thresholds())
    assert [f.cls for f in out] == ["void"]
    assert out[0].confidence == pytest.approx(0.8)
    assert out[0].stage_provenance == "step3"


def test_step3_c_fallback():
    c = det(cls="loose", score=0.7)
    cand = associate([c], SHAPE, Thresholds())
    out = step3_classify(cand, [], SHAPE, Thresholds())
    assert [f.cls for f in out] == ["loose"]
    assert out[0].confidence == pytest.approx(0.7)


def test_step3_double_fallback_unspecified():
    b = b_det(cls="void", score=0.65)
    cand = associate([b], SHAPE, Thresholds())
    out = step3_classify(cand, [], SHAPE, Thresholds())
    assert [f.cls for f in out] == ["distress_unspecified"]
    assert out[0].confidence == pytest.approx(0.65)


# ------------------------------------------------------------ cross_verify

def random_det_set(seed, n=24):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        view = ("B", "C", "D")[rng.integers(0, 3)]
        cls = ("healthy", "void", "loose", "manhole")[rng.integers(0, 4)]
        if view != "C" and cls == "healthy":
            cls = "void"
        if view == "B":
            idx, bbox = int(rng.integers(0, 8)), None
            r0, c0 = int(rng.integers(0, 400)), int(rng.integers(0, 48))
            bbox = (r0, c0, r0 + int(rng.integers(5, 60)), c0 + int(rng.integers(2, 16)))
        elif view == "C":
            idx = int(rng.integers(0, 512))
            r0, c0 = int(rng.integers(0, 6)), int(rng.integers(0, 48))
            bbox = (r0, c0, r0 + int(rng.integers(1, 3)), c0 + int(rng.integers(2, 16)))
        else:
            idx = int(rng.integers(0, 64))
            r0, c0 = int(rng.integers(0, 400)), int(rng.integers(0, 6))
            bbox = (r0, c0, r0 + int(rng.integers(5, 60)), c0 + int(rng.integers(1, 3)))
        out.append(Detection(view=view, slice_index=idx, window=(0, 64), bbox=bbox,
                             cls=cls, score=float(rng.uniform(0.05, 1.0))))
    return out


def test_cross_verify_empty():
    assert cross_verify([], SHAPE) == []


def test_cross_verify_permutation_invariant():
    rng = np.random.default_rng(1)
    for seed in range(10):
        dets = random_det_set(seed)
        base = cross_verify(dets, SHAPE)
        perm = [dets[i] for i in rng.permutation(len(dets))]
        assert cross_verify(perm, SHAPE) == base


def test_cross_verify_partition_identity():
    for seed in range(20):
        tr = cross_verify_stages(random_det_set(seed), SHAPE)
        distress = [f for f in tr.findings if f.cls != "manhole"]
        assert len(tr.sifted) + len(tr.manholes) + len(distress) == len(tr.candidates)


def test_tau_m_monotonicity():
    for seed in range(10):
        dets = random_det_set(seed)
        counts = []
        for tau_m in (0.2, 0.5, 0.8):
            tr = cross_verify_stages(dets, SHAPE, Thresholds(tau_m=tau_m))
            counts.append(len(tr.manholes))
        assert counts[0] >= counts[1] >= counts[2]


def test_tau_h_monotonicity():
    # lowering tau_h never increases the sifted count
    for seed in range(10):
        dets = random_det_set(seed)
        counts = []
        for tau_h in (0.8, 0.5, 0.2):
            tr = cross_verify_stages(dets, SHAPE, Thresholds(tau_h=tau_h))
            counts.append(len(tr.sifted))
        assert counts[0] <= counts[1] <= counts[2]


def test_removing_manhole_dets_never_reduces_distress():
    for seed in range(10):
        dets = random_det_set(seed)
        without = [d for d in dets if d.cls != "manhole"]
        n_full = sum(f.cls != "manhole" for f in cross_verify(dets, SHAPE))
        n_without = sum(f.cls != "manhole" for f in cross_verify(without, SHAPE))
        assert n_without >= n_full


def test_finding_invariants():
    with pytest.raises(ValueError):
        Finding(id="F", cls="manhole", confidence=0.5,
                voxel_box=VoxelBox(0, 1, 0, 1, 0, 1),
                stage_provenance="step3", member_ids=())
    with pytest.raises(ValueError):
        Finding(id="F", cls="void", confidence=0.5,
                voxel_box=VoxelBox(0, 1, 0, 1, 0, 1),
                stage_provenance="step2", member_ids=())


# ------------------------------------------------------------ serialization

def test_findings_round_trip(tmp_path):
    findings = cross_verify(random_det_set(2), SHAPE)
    assert findings  # fixture must actually exercise the format
    p = tmp_path / "f.jsonl"
    export_findings(findings, p)
    assert import_findings(p) == findings


def test_findings_file_byte_identical(tmp_path):
    findings = cross_verify(random_det_set(2), SHAPE)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    export_findings(findings, a)
    export_findings(findings, b)
    assert a.read_bytes() == b.read_bytes()


def test_import_findings_rejects_garbage(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{nope\n")
    with pytest.raises(ValueError, match=":1:"):
        import_findings(p)
