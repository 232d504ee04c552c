"""Cross-view fusion: cluster per-view detections into 3D candidates and run
the three-step verification over them.

  step 1  sift healthy locations using the C-view health signal
  step 2  filter manholes using the B-view manhole scores
  step 3  classify what remains as void or loose using the D view

Steps are pure filters over associated candidates; all detectors have already
run. A candidate that survives every filter but has no classifying evidence is
kept as distress_unspecified rather than dropped, so nothing silently leaves
the review queue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .detect import Detection, canonical_order
from .evaluation import GtBox, MetricsReport, PrCounts, match
from .volume import VoxelBox, box_from_view, overlap3d

FINDING_CLASSES = ("manhole", "void", "loose", "distress_unspecified")
REVIEW_STATES = ("pending", "confirmed", "reclassified", "rejected")


@dataclass(frozen=True)
class Thresholds:
    tau_h: float = 0.5  # healthy veto score
    tau_m: float = 0.5  # manhole score
    tau_assoc: float = 0.1  # 3D overlap for clustering
    thickness: dict = field(
        default_factory=lambda: {"B": 4, "C": 16, "D": 4}
    )  # fixed-axis extrusion per view

    def __post_init__(self):
        for name, v in (("tau_h", self.tau_h), ("tau_m", self.tau_m),
                        ("tau_assoc", self.tau_assoc)):
            if not 0 < v < 1:
                raise ValueError(f"{name}={v} outside (0, 1)")
        if any(t < 1 for t in self.thickness.values()):
            raise ValueError("thickness must be >= 1")


@dataclass(frozen=True)
class Candidate:
    id: str
    box: VoxelBox
    members: tuple[Detection, ...]

    def members_in(self, view: str) -> tuple[Detection, ...]:
        return tuple(d for d in self.members if d.view == view)

    def best_score(self, view: str, cls: str) -> float:
        scores = [d.score for d in self.members if d.view == view and d.cls == cls]
        return max(scores, default=0.0)


@dataclass(frozen=True)
class Finding:
    id: str
    cls: str
    confidence: float
    voxel_box: VoxelBox
    stage_provenance: str  # "step2" or "step3"
    member_ids: tuple[int, ...]
    review: str = "pending"
    corrected_class: str | None = None

    def __post_init__(self):
        if self.cls not in FINDING_CLASSES:
            raise ValueError(f"unknown finding class {self.cls!r}")
        if self.cls == "manhole" and self.stage_provenance != "step2":
            raise ValueError("manhole findings must come from step2")
        if self.cls != "manhole" and self.stage_provenance != "step3":
            raise ValueError(f"{self.cls} findings must come from step3")
        if self.review not in REVIEW_STATES:
            raise ValueError(f"unknown review state {self.review!r}")


def project(det: Detection, thresholds: Thresholds, shape) -> VoxelBox:
    return box_from_view(
        det.view, det.slice_index, det.bbox, det.window,
        thresholds.thickness[det.view], shape,
    )


# --------------------------------------------------------------- clustering

def associate(
    dets: list[Detection],
    shape: tuple[int, int, int],
    thresholds: Thresholds = Thresholds(),
) -> list[Candidate]:
    """Single-link cluster non-healthy detections by 3D footprint overlap."""
    pool = canonical_order([d for d in dets if d.cls != "healthy"])
    boxes = [project(d, thresholds, shape) for d in pool]
    n = len(pool)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if overlap3d(boxes[i], boxes[j]) > thresholds.tau_assoc:
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    cands = []
    for idxs in sorted(groups.values(), key=lambda g: min(g)):
        box = boxes[idxs[0]]
        for i in idxs[1:]:
            box = box.union(boxes[i])
        cands.append(Candidate(id="", box=box, members=tuple(pool[i] for i in idxs)))
    cands.sort(key=lambda c: c.box.as_tuple())
    return [replace(c, id=f"C{i:04d}") for i, c in enumerate(cands)]


def _c_projection(box: VoxelBox) -> tuple[int, int, int, int]:
    """Candidate footprint projected onto the C view (channels x traces)."""
    return (box.c0, box.x0, box.c1, box.x1)


def _c_det_abs_box(det: Detection) -> tuple[int, int, int, int]:
    """C detection box with columns shifted into absolute trace coordinates."""
    r0, c0, r1, c1 = det.bbox
    return (r0, det.window[0] + c0, r1, det.window[0] + c1)


def _rects_overlap(a, b) -> bool:
    return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])


def _rect_covers(outer, inner) -> bool:
    return (outer[0] <= inner[0] and outer[1] <= inner[1]
            and outer[2] >= inner[2] and outer[3] >= inner[3])


# ------------------------------------------------------------------- steps

def step1_sift_healthy(
    cands: list[Candidate],
    c_dets: list[Detection],
    tau_h: float,
) -> tuple[list[Candidate], list[Candidate]]:
    """Drop candidates at locations the C view positively declares healthy.

    A candidate is sifted only when a high-confidence healthy record covers
    its C projection AND no non-healthy C evidence touches it; any contrary
    C member or overlapping anomaly keeps it in the pool (recall first).
    """
    if any(d.view != "C" for d in c_dets):
        raise ValueError("step1 requires C-view detections")
    healthy = [d for d in c_dets if d.cls == "healthy" and d.score >= tau_h]
    anomalous = [d for d in c_dets if d.cls != "healthy"]
    kept, sifted = [], []
    for cand in cands:
        proj = _c_projection(cand.box)
        if cand.members_in("C"):
            kept.append(cand)
            continue
        if any(_rects_overlap(_c_det_abs_box(d), proj) for d in anomalous):
            kept.append(cand)
            continue
        if any(_rect_covers(_c_det_abs_box(d), proj) for d in healthy):
            sifted.append(cand)
        else:
            kept.append(cand)
    return kept, sifted


def step2_filter_manholes(
    cands: list[Candidate],
    b_dets: list[Detection],
    tau_m: float,
    shape: tuple[int, int, int],
    thresholds: Thresholds = Thresholds(),
) -> tuple[list[Candidate], list[Finding]]:
    """Convert candidates with strong overlapping B manhole evidence into
    manhole findings; everything else stays in the distress pool."""
    if any(d.view != "B" for d in b_dets):
        raise ValueError("step2 requires B-view detections")
    manhole_dets = [
        (d, project(d, thresholds, shape))
        for d in b_dets
        if d.cls == "manhole"
    ]
    distress, manholes = [], []
    for cand in cands:
        best = 0.0
        for d, box in manhole_dets:
            if overlap3d(box, cand.box) > 0:
                best = max(best, d.score)
        # unanimous manhole evidence needs no threshold: a candidate whose
        # every member is manhole-class has nothing distress-like about it,
        # and keeping it in the pool would let manhole-only evidence create
        # distress findings
        unanimous = all(d.cls == "manhole" for d in cand.members)
        if unanimous:
            best = max(best, max(d.score for d in cand.members))
        if best >= tau_m or unanimous:
            manholes.append(
                Finding(
                    id=cand.id, cls="manhole", confidence=best,
                    voxel_box=cand.box, stage_provenance="step2",
                    member_ids=(),
                )
            )
        else:
            distress.append(cand)
    return distress, manholes


def step3_classify(
    cands: list[Candidate],
    d_dets: list[Detection],
    shape: tuple[int, int, int],
    thresholds: Thresholds = Thresholds(),
) -> list[Finding]:
    """Classify remaining candidates as void or loose from the D view, falling
    back to C evidence, then to distress_unspecified — never dropping one."""
    if any(d.view != "D" for d in d_dets):
        raise ValueError("step3 requires D-view detections")
    typed = [
        (d, project(d, thresholds, shape))
        for d in d_dets
        if d.cls in ("void", "loose")
    ]
    findings = []
    for cand in cands:
        best_cls, best_score = None, 0.0
        for d, box in typed:
            if overlap3d(box, cand.box) > 0 and d.score > best_score:
                best_cls, best_score = d.cls, d.score
        if best_cls is None:
            c_void = cand.best_score("C", "void")
            c_loose = cand.best_score("C", "loose")
            if max(c_void, c_loose) > 0:
                best_cls = "void" if c_void >= c_loose else "loose"
                best_score = max(c_void, c_loose)
        if best_cls is None:
            best_cls = "distress_unspecified"
            best_score = max((d.score for d in cand.members), default=0.0)
        findings.append(
            Finding(
                id=cand.id, cls=best_cls, confidence=best_score,
                voxel_box=cand.box, stage_provenance="step3", member_ids=(),
            )
        )
    return findings


@dataclass(frozen=True)
class StageTrace:
    """Intermediates of one cross-verification run, for staged metrics."""

    candidates: tuple[Candidate, ...]
    sifted: tuple[Candidate, ...]
    kept: tuple[Candidate, ...]
    manholes: tuple[Finding, ...]
    distress_pool: tuple[Candidate, ...]
    findings: tuple[Finding, ...]  # final output, manholes included


def cross_verify_stages(
    dets: list[Detection],
    shape: tuple[int, int, int],
    thresholds: Thresholds = Thresholds(),
) -> StageTrace:
    dets = canonical_order(dets)
    c_dets = [d for d in dets if d.view == "C"]
    b_dets = [d for d in dets if d.view == "B"]
    d_dets = [d for d in dets if d.view == "D"]
    det_index = {}
    for i, d in enumerate(dets):
        det_index.setdefault(d, i)
    cands = associate(dets, shape, thresholds)
    kept, sifted = step1_sift_healthy(cands, c_dets, thresholds.tau_h)
    distress_pool, manholes = step2_filter_manholes(
        kept, b_dets, thresholds.tau_m, shape, thresholds
    )
    classified = step3_classify(distress_pool, d_dets, shape, thresholds)
    by_cand = {c.id: c for c in cands}
    findings = sorted(manholes + classified, key=lambda f: (f.voxel_box.as_tuple(), f.cls))
    findings = [
        replace(
            f,
            id=f"F{i:04d}",
            member_ids=tuple(det_index[d] for d in by_cand[f.id].members),
        )
        for i, f in enumerate(findings)
    ]
    return StageTrace(
        candidates=tuple(cands),
        sifted=tuple(sifted),
        kept=tuple(kept),
        manholes=tuple(manholes),
        distress_pool=tuple(distress_pool),
        findings=tuple(findings),
    )


def cross_verify(
    dets: list[Detection],
    shape: tuple[int, int, int],
    thresholds: Thresholds = Thresholds(),
) -> list[Finding]:
    """Full three-step fusion; deterministic under input permutation."""
    return list(cross_verify_stages(dets, shape, thresholds).findings)


# ---------------------------------------------------------- staged metrics

def staged_metrics(trace: StageTrace, gt_objects, thresh3d: float = 0.3) -> dict:
    """Precision/recall after each step, against 3D ground truth.

    The distress row at each step scores the step's surviving pool
    (class-agnostic over void+loose ground truth); manholes still in the pool
    count as false positives until step 2 removes them. Step 2 adds the
    manhole row, step 3 the final void/loose rows.
    """
    d_gts = [GtBox("distress", g.voxel_box.as_tuple())
             for g in gt_objects if g.kind in ("void", "loose")]
    m_gts = [GtBox("manhole", g.voxel_box.as_tuple())
             for g in gt_objects if g.kind == "manhole"]

    def distress_row(boxes):
        preds = [(b.as_tuple(), "distress", 1.0 - i * 1e-6) for i, b in enumerate(boxes)]
        counts, _ = match(preds, d_gts, thresh=thresh3d)
        return counts.get("distress", PrCounts(fn=len(d_gts)))

    reports: dict[str, MetricsReport] = {}
    r1 = MetricsReport()
    r1.per_class["distress"] = distress_row([c.box for c in trace.kept])
    reports["step1"] = r1

    r2 = MetricsReport()
    r2.per_class["distress"] = distress_row([c.box for c in trace.distress_pool])
    m_preds = [(f.voxel_box.as_tuple(), "manhole", f.confidence) for f in trace.manholes]
    m_counts, _ = match(m_preds, m_gts, thresh=thresh3d)
    r2.per_class["manhole"] = m_counts.get("manhole", PrCounts(fn=len(m_gts)))
    reports["step2"] = r2

    r3 = MetricsReport()
    final = [f for f in trace.findings if f.cls != "manhole"]
    r3.per_class["distress"] = distress_row([f.voxel_box for f in final])
    r3.per_class["manhole"] = r2.per_class["manhole"]
    cls_preds = [(f.voxel_box.as_tuple(), f.cls, f.confidence)
                 for f in final if f.cls in ("void", "loose")]
    cls_gts = [GtBox(g.kind, g.voxel_box.as_tuple())
               for g in gt_objects if g.kind in ("void", "loose")]
    cls_counts, _ = match(cls_preds, cls_gts, thresh=thresh3d)
    for cls in ("void", "loose"):
        r3.per_class[cls] = cls_counts.get(
            cls, PrCounts(fn=sum(1 for g in cls_gts if g.cls == cls)))
    reports["step3"] = r3
    return reports


# ------------------------------------------------------------ serialization

def export_findings(findings: list[Finding], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for x in findings:
            f.write(json.dumps(finding_to_dict(x)) + "\n")


def finding_to_dict(x: Finding) -> dict:
    return {
        "id": x.id,
        "cls": x.cls,
        "confidence": x.confidence,
        "voxel_box": list(x.voxel_box.as_tuple()),
        "stage_provenance": x.stage_provenance,
        "member_ids": list(x.member_ids),
        "review": x.review,
        "corrected_class": x.corrected_class,
    }


def finding_from_dict(rec: dict) -> Finding:
    return Finding(
        id=rec["id"],
        cls=rec["cls"],
        confidence=float(rec["confidence"]),
        voxel_box=VoxelBox(*rec["voxel_box"]),
        stage_provenance=rec["stage_provenance"],
        member_ids=tuple(rec.get("member_ids", ())),
        review=rec.get("review", "pending"),
        corrected_class=rec.get("corrected_class"),
    )


def import_findings(path) -> list[Finding]:
    out = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(finding_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{i}: malformed finding record: {e}") from None
    return out
