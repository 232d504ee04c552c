"""IoU-based matching and precision/recall evaluation.

Boxes are half-open integer intervals per axis: 2D boxes are
(r0, c0, r1, c1), 3D boxes are (c0, c1, x0, x1, k0, k1) or VoxelBox.
A prediction counts as true when its IoU with a same-class ground-truth
box reaches the threshold (default 0.5 for per-view boxes, 0.3 for fused
3D footprints).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .volume import VoxelBox

DISTRESS_CLASSES = ("void", "loose")
FINDING_CLASSES = ("void", "loose", "manhole")


@dataclass
class PrCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "PrCounts") -> "PrCounts":
        return PrCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def precision(c: PrCounts) -> float | None:
    """TP / (TP + FP); None when there were no predictions."""
    denom = c.tp + c.fp
    return c.tp / denom if denom else None


def recall(c: PrCounts) -> float | None:
    """TP / (TP + FN); None when there was nothing to find."""
    denom = c.tp + c.fn
    return c.tp / denom if denom else None


def iou(a, b) -> float:
    """Intersection over union of two half-open boxes of the same arity."""
    a = a.as_tuple() if isinstance(a, VoxelBox) else tuple(a)
    b = b.as_tuple() if isinstance(b, VoxelBox) else tuple(b)
    if len(a) != len(b) or len(a) % 2 or not a:
        raise ValueError(f"mismatched box arities: {len(a)} vs {len(b)}")
    if len(a) == 4:  # (r0, c0, r1, c1)
        a = (a[0], a[2], a[1], a[3])
        b = (b[0], b[2], b[1], b[3])
    # now interleaved (lo, hi) per axis
    inter = 1
    va = vb = 1
    for i in range(0, len(a), 2):
        inter *= max(0, min(a[i + 1], b[i + 1]) - max(a[i], b[i]))
        va *= a[i + 1] - a[i]
        vb *= b[i + 1] - b[i]
    if va <= 0 or vb <= 0:
        raise ValueError("degenerate box")
    union = va + vb - inter
    return inter / union if union else 0.0


@dataclass(frozen=True)
class GtBox:
    cls: str
    box: tuple  # 2D or 3D box


def match(preds, gts, thresh: float = 0.5):
    """Greedy one-to-one matching of predictions to ground truth, per class.

    preds: list of (box, cls, score); gts: list of GtBox.
    Predictions claim, in descending score order, their highest-IoU unmatched
    same-class ground truth with IoU >= thresh. Ties break on (IoU desc,
    gt index asc); equal scores break on pred index.

    Returns ({cls: PrCounts}, [(pred_index, gt_index)]).
    """
    if not 0 < thresh <= 1:
        raise ValueError("thresh must be in (0, 1]")
    counts: dict[str, PrCounts] = {}
    matches: list[tuple[int, int]] = []
    classes = {c for _, c, _ in preds} | {g.cls for g in gts}
    for cls in sorted(classes):
        pi = [i for i, p in enumerate(preds) if p[1] == cls]
        gi = [j for j, g in enumerate(gts) if g.cls == cls]
        pi.sort(key=lambda i: (-preds[i][2], i))
        taken: set[int] = set()
        tp = 0
        for i in pi:
            best = None
            for j in gi:
                if j in taken:
                    continue
                v = iou(preds[i][0], gts[j].box)
                if v >= thresh and (best is None or v > best[0]):
                    best = (v, j)
            if best is not None:
                taken.add(best[1])
                matches.append((i, best[1]))
                tp += 1
        counts[cls] = PrCounts(tp=tp, fp=len(pi) - tp, fn=len(gi) - tp)
    return counts, sorted(matches)


def _max_matching(edges: list[list[int]], n_right: int) -> int:
    """Size of a maximum bipartite matching (augmenting-path search)."""
    owner = [-1] * n_right

    def augment(i, seen):
        for j in edges[i]:
            if j in seen:
                continue
            seen.add(j)
            if owner[j] < 0 or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    return sum(1 for i in range(len(edges)) if augment(i, set()))


def match_exhaustive(preds, gts, thresh: float = 0.5):
    """Reference matcher: the maximum achievable TP over one-to-one
    assignments per class, computed independently of the greedy protocol."""
    counts: dict[str, PrCounts] = {}
    classes = {c for _, c, _ in preds} | {g.cls for g in gts}
    for cls in sorted(classes):
        pi = [i for i, p in enumerate(preds) if p[1] == cls]
        gi = [j for j, g in enumerate(gts) if g.cls == cls]
        edges = [
            [j for j in range(len(gi)) if iou(preds[i][0], gts[gi[j]].box) >= thresh]
            for i in pi
        ]
        best = _max_matching(edges, len(gi))
        counts[cls] = PrCounts(tp=best, fp=len(pi) - best, fn=len(gi) - best)
    return counts


@dataclass
class MetricsReport:
    """Per-class counts plus derived precision/recall, with an overall row."""

    per_class: dict[str, PrCounts] = field(default_factory=dict)

    def row(self, cls: str):
        c = self.per_class.get(cls, PrCounts())
        return c, precision(c), recall(c)

    def overall(self) -> PrCounts:
        total = PrCounts()
        for c in self.per_class.values():
            total = total + c
        return total

    def to_dict(self) -> dict:
        out = {}
        for cls, c in self.per_class.items():
            out[cls] = {
                "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "precision": precision(c), "recall": recall(c),
            }
        t = self.overall()
        out["overall"] = {
            "tp": t.tp, "fp": t.fp, "fn": t.fn,
            "precision": precision(t), "recall": recall(t),
        }
        return out


def evaluate_findings(findings, gt_objects, thresh3d: float = 0.3) -> MetricsReport:
    """Score fused findings against 3D ground truth.

    Per-class rows for void/loose/manhole, plus a class-agnostic "distress"
    row over void+loose where a distress_unspecified finding counts as a true
    positive against any distress ground truth it overlaps. Manholes are
    scored as their own class and excluded from the distress row.
    """
    report = MetricsReport()
    preds = [(f.voxel_box.as_tuple(), f.cls, f.confidence) for f in findings]
    gts = [GtBox(g.kind, g.voxel_box.as_tuple()) for g in gt_objects]
    counts, _ = match(preds, gts, thresh=thresh3d)
    for cls in FINDING_CLASSES:
        report.per_class[cls] = counts.get(cls, PrCounts(
            fn=sum(1 for g in gts if g.cls == cls)))

    d_preds = [
        (f.voxel_box.as_tuple(), "distress", f.confidence)
        for f in findings
        if f.cls in DISTRESS_CLASSES or f.cls == "distress_unspecified"
    ]
    d_gts = [GtBox("distress", g.box) for g in gts if g.cls in DISTRESS_CLASSES]
    d_counts, _ = match(d_preds, d_gts, thresh=thresh3d)
    report.per_class["distress"] = d_counts.get("distress", PrCounts())
    return report


def format_report(report: MetricsReport, title: str = "Evaluation") -> str:
    """Aligned text table, one row per class plus the overall row."""

    def fmt(v):
        return "  --  " if v is None else f"{100 * v:5.1f}%"

    lines = [title, f"{'Class':<22}{'TP':>5}{'FP':>5}{'FN':>5}{'Precision':>11}{'Recall':>9}"]
    rows = list(report.per_class.items()) + [("overall", report.overall())]
    for cls, c in rows:
        lines.append(
            f"{cls:<22}{c.tp:>5}{c.fp:>5}{c.fn:>5}{fmt(precision(c)):>11}{fmt(recall(c)):>9}"
        )
    return "\n".join(lines)
