"""Per-view detectors and detection plumbing.

The pipeline treats detectors as black boxes emitting `Detection` records;
trained model outputs can be imported from file, and the baseline rule
detectors below make the pipeline runnable end to end without any network:

  C view  adaptive amplitude threshold + connected components, classified by
          shape (fragments -> loose, compact regular patch -> manhole,
          irregular patch -> void), with an explicit whole-window healthy
          record when nothing fires
  B/D     matched filtering against hyperbolic ridge templates; strong
          responses are manholes, the rest voids
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .evaluation import iou
from .synth import DEFAULT_CENTER_FREQ_GHZ
from .volume import (
    AcquisitionMeta,
    GprVolume,
    SliceImage,
    WindowSpec,
    b_scan,
    c_scan,
    d_scan,
    sliding_windows,
    time_of_sample,
)

CLASSES = ("healthy", "void", "loose", "manhole")

#: label space each per-view model emits
VIEW_CLASSES = {
    "B": ("void", "loose", "manhole"),
    "C": ("healthy", "void", "loose", "manhole"),
    "D": ("void", "loose", "manhole"),
}

DETECTION_FIELDS = ("view", "slice_index", "window", "bbox", "cls", "score", "source")


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    view: str
    slice_index: int
    window: tuple[int, int]  # trace range [x0, x1)
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), half-open
    cls: str
    score: float
    source: str = "rule"

    def __post_init__(self):
        object.__setattr__(self, "slice_index", int(self.slice_index))
        object.__setattr__(self, "window", tuple(int(w) for w in self.window))
        object.__setattr__(self, "bbox", tuple(int(b) for b in self.bbox))
        object.__setattr__(self, "score", float(self.score))
        if self.view not in ("B", "C", "D"):
            raise DetectionError(f"unknown view {self.view!r}")
        if self.cls not in CLASSES:
            raise DetectionError(f"unknown class {self.cls!r}")
        r0, c0, r1, c1 = self.bbox
        if not (r0 < r1 and c0 < c1) or min(r0, c0) < 0:
            raise DetectionError(f"bad bbox {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise DetectionError(f"score {self.score} outside [0, 1]")

    def sort_key(self):
        return (self.view, self.slice_index, self.window, self.bbox, -self.score, self.cls)


@dataclass(frozen=True)
class DetectorProfile:
    view: str
    classes: tuple[str, ...]
    score_threshold: float


def canonical_order(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=Detection.sort_key)


# --------------------------------------------------------------------- NMS

def nms(dets: list[Detection], iou_thresh: float = 0.45) -> list[Detection]:
    """Greedy per-class non-maximum suppression on one slice.

    Ties between equal scores break on box coordinates so the result is
    deterministic regardless of input order.
    """
    if not dets:
        return []
    if not 0 < iou_thresh < 1:
        raise DetectionError("iou_thresh must be in (0, 1)")
    key = {(d.view, d.slice_index) for d in dets}
    if len(key) > 1:
        raise DetectionError(f"nms input mixes slices: {sorted(key)}")
    kept: list[Detection] = []
    for cls in sorted({d.cls for d in dets}):
        pool = sorted(
            (d for d in dets if d.cls == cls),
            key=lambda d: (-d.score, d.bbox),
        )
        chosen: list[Detection] = []
        for d in pool:
            if all(iou(d.bbox, k.bbox) <= iou_thresh for k in chosen):
                chosen.append(d)
        kept.extend(chosen)
    return sorted(kept, key=lambda d: (-d.score, d.bbox, d.cls))


# ----------------------------------------------------------- rule detectors

@dataclass(frozen=True)
class RuleConfig:
    """Thresholds for the baseline rule detectors, calibrated on synthetic
    fixtures and frozen here so runs stay deterministic."""

    # C view
    c_min_area: int = 6  # pixels, suppresses noise specks
    c_fragment_area: int = 40  # components at least this big are patches
    c_min_fragments: int = 3
    c_fill_manhole: float = 0.85
    c_quantile_floor: float = 0.25  # mask threshold as a fraction of the peak
    c_contrast_gate: float = 0.5  # median/peak ratio above which a slice is flat
    c_abs_floor: float = 0.08  # ignore slices with no real signal
    c_healthy_area_frac: float = 0.05  # anomaly area that zeroes the healthy score
    # B / D views
    bd_response_thresh: float = 0.5
    bd_manhole_thresh: float = 1.55
    bd_score_scale: float = 3.0
    bd_min_depth_m: float = 0.8  # skip near-surface layer bands


DEFAULT_RULES = RuleConfig()


def _component_boxes(mask: np.ndarray):
    labels, n = ndimage.label(mask)
    comps = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        area = int(mask[sl].sum())
        comps.append((sl[0].start, sl[1].start, sl[0].stop, sl[1].stop, area))
    return comps


def detect_cscan_rule(
    img: SliceImage,
    window: tuple[int, int] | None = None,
    config: RuleConfig = DEFAULT_RULES,
) -> list[Detection]:
    """Classify anomalous regions of one C-scan by their shape.

    Emits a whole-window healthy record (score = 1 - normalized anomaly
    area) when no region passes the threshold, so downstream sifting has an
    explicit, thresholdable health signal.
    """
    if img.view != "C":
        raise DetectionError(f"C rule got a {img.view} slice")
    px = np.abs(np.asarray(img.pixels, dtype=np.float64))
    h, w = px.shape
    win = window if window is not None else (0, w)
    whole = (0, 0, h, w)

    peak = float(px.max(initial=0.0))
    med = float(np.median(px))
    # quiet or low-contrast (uniform layer band) slices are healthy
    if peak < config.c_abs_floor or med >= config.c_contrast_gate * peak:
        return [Detection("C", img.index, win, whole, "healthy", 1.0)]
    thr = max(config.c_quantile_floor * peak
              + (1 - config.c_quantile_floor) * med, config.c_abs_floor)
    comps = _component_boxes(px >= thr)
    fragments = [c for c in comps if c[4] < config.c_fragment_area]
    patches = [c for c in comps if c[4] >= config.c_fragment_area]

    dets: list[Detection] = []
    if len(fragments) >= config.c_min_fragments:
        r0 = min(c[0] for c in fragments)
        c0 = min(c[1] for c in fragments)
        r1 = max(c[2] for c in fragments)
        c1 = max(c[3] for c in fragments)
        score = min(1.0, len(fragments) / (2.0 * config.c_min_fragments))
        dets.append(Detection("C", img.index, win, (r0, c0, r1, c1), "loose", score))
    else:
        # too few pieces to be speckle: treat sizable fragments as patches
        patches.extend(c for c in fragments if c[4] >= config.c_min_area)
    for r0, c0, r1, c1, area in patches:
        fill = area / ((r1 - r0) * (c1 - c0))
        strength = float(px[r0:r1, c0:c1].max()) / peak
        if fill >= config.c_fill_manhole:
            margin = (fill - config.c_fill_manhole) / (1 - config.c_fill_manhole)
            cls = "manhole"
        else:
            margin = (config.c_fill_manhole - fill) / config.c_fill_manhole
            cls = "void"
        score = min(1.0, 0.5 * strength + 0.5 * margin)
        dets.append(Detection("C", img.index, win, (r0, c0, r1, c1), cls, score))

    if not dets:
        anomaly_area = sum(c[4] for c in comps if c[4] >= config.c_min_area)
        score = max(0.0, 1.0 - anomaly_area / (config.c_healthy_area_frac * h * w))
        return [Detection("C", img.index, win, whole, "healthy", score)]
    return canonical_order(dets)


def _hyperbola_response(
    px: np.ndarray,
    col_spacing_m: float,
    meta: AcquisitionMeta,
    config: RuleConfig,
):
    """Matched-filter response of a section against hyperbolic ridge templates.

    Rows are samples and columns are spatial positions. Returns the
    (rows x cols) response map plus the template half-width in columns.
    """
    ns, ncols = px.shape
    v = meta.velocity_m_per_ns
    half_w = max(2, min(ncols // 2, int(round(1.0 / col_spacing_m))))
    dt = meta.time_range_ns / max(ns - 1, 1)
    k = np.arange(ns)
    t_apex = time_of_sample(meta, k, ns)
    d_apex = v * t_apex / 2.0
    resp = np.zeros_like(px, dtype=np.float64)
    weight = np.zeros(ncols)
    for dc in range(-half_w, half_w + 1):
        off = abs(dc) * col_spacing_m
        with np.errstate(invalid="ignore"):
            t = 2.0 / v * np.sqrt(d_apex**2 + off**2)
        rows = np.clip(np.round(t / dt).astype(int), 0, ns - 1)
        lo, hi = max(0, -dc), min(ncols, ncols - dc)
        resp[:, lo:hi] += px[rows][:, lo + dc : hi + dc]
        weight[lo:hi] += 1.0
    resp /= weight[None, :]
    # suppress rows where the response is just a flat horizontal band
    row_med = np.median(px, axis=1)
    resp -= row_med[:, None]
    return resp, half_w


def _detect_ridge_rule(
    img: SliceImage,
    view: str,
    col_spacing_m: float,
    meta: AcquisitionMeta,
    window: tuple[int, int],
    config: RuleConfig,
) -> list[Detection]:
    if img.view != view:
        raise DetectionError(f"{view} rule got a {img.view} slice")
    px = np.asarray(img.pixels, dtype=np.float64)
    ns, ncols = px.shape
    if float(np.abs(px).max(initial=0.0)) < config.c_abs_floor:
        return []
    resp, half_w = _hyperbola_response(px, col_spacing_m, meta, config)

    k_min = int(2.0 * config.bd_min_depth_m / meta.velocity_m_per_ns
                / (meta.time_range_ns / max(ns - 1, 1)))
    resp[:k_min] = 0.0

    # wavelet support below the apex, in samples
    dt = meta.time_range_ns / max(ns - 1, 1)
    wav_half = max(2, int(round(1.5 / DEFAULT_CENTER_FREQ_GHZ / dt)))

    # local maxima over an apex- and wavelet-sized neighborhood, wide enough
    # to swallow the template's sidelobe responses
    foot = np.ones((4 * wav_half + 1, 2 * half_w + 1))
    local_max = (resp == ndimage.maximum_filter(resp, footprint=foot))
    peaks = np.argwhere(local_max & (resp > config.bd_response_thresh))

    dets: list[Detection] = []
    for k0, x0 in peaks:
        r = float(resp[k0, x0])
        cls = "manhole" if r > config.bd_manhole_thresh else "void"
        score = min(1.0, r / config.bd_score_scale)
        col_half = half_w // 3 + 1
        bbox = (
            max(0, k0),
            max(0, x0 - col_half),
            min(ns, k0 + 4 * wav_half),
            min(ncols, x0 + col_half + 1),
        )
        dets.append(Detection(view, img.index, window, bbox, cls, score))
    return nms(canonical_order(dets), 0.45)


def detect_bscan_rule(
    img: SliceImage,
    meta: AcquisitionMeta,
    window: tuple[int, int] | None = None,
    config: RuleConfig = DEFAULT_RULES,
) -> list[Detection]:
    win = window if window is not None else (0, img.pixels.shape[1])
    return _detect_ridge_rule(img, "B", meta.trace_spacing_m, meta, win, config)


def detect_dscan_rule(
    img: SliceImage,
    meta: AcquisitionMeta,
    n_channels: int | None = None,
    window: tuple[int, int] | None = None,
    config: RuleConfig = DEFAULT_RULES,
) -> list[Detection]:
    nch = n_channels if n_channels is not None else img.pixels.shape[1]
    pitch = meta.transverse_extent_m / max(nch - 1, 1)
    win = window if window is not None else (0, 1)
    return _detect_ridge_rule(img, "D", pitch, meta, win, config)


# ------------------------------------------------------------ pipeline run

@dataclass(frozen=True)
class PipelineConfig:
    window: WindowSpec = WindowSpec(64, 32)
    c_sample_stride: int = 8
    d_trace_stride: int = 8
    rules: RuleConfig = field(default_factory=RuleConfig)
    nms_iou: float = 0.45


def run_detectors(v: GprVolume, config: PipelineConfig = PipelineConfig()) -> list[Detection]:
    """Run all three rule detectors over every sliding window of a volume."""
    length = min(config.window.length_traces, v.n_traces)
    spec = WindowSpec(length, min(config.window.stride_traces, length))
    dets: list[Detection] = []
    for x0, x1 in sliding_windows(v, spec):
        sub = GprVolume(v.amplitudes[:, x0:x1, :], v.meta)
        win = (x0, x1)
        for k in range(0, sub.n_samples, config.c_sample_stride):
            dets.extend(
                nms(detect_cscan_rule(c_scan(sub, k), win, config.rules), config.nms_iou)
            )
        for c in range(sub.n_channels):
            dets.extend(detect_bscan_rule(b_scan(sub, c), v.meta, win, config.rules))
        for x in range(0, sub.n_traces, config.d_trace_stride):
            dets.extend(
                detect_dscan_rule(d_scan(sub, x), v.meta, v.n_channels, win, config.rules)
            )
    return canonical_order(dets)


# ------------------------------------------------------------ serialization

def export_detections(dets: list[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in dets:
            rec = {
                "view": d.view,
                "slice_index": d.slice_index,
                "window": list(d.window),
                "bbox": list(d.bbox),
                "cls": d.cls,
                "score": d.score,
                "source": d.source,
            }
            f.write(json.dumps(rec) + "\n")


def import_detections(path) -> list[Detection]:
    out: list[Detection] = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DetectionError(f"{path}:{i}: malformed record: {e}") from None
            unknown = set(rec) - set(DETECTION_FIELDS)
            if unknown:
                raise DetectionError(f"{path}:{i}: unknown fields {sorted(unknown)}")
            missing = set(DETECTION_FIELDS) - set(rec)
            if missing:
                raise DetectionError(f"{path}:{i}: missing fields {sorted(missing)}")
            try:
                out.append(
                    Detection(
                        view=rec["view"],
                        slice_index=int(rec["slice_index"]),
                        window=tuple(rec["window"]),
                        bbox=tuple(rec["bbox"]),
                        cls=rec["cls"],
                        score=float(rec["score"]),
                        source=rec["source"],
                    )
                )
            except (DetectionError, TypeError, ValueError) as e:
                raise DetectionError(f"{path}:{i}: {e}") from None
    return out


# ------------------------------------------------------------- augmentation

MAX_ROTATION_DEG = 15.0


def rotate(theta_deg: float):
    if not -MAX_ROTATION_DEG <= theta_deg <= MAX_ROTATION_DEG:
        raise ValueError(f"rotation {theta_deg} outside +-{MAX_ROTATION_DEG} degrees")
    return ("rotate", theta_deg)


FLIP_H = ("flip_h",)
FLIP_V = ("flip_v",)


def augment(img: np.ndarray, boxes: list[tuple[int, int, int, int]], t):
    """Apply one training-time transform to an image and its boxes.

    Rotation resamples bilinearly about the image center with zero padding and
    keeps dimensions; each box becomes the axis-aligned hull of its rotated
    corners, clipped to bounds. Flips mirror pixels and boxes exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if t[0] == "flip_h":
        out = img[:, ::-1].copy()
        bx = [(r0, w - c1, r1, w - c0) for r0, c0, r1, c1 in boxes]
        return out, bx
    if t[0] == "flip_v":
        out = img[::-1, :].copy()
        bx = [(h - r1, c0, h - r0, c1) for r0, c0, r1, c1 in boxes]
        return out, bx
    if t[0] != "rotate":
        raise ValueError(f"unknown transform {t!r}")
    theta = t[1]
    if not -MAX_ROTATION_DEG <= theta <= MAX_ROTATION_DEG:
        raise ValueError(f"rotation {theta} outside +-{MAX_ROTATION_DEG} degrees")
    out = ndimage.rotate(img, theta, reshape=False, order=1, mode="constant", cval=0.0)
    rad = math.radians(theta)
    cos, sin = math.cos(rad), math.sin(rad)
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    bx = []
    for r0, c0, r1, c1 in boxes:
        # corner coordinates of the continuous box in pixel-center space
        corners = [
            (rr - 0.5 - cr, cc_ - 0.5 - cc)
            for rr in (r0, r1)
            for cc_ in (c0, c1)
        ]
        # scipy's rotate maps output coords back through +theta, so features
        # move by the inverse rotation
        rot = [(rr * cos - cc_ * sin, rr * sin + cc_ * cos) for rr, cc_ in corners]
        rs = [p[0] + cr + 0.5 for p in rot]
        cs = [p[1] + cc + 0.5 for p in rot]
        nr0 = max(0, int(math.floor(min(rs))))
        nc0 = max(0, int(math.floor(min(cs))))
        nr1 = min(h, int(math.ceil(max(rs))))
        nc1 = min(w, int(math.ceil(max(cs))))
        bx.append((nr0, nc0, nr1, nc1))
    return out, bx
