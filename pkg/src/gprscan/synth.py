"""Deterministic synthetic radargram generator with ground-truth annotations.

Scenes are built from horizontal layer interfaces plus subsurface objects of
three kinds. Each kind carries its own visual signature:

  void     irregular polygonal patch of point reflectors on its top face;
           bell-shaped ridges in B/D sections
  manhole  rectangular reflector patch with higher gain; like a void but
           stronger and regular
  loose    a cloud of weak scatterers spread through the box; speckle in
           horizontal sections, no coherent ridge

Everything is a pure function of the scene spec, including its RNG seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .volume import (
    AcquisitionMeta,
    GprVolume,
    VoxelBox,
    time_of_sample,
)

OBJECT_KINDS = ("void", "loose", "manhole")

# default rendering gains; manhole deliberately the strongest signature
VOID_GAIN = 1.0
MANHOLE_GAIN = 3.0
LOOSE_SCATTERERS = 40
LOOSE_GAIN_RANGE = (0.1, 0.3)  # fraction of VOID_GAIN per scatterer

DEFAULT_CENTER_FREQ_GHZ = 0.4  # inside the 200-600 MHz acquisition band
APERTURE_M = 1.0  # radial extent of rendered hyperbola flanks


@dataclass(frozen=True)
class LayerSpec:
    depth_m: float
    reflectivity: float  # in [-1, 1]


@dataclass(frozen=True)
class ObjectSpec:
    kind: str
    center: tuple[float, float, float]  # (transverse_m, longitudinal_m, depth_m)
    size: tuple[float, float, float]  # (dx_m, dy_m, dz_m)
    amplitude_gain: float = 0.0  # 0 -> kind default

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.amplitude_gain == 0.0:
            gain = MANHOLE_GAIN if self.kind == "manhole" else VOID_GAIN
            object.__setattr__(self, "amplitude_gain", gain)
        if self.amplitude_gain <= 0:
            raise ValueError("amplitude_gain must be positive")


@dataclass(frozen=True)
class SceneSpec:
    n_channels: int = 8
    n_traces: int = 64
    n_samples: int = 512
    meta: AcquisitionMeta = field(default_factory=AcquisitionMeta)
    layers: tuple[LayerSpec, ...] = ()
    objects: tuple[ObjectSpec, ...] = ()
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        depths = [l.depth_m for l in self.layers]
        if any(d2 <= d1 for d1, d2 in zip(depths, depths[1:])):
            raise ValueError("layer depths must be strictly increasing")
        if any(d >= self.meta.max_depth_m for d in depths):
            raise ValueError("layer deeper than max_depth_m")
        for o in self.objects:
            u, y, d = o.center
            if not (0 <= u <= self.meta.transverse_extent_m):
                raise ValueError(f"object transverse center {u} outside footprint")
            if not (0 <= y <= (self.n_traces - 1) * self.meta.trace_spacing_m):
                raise ValueError(f"object longitudinal center {y} outside footprint")
            if not (0 < d < self.meta.max_depth_m):
                raise ValueError(f"object depth {d} outside volume")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class GtObject:
    kind: str
    voxel_box: VoxelBox
    view_boxes: dict  # {"B": (r0,c0,r1,c1), "C": ..., "D": ...}


GroundTruth = list  # list[GtObject]


# ------------------------------------------------------------- primitives

def ricker(t: float | np.ndarray, t0: float, f_c: float = DEFAULT_CENTER_FREQ_GHZ):
    """Ricker wavelet at time t (ns) centered on t0, center frequency f_c (GHz)."""
    if f_c <= 0:
        raise ValueError("center frequency must be positive")
    tau = np.asarray(t, dtype=float) - t0
    a = (math.pi * f_c) ** 2 * tau * tau
    out = (1.0 - 2.0 * a) * np.exp(-a)
    return float(out) if np.isscalar(t) else out


def travel_time(x: float | np.ndarray, x0: float, d: float, v: float):
    """Two-way travel time (ns) from a point reflector at depth d, offset x - x0 (m)."""
    if d <= 0 or v <= 0:
        raise ValueError("depth and velocity must be positive")
    off = np.asarray(x, dtype=float) - x0
    t = 2.0 / v * np.sqrt(d * d + off * off)
    return float(t) if np.isscalar(x) else t


# -------------------------------------------------------------- rendering

def channel_positions(n_channels: int, meta: AcquisitionMeta) -> np.ndarray:
    """Transverse position (m) of each channel across the array swath."""
    pitch = meta.transverse_extent_m / max(n_channels - 1, 1)
    return np.arange(n_channels) * pitch


def trace_positions(n_traces: int, meta: AcquisitionMeta) -> np.ndarray:
    return np.arange(n_traces) * meta.trace_spacing_m


def _polygon_mask(uu, yy, center, half_u, half_y, rng):
    """Irregular (randomized octagon) footprint mask over a coordinate grid."""
    n_vert = 8
    ang = np.linspace(0, 2 * math.pi, n_vert, endpoint=False)
    ang = ang + rng.uniform(-0.2, 0.2, n_vert)
    rad = rng.uniform(0.55, 1.0, n_vert)
    # point-in-polygon via angle interpolation of the radius
    du = (uu - center[0]) / max(half_u, 1e-9)
    dy = (yy - center[1]) / max(half_y, 1e-9)
    theta = np.arctan2(dy, du) % (2 * math.pi)
    r = np.hypot(du, dy)
    bound = np.interp(theta, np.sort(ang % (2 * math.pi)),
                      rad[np.argsort(ang % (2 * math.pi))], period=2 * math.pi)
    return r <= bound


def _object_reflectors(obj: ObjectSpec, spec: SceneSpec, rng) -> np.ndarray:
    """Point reflectors (u, y, depth, gain) realizing one object's signature."""
    u0, y0, d0 = obj.center
    du, dy, dz = obj.size
    if obj.kind == "loose":
        n = LOOSE_SCATTERERS
        u = rng.uniform(u0 - du / 2, u0 + du / 2, n)
        y = rng.uniform(y0 - dy / 2, y0 + dy / 2, n)
        d = rng.uniform(max(d0 - dz / 2, 0.05), d0 + dz / 2, n)
        g = rng.uniform(*LOOSE_GAIN_RANGE, n) * obj.amplitude_gain
        return np.column_stack([u, y, d, g])
    # void / manhole: reflector grid on the top face
    d_top = max(d0 - dz / 2, 0.05)
    pitch_u = spec.meta.transverse_extent_m / max(spec.n_channels - 1, 1)
    step_u = min(pitch_u, du / 2)
    step_y = min(spec.meta.trace_spacing_m, dy / 2)
    us = np.arange(u0 - du / 2, u0 + du / 2 + 1e-9, step_u)
    ys = np.arange(y0 - dy / 2, y0 + dy / 2 + 1e-9, step_y)
    uu, yy = np.meshgrid(us, ys, indexing="ij")
    if obj.kind == "void":
        mask = _polygon_mask(uu, yy, (u0, y0), du / 2, dy / 2, rng)
        if not mask.any():
            mask = np.hypot(uu - u0, yy - y0) <= min(du, dy) / 4 + 1e-9
    else:  # manhole: full regular rectangle
        mask = np.ones_like(uu, dtype=bool)
    pts = np.column_stack([uu[mask], yy[mask]])
    g = np.full(len(pts), obj.amplitude_gain)
    return np.column_stack([pts, np.full(len(pts), d_top), g])


def _render_reflectors(field: np.ndarray, reflectors: np.ndarray, spec: SceneSpec) -> None:
    """Accumulate hyperbolic wavelet responses of point reflectors into `field`."""
    nc, nt, ns = field.shape
    meta = spec.meta
    upos = channel_positions(nc, meta)
    ypos = trace_positions(nt, meta)
    t_axis = time_of_sample(meta, np.arange(ns), ns)
    for u0, y0, d, g in reflectors:
        ci = np.where(np.abs(upos - u0) <= APERTURE_M)[0]
        xi = np.where(np.abs(ypos - y0) <= APERTURE_M)[0]
        if len(ci) == 0 or len(xi) == 0:
            continue
        r = np.hypot(upos[ci][:, None] - u0, ypos[xi][None, :] - y0)
        t0 = travel_time(r, 0.0, d, meta.velocity_m_per_ns)
        # taper flanks so energy stays near the apex
        taper = np.exp(-((r / (APERTURE_M / 2.2)) ** 2))
        # evaluate the wavelet per (channel, trace) pair against the time axis
        tau = t_axis[None, None, :] - t0[:, :, None]
        a = (math.pi * DEFAULT_CENTER_FREQ_GHZ) ** 2 * tau * tau
        wav = (1.0 - 2.0 * a) * np.exp(-a)
        field[np.ix_(ci, xi)] += g * taper[:, :, None] * wav


def _support_box(field: np.ndarray, frac: float = 0.25) -> VoxelBox:
    """Bounding box of the object's rendered support (|amplitude| above a
    fraction of its peak); contains essentially all of the object energy."""
    a = np.abs(field)
    peak = a.max()
    if peak <= 0:
        raise ValueError("object rendered no energy")
    mask = a >= frac * peak
    bounds = []
    for ax in range(3):
        idx = np.where(mask.any(axis=tuple(i for i in range(3) if i != ax)))[0]
        bounds.append((int(idx[0]), int(idx[-1]) + 1))
    (c0, c1), (x0, x1), (k0, k1) = bounds
    return VoxelBox(c0, c1, x0, x1, k0, k1)


def _geometric_box(obj: ObjectSpec, spec: SceneSpec) -> VoxelBox:
    """The object's physical extent in voxel coordinates."""
    meta = spec.meta
    u0, y0, d0 = obj.center
    du, dy, dz = obj.size
    pitch = meta.transverse_extent_m / max(spec.n_channels - 1, 1)
    c0 = max(0, int(math.floor((u0 - du / 2) / pitch)))
    c1 = min(spec.n_channels, int(math.ceil((u0 + du / 2) / pitch)) + 1)
    x0 = max(0, int(math.floor((y0 - dy / 2) / meta.trace_spacing_m)))
    x1 = min(spec.n_traces, int(math.ceil((y0 + dy / 2) / meta.trace_spacing_m)) + 1)
    dt = meta.time_range_ns / max(spec.n_samples - 1, 1)
    k_of = lambda d: 2.0 * d / meta.velocity_m_per_ns / dt
    k0 = max(0, int(math.floor(k_of(max(d0 - dz / 2, 0.0)))))
    k1 = min(spec.n_samples, int(math.ceil(k_of(d0 + dz / 2))) + 1)
    return VoxelBox(c0, max(c1, c0 + 1), x0, max(x1, x0 + 1), k0, max(k1, k0 + 1))


def _view_boxes(box: VoxelBox) -> dict:
    return {
        "B": (box.k0, box.x0, box.k1, box.x1),  # rows=samples, cols=traces
        "C": (box.c0, box.x0, box.c1, box.x1),  # rows=channels, cols=traces
        "D": (box.k0, box.c0, box.k1, box.c1),  # rows=samples, cols=channels
    }


def render_scene(spec: SceneSpec) -> tuple[GprVolume, GroundTruth]:
    """Render a scene to a volume plus per-object ground truth."""
    rng = np.random.default_rng(spec.rng_seed)
    nc, nt, ns = spec.n_channels, spec.n_traces, spec.n_samples
    vol = np.zeros((nc, nt, ns), dtype=np.float64)

    t_axis = time_of_sample(spec.meta, np.arange(ns), ns)
    for layer in spec.layers:
        t0 = 2.0 * layer.depth_m / spec.meta.velocity_m_per_ns
        vol += layer.reflectivity * ricker(t_axis, t0)[None, None, :]

    truth: GroundTruth = []
    for obj in spec.objects:
        reflectors = _object_reflectors(obj, spec, rng)
        obj_field = np.zeros_like(vol)
        _render_reflectors(obj_field, reflectors, spec)
        vol += obj_field
        box = _support_box(obj_field).union(_geometric_box(obj, spec))
        truth.append(GtObject(kind=obj.kind, voxel_box=box, view_boxes=_view_boxes(box)))

    if spec.noise_sigma > 0:
        vol += rng.normal(0.0, spec.noise_sigma, vol.shape)

    return GprVolume(amplitudes=vol.astype(np.float32), meta=spec.meta), truth


# -------------------------------------------------------------- benchmark

#: default layer structure shared by all benchmark scenes
BENCH_LAYERS = (LayerSpec(0.4, 0.35), LayerSpec(1.0, 0.25), LayerSpec(3.5, 0.2))
BENCH_NOISE = 0.01


def _random_scene(kind: str | None, seed: int) -> SceneSpec:
    """One benchmark scene; kind None renders a healthy (layers-only) scene."""
    rng = np.random.default_rng(seed)
    meta = AcquisitionMeta()
    n_traces = 64
    objects: tuple[ObjectSpec, ...] = ()
    if kind is not None:
        extent_y = (n_traces - 1) * meta.trace_spacing_m
        u0 = rng.uniform(0.5, meta.transverse_extent_m - 0.5)
        y0 = rng.uniform(2.0, extent_y - 2.0)
        d0 = rng.uniform(1.4, 2.6)
        if kind == "loose":  # loose zones are diffuse, not compact
            du = rng.uniform(1.2, 1.6)
            dy = rng.uniform(2.5, 3.5)
            dz = rng.uniform(0.5, 0.7)
        else:
            du = rng.uniform(0.8, 1.3)
            dy = rng.uniform(1.0, 2.0)
            dz = rng.uniform(0.4, 0.6)
        objects = (ObjectSpec(kind=kind, center=(u0, y0, d0), size=(du, dy, dz)),)
    return SceneSpec(
        n_channels=8,
        n_traces=n_traces,
        n_samples=512,
        meta=meta,
        layers=BENCH_LAYERS,
        objects=objects,
        noise_sigma=BENCH_NOISE,
        rng_seed=seed,
    )


def make_benchmark(
    seed: int,
    n_healthy: int = 10,
    n_void: int = 10,
    n_loose: int = 10,
    n_manhole: int = 10,
) -> list[tuple[GprVolume, GroundTruth]]:
    """Deterministic desk-scale benchmark: one scene per entry, mixed classes."""
    plan = (
        [None] * n_healthy + ["void"] * n_void + ["loose"] * n_loose + ["manhole"] * n_manhole
    )
    out = []
    for i, kind in enumerate(plan):
        out.append(render_scene(_random_scene(kind, seed * 100003 + i)))
    return out


# ----------------------------------------------------------- serialization

def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for g in truth:
            rec = {
                "kind": g.kind,
                "voxel_box": list(g.voxel_box.as_tuple()),
                "view_boxes": {v: list(b) for v, b in g.view_boxes.items()},
            }
            f.write(json.dumps(rec) + "\n")


def load_ground_truth(path) -> GroundTruth:
    out: GroundTruth = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(
                    GtObject(
                        kind=rec["kind"],
                        voxel_box=VoxelBox(*rec["voxel_box"]),
                        view_boxes={v: tuple(b) for v, b in rec["view_boxes"].items()},
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{i}: malformed ground-truth record: {e}") from None
    return out
