"""3D GPR volume model: slicing, sliding windows, coordinate transforms, file I/O.

A volume is a (channel, trace, sample) float32 array. Sample 0 is the road
surface; depth grows with sample index. Slices:

  B-scan  fixes a channel  -> rows = samples, cols = traces
  C-scan  fixes a sample   -> rows = channels, cols = traces
  D-scan  fixes a trace    -> rows = samples,  cols = channels
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = "GPRVOL1"

META_KEYS = (
    "time_range_ns",
    "max_depth_m",
    "trace_spacing_m",
    "transverse_extent_m",
    "velocity_m_per_ns",
    "min_freq_mhz",
    "max_freq_mhz",
)


class VolumeError(ValueError):
    """Malformed volume data or container file."""


@dataclass(frozen=True)
class AcquisitionMeta:
    """Acquisition parameters of a multi-channel GPR survey."""

    time_range_ns: float = 180.0
    max_depth_m: float = 5.0
    trace_spacing_m: float = 0.15
    transverse_extent_m: float = 1.7
    velocity_m_per_ns: float | None = None  # derived when None
    min_freq_mhz: float = 200.0
    max_freq_mhz: float = 600.0

    def __post_init__(self):
        if self.time_range_ns <= 0 or self.max_depth_m <= 0:
            raise VolumeError("time_range_ns and max_depth_m must be positive")
        if self.trace_spacing_m <= 0 or self.transverse_extent_m <= 0:
            raise VolumeError("spacings must be positive")
        if not self.min_freq_mhz < self.max_freq_mhz:
            raise VolumeError("min_freq_mhz must be < max_freq_mhz")
        if self.velocity_m_per_ns is None:
            object.__setattr__(
                self, "velocity_m_per_ns", 2.0 * self.max_depth_m / self.time_range_ns
            )
        if self.velocity_m_per_ns <= 0:
            raise VolumeError("velocity_m_per_ns must be positive")


@dataclass(frozen=True)
class GprVolume:
    """In-memory 3D GPR data block, immutable after construction."""

    amplitudes: np.ndarray  # float32, shape (n_channels, n_traces, n_samples)
    meta: AcquisitionMeta = field(default_factory=AcquisitionMeta)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.float32)
        if a.ndim != 3 or min(a.shape) < 1:
            raise VolumeError(f"amplitudes must be 3D and nonempty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise VolumeError("amplitudes contain non-finite values")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def n_channels(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_traces(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def n_samples(self) -> int:
        return self.amplitudes.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.amplitudes.shape


@dataclass(frozen=True)
class SliceImage:
    """One 2D section of a volume, with the axis semantics of its view."""

    view: str  # "B", "C" or "D"
    index: int  # coordinate along the fixed axis
    pixels: np.ndarray
    axis_labels: tuple[str, str]


@dataclass(frozen=True)
class WindowSpec:
    length_traces: int
    stride_traces: int

    def validate(self, n_traces: int) -> None:
        if not 1 <= self.stride_traces <= self.length_traces <= n_traces:
            raise VolumeError(
                f"window spec ({self.length_traces}, {self.stride_traces}) "
                f"invalid for {n_traces} traces"
            )


@dataclass(frozen=True)
class VoxelBox:
    """Half-open integer box [c0,c1) x [x0,x1) x [k0,k1) in voxel coordinates."""

    c0: int
    c1: int
    x0: int
    x1: int
    k0: int
    k1: int

    def __post_init__(self):
        for name in ("c0", "c1", "x0", "x1", "k0", "k1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.c0 < self.c1 and self.x0 < self.x1 and self.k0 < self.k1):
            raise VolumeError(f"empty voxel box {self}")

    def volume(self) -> int:
        return (self.c1 - self.c0) * (self.x1 - self.x0) * (self.k1 - self.k0)

    def union(self, other: "VoxelBox") -> "VoxelBox":
        return VoxelBox(
            min(self.c0, other.c0), max(self.c1, other.c1),
            min(self.x0, other.x0), max(self.x1, other.x1),
            min(self.k0, other.k0), max(self.k1, other.k1),
        )

    def center(self) -> tuple[int, int, int]:
        return ((self.c0 + self.c1) // 2, (self.x0 + self.x1) // 2, (self.k0 + self.k1) // 2)

    def as_tuple(self) -> tuple[int, int, int, int, int, int]:
        return (self.c0, self.c1, self.x0, self.x1, self.k0, self.k1)


# ---------------------------------------------------------------- slicing

def a_scan(v: GprVolume, c: int, x: int) -> np.ndarray:
    if not (0 <= c < v.n_channels and 0 <= x < v.n_traces):
        raise IndexError(f"a_scan index ({c}, {x}) out of range for {v.shape}")
    return v.amplitudes[c, x, :].copy()


def b_scan(v: GprVolume, c: int) -> SliceImage:
    """Longitudinal section at a fixed channel: samples x traces."""
    if not 0 <= c < v.n_channels:
        raise IndexError(f"channel {c} out of range")
    return SliceImage("B", c, v.amplitudes[c].T.copy(), ("sample", "trace"))


def c_scan(v: GprVolume, k: int) -> SliceImage:
    """Horizontal section at a fixed sample (depth): channels x traces."""
    if not 0 <= k < v.n_samples:
        raise IndexError(f"sample {k} out of range")
    return SliceImage("C", k, v.amplitudes[:, :, k].copy(), ("channel", "trace"))


def d_scan(v: GprVolume, x: int) -> SliceImage:
    """Transverse section at a fixed trace: samples x channels."""
    if not 0 <= x < v.n_traces:
        raise IndexError(f"trace {x} out of range")
    return SliceImage("D", x, v.amplitudes[:, x, :].T.copy(), ("sample", "channel"))


def sliding_windows(v: GprVolume | int, spec: WindowSpec) -> list[tuple[int, int]]:
    """Enumerate trace windows [x0, x1) covering the whole longitudinal axis.

    Windows start at 0 and advance by the stride. The final window is clamped
    so that it ends exactly at n_traces, which may make it overlap its
    predecessor by more than the stride. Every window has the full length.
    """
    n_traces = v if isinstance(v, int) else v.n_traces
    spec.validate(n_traces)
    out = []
    start = 0
    while True:
        if start + spec.length_traces >= n_traces:
            out.append((n_traces - spec.length_traces, n_traces))
            break
        out.append((start, start + spec.length_traces))
        start += spec.stride_traces
    return out


# ------------------------------------------------------- coordinate maps

def time_of_sample(meta: AcquisitionMeta, k: float, n_samples: int) -> float:
    """Two-way travel time (ns) of sample k; last sample is the full range."""
    return k * meta.time_range_ns / max(n_samples - 1, 1)


def depth_of_sample(meta: AcquisitionMeta, k: int, n_samples: int) -> float:
    if not 0 <= k < n_samples:
        raise IndexError(f"sample {k} out of range [0, {n_samples})")
    return meta.velocity_m_per_ns * time_of_sample(meta, k, n_samples) / 2.0


def sample_of_depth(meta: AcquisitionMeta, d: float, n_samples: int) -> int:
    max_d = depth_of_sample(meta, n_samples - 1, n_samples)
    if not 0 <= d <= max_d + 1e-9:
        raise ValueError(f"depth {d} outside [0, {max_d}]")
    t = 2.0 * d / meta.velocity_m_per_ns
    k = int(round(t / meta.time_range_ns * max(n_samples - 1, 1)))
    return min(max(k, 0), n_samples - 1)


# --------------------------------------------------------- 3D footprints

def box_from_view(
    view: str,
    slice_index: int,
    bbox: tuple[int, int, int, int],
    window: tuple[int, int],
    thickness: int,
    shape: tuple[int, int, int],
) -> VoxelBox:
    """Lift a 2D detection box on a windowed slice into volume voxel space.

    The slice's in-plane axes map to their voxel axes; the fixed axis is
    extruded +-thickness around the slice coordinate, clamped to the volume.
    Trace coordinates (columns of B/C, the fixed index of D) are relative to
    the window start.
    """
    nc, nt, ns = shape
    r0, c0, r1, c1 = bbox
    x_off = window[0]
    if not (r0 < r1 and c0 < c1):
        raise VolumeError(f"empty detection box {bbox}")

    def extrude(idx, lo, hi):
        return max(lo, idx - thickness), min(hi, idx + thickness)

    if view == "B":  # rows=samples, cols=traces, fixed=channel
        ch0, ch1 = extrude(slice_index, 0, nc)
        box = VoxelBox(ch0, max(ch1, ch0 + 1), x_off + c0, x_off + c1, r0, r1)
    elif view == "C":  # rows=channels, cols=traces, fixed=sample
        k0, k1 = extrude(slice_index, 0, ns)
        box = VoxelBox(r0, r1, x_off + c0, x_off + c1, k0, max(k1, k0 + 1))
    elif view == "D":  # rows=samples, cols=channels, fixed=trace
        x_abs = x_off + slice_index
        x0, x1 = extrude(x_abs, 0, nt)
        box = VoxelBox(c0, c1, x0, max(x1, x0 + 1), r0, r1)
    else:
        raise VolumeError(f"unknown view {view!r}")
    if box.c1 > nc or box.x1 > nt or box.k1 > ns or min(box.c0, box.x0, box.k0) < 0:
        raise VolumeError(f"box {box} outside volume of shape {shape}")
    return box


def overlap3d(a: VoxelBox, b: VoxelBox) -> float:
    """Volumetric IoU of two voxel boxes."""
    ic = max(0, min(a.c1, b.c1) - max(a.c0, b.c0))
    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    ik = max(0, min(a.k1, b.k1) - max(a.k0, b.k0))
    inter = ic * ix * ik
    if inter == 0:
        return 0.0
    return inter / (a.volume() + b.volume() - inter)


# ----------------------------------------------------------------- I/O

def save_volume(v: GprVolume, path) -> None:
    """Write the GPRVOL1 container: one JSON header line, then raw float32 payload."""
    doc = {
        "n_channels": v.n_channels,
        "n_traces": v.n_traces,
        "n_samples": v.n_samples,
        "time_range_ns": v.meta.time_range_ns,
        "max_depth_m": v.meta.max_depth_m,
        "trace_spacing_m": v.meta.trace_spacing_m,
        "transverse_extent_m": v.meta.transverse_extent_m,
        "velocity_m_per_ns": v.meta.velocity_m_per_ns,
        "min_freq_mhz": v.meta.min_freq_mhz,
        "max_freq_mhz": v.meta.max_freq_mhz,
    }
    header = f"{MAGIC} {json.dumps(doc)}\n".encode("utf-8")
    payload = v.amplitudes.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_volume(path) -> GprVolume:
    with open(path, "rb") as f:
        header = f.readline()
        payload = f.read()
    return _parse_container(header, payload)


def volume_from_bytes(data: bytes) -> GprVolume:
    nl = data.find(b"\n")
    if nl < 0:
        raise VolumeError("missing header line")
    return _parse_container(data[: nl + 1], data[nl + 1 :])


def _parse_container(header: bytes, payload: bytes) -> GprVolume:
    try:
        text = header.decode("utf-8").rstrip("\n")
    except UnicodeDecodeError as e:
        raise VolumeError(f"header is not UTF-8: {e}") from None
    if not text.startswith(MAGIC + " "):
        raise VolumeError(f"bad magic, expected {MAGIC!r}")
    try:
        doc = json.loads(text[len(MAGIC) + 1 :])
    except json.JSONDecodeError as e:
        raise VolumeError(f"malformed header document: {e}") from None
    missing = [k for k in ("n_channels", "n_traces", "n_samples", *META_KEYS) if k not in doc]
    if missing:
        raise VolumeError(f"header missing keys: {missing}")
    nc, nt, ns = (int(doc[k]) for k in ("n_channels", "n_traces", "n_samples"))
    if min(nc, nt, ns) < 1:
        raise VolumeError(f"non-positive dimensions {nc}x{nt}x{ns}")
    expected = nc * nt * ns * 4
    if len(payload) != expected:
        raise VolumeError(
            f"payload size mismatch: header declares {nc}x{nt}x{ns} "
            f"({expected} bytes), got {len(payload)}"
        )
    a = np.frombuffer(payload, dtype="<f4").reshape(nc, nt, ns)
    if not np.all(np.isfinite(a)):
        raise VolumeError("payload contains non-finite values")
    meta = AcquisitionMeta(**{k: float(doc[k]) for k in META_KEYS})
    return GprVolume(amplitudes=a, meta=meta)
