import numpy as np
import pytest

from gprscan.volume import AcquisitionMeta, GprVolume


@pytest.fixture
def meta():
    """Acquisition geometry used throughout: 180 ns / 5 m, 1 m footprint."""
    return AcquisitionMeta(
        time_range_ns=180.0,
        max_depth_m=5.0,
        trace_spacing_m=0.05,
        transverse_extent_m=1.0,
        min_freq_mhz=200.0,
        max_freq_mhz=800.0,
    )


@pytest.fixture
def small_volume(meta):
    rng = np.random.default_rng(7)
    amps = rng.standard_normal((4, 24, 32)).astype(np.float32)
    return GprVolume(amps, meta)


def random_volume(seed, shape=(8, 64, 512)):
    rng = np.random.default_rng(seed)
    meta = AcquisitionMeta(
        time_range_ns=180.0,
        max_depth_m=5.0,
        trace_spacing_m=0.05,
        transverse_extent_m=1.0,
        min_freq_mhz=200.0,
        max_freq_mhz=800.0,
    )
    return GprVolume(rng.standard_normal(shape).astype(np.float32), meta)
