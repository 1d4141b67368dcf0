"""Intensity normalisation and label encoding.

Two input transforms map raw u16 intensities into [0, 1]:

- linear: f / 65535
- log: v = 10 * log10(max(f^2 + c, floor)), then the affine range map
  (v - lo) / (hi - lo) clamped to [0, 1]. c is the noise reduction
  coefficient (-83 by default); the floor keeps the log argument positive
  for noise-floor pixels (f <= 9 with the default c).
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, CropTooLargeError, DimensionError
from .raster import LAND, NODATA, SEA, FloatRaster, MAXVAL

log = logging.getLogger(__name__)

MODES = ("linear", "log")


@dataclass(frozen=True)
class PreprocessConfig:
    mode: str = "log"
    noise_coefficient: float = -83.0
    log_floor: float = 1.0
    log_range: Tuple[float, float] = (0.0, 96.33)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("preprocess mode must be one of %s, got %r" % (MODES, self.mode))
        if not self.log_floor > 0:
            raise ConfigError("log_floor must be > 0")
        lo, hi = self.log_range
        if not hi > lo:
            raise ConfigError("log_range must satisfy lo < hi")
        object.__setattr__(self, "log_range", (float(lo), float(hi)))


@dataclass(frozen=True)
class LabelSmoothingConfig:
    kernel_radius: int = 2
    peak: float = 1.0

    def __post_init__(self):
        if self.kernel_radius < 0:
            raise ConfigError("kernel_radius must be >= 0")
        if not 0 < self.peak <= 1:
            raise ConfigError("peak must be in (0, 1]")


def linear_transform(values):
    return np.asarray(values, dtype=np.float64) / MAXVAL


def log_transform(values, cfg=PreprocessConfig()):
    f = np.asarray(values, dtype=np.float64)
    v = 10.0 * np.log10(np.maximum(f * f + cfg.noise_coefficient, cfg.log_floor))
    lo, hi = cfg.log_range
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def normalize_linear(img):
    return FloatRaster(linear_transform(img.data))


def normalize_log(img, cfg=PreprocessConfig()):
    return FloatRaster(log_transform(img.data, cfg))


def normalize(img, cfg):
    """Apply the transform selected by cfg.mode."""
    if cfg.mode == "linear":
        return normalize_linear(img)
    return normalize_log(img, cfg)


def smooth_labels(coast, cfg=LabelSmoothingConfig()):
    """Spread the coast mask with a triangular Chebyshev-distance kernel.

    out = peak * max(0, 1 - d / (radius + 1)) with d the chessboard distance
    to the nearest coast pixel.
    """
    mask = coast.data.astype(bool)
    if not mask.any():
        return FloatRaster(np.zeros(mask.shape, dtype=np.float32))
    dist = ndimage.distance_transform_cdt(~mask, metric="chessboard").astype(np.float64)
    weight = np.clip(1.0 - dist / (cfg.kernel_radius + 1), 0.0, 1.0)
    return FloatRaster(cfg.peak * weight)


def encode_labels(sea_land, coast=None, with_coast=False, smoothing=LabelSmoothingConfig()):
    """One-hot (sea, no-data, land) planes, optionally with a smoothed coast plane."""
    if coast is not None and coast.data.shape != sea_land.data.shape:
        raise DimensionError("class map is %dx%d but coast mask is %dx%d" % (
            sea_land.width, sea_land.height, coast.width, coast.height))
    if with_coast and coast is None:
        raise DimensionError("a coast mask is required for 4-channel labels")
    planes = [(sea_land.data == k).astype(np.float32) for k in (SEA, NODATA, LAND)]
    if with_coast:
        planes.append(smooth_labels(coast, smoothing).plane(0))
    return FloatRaster(np.stack(planes, axis=-1))


def count_unique_crops(w, h, a, b):
    """Number of distinct a x b crops of a w x h image, counted as (w - a)(h - b)."""
    if a > w or b > h:
        raise CropTooLargeError("crop %dx%d larger than image %dx%d" % (a, b, w, h))
    return (w - a) * (h - b)
