"""Synthetic SAR-like scenes with a known coastline.

The coastline is the curve y(x) = base + sum_i a_i sin(2 pi f_i x / width + phi_i).
Intensities are class means times multiplicative gamma speckle,
Gamma(looks, 1/looks), which has unit mean and variance 1/looks.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .ensemble import fill_gaps
from .errors import ConfigError, DegenerateCurveError
from .raster import (
    LAND,
    LANDSCAPE,
    MAXVAL,
    NODATA,
    SEA,
    ClassMap,
    CoastlinePath,
    CoastMask,
    EvaluationPoint,
    RasterImage,
)
from .rng import STREAM_SCENE, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneConfig:
    width: int = 2048
    height: int = 1536
    base: Optional[float] = None
    amplitudes: Tuple[float, ...] = (120.0, 40.0)
    frequencies: Tuple[float, ...] = (2.0, 7.0)
    phases: Tuple[float, ...] = (0.0, 1.0)
    land_side: str = "below"
    land_mean: float = 9000.0
    sea_mean: float = 2500.0
    speckle_looks: float = 4.0
    nodata_rects: Tuple[Tuple[int, int, int, int], ...] = ()
    point_spacing: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("scene must be at least 1x1")
        if not len(self.amplitudes) == len(self.frequencies) == len(self.phases):
            raise ConfigError("amplitudes, frequencies and phases must have equal length")
        if self.land_side not in ("above", "below"):
            raise ConfigError("land_side must be 'above' or 'below'")
        for name in ("land_mean", "sea_mean"):
            if not 0 <= getattr(self, name) <= MAXVAL:
                raise ConfigError("%s must be within [0, 65535]" % name)
        if self.speckle_looks < 1:
            raise ConfigError("speckle_looks must be >= 1")
        if self.point_spacing < 1:
            raise ConfigError("point_spacing must be >= 1")
        object.__setattr__(self, "nodata_rects", tuple(tuple(int(v) for v in r)
                                                      for r in self.nodata_rects))


class Scene(NamedTuple):
    image: RasterImage
    classes: ClassMap
    coast: CoastMask
    points: list
    curve: np.ndarray


def coastline_curve(cfg):
    """True coastline row y(x) for every column."""
    x = np.arange(cfg.width, dtype=np.float64)
    base = cfg.height / 2.0 if cfg.base is None else float(cfg.base)
    y = np.full(cfg.width, base)
    for a, f, phi in zip(cfg.amplitudes, cfg.frequencies, cfg.phases):
        y += a * np.sin(2.0 * np.pi * f * x / cfg.width + phi)
    return y


def generate_scene(cfg):
    curve = coastline_curve(cfg)
    if curve.min() < 0 or curve.max() >= cfg.height:
        raise DegenerateCurveError("coastline leaves the image: rows %.2f..%.2f of %d"
                                   % (curve.min(), curve.max(), cfg.height))
    # a curve in [height - 0.5, height) rounds onto the last row
    rounded = np.minimum(np.floor(curve + 0.5), cfg.height - 1)
    rows = np.arange(cfg.height, dtype=np.float64)[:, None]
    land = rows > curve[None, :] if cfg.land_side == "below" else rows < curve[None, :]
    classes = np.where(land, LAND, SEA).astype(np.uint8)

    path = CoastlinePath.from_coords(LANDSCAPE, curve, extent=cfg.height)
    coast = fill_gaps(path, cfg.height, interpolate=False)

    rng = make_rng(cfg.seed, STREAM_SCENE)
    speckle = rng.gamma(cfg.speckle_looks, 1.0 / cfg.speckle_looks, size=classes.shape)
    means = np.where(land, cfg.land_mean, cfg.sea_mean)
    intensity = np.clip(np.rint(means * speckle), 0, MAXVAL)
    for x, y, w, h in cfg.nodata_rects:
        intensity[y:y + h, x:x + w] = 0
        classes[y:y + h, x:x + w] = NODATA

    points = [EvaluationPoint(float(x), float(rounded[x]))
              for x in range(0, cfg.width, cfg.point_spacing)]
    log.info("generated %dx%d scene, coastline rows %.1f..%.1f, %d evaluation points",
             cfg.width, cfg.height, curve.min(), curve.max(), len(points))
    return Scene(RasterImage(intensity.astype(np.uint16)), ClassMap(classes), coast, points, curve)
