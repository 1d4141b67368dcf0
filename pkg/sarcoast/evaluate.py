"""Distance-based coastline scoring.

Each evaluation point is matched to the nearest set pixel of the predicted
mask (pixel centres at integer coordinates). A point with no match, because
the mask is empty or the nearest pixel lies beyond miss_radius, costs
miss_penalty. The score is the mean over all points.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, CoordinateRangeError, EmptyPointsError
from .raster import EvaluationPoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreConfig:
    miss_penalty: float = 100.0
    miss_radius: Optional[float] = None
    meters_per_pixel: float = 3.0

    def __post_init__(self):
        if self.miss_penalty < 0:
            raise ConfigError("miss_penalty must be >= 0")
        if self.miss_radius is not None and self.miss_radius < 0:
            raise ConfigError("miss_radius must be >= 0")


class PointResult(NamedTuple):
    point: EvaluationPoint
    distance: Optional[float]

    @property
    def missed(self):
        return self.distance is None


@dataclass(frozen=True)
class ScoreReport:
    per_point: List[PointResult]
    mean_score: float
    hit_count: int
    miss_count: int
    miss_penalty: float
    meters_per_pixel: float

    @property
    def mean_hit_distance(self):
        hits = [r.distance for r in self.per_point if r.distance is not None]
        return sum(hits) / len(hits) if hits else None

    def to_dict(self):
        mean_hit = self.mean_hit_distance
        return {
            "mean_score": self.mean_score,
            "mean_score_m": self.mean_score * self.meters_per_pixel,
            "mean_hit_distance": mean_hit,
            "hit_count": self.hit_count,
            "miss_count": self.miss_count,
            "miss_penalty": self.miss_penalty,
            "meters_per_pixel": self.meters_per_pixel,
            "per_point": [
                {"x": r.point.x, "y": r.point.y, "distance": r.distance, "miss": r.missed}
                for r in self.per_point
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _distance(px, py, x, y):
    dx = x - px
    dy = y - py
    return math.sqrt(dx * dx + dy * dy)


def score(pred, points, cfg=ScoreConfig()):
    if not points:
        raise EmptyPointsError("no evaluation points")
    for p in points:
        if not (0 <= p.x < pred.width and 0 <= p.y < pred.height):
            raise CoordinateRangeError("evaluation point (%r, %r) outside the %dx%d image"
                                       % (p.x, p.y, pred.width, pred.height))
    ys, xs = np.nonzero(pred.data)
    results = []
    if len(xs):
        pixels = np.column_stack([xs, ys]).astype(np.float64)
        query = np.array([[p.x, p.y] for p in points], dtype=np.float64)
        _, nearest = cKDTree(pixels).query(query)
        for p, j in zip(points, nearest):
            d = _distance(float(p.x), float(p.y), float(pixels[j, 0]), float(pixels[j, 1]))
            if cfg.miss_radius is not None and d > cfg.miss_radius:
                results.append(PointResult(p, None))
            else:
                results.append(PointResult(p, d))
    else:
        results = [PointResult(p, None) for p in points]
    total = 0.0
    for r in results:
        if r.distance is not None:
            total += r.distance
    misses = sum(1 for r in results if r.distance is None)
    mean = (total + misses * cfg.miss_penalty) / len(results)
    log.debug("scored %d points: mean %.4f, %d misses", len(results), mean, misses)
    return ScoreReport(results, mean, len(results) - misses, misses, cfg.miss_penalty,
                       cfg.meters_per_pixel)
