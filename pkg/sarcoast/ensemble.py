"""Coastline ensembling and gap filling."""
import logging
import math

import numpy as np

from .errors import DimensionError, OrientationMismatchError, WeightError
from .raster import LANDSCAPE, CoastlinePath, CoastMask

log = logging.getLogger(__name__)


def ensemble_paths(paths, weights):
    """Weighted mean of the present coordinates at every primary-axis index.

    Weights are renormalised over the models present at each index; an index
    where no model with a positive weight is present stays absent.
    """
    if not paths:
        raise DimensionError("nothing to ensemble")
    if len(weights) != len(paths):
        raise WeightError("%d weights for %d coastlines" % (len(weights), len(paths)))
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any() or not np.isfinite(w).all():
        raise WeightError("weights must be finite and >= 0")
    if not (w > 0).any():
        raise WeightError("at least one weight must be positive")
    orientation = paths[0].orientation
    if any(p.orientation != orientation for p in paths):
        raise OrientationMismatchError("cannot ensemble landscape and portrait coastlines")
    length = paths[0].axis_length
    if any(p.axis_length != length for p in paths):
        raise DimensionError("coastlines have different axis lengths: %s"
                             % sorted({p.axis_length for p in paths}))
    extents = {p.extent for p in paths if p.extent is not None}
    extent = extents.pop() if len(extents) == 1 else None

    coords = np.stack([p.coords(length) for p in paths])
    present = ~np.isnan(coords) & (w[:, None] > 0)
    wp = np.where(present, w[:, None], 0.0)
    den = wp.sum(axis=0)
    num = np.where(present, coords, 0.0) * wp
    fused = np.full(length, np.nan)
    ok = den > 0
    fused[ok] = num.sum(axis=0)[ok] / den[ok]
    # clip float drift back into the hull of the contributing coordinates
    lo = np.where(present, coords, np.inf).min(axis=0)
    hi = np.where(present, coords, -np.inf).max(axis=0)
    fused[ok] = np.clip(fused[ok], lo[ok], hi[ok])
    log.debug("ensembled %d coastlines, %d of %d indices present", len(paths), ok.sum(), length)
    return CoastlinePath.from_coords(orientation, fused, extent=extent)


def densify_path(path, length=None):
    """Linearly interpolate absent runs that have present neighbours on both sides."""
    coords = path.coords(length)
    present = ~np.isnan(coords)
    idx = np.flatnonzero(present)
    if len(idx) >= 2:
        gaps = np.flatnonzero(~present)
        gaps = gaps[(gaps > idx[0]) & (gaps < idx[-1])]
        coords[gaps] = np.interp(gaps, idx, coords[idx])
    return CoastlinePath.from_coords(path.orientation, coords, extent=path.extent)


def _round_half_away(v):
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def fill_gaps(path, extent, length=None, interpolate=True):
    """Rasterise a path and close vertical jumps so it is 8-connected.

    extent is the size of the secondary axis (image height for landscape
    paths). For adjacent present indices i, i+1 whose rounded coordinates
    differ by more than one pixel, the pixels strictly between them are set
    at index i+1.
    """
    n = length if length is not None else path.axis_length
    if interpolate:
        path = densify_path(path, n)
    coords = path.coords(n)
    grid = np.zeros((n, extent), dtype=np.uint8)
    rows = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        c = coords[i]
        if math.isnan(c):
            continue
        r = int(_round_half_away(c))
        r = min(max(r, 0), extent - 1)
        rows[i] = r
        grid[i, r] = 1
    for i in range(n - 1):
        a, b = rows[i], rows[i + 1]
        if a < 0 or b < 0 or abs(b - a) <= 1:
            continue
        lo, hi = (a, b) if a < b else (b, a)
        grid[i + 1, lo + 1:hi] = 1
    return CoastMask(grid.T if path.orientation == LANDSCAPE else grid)
