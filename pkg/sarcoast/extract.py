"""Coastline extraction from probability maps.

Softmax maps (sea, no-data, land) are reduced to a class map by argmax; a
pixel is coastline when its 3x3 neighbourhood, clipped at the image edge,
holds both sea and land. Sigmoid maps give one coastline pixel per column
(landscape) or per row (portrait) at the maximum probability. Neither rule
uses a threshold, so both are unchanged by any strictly increasing
transform of the map values.
"""
import logging

import numpy as np
from scipy import ndimage

from .errors import ChannelMismatchError, ConfigError
from .raster import LAND, LANDSCAPE, PORTRAIT, SEA, CoastlinePath, CoastMask, PathEntry

log = logging.getLogger(__name__)

ORIENTATION_RULES = ("auto", LANDSCAPE, PORTRAIT)


def resolve_orientation(rule, width, height):
    """auto means landscape iff width >= height."""
    if rule not in ORIENTATION_RULES:
        raise ConfigError("orientation must be one of %s, got %r" % (ORIENTATION_RULES, rule))
    if rule == "auto":
        return LANDSCAPE if width >= height else PORTRAIT
    return rule


def class_map_of(f):
    """Per-pixel argmax; ties go to the lowest class index."""
    return np.argmax(f.data, axis=-1).astype(np.uint8)


def extract_softmax(f):
    if f.channels != 3:
        raise ChannelMismatchError("channel mismatch: softmax extraction needs 3 channels, got %d"
                                   % f.channels)
    classes = class_map_of(f)
    # nearest-mode edges replicate existing classes, which matches clipping for max/min
    hi = ndimage.maximum_filter(classes, size=3, mode="nearest")
    lo = ndimage.minimum_filter(classes, size=3, mode="nearest")
    return CoastMask((hi.astype(np.int16) - lo) == LAND - SEA)


def extract_sigmoid(f, rule="auto"):
    if f.channels != 1:
        raise ChannelMismatchError("channel mismatch: sigmoid extraction needs 1 channel, got %d"
                                   % f.channels)
    p = f.plane(0)
    out = np.zeros(p.shape, dtype=np.uint8)
    if resolve_orientation(rule, f.width, f.height) == LANDSCAPE:
        rows = np.argmax(p, axis=0)
        out[rows, np.arange(f.width)] = 1
    else:
        cols = np.argmax(p, axis=1)
        out[np.arange(f.height), cols] = 1
    return CoastMask(out)


def extract(f, head, rule="auto"):
    """Dispatch on the predictor head."""
    if head in ("softmax3", "softmax"):
        return extract_softmax(f)
    if head in ("sigmoid1", "sigmoid"):
        return extract_sigmoid(f, rule)
    raise ConfigError("unknown head %r" % head)


def mask_to_path(m, rule="auto"):
    """One entry per primary-axis index: mean of the set secondary coordinates."""
    orientation = resolve_orientation(rule, m.width, m.height)
    grid = m.data.astype(bool)
    if orientation == LANDSCAPE:
        grid = grid.T
    extent = grid.shape[1]
    counts = grid.sum(axis=1)
    sums = (grid * np.arange(extent)).sum(axis=1)
    entries = []
    for i in range(grid.shape[0]):
        if counts[i]:
            entries.append(PathEntry(i, float(sums[i]) / float(counts[i]), True))
        else:
            entries.append(PathEntry(i, float("nan"), False))
    return CoastlinePath(orientation, tuple(entries), length=grid.shape[0], extent=extent)
