"""Resampling of (H, W) or (H, W, C) arrays.

Two methods are used throughout the pipeline:

- "bilinear": corner-aligned linear interpolation (scipy ``ndimage.zoom``,
  order 1, ``grid_mode=False``). Destination index i samples source
  position i * (src - 1) / (dst - 1), so corners map to corners and an
  equal-size resample is the identity.
- "area": OpenCV ``INTER_AREA``; on a shrink every destination pixel is
  the overlap-weighted mean of the source pixels its footprint covers.
  Values stay within the source range, which keeps soft labels in [0, 1].

Both always return float64.
"""
import cv2
import numpy as np
from scipy import ndimage

METHODS = ("bilinear", "area")


def _bilinear(a, out_h, out_w):
    factors = (out_h / a.shape[0], out_w / a.shape[1], 1.0)
    return ndimage.zoom(a, factors, output=np.float64, order=1, mode="nearest",
                        grid_mode=False, prefilter=False)


def _area(a, out_h, out_w):
    out = cv2.resize(np.ascontiguousarray(a), (out_w, out_h), interpolation=cv2.INTER_AREA)
    # cv2 drops a single channel axis
    return out.reshape(out_h, out_w, a.shape[2])


def resample(array, out_h, out_w, method="bilinear"):
    """Resample array to out_h x out_w."""
    if method not in METHODS:
        raise ValueError("unknown resampling method %r" % method)
    a = np.asarray(array, dtype=np.float64)
    flat = a.ndim == 2
    if flat:
        a = a[:, :, None]
    if a.shape[0] == out_h and a.shape[1] == out_w:
        out = a.copy()
    elif method == "bilinear":
        out = _bilinear(a, out_h, out_w)
    else:
        out = _area(a, out_h, out_w)
    return out[:, :, 0] if flat else out
