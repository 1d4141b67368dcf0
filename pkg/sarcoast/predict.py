"""Pluggable tile predictors and floating-window inference.

tiled_predict slides a square window over the image at every configured
scale. A window of side tile_side * scale is reduced to tile_side, handed
to the predictor, and the prediction is brought back to the window size
and accumulated. Tiles are predicted in parallel but always accumulated in
ascending (scale, row, col) order, so the result does not depend on the
number of worker threads.

Backends:

- constant(value): every channel of every pixel is value
- oracle(cfg): synthetic predictions derived from a known class map
- file(pattern): reads <pattern> with {scale}, {row}, {col} substituted
  by the scale and the window origin in image pixels
- external(command): runs ``<command> <in.fr> <out.fr>``; a nonzero exit
  status is a backend failure
"""
import logging
import math
import os
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import BackendError, ChannelMismatchError, ConfigError, DimensionError, MissingPredictionError
from .raster import LAND, NODATA, SEA, ClassMap, CoastMask, FloatRaster, read_float_raster, write_float_raster
from .resample import resample
from .rng import STREAM_ORACLE, make_rng

log = logging.getLogger(__name__)

HEAD_CHANNELS = {"softmax3": 3, "sigmoid1": 1}
HEAD_ALIASES = {"softmax": "softmax3", "sigmoid": "sigmoid1"}
INPUT_MODES = ("linear", "log")
AGGREGATIONS = ("sum", "coverage_mean")


def canonical_head(head):
    head = HEAD_ALIASES.get(head, head)
    if head not in HEAD_CHANNELS:
        raise ConfigError("unknown head %r (expected softmax3 or sigmoid1)" % head)
    return head


class TileWindow(NamedTuple):
    """A source window: origin (row, col) and side in image pixels at a scale."""
    scale: float
    row: int
    col: int
    side: int


@dataclass(frozen=True)
class TilingConfig:
    tile_side: int = 512
    stride: int = 256
    scales: Tuple[float, ...] = (1.0, 2.0, 3.0)
    smoothing_sigma: float = 2.0
    aggregation: str = "coverage_mean"
    flips: bool = False

    def __post_init__(self):
        if self.tile_side < 1:
            raise ConfigError("tile_side must be >= 1")
        if not 0 < self.stride <= self.tile_side:
            raise ConfigError("stride must satisfy 0 < stride <= tile_side")
        scales = self.scales if isinstance(self.scales, (list, tuple)) else (self.scales,)
        scales = tuple(float(s) for s in scales)
        if not scales or min(scales) < 1:
            raise ConfigError("scales must be non-empty and all >= 1")
        object.__setattr__(self, "scales", scales)
        if self.smoothing_sigma < 0:
            raise ConfigError("smoothing_sigma must be >= 0")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError("aggregation must be one of %s" % (AGGREGATIONS,))


@dataclass(frozen=True)
class OracleConfig:
    """Verification predictor settings.

    coast defaults to the pixels whose 3x3 neighbourhood of truth holds both
    sea and land.
    """
    truth: ClassMap
    sharpness: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0
    coast: Optional[CoastMask] = None

    def __post_init__(self):
        if not self.sharpness > 0:
            raise ConfigError("oracle sharpness must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("oracle noise_sigma must be >= 0")


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _signed_distance(region):
    """Euclidean distance to the region's complement inside, minus the distance
    to the region outside. None when region is empty or everything."""
    if not region.any() or region.all():
        return None
    return ndimage.distance_transform_edt(region) - ndimage.distance_transform_edt(~region)


def truth_coast(truth):
    """Pixels whose 3x3 neighbourhood (clipped at borders) spans sea and land."""
    hi = ndimage.maximum_filter(truth.data, size=3, mode="nearest")
    lo = ndimage.minimum_filter(truth.data, size=3, mode="nearest")
    return CoastMask((hi.astype(np.int16) - lo) == 2)


def oracle_probability_map(cfg, head):
    """Full-image oracle prediction as an (h, w, c) float64 array.

    sigmoid1: p = exp(-sharpness * d^2) with d the distance to the coast.
    softmax3: p_land = logistic(sharpness * s_land) where s_land is the
    signed distance into land; the rest is split between no-data and sea by
    q = logistic(sharpness * s_nodata). Gaussian noise is added per channel,
    values are clamped to [0, 1] and softmax rows renormalised.
    """
    head = canonical_head(head)
    truth = cfg.truth.data
    k = cfg.sharpness
    if head == "sigmoid1":
        coast = (cfg.coast if cfg.coast is not None else truth_coast(cfg.truth)).data.astype(bool)
        if coast.any():
            d = ndimage.distance_transform_edt(~coast)
            p = np.exp(-(d * d) * k)[:, :, None]
        else:
            p = np.zeros(truth.shape + (1,))
    else:
        s_land = _signed_distance(truth == LAND)
        if s_land is None:
            p_land = np.full(truth.shape, 1.0 if (truth == LAND).all() else 0.0)
        else:
            p_land = _logistic(k * s_land)
        s_nd = _signed_distance(truth == NODATA)
        if s_nd is None:
            q = np.full(truth.shape, 1.0 if (truth == NODATA).all() else 0.0)
        else:
            q = _logistic(k * s_nd)
        rest = 1.0 - p_land
        p = np.stack([rest * (1.0 - q), rest * q, p_land], axis=-1)
    if cfg.noise_sigma > 0:
        rng = make_rng(cfg.seed, STREAM_ORACLE)
        p = p + rng.normal(0.0, cfg.noise_sigma, p.shape)
    p = np.clip(p, 0.0, 1.0)
    if head == "softmax3":
        total = p.sum(axis=-1, keepdims=True)
        p = np.where(total > 0, p / np.where(total > 0, total, 1.0), 1.0 / 3.0)
    return p


def _region(full, row, col, h, w):
    """full[row:row+h, col:col+w], mirrored past the bottom/right edges."""
    need_h = max(0, row + h - full.shape[0])
    need_w = max(0, col + w - full.shape[1])
    if need_h or need_w:
        full = np.pad(full, ((0, need_h), (0, need_w), (0, 0)), mode="symmetric")
    return full[row:row + h, col:col + w]


def oracle_predict(cfg, head, window, full=None):
    """Oracle prediction for one source window at full resolution."""
    if full is None:
        full = oracle_probability_map(cfg, head)
    return FloatRaster(_region(full, window.row, window.col, window.side, window.side))


class ConstantBackend:
    max_concurrency = None

    def __init__(self, value, channels):
        self.value = float(value)
        self.channels = channels

    def predict(self, tile, window):
        return FloatRaster(np.full((tile.height, tile.width, self.channels), self.value,
                                   dtype=np.float32))


class OracleBackend:
    max_concurrency = None

    def __init__(self, cfg, head):
        self.cfg = cfg
        self.head = canonical_head(head)
        self._full = None
        self._lock = threading.Lock()

    def full_map(self):
        with self._lock:
            if self._full is None:
                log.debug("computing oracle map (%s)", self.head)
                self._full = oracle_probability_map(self.cfg, self.head)
            return self._full

    def predict(self, tile, window):
        region = oracle_predict(self.cfg, self.head, window, self.full_map())
        return FloatRaster(resample(region.data, tile.height, tile.width, "area"))


class FileBackend:
    max_concurrency = None

    def __init__(self, pattern):
        self.pattern = pattern

    def predict(self, tile, window):
        path = self.pattern.format(scale=window.scale, row=window.row, col=window.col)
        if not os.path.isfile(path):
            raise MissingPredictionError("missing prediction for tile %s: %s" % (tuple(window), path))
        return read_float_raster(path)


class ExternalBackend:
    def __init__(self, command, max_concurrency=1):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.max_concurrency = max_concurrency

    def predict(self, tile, window):
        with tempfile.TemporaryDirectory(prefix="sarcoast-") as tmp:
            src = os.path.join(tmp, "in.fr")
            dst = os.path.join(tmp, "out.fr")
            write_float_raster(tile, src)
            try:
                result = subprocess.run(self.command + [src, dst], capture_output=True, text=True)
            except OSError as e:
                raise BackendError("cannot run %s: %s" % (self.command[0], e))
            if result.returncode != 0:
                raise BackendError("%s exited with status %d: %s" % (
                    self.command[0], result.returncode, result.stderr.strip()))
            if not os.path.isfile(dst):
                raise BackendError("%s wrote no output" % self.command[0])
            return read_float_raster(dst)


@dataclass
class PredictorSpec:
    """One ensemble member: input transform, output head, weight and backend."""
    id: str
    input_mode: str
    head: str
    backend: object
    ensemble_weight: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.head = canonical_head(self.head)
        if self.input_mode not in INPUT_MODES:
            raise ConfigError("predictor %s: input_mode must be linear or log" % self.id)
        if self.ensemble_weight < 0:
            raise ConfigError("predictor %s: ensemble_weight must be >= 0" % self.id)

    @property
    def channels(self):
        return HEAD_CHANNELS[self.head]


def predict_tile(spec, tile, window=None):
    """Run the backend on one tile and check the result against the head."""
    if tile.channels != 1:
        raise ChannelMismatchError("channel mismatch: predictor input must have 1 channel, got %d"
                                   % tile.channels)
    if window is None:
        window = TileWindow(1.0, 0, 0, tile.width)
    out = spec.backend.predict(tile, window)
    if out.channels != spec.channels:
        raise ChannelMismatchError("channel mismatch: head %s expects %d channels, backend %s returned %d"
                                   % (spec.head, spec.channels, spec.id, out.channels))
    if (out.height, out.width) != (tile.height, tile.width):
        raise DimensionError("predictor %s returned %dx%d for a %dx%d tile" % (
            spec.id, out.width, out.height, tile.width, tile.height))
    p = np.clip(out.data.astype(np.float64), 0.0, 1.0)
    if spec.head == "softmax3":
        total = p.sum(axis=-1, keepdims=True)
        p = np.where(total > 0, p / np.where(total > 0, total, 1.0), 1.0 / 3.0)
    return FloatRaster(p)


def window_origins(length, win, step):
    """Window starts covering [0, length); the last one is clamped to the border."""
    if length <= win:
        return [0]
    origins = list(range(0, length - win + 1, step))
    if origins[-1] + win < length:
        origins.append(length - win)
    return origins


def gaussian_kernel(sigma):
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(r, sigma):
    """Separable Gaussian blur per channel, truncated at ceil(3 sigma), mirrored borders."""
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if sigma == 0:
        return r
    k = gaussian_kernel(sigma)
    a = r.data.astype(np.float64)
    a = ndimage.correlate1d(a, k, axis=0, mode="reflect")
    a = ndimage.correlate1d(a, k, axis=1, mode="reflect")
    return FloatRaster(a)


def _predict_window(spec, padded, window, cfg):
    win, ts = window.side, cfg.tile_side
    region = padded[window.row:window.row + win, window.col:window.col + win]
    tile = FloatRaster(resample(region, ts, ts, "area"))
    pred = predict_tile(spec, tile, window).data.astype(np.float64)
    if cfg.flips:
        mirrored = FloatRaster(tile.data[:, ::-1])
        pred = 0.5 * (pred + predict_tile(spec, mirrored, window).data[:, ::-1])
    return resample(pred, win, win, "bilinear")


def tiled_predict(spec, image, cfg=TilingConfig(), threads=1):
    """Floating-window multi-scale prediction of a normalised 1-channel image."""
    if image.channels != 1:
        raise ChannelMismatchError("channel mismatch: tiled_predict needs a 1-channel image")
    h, w = image.height, image.width
    acc = np.zeros((h, w, spec.channels))
    hits = np.zeros((h, w))
    workers = max(1, threads)
    if spec.backend.max_concurrency is not None:
        workers = min(workers, spec.backend.max_concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for scale in cfg.scales:
            win = max(cfg.tile_side, int(round(cfg.tile_side * scale)))
            step = max(1, int(round(cfg.stride * scale)))
            ph, pw = max(h, win), max(w, win)
            padded = np.pad(image.data, ((0, ph - h), (0, pw - w), (0, 0)), mode="symmetric")
            windows = [TileWindow(scale, y, x, win)
                       for y in window_origins(ph, win, step)
                       for x in window_origins(pw, win, step)]
            log.debug("%s: scale %g, %d windows of %d px", spec.id, scale, len(windows), win)
            acc_s = np.zeros((ph, pw, spec.channels))
            hits_s = np.zeros((ph, pw))
            results = pool.map(lambda wd: _predict_window(spec, padded, wd, cfg), windows)
            for wd, pred in zip(windows, results):
                acc_s[wd.row:wd.row + win, wd.col:wd.col + win] += pred
                hits_s[wd.row:wd.row + win, wd.col:wd.col + win] += 1.0
            acc += acc_s[:h, :w]
            hits += hits_s[:h, :w]
    out = acc if cfg.aggregation == "sum" else acc / hits[:, :, None]
    return gaussian_smooth(FloatRaster(out), cfg.smoothing_sigma)
