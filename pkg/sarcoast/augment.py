"""Training-time augmentation: scaled random crops, flips and rotations,
multi-sample mosaicing and intensity jitter.

A sample is produced in the fixed order crop -> spatial -> mosaic ->
intensity. Each sample draws from its own stream make_rng(seed,
STREAM_AUGMENT, index); within a sample the draws are, in order:

1. crop: side s, then x, then y (integers, inclusive bounds)
2. spatial: three uniforms (flip_h, flip_v, rot90 coins), then k in [1, 3]
3. mosaic, per cell in row-major order: one uniform; when the cell is
   replaced, the donor index, then x, then y
4. intensity: gamma, mul, add (uniforms), the noise field (only when
   noise_sigma > 0), the blur coin, the cropout coin, and when cropout
   fires its width fraction, height fraction, x and y

Every spatial and mosaic step is reflected in the sample's provenance, so
the sample can be rebuilt from its source images (see reconstruct). The
dst rects of a sample's records tile it without overlap: mosaicing clips
the records it paints over to the cells that were kept.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import (
    ChannelMismatchError,
    ConfigError,
    CropTooLargeError,
    DimensionError,
    DonorTooSmallError,
)
from .raster import NODATA, FloatRaster
from .resample import resample
from .rng import STREAM_AUGMENT, make_rng

log = logging.getLogger(__name__)

SPATIAL_OPS = ("flip_h", "flip_v", "rot90")


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


class Source(NamedTuple):
    """A training image with its label raster, addressed by id in provenance."""
    id: str
    image: FloatRaster
    label: FloatRaster


def _check_probability(name, p):
    if not 0.0 <= p <= 1.0:
        raise ConfigError("%s must be a probability in [0, 1], got %r" % (name, p))


def _check_range(name, r):
    if len(r) != 2 or r[0] > r[1]:
        raise ConfigError("%s must be an interval (lo, hi) with lo <= hi" % name)


@dataclass(frozen=True)
class IntensityConfig:
    add_range: Tuple[float, float] = (-0.05, 0.05)
    mul_range: Tuple[float, float] = (0.9, 1.1)
    gamma_range: Tuple[float, float] = (0.8, 1.25)
    noise_sigma: float = 0.02
    blur_prob: float = 0.1
    blur_radius: int = 1
    cropout_prob: float = 0.1
    cropout_max_frac: float = 0.25

    def __post_init__(self):
        for name in ("add_range", "mul_range", "gamma_range"):
            _check_range(name, getattr(self, name))
        if self.gamma_range[0] <= 0:
            raise ConfigError("gamma_range must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        _check_probability("blur_prob", self.blur_prob)
        _check_probability("cropout_prob", self.cropout_prob)
        if not 0 < self.cropout_max_frac < 1:
            raise ConfigError("cropout_max_frac must be in (0, 1)")

    @classmethod
    def identity(cls):
        return cls(add_range=(0.0, 0.0), mul_range=(1.0, 1.0), gamma_range=(1.0, 1.0),
                   noise_sigma=0.0, blur_prob=0.0, cropout_prob=0.0)


@dataclass(frozen=True)
class MosaicSpec:
    grid_rows: int = 2
    grid_cols: int = 2
    replace_prob: float = 0.25
    enabled: bool = True

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigError("mosaic grid must be at least 1x1")
        _check_probability("replace_prob", self.replace_prob)


@dataclass(frozen=True)
class AugmentConfig:
    crop_side_min: int = 1024
    crop_side_max: int = 1536
    model_side: int = 512
    flip_h: float = 0.5
    flip_v: float = 0.5
    rot90: float = 0.5
    intensity: IntensityConfig = field(default_factory=IntensityConfig)
    mosaic: MosaicSpec = field(default_factory=MosaicSpec)
    seed: int = 0

    def __post_init__(self):
        if self.crop_side_min > self.crop_side_max:
            raise ConfigError("crop_side_min must not exceed crop_side_max")
        if self.crop_side_min < 1 or self.model_side < 1:
            raise ConfigError("crop and model sides must be >= 1")
        for name in ("flip_h", "flip_v", "rot90"):
            _check_probability(name, getattr(self, name))


@dataclass(frozen=True)
class ProvenanceRecord:
    """Source region src of source_id, fitted to the pre-op footprint of fit,
    transformed by ops and painted at fit. Only the dst part of fit is
    visible in the sample; fit is None when it equals dst."""
    source_id: str
    src: Rect
    dst: Rect
    ops: Tuple[str, ...] = ()
    fit: Optional[Rect] = None

    @property
    def footprint(self):
        return self.dst if self.fit is None else self.fit

    def clipped(self, rect):
        """This record restricted to rect, or None when they do not overlap."""
        part = intersect(self.dst, rect)
        if part is None:
            return None
        return ProvenanceRecord(self.source_id, self.src, part, self.ops, self.footprint)

    def to_dict(self):
        return {
            "source": self.source_id,
            "src": list(self.src),
            "dst": list(self.dst),
            "fit": list(self.footprint),
            "ops": list(self.ops),
        }


def intersect(a, b):
    x0, y0 = max(a.x, b.x), max(a.y, b.y)
    x1, y1 = min(a.x + a.w, b.x + b.w), min(a.y + a.h, b.y + b.h)
    if x1 <= x0 or y1 <= y0:
        return None
    return Rect(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class Sample:
    image: FloatRaster
    label: FloatRaster
    provenance: Tuple[ProvenanceRecord, ...] = ()


def _fit(region, h, w, method):
    return resample(region, h, w, method).astype(np.float32)


def _op_array(a, op):
    if op == "flip_h":
        return a[:, ::-1]
    if op == "flip_v":
        return a[::-1]
    if op == "rot90":
        return np.rot90(a, 1, axes=(0, 1))
    raise ValueError("unknown spatial op %r" % op)


def _op_rect(r, op, h, w):
    """Where rect r lands after op on an h x w array."""
    if op == "flip_h":
        return Rect(w - r.x - r.w, r.y, r.w, r.h)
    if op == "flip_v":
        return Rect(r.x, h - r.y - r.h, r.w, r.h)
    return Rect(r.y, w - r.x - r.w, r.h, r.w)


def apply_op(sample, op):
    """Apply one spatial op to image, label and provenance alike."""
    h, w = sample.image.height, sample.image.width
    provenance = tuple(
        ProvenanceRecord(p.source_id, p.src, _op_rect(p.dst, op, h, w), p.ops + (op,),
                         None if p.fit is None else _op_rect(p.fit, op, h, w))
        for p in sample.provenance)
    return Sample(FloatRaster(_op_array(sample.image.data, op)),
                  FloatRaster(_op_array(sample.label.data, op)),
                  provenance)


def random_crop_scale(source, cfg, rng):
    """Square crop of random side in [crop_side_min, crop_side_max], resized to model_side."""
    h, w = source.image.height, source.image.width
    if (source.label.height, source.label.width) != (h, w):
        raise DimensionError("label of %s does not match its image" % source.id)
    limit = min(h, w)
    if cfg.crop_side_min > limit:
        raise CropTooLargeError("%s is %dx%d, smaller than crop_side_min %d"
                                % (source.id, w, h, cfg.crop_side_min))
    hi = min(cfg.crop_side_max, limit)
    side = int(rng.integers(cfg.crop_side_min, hi, endpoint=True))
    x = int(rng.integers(0, w - side, endpoint=True))
    y = int(rng.integers(0, h - side, endpoint=True))
    m = cfg.model_side
    image = _fit(source.image.data[y:y + side, x:x + side], m, m, "bilinear")
    label = _fit(source.label.data[y:y + side, x:x + side], m, m, "area")
    record = ProvenanceRecord(source.id, Rect(x, y, side, side), Rect(0, 0, m, m))
    return Sample(FloatRaster(image), FloatRaster(label), (record,))


def spatial_jitter(sample, cfg, rng):
    coins = rng.random(3)
    k = int(rng.integers(1, 4))
    ops = []
    if coins[0] < cfg.flip_h:
        ops.append("flip_h")
    if coins[1] < cfg.flip_v:
        ops.append("flip_v")
    if coins[2] < cfg.rot90:
        ops.extend(["rot90"] * k)
    for op in ops:
        sample = apply_op(sample, op)
    return sample


def intensity_jitter(sample, cfg, rng):
    """Value-only jitter of the image; cropout also blanks the label."""
    ic = cfg.intensity
    gamma = rng.uniform(*ic.gamma_range)
    mul = rng.uniform(*ic.mul_range)
    add = rng.uniform(*ic.add_range)
    x = sample.image.data.astype(np.float64)
    noise = rng.normal(0.0, ic.noise_sigma, x.shape) if ic.noise_sigma > 0 else None
    blur = rng.random() < ic.blur_prob
    cropout = rng.random() < ic.cropout_prob

    x = np.power(np.clip(x, 0.0, None), gamma)
    x = x * mul
    x = x + add
    if noise is not None:
        x = x + noise
    if blur:
        size = 2 * ic.blur_radius + 1
        x = ndimage.uniform_filter(x, size=(size, size, 1), mode="reflect")
    label = sample.label.data
    if cropout:
        h, w = x.shape[:2]
        side = math.sqrt(ic.cropout_max_frac)
        cw = max(1, int(rng.uniform(0.0, side) * w))
        ch = max(1, int(rng.uniform(0.0, side) * h))
        cx = int(rng.integers(0, w - cw, endpoint=True))
        cy = int(rng.integers(0, h - ch, endpoint=True))
        x[cy:cy + ch, cx:cx + cw] = 0.0
        label = label.copy()
        label[cy:cy + ch, cx:cx + cw] = 0.0
        if label.shape[2] >= 3:
            label[cy:cy + ch, cx:cx + cw, NODATA] = 1.0
    x = np.clip(x, 0.0, 1.0)
    return Sample(FloatRaster(x), FloatRaster(label), sample.provenance)


def mosaic_cells(h, w, rows, cols):
    """Grid rectangles in row-major order; the last row/column takes the remainder."""
    if h < rows or w < cols:
        raise DimensionError("%dx%d sample cannot hold a %dx%d grid" % (w, h, cols, rows))
    ch, cw = h // rows, w // cols
    heights = [ch] * (rows - 1) + [h - ch * (rows - 1)]
    widths = [cw] * (cols - 1) + [w - cw * (cols - 1)]
    cells = []
    y = 0
    for rh in heights:
        x = 0
        for rw in widths:
            cells.append(Rect(x, y, rw, rh))
            x += rw
        y += rh
    return cells


def multi_sample_mosaic(sample, donors, spec, rng):
    """Replace grid cells with same-sized regions of donor images, pasted raw."""
    if not spec.enabled or spec.replace_prob <= 0:
        return sample
    if not donors:
        raise ConfigError("mosaicing needs at least one donor image")
    image = sample.image.data.copy()
    label = sample.label.data.copy()
    records = []
    replaced = False
    for cell in mosaic_cells(image.shape[0], image.shape[1], spec.grid_rows, spec.grid_cols):
        if not rng.random() < spec.replace_prob:
            records.extend(part for part in (p.clipped(cell) for p in sample.provenance) if part)
            continue
        donor = donors[int(rng.integers(len(donors)))]
        if donor.image.height < cell.h or donor.image.width < cell.w:
            raise DonorTooSmallError("donor %s (%dx%d) cannot supply a %dx%d cell" % (
                donor.id, donor.image.width, donor.image.height, cell.w, cell.h))
        if donor.label.channels != label.shape[2]:
            raise ChannelMismatchError("donor %s has %d label channels, sample has %d" % (
                donor.id, donor.label.channels, label.shape[2]))
        sx = int(rng.integers(0, donor.image.width - cell.w, endpoint=True))
        sy = int(rng.integers(0, donor.image.height - cell.h, endpoint=True))
        dst = (slice(cell.y, cell.y + cell.h), slice(cell.x, cell.x + cell.w))
        image[dst] = donor.image.data[sy:sy + cell.h, sx:sx + cell.w]
        label[dst] = donor.label.data[sy:sy + cell.h, sx:sx + cell.w]
        records.append(ProvenanceRecord(donor.id, Rect(sx, sy, cell.w, cell.h), cell))
        replaced = True
    if not replaced:
        return sample
    return Sample(FloatRaster(image), FloatRaster(label), tuple(records))


def augment_sample(sources, index, cfg):
    """Produce sample number index; depends only on (sources, index, cfg)."""
    rng = make_rng(cfg.seed, STREAM_AUGMENT, index)
    primary = sources[index % len(sources)]
    donors = [s for s in sources if s is not primary] or [primary]
    sample = random_crop_scale(primary, cfg, rng)
    sample = spatial_jitter(sample, cfg, rng)
    sample = multi_sample_mosaic(sample, donors, cfg.mosaic, rng)
    return intensity_jitter(sample, cfg, rng)


def generate_samples(sources, count, cfg, threads=1):
    if not sources:
        raise ConfigError("augmentation needs at least one source image")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        samples = list(pool.map(lambda i: augment_sample(sources, i, cfg), range(count)))
    log.info("generated %d samples from %d sources", count, len(sources))
    return samples


def reconstruct(provenance, sources, shape, label_channels):
    """Repaint image and label from provenance records.

    sources maps source id to Source. Intensity jitter is not recorded, so
    this reproduces a sample only up to its spatial and mosaic steps.
    """
    h, w = shape
    image = np.zeros((h, w, 1), dtype=np.float32)
    label = np.zeros((h, w, label_channels), dtype=np.float32)
    for rec in provenance:
        src = sources[rec.source_id]
        fit = rec.footprint
        fh, fw = fit.h, fit.w
        if rec.ops.count("rot90") % 2:
            fh, fw = fw, fh
        window = (slice(rec.src.y, rec.src.y + rec.src.h), slice(rec.src.x, rec.src.x + rec.src.w))
        part_img = _fit(src.image.data[window], fh, fw, "bilinear")
        part_lab = _fit(src.label.data[window], fh, fw, "area")
        for op in rec.ops:
            part_img = _op_array(part_img, op)
            part_lab = _op_array(part_lab, op)
        visible = (slice(rec.dst.y - fit.y, rec.dst.y - fit.y + rec.dst.h),
                   slice(rec.dst.x - fit.x, rec.dst.x - fit.x + rec.dst.w))
        dst = (slice(rec.dst.y, rec.dst.y + rec.dst.h), slice(rec.dst.x, rec.dst.x + rec.dst.w))
        image[dst] = part_img[visible]
        label[dst] = part_lab[visible]
    return image, label
