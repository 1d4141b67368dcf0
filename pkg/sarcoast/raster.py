"""Raster and coastline types plus the file formats the pipeline exchanges.

Formats:

- 16-bit PGM: ``P5\\n<w> <h>\\n65535\\n`` followed by w*h big-endian u16.
- Float raster (.fr): ``FR <w> <h> <c>\\n`` followed by w*h*c little-endian
  IEEE-754 f32, row-major and channel-interleaved, so pixel (x, y) channel k
  lives at offset (y*w + x)*c + k.
- Coastline CSV: header ``x,y`` (landscape) or ``y,x`` (portrait); one row
  per primary-axis index, ``<index>,<coordinate>``, with an empty second
  field for an index where no coastline was found.
- Points CSV: header ``x,y`` and decimal coordinates.

All types are immutable: their arrays are read-only after construction.
"""
import csv
import logging
import math
import os
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import (
    CoordinateRangeError,
    DimensionError,
    FormatError,
    MissingFileError,
    PathOrderError,
)

log = logging.getLogger(__name__)

MAXVAL = 65535
SEA, NODATA, LAND = 0, 1, 2
CLASS_SCALE = 32767
CHANNELS = (1, 3, 4)

LANDSCAPE = "landscape"
PORTRAIT = "portrait"
ORIENTATIONS = (LANDSCAPE, PORTRAIT)


def _frozen(array, dtype):
    a = np.array(array, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_size(shape):
    if len(shape) < 2 or shape[0] < 1 or shape[1] < 1:
        raise DimensionError("raster must be at least 1x1, got shape %s" % (shape,))


@dataclass(frozen=True)
class RasterImage:
    """16-bit single-channel SAR intensities, shape (height, width)."""
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise DimensionError("RasterImage expects a 2-D array, got %d-D" % a.ndim)
        _check_size(a.shape)
        if a.size and (a.min() < 0 or a.max() > MAXVAL):
            raise FormatError("intensity outside [0, 65535]")
        object.__setattr__(self, "data", _frozen(a, np.uint16))

    @classmethod
    def from_values(cls, width, height, values):
        values = np.asarray(values)
        if values.size != width * height:
            raise DimensionError("expected %d values, got %d" % (width * height, values.size))
        return cls(values.reshape(height, width))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class FloatRaster:
    """Float32 raster of shape (height, width, channels), channels in {1, 3, 4}."""
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise DimensionError("FloatRaster expects (h, w, c), got %d-D" % a.ndim)
        _check_size(a.shape)
        if a.shape[2] not in CHANNELS:
            raise FormatError("unsupported channel count %d" % a.shape[2])
        a = _frozen(a, np.float32)
        if not np.isfinite(a).all():
            raise FormatError("float raster contains non-finite values")
        object.__setattr__(self, "data", a)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[2]

    def plane(self, k=0):
        return self.data[:, :, k]


@dataclass(frozen=True)
class ClassMap:
    """Per-pixel labels: 0=sea, 1=no-data, 2=land."""
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise DimensionError("ClassMap expects a 2-D array")
        _check_size(a.shape)
        if not np.isin(a, (SEA, NODATA, LAND)).all():
            raise FormatError("class labels must be 0, 1 or 2")
        object.__setattr__(self, "data", _frozen(a, np.uint8))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class CoastMask:
    """Binary coastline image; 1 marks coastline."""
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise DimensionError("CoastMask expects a 2-D array")
        _check_size(a.shape)
        if a.dtype != np.bool_ and not np.isin(a, (0, 1)).all():
            raise FormatError("coast mask values must be 0 or 1")
        object.__setattr__(self, "data", _frozen(a, np.uint8))

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


class PathEntry(NamedTuple):
    index: int
    coord: float
    present: bool


class EvaluationPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class CoastlinePath:
    """Ordered per-column (landscape) or per-row (portrait) coastline.

    length and extent are the primary and secondary axis sizes when known;
    a path read from CSV does not carry them.
    """
    orientation: str
    entries: Tuple[PathEntry, ...]
    length: Optional[int] = None
    extent: Optional[int] = None

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise FormatError("unknown orientation %r" % self.orientation)
        entries = tuple(PathEntry(int(e[0]), float(e[1]) if e[2] else math.nan, bool(e[2]))
                        for e in self.entries)
        previous = -1
        for e in entries:
            if e.index <= previous:
                raise PathOrderError("primary-axis index %d after %d is not increasing"
                                     % (e.index, previous))
            if e.index < 0 or (self.length is not None and e.index >= self.length):
                raise CoordinateRangeError("primary-axis index %d out of range" % e.index)
            if e.present:
                if not math.isfinite(e.coord) or e.coord < 0 or (
                        self.extent is not None and e.coord >= self.extent):
                    raise CoordinateRangeError("coordinate %r at index %d out of range"
                                               % (e.coord, e.index))
            previous = e.index
        object.__setattr__(self, "entries", entries)

    @property
    def axis_length(self):
        if self.length is not None:
            return self.length
        return self.entries[-1].index + 1 if self.entries else 0

    def coords(self, length=None):
        """Dense float array over the primary axis, NaN where absent."""
        n = length if length is not None else self.axis_length
        out = np.full(n, np.nan)
        for e in self.entries:
            if e.present and e.index < n:
                out[e.index] = e.coord
        return out

    @classmethod
    def from_coords(cls, orientation, coords, extent=None):
        """Build a dense path from an array with NaN marking absent indices."""
        coords = np.asarray(coords, dtype=np.float64)
        entries = tuple(PathEntry(i, float(c), not math.isnan(c)) for i, c in enumerate(coords))
        return cls(orientation, entries, length=len(coords), extent=extent)


def _read_bytes(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise MissingFileError("no such file: %s" % path)
    except IsADirectoryError:
        raise MissingFileError("not a file: %s" % path)


def _pgm_header(data, path):
    """Parse the three header tokens; return (width, height, maxval, payload offset)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("%s: malformed PGM header" % path)
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("%s: not a binary PGM (magic %r)" % (path, tokens[0]))
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("%s: malformed PGM header" % path)
    if width < 1 or height < 1:
        raise FormatError("%s: bad PGM dimensions %dx%d" % (path, width, height))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("%s: malformed PGM header" % path)
    return width, height, maxval, pos + 1


def read_raster(path):
    """Read a 16-bit binary PGM into a RasterImage."""
    data = _read_bytes(path)
    width, height, maxval, offset = _pgm_header(data, path)
    if maxval != MAXVAL:
        raise FormatError("%s: maxval %d, expected 65535" % (path, maxval))
    expected = width * height * 2
    payload = data[offset:]
    if len(payload) < expected:
        raise FormatError("%s: truncated payload, %d of %d bytes" % (path, len(payload), expected))
    if len(payload) > expected:
        raise FormatError("%s: %d trailing bytes after payload" % (path, len(payload) - expected))
    values = np.frombuffer(payload, dtype=">u2").reshape(height, width)
    log.debug("read %s (%dx%d)", path, width, height)
    return RasterImage(values)


def write_raster(image, path):
    header = b"P5\n%d %d\n%d\n" % (image.width, image.height, MAXVAL)
    with open(path, "wb") as f:
        f.write(header)
        f.write(image.data.astype(">u2").tobytes())


def read_class_map(path):
    img = read_raster(path)
    labels = np.rint(img.data / CLASS_SCALE).astype(np.uint8)
    return ClassMap(labels)


def write_class_map(classes, path):
    write_raster(RasterImage(classes.data.astype(np.uint32) * CLASS_SCALE), path)


def read_mask(path):
    img = read_raster(path)
    return CoastMask((img.data > 0).astype(np.uint8))


def write_mask(mask, path):
    write_raster(RasterImage(mask.data.astype(np.uint32) * MAXVAL), path)


def write_float_raster(raster, path):
    header = b"FR %d %d %d\n" % (raster.width, raster.height, raster.channels)
    with open(path, "wb") as f:
        f.write(header)
        f.write(raster.data.astype("<f4").tobytes())


def read_float_raster(path):
    data = _read_bytes(path)
    newline = data.find(b"\n")
    if newline < 0:
        raise FormatError("%s: missing float raster header" % path)
    parts = data[:newline].split(b" ")
    if len(parts) != 4 or parts[0] != b"FR":
        raise FormatError("%s: malformed float raster header" % path)
    try:
        width, height, channels = (int(p) for p in parts[1:])
    except ValueError:
        raise FormatError("%s: malformed float raster header" % path)
    if channels not in CHANNELS:
        raise FormatError("%s: unsupported channel count %d" % (path, channels))
    if width < 1 or height < 1:
        raise FormatError("%s: bad dimensions %dx%d" % (path, width, height))
    payload = data[newline + 1:]
    expected = width * height * channels * 4
    if len(payload) != expected:
        raise FormatError("%s: payload is %d bytes, header implies %d"
                          % (path, len(payload), expected))
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
    return FloatRaster(values)


def _axis_names(orientation):
    return ("x", "y") if orientation == LANDSCAPE else ("y", "x")


def write_coastline_csv(path_obj, path):
    with open(path, "w", newline="") as f:
        f.write("%s,%s\n" % _axis_names(path_obj.orientation))
        for e in path_obj.entries:
            if e.present:
                f.write("%d,%r\n" % (e.index, e.coord))
            else:
                f.write("%d,\n" % e.index)


def read_coastline_csv(path, length=None, extent=None):
    if not os.path.isfile(path):
        raise MissingFileError("no such file: %s" % path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError("%s: empty coastline file" % path)
    header = tuple(c.strip() for c in rows[0])
    if header == ("x", "y"):
        orientation = LANDSCAPE
    elif header == ("y", "x"):
        orientation = PORTRAIT
    else:
        raise FormatError("%s: header must be 'x,y' or 'y,x', got %r" % (path, ",".join(header)))
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError("%s:%d: expected 2 fields" % (path, lineno))
        try:
            index = int(row[0])
            if row[1].strip() == "":
                entries.append(PathEntry(index, math.nan, False))
            else:
                entries.append(PathEntry(index, float(row[1]), True))
        except ValueError:
            raise FormatError("%s:%d: malformed row %r" % (path, lineno, ",".join(row)))
    return CoastlinePath(orientation, tuple(entries), length=length, extent=extent)


def read_points_csv(path):
    if not os.path.isfile(path):
        raise MissingFileError("no such file: %s" % path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(c.strip() for c in rows[0]) != ("x", "y"):
        raise FormatError("%s: points file must start with 'x,y'" % path)
    points = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            points.append(EvaluationPoint(float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise FormatError("%s:%d: malformed point %r" % (path, lineno, ",".join(row)))
    return points


def write_points_csv(points, path):
    with open(path, "w", newline="") as f:
        f.write("x,y\n")
        for p in points:
            f.write("%r,%r\n" % (float(p.x), float(p.y)))
