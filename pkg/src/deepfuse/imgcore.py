"""Grayscale rasters: decoding, resizing, log scaling and frame similarity.

Intensities are kept as float64 in [0, 255] between stages; quantization to
8 bits only happens in :func:`encode_pgm`.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MalformedFile, UnsupportedFormat

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel image, ``data[y, x]`` in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 255.0:
            raise ValueError("GrayImage values must lie in [0, 255]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, width, height, values):
        return cls(np.asarray(values, dtype=np.float64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"GrayImage(w={self.width}, h={self.height})"


# -- decoding -----------------------------------------------------------------

def sniff_format(raw: bytes) -> str:
    if raw[:8] == PNG_MAGIC:
        return "PNG"
    if raw[:2] in (b"P2", b"P5"):
        return "PGM"
    raise UnsupportedFormat("unrecognised image signature")


def decode_image(raw: bytes, fmt: str | None = None) -> GrayImage:
    """Decode PGM (P2/P5) or PNG bytes into a :class:`GrayImage`.

    Colour PNGs are reduced to luminance with BT.601 weights, computed in
    floating point so no rounding happens here.
    """
    if not raw:
        raise MalformedFile("empty byte stream")
    fmt = (fmt or sniff_format(raw)).upper()
    if fmt == "PGM":
        return _decode_pgm(raw)
    if fmt == "PNG":
        return _decode_png(raw)
    raise UnsupportedFormat(f"unsupported format {fmt!r}")


def _pgm_tokens(raw: bytes, count: int):
    """Read ``count`` header tokens, skipping comments; returns (tokens, offset)."""
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedFile("truncated PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos


def _decode_pgm(raw: bytes) -> GrayImage:
    tokens, pos = _pgm_tokens(raw, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise MalformedFile(f"bad PGM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedFile(f"non-numeric PGM header field: {exc}") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise MalformedFile(f"invalid PGM geometry {width}x{height} maxval={maxval}")
    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = count * dtype.itemsize
        body = raw[pos:pos + need]
        if len(body) < need:
            raise MalformedFile(f"truncated PGM raster: {len(body)} of {need} bytes")
        values = np.frombuffer(body, dtype=dtype).astype(np.float64)
    else:
        text = re.sub(rb"#[^\n]*", b"", raw[pos:])
        try:
            values = np.array([int(t) for t in text.split()], dtype=np.float64)
        except ValueError as exc:
            raise MalformedFile(f"bad P2 sample: {exc}") from None
        if values.size < count:
            raise MalformedFile(f"truncated PGM raster: {values.size} of {count} samples")
        values = values[:count]
    if values.max(initial=0) > maxval:
        raise MalformedFile("PGM sample exceeds maxval")
    if maxval != 255:
        values = values * (255.0 / maxval)
    return GrayImage(values.reshape(height, width))


def _decode_png(raw: bytes) -> GrayImage:
    from PIL import Image, UnidentifiedImageError

    if raw[:8] != PNG_MAGIC:
        raise MalformedFile("missing PNG signature")
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                top = 65535.0 if mode.startswith("I;16") or arr.max(initial=0) > 255 else 255.0
                arr = np.clip(arr, 0, top) * (255.0 / top)
            elif mode in ("L", "1", "LA"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                r, g, b = LUMA_WEIGHTS
                arr = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise MalformedFile(f"cannot decode PNG: {exc}") from None
    return GrayImage(np.clip(arr, 0.0, 255.0))


def load_image(path) -> GrayImage:
    return decode_image(Path(path).read_bytes())


def encode_pgm(img: GrayImage) -> bytes:
    """Binary (P5) 8-bit PGM; intensities are rounded and clipped."""
    q = np.clip(np.rint(img.data), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + q.tobytes()


def save_pgm(img: GrayImage, path) -> None:
    Path(path).write_bytes(encode_pgm(img))


def to_gray_image(arr) -> GrayImage:
    """Wrap an arbitrary real raster, rescaling it linearly into [0, 255]."""
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        a = (a - lo) * (255.0 / (hi - lo))
    else:
        a = np.zeros_like(a)
    return GrayImage(a)


# -- intensity / geometry transforms ----------------------------------------

def _axis_coords(n_src, n_dst):
    # half-pixel centre alignment; identity when n_src == n_dst
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, pos - i0


def resize(img: GrayImage, target_w: int, target_h: int) -> GrayImage:
    """Bilinear resize to exactly ``target_w`` x ``target_h``."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target size must be at least 1x1")
    if (target_w, target_h) == (img.width, img.height):
        return img
    src = img.data
    x0, x1, fx = _axis_coords(img.width, target_w)
    y0, y1, fy = _axis_coords(img.height, target_h)
    # lerp form a + f*(b - a) keeps constant regions exactly constant
    top = src[y0][:, x0] + fx * (src[y0][:, x1] - src[y0][:, x0])
    bot = src[y1][:, x0] + fx * (src[y1][:, x1] - src[y1][:, x0])
    out = top + fy[:, None] * (bot - top)
    return GrayImage(np.clip(out, 0.0, 255.0))


_LOG256 = math.log(256.0)


def log_transform(img: GrayImage) -> GrayImage:
    """Map v -> 255 ln(1 + v) / ln 256."""
    out = 255.0 * np.log1p(img.data) / _LOG256
    return GrayImage(np.clip(out, 0.0, 255.0))


def frame_similarity(a: GrayImage, b: GrayImage) -> float:
    """Normalised mean absolute difference; 0 for identical frames, 1 for black vs white."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.data - b.data)) / 255.0)
