"""Circular local binary patterns and banded, normalised code histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ImageTooSmall, OutOfBounds
from .imgcore import GrayImage

# Interpolated neighbours within this distance of the centre count as ties
# (bit = 1).  Irrational bilinear weights can make a true tie land a few ulp
# either side of zero.
TIE_TOLERANCE = 1e-9
_SNAP = 1e-9


@dataclass(frozen=True)
class LbpParams:
    P: int = 12
    R: float = 2.0
    uniform: bool = True
    bands: int = 2
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.P < 4:
            raise ValueError("P must be >= 4")
        if self.R <= 0:
            raise ValueError("R must be > 0")
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    @property
    def margin(self) -> int:
        return math.ceil(self.R)

    @property
    def bin_count(self) -> int:
        return self.P * (self.P - 1) + 3 if self.uniform else 1 << self.P

    @property
    def length(self) -> int:
        return self.bin_count * self.bands * self.bands


PRESETS = {
    "p12-r2": LbpParams(P=12, R=2.0),
    "p24-r3": LbpParams(P=24, R=3.0),
}


def neighbour_offsets(P: int, R: float):
    """(dx, dy) of each sampling point; angle 0 points east, y grows downward."""
    angles = 2.0 * np.pi * np.arange(P) / P
    dx = R * np.cos(angles)
    dy = R * np.sin(angles)
    for d in (dx, dy):
        r = np.rint(d)
        close = np.abs(d - r) < _SNAP
        d[close] = r[close]
    return dx, dy


@dataclass(frozen=True, eq=False)
class LbpCodeMap:
    codes: np.ndarray  # int64, -1 outside the valid interior
    margin: int

    @property
    def width(self):
        return self.codes.shape[1]

    @property
    def height(self):
        return self.codes.shape[0]

    @property
    def valid(self):
        return self.codes >= 0


def _neighbour_diffs(data: np.ndarray, P: int, R: float):
    """Yield, per neighbour p, the interpolated intensity minus the centre
    over the valid interior."""
    h, w = data.shape
    m = math.ceil(R)
    ys = slice(m, h - m)
    xs = slice(m, w - m)
    centre = data[ys, xs]
    dx, dy = neighbour_offsets(P, R)
    for p in range(P):
        x0 = math.floor(dx[p])
        y0 = math.floor(dy[p])
        fx = dx[p] - x0
        fy = dy[p] - y0

        def shifted(oy, ox):
            return data[m + oy:h - m + oy, m + ox:w - m + ox] - centre

        a = shifted(y0, x0)
        if fx == 0.0 and fy == 0.0:
            yield a
            continue
        b = shifted(y0, x0 + 1) if fx else a
        top = a + fx * (b - a) if fx else a
        if fy:
            c = shifted(y0 + 1, x0)
            d = shifted(y0 + 1, x0 + 1) if fx else c
            bottom = c + fx * (d - c) if fx else c
            yield top + fy * (bottom - top)
        else:
            yield top


def lbp_code_map(img: GrayImage, params: LbpParams = LbpParams()) -> LbpCodeMap:
    data = img.data
    h, w = data.shape
    m = params.margin
    codes = np.full((h, w), -1, dtype=np.int64)
    if h <= 2 * m or w <= 2 * m:
        return LbpCodeMap(codes, m)
    inner = np.zeros((h - 2 * m, w - 2 * m), dtype=np.int64)
    for p, diff in enumerate(_neighbour_diffs(data, params.P, params.R)):
        inner |= (diff >= -TIE_TOLERANCE).astype(np.int64) << p
    codes[m:h - m, m:w - m] = inner
    return LbpCodeMap(codes, m)


def lbp_code(img: GrayImage, x: int, y: int, params: LbpParams = LbpParams()) -> int:
    """Code of a single pixel; bit p set iff neighbour p >= centre."""
    m = params.margin
    if not (m <= x < img.width - m and m <= y < img.height - m):
        raise OutOfBounds(f"pixel ({x}, {y}) is within {m}px of the border")
    y0, y1 = y - m, y + m + 1
    x0, x1 = x - m, x + m + 1
    patch = GrayImage(img.data[y0:y1, x0:x1])
    return int(lbp_code_map(patch, params).codes[m, m])


def uniform_bins(codes, P: int) -> np.ndarray:
    """Map LBP codes to uniform-pattern bins.

    Bin 0 is all-zeros, bins 1 + (k-1)*P + r hold the codes with k ones
    starting (circularly) at bit r, bin P(P-1)+1 is all-ones and the last bin
    collects every non-uniform code.
    """
    codes = np.asarray(codes, dtype=np.int64)
    full = (1 << P) - 1
    rotated = (codes >> 1) | ((codes & 1) << (P - 1))
    transitions = _popcount(codes ^ rotated)
    ones = _popcount(codes)
    # run start: bit r set while bit r-1 (circularly) is clear
    prev = ((codes << 1) | (codes >> (P - 1))) & full
    start_idx = _lowest_bit_index(codes & ~prev & full)
    out = np.full(codes.shape, P * (P - 1) + 2, dtype=np.int64)
    uni = transitions <= 2
    out[uni & (ones == 0)] = 0
    out[uni & (ones == P)] = P * (P - 1) + 1
    mid = uni & (ones > 0) & (ones < P)
    out[mid] = 1 + (ones[mid] - 1) * P + start_idx[mid]
    return out


@lru_cache(maxsize=8)
def uniform_table(P: int) -> np.ndarray:
    """Full code -> bin lookup table (only sensible for P <= 16)."""
    table = uniform_bins(np.arange(1 << P, dtype=np.int64), P)
    table.flags.writeable = False
    return table


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    count = np.zeros_like(a)
    while np.any(a):
        count += a & 1
        a >>= 1
    return count


def _lowest_bit_index(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    nz = a > 0
    low = a[nz] & -a[nz]
    out[nz] = np.log2(low.astype(np.float64)).astype(np.int64)
    return out


def uniform_bin(code: int, P: int) -> int:
    if not 0 <= code < (1 << P):
        raise ValueError(f"code {code} out of range for P={P}")
    return int(uniform_bins(np.array([code]), P)[0])


def band_edges(n: int, bands: int):
    size = n // bands
    edges = [i * size for i in range(bands)] + [n]
    return list(zip(edges[:-1], edges[1:]))


def lbp_histogram(img: GrayImage, params: LbpParams = LbpParams()) -> np.ndarray:
    """Concatenated per-band code histograms, each divided by (count + eps).

    Bands form a B x B grid over the full image (remainder rows/columns go to
    the last band); only pixels with a valid code contribute.
    """
    cmap = lbp_code_map(img, params)
    codes = cmap.codes
    nbins = params.bin_count
    if params.uniform:
        if params.P <= 16:
            mapped = uniform_table(params.P)[np.maximum(codes, 0)]
        else:
            mapped = uniform_bins(np.maximum(codes, 0), params.P)
        binned = np.where(codes >= 0, mapped, -1)
    else:
        binned = codes
    parts = []
    for (r0, r1) in band_edges(img.height, params.bands):
        for (c0, c1) in band_edges(img.width, params.bands):
            block = binned[r0:r1, c0:c1]
            vals = block[block >= 0]
            if vals.size == 0:
                raise ImageTooSmall(
                    f"band rows {r0}:{r1} cols {c0}:{c1} has no pixel beyond the "
                    f"{cmap.margin}px margin")
            hist = np.bincount(vals, minlength=nbins).astype(np.float64)
            parts.append(hist / (vals.size + params.epsilon))
    return np.concatenate(parts)
