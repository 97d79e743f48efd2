"""Histogram of oriented gradients with orientation-interpolated votes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall
from .imgcore import GrayImage


@dataclass(frozen=True)
class HogParams:
    cell_size: int = 8
    block_size: int = 2
    bin_count: int = 9
    block_stride: int = 1
    epsilon: float = 1e-7
    signed: bool = False
    gradient: str = "central"  # or "sobel"

    def __post_init__(self):
        if self.cell_size < 2:
            raise ValueError("cell_size must be >= 2")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")
        if not 1 <= self.block_stride <= self.block_size:
            raise ValueError("block_stride must lie in [1, block_size]")
        if self.gradient not in ("central", "sobel"):
            raise ValueError(f"unknown gradient operator {self.gradient!r}")

    @property
    def span(self) -> float:
        return 360.0 if self.signed else 180.0

    def layout(self, width: int, height: int):
        """(cells_x, cells_y, blocks_x, blocks_y) for an image size."""
        cx, cy = width // self.cell_size, height // self.cell_size
        bx = (cx - self.block_size) // self.block_stride + 1 if cx >= self.block_size else 0
        by = (cy - self.block_size) // self.block_stride + 1 if cy >= self.block_size else 0
        return cx, cy, bx, by

    def length(self, width: int = 28, height: int = 28) -> int:
        _, _, bx, by = self.layout(width, height)
        return bx * by * self.block_size ** 2 * self.bin_count


PRESETS = {
    "default": HogParams(),
    "signed-18": HogParams(bin_count=18, signed=True),
}


@dataclass(frozen=True, eq=False)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation: np.ndarray  # degrees, in [0, span)


def _central(data, axis):
    # I(x+1) - I(x-1) inside, 2 * one-sided difference on the border so the
    # scaling matches the interior
    g = np.empty_like(data)
    if axis == 1:
        g[:, 1:-1] = data[:, 2:] - data[:, :-2]
        g[:, 0] = 2.0 * (data[:, 1] - data[:, 0])
        g[:, -1] = 2.0 * (data[:, -1] - data[:, -2])
    else:
        g[1:-1, :] = data[2:, :] - data[:-2, :]
        g[0, :] = 2.0 * (data[1, :] - data[0, :])
        g[-1, :] = 2.0 * (data[-1, :] - data[-2, :])
    return g


def _sobel(data):
    from scipy import ndimage

    gx = ndimage.sobel(data, axis=1, mode="nearest")
    gy = ndimage.sobel(data, axis=0, mode="nearest")
    return gx, gy


def compute_gradients(img: GrayImage, params: HogParams = HogParams()) -> GradientField:
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall("gradients need an image of at least 3x3")
    data = img.data
    if params.gradient == "sobel":
        gx, gy = _sobel(data)
    else:
        gx, gy = _central(data, 1), _central(data, 0)
    mag = np.sqrt(gx * gx + gy * gy)
    theta = np.degrees(np.arctan2(gy, gx)) % params.span
    theta[mag == 0] = 0.0
    # % can return span itself for tiny negative angles
    theta[theta >= params.span] = 0.0
    return GradientField(gx, gy, mag, theta)


def cell_histograms(field: GradientField, params: HogParams = HogParams()) -> np.ndarray:
    """Per-cell orientation histograms, shape (cells_y, cells_x, bin_count).

    Each pixel splits its magnitude linearly between the two nearest bin
    centres, which sit at (k + 0.5) * span / bin_count.  Pixels beyond the
    last full cell are ignored.
    """
    h, w = field.magnitude.shape
    cs = params.cell_size
    cx, cy, _, _ = params.layout(w, h)
    if cx < 1 or cy < 1:
        raise ImageTooSmall(f"image {w}x{h} holds no full {cs}x{cs} cell")
    mag = field.magnitude[:cy * cs, :cx * cs]
    theta = field.orientation[:cy * cs, :cx * cs]
    nb = params.bin_count
    pos = theta / (params.span / nb) - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.intp) % nb
    hi = (lo + 1) % nb
    cell_index = (np.arange(cy * cs)[:, None] // cs) * cx + (np.arange(cx * cs)[None, :] // cs)
    hist = np.zeros(cx * cy * nb)
    np.add.at(hist, (cell_index * nb + lo).ravel(), (mag * (1.0 - frac)).ravel())
    np.add.at(hist, (cell_index * nb + hi).ravel(), (mag * frac).ravel())
    return hist.reshape(cy, cx, nb)


def block_vectors(cells: np.ndarray, params: HogParams = HogParams()) -> np.ndarray:
    """Raw (unnormalised) block vectors, shape (blocks_y, blocks_x, block_len)."""
    cy, cx, nb = cells.shape
    b, s = params.block_size, params.block_stride
    by = (cy - b) // s + 1
    bx = (cx - b) // s + 1
    out = np.empty((by, bx, b * b * nb))
    for j in range(by):
        for i in range(bx):
            out[j, i] = cells[j * s:j * s + b, i * s:i * s + b].ravel()
    return out


def hog_descriptor(img: GrayImage, params: HogParams = HogParams()) -> np.ndarray:
    """Concatenated block vectors, each scaled by 1 / sqrt(||v||^2 + eps)."""
    cx, cy, bx, by = params.layout(img.width, img.height)
    if bx < 1 or by < 1:
        raise ImageTooSmall(
            f"image {img.width}x{img.height} holds no full block of "
            f"{params.block_size}x{params.block_size} cells")
    cells = cell_histograms(compute_gradients(img, params), params)
    blocks = block_vectors(cells, params)
    norms = np.sqrt(np.sum(blocks * blocks, axis=2, keepdims=True) + params.epsilon)
    return (blocks / norms).ravel()


def magnitude_image(field: GradientField) -> GrayImage:
    """Magnitude map rescaled to [0, 255], for debug dumps."""
    m = field.magnitude
    top = m.max()
    return GrayImage(m * (255.0 / top) if top > 0 else np.zeros_like(m))
