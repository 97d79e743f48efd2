"""KAZE features: nonlinear diffusion scale space, Hessian keypoints,
M-SURF descriptors and a fixed-length vector of the strongest keypoints.

Internally the image is shifted by its minimum and divided by 255, so the
detector threshold is expressed on a [0, 1] intensity scale and adding a
constant to the input leaves every intermediate array bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import GrayImage

DESCRIPTOR_DIMS = 64


@dataclass(frozen=True)
class KazeParams:
    octaves: int = 2
    sublevels: int = 4
    contrast_k: float | None = None  # None: percentile rule below
    contrast_percentile: float = 70.0
    detector_threshold: float = 1e-3
    per_kp_dims: int = DESCRIPTOR_DIMS
    m: int = 256
    base_smoothing: float = 1.6
    conductivity_smoothing: float = 1.0
    derivative_factor: float = 1.5
    min_size: int = 16

    def __post_init__(self):
        if self.octaves < 1:
            raise ValueError("octaves must be >= 1")
        if self.sublevels < 2:
            raise ValueError("sublevels must be >= 2")
        if self.per_kp_dims != DESCRIPTOR_DIMS:
            raise ValueError("only 64-dimensional descriptors are supported")
        if self.m < self.per_kp_dims or self.m % self.per_kp_dims:
            raise ValueError("m must be a positive multiple of per_kp_dims")
        if self.detector_threshold <= 0:
            raise ValueError("detector_threshold must be > 0")
        if self.contrast_k is not None and self.contrast_k <= 0:
            raise ValueError("contrast_k must be > 0")

    @property
    def max_keypoints(self) -> int:
        return self.m // self.per_kp_dims

    def sigma(self, level: float) -> float:
        return self.base_smoothing * 2.0 ** (level / self.sublevels)


PRESETS = {
    "default": KazeParams(),
    "single-keypoint": KazeParams(m=64),
}


@dataclass(frozen=True)
class Level:
    image: np.ndarray  # normalised units
    sigma: float
    octave: int
    sublevel: int

    @property
    def time(self) -> float:
        return 0.5 * self.sigma ** 2

    def derivative_step(self, factor: float = 1.5) -> int:
        """Integer sample spacing of the derivative filters; resets each octave."""
        return max(1, int(round(factor * self.sigma / 2 ** self.octave)))


@dataclass(frozen=True, eq=False)
class ScaleSpace:
    levels: tuple
    offset: float  # input minimum, in gray levels
    gain: float = 255.0
    contrast_k: float = 1.0
    derivative_factor: float = 1.5
    _derivs: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.levels)

    @property
    def shape(self):
        return self.levels[0].image.shape

    def intensity(self, i: int) -> np.ndarray:
        """Level ``i`` expressed back in input gray levels."""
        return self.levels[i].image * self.gain + self.offset

    def first_derivatives(self, i: int):
        """Scale-normalised (Lx, Ly) of level ``i``, cached."""
        if i not in self._derivs:
            lv = self.levels[i]
            d = lv.derivative_step(self.derivative_factor)
            u = lv.image
            lx = 0.5 * (_shift(u, 0, d) - _shift(u, 0, -d))
            ly = 0.5 * (_shift(u, d, 0) - _shift(u, -d, 0))
            self._derivs[i] = (lx, ly)
        return self._derivs[i]


def _shift(a, dy, dx):
    """``a`` sampled at (y + dy, x + dx) with replicated borders."""
    h, w = a.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return a[ys][:, xs]


@dataclass(frozen=True)
class KazeKeypoint:
    x: float
    y: float
    sigma: float
    response: float
    level: int
    orientation: float = 0.0


@dataclass(frozen=True, eq=False)
class KazeVector:
    vector: np.ndarray
    kp_used: int
    keypoints: tuple = ()
    degenerate: int = 0


# -- scale space ----------------------------------------------------------

def _tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm on the last axis, vectorised over leading axes.

    ``lower[..., 0]`` and ``upper[..., -1]`` are ignored.
    """
    n = diag.shape[-1]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[..., 0] = upper[..., 0] / diag[..., 0]
    d[..., 0] = rhs[..., 0] / diag[..., 0]
    for j in range(1, n):
        denom = diag[..., j] - lower[..., j] * c[..., j - 1]
        c[..., j] = upper[..., j] / denom
        d[..., j] = (rhs[..., j] - lower[..., j] * d[..., j - 1]) / denom
    x = np.empty_like(rhs)
    x[..., -1] = d[..., -1]
    for j in range(n - 2, -1, -1):
        x[..., j] = d[..., j] - c[..., j] * x[..., j + 1]
    return x


def _implicit_1d(u, g, tau):
    """Solve (I - 2 tau A) v = u along the last axis; A is the no-flux
    diffusion operator with half-point conductivities (g_j + g_j+1) / 2."""
    half = 0.5 * (g[..., 1:] + g[..., :-1])
    n = u.shape[-1]
    lower = np.zeros_like(u)
    upper = np.zeros_like(u)
    diag = np.ones_like(u)
    s = 2.0 * tau
    upper[..., :n - 1] = -s * half
    lower[..., 1:] = -s * half
    diag[..., :n - 1] += s * half
    diag[..., 1:] += s * half
    return _tridiag_solve(lower, diag, upper, u)


def aos_step(u, g, tau):
    """One semi-implicit additive-operator-splitting step of dL/dt = div(g grad L)."""
    vx = _implicit_1d(u, g, tau)
    vy = _implicit_1d(u.T, g.T, tau).T
    return 0.5 * (vx + vy)


def conductivity(u, k, smoothing=1.0):
    """Perona-Malik g2 = 1 / (1 + |grad L_sigma|^2 / k^2)."""
    us = ndimage.gaussian_filter(u, smoothing, mode="reflect") if smoothing > 0 else u
    gy, gx = np.gradient(us)
    return 1.0 / (1.0 + (gx * gx + gy * gy) / (k * k))


def contrast_factor(u, percentile=70.0, smoothing=1.0):
    us = ndimage.gaussian_filter(u, smoothing, mode="reflect") if smoothing > 0 else u
    gy, gx = np.gradient(us)
    mag = np.hypot(gx, gy).ravel()
    mag = mag[mag > 0]
    if mag.size == 0:
        return 1.0
    k = float(np.percentile(mag, percentile))
    return k if k > 0 else 1.0


def build_scale_space(img: GrayImage, params: KazeParams = KazeParams()) -> ScaleSpace:
    data = img.data
    offset = float(data.min())
    u = (data - offset) / 255.0
    sigma0 = params.base_smoothing
    u0 = ndimage.gaussian_filter(u, sigma0, mode="reflect")
    levels = [Level(u0, sigma0, 0, 0)]
    if min(img.width, img.height) < params.min_size:
        return ScaleSpace(tuple(levels), offset, derivative_factor=params.derivative_factor)
    k = params.contrast_k or contrast_factor(u0, params.contrast_percentile,
                                             params.conductivity_smoothing)
    cur = u0
    for i in range(1, params.octaves * params.sublevels):
        o, s = divmod(i, params.sublevels)
        sigma = params.sigma(i)
        tau = 0.5 * sigma ** 2 - levels[-1].time
        g = conductivity(cur, k, params.conductivity_smoothing)
        cur = aos_step(cur, g, tau)
        levels.append(Level(cur, sigma, o, s))
    return ScaleSpace(tuple(levels), offset, contrast_k=k,
                      derivative_factor=params.derivative_factor)


# -- detection ---------------------------------------------------------------

def hessian_response(space: ScaleSpace, i: int) -> np.ndarray:
    """Normalised Hessian determinant d^4 (Lxx Lyy - Lxy^2).

    Second differences use the level's derivative step d, which grows with
    sigma inside an octave and halves at each octave boundary.
    """
    lv = space.levels[i]
    d = lv.derivative_step(space.derivative_factor)
    u = lv.image
    lxx = _shift(u, 0, d) - 2.0 * u + _shift(u, 0, -d)
    lyy = _shift(u, d, 0) - 2.0 * u + _shift(u, -d, 0)
    lxy = 0.25 * (_shift(u, d, d) - _shift(u, d, -d) - _shift(u, -d, d) + _shift(u, -d, -d))
    # each difference above already carries a factor d^2 relative to the
    # derivative, which is exactly the normalisation
    return lxx * lyy - lxy * lxy


def _refine(stack, i, y, x):
    """Quadratic fit around a discrete (level, y, x) maximum.

    Returns (offset[level, y, x], interpolated value) or None when the fit is
    singular or moves by more than one sample in any direction.
    """
    c = stack[i, y, x]
    ds = 0.5 * (stack[i + 1, y, x] - stack[i - 1, y, x])
    dy = 0.5 * (stack[i, y + 1, x] - stack[i, y - 1, x])
    dx = 0.5 * (stack[i, y, x + 1] - stack[i, y, x - 1])
    dss = stack[i + 1, y, x] - 2 * c + stack[i - 1, y, x]
    dyy = stack[i, y + 1, x] - 2 * c + stack[i, y - 1, x]
    dxx = stack[i, y, x + 1] - 2 * c + stack[i, y, x - 1]
    dsy = 0.25 * (stack[i + 1, y + 1, x] - stack[i + 1, y - 1, x]
                  - stack[i - 1, y + 1, x] + stack[i - 1, y - 1, x])
    dsx = 0.25 * (stack[i + 1, y, x + 1] - stack[i + 1, y, x - 1]
                  - stack[i - 1, y, x + 1] + stack[i - 1, y, x - 1])
    dyx = 0.25 * (stack[i, y + 1, x + 1] - stack[i, y + 1, x - 1]
                  - stack[i, y - 1, x + 1] + stack[i, y - 1, x - 1])
    grad = np.array([ds, dy, dx])
    hess = np.array([[dss, dsy, dsx], [dsy, dyy, dyx], [dsx, dyx, dxx]])
    try:
        delta = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(delta)) or np.any(np.abs(delta) > 1.0):
        return None
    return delta, c + 0.5 * float(grad @ delta)


def detect_keypoints(space: ScaleSpace, params: KazeParams = KazeParams()) -> list:
    """Strict 3x3x3 maxima of the normalised Hessian response above the
    threshold, refined to sub-pixel / sub-level precision and sorted by
    (response desc, y asc, x asc)."""
    n = len(space)
    h, w = space.shape
    if n < 3 or h < 3 or w < 3:
        return []
    stack = np.stack([hessian_response(space, i) for i in range(n)])
    core = stack[1:-1, 1:-1, 1:-1]
    is_max = core > params.detector_threshold
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == dy == dx == 0:
                    continue
                nb = stack[1 + dz:n - 1 + dz, 1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
                is_max &= core > nb
    keypoints = []
    for li, yi, xi in zip(*np.nonzero(is_max)):
        i, y, x = int(li) + 1, int(yi) + 1, int(xi) + 1
        fit = _refine(stack, i, y, x)
        if fit is None:
            continue
        (d_s, d_y, d_x), value = fit
        kx, ky = x + d_x, y + d_y
        if not (0.0 <= kx <= w - 1 and 0.0 <= ky <= h - 1):
            continue
        if value <= params.detector_threshold:
            continue
        keypoints.append(KazeKeypoint(float(kx), float(ky), params.sigma(i + d_s),
                                      float(value), i))
    keypoints.sort(key=lambda kp: (-kp.response, kp.y, kp.x))
    return keypoints


# -- description -------------------------------------------------------------

def _bilinear(arr, xs, ys):
    """Sample ``arr`` at real coordinates, clamping to the border."""
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2) if w > 1 else np.zeros_like(xs, dtype=np.intp)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2) if h > 1 else np.zeros_like(ys, dtype=np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = arr[y0, x0] + fx * (arr[y0, x1] - arr[y0, x0])
    bot = arr[y1, x0] + fx * (arr[y1, x1] - arr[y1, x0])
    return top + fy * (bot - top)


_ORI_I, _ORI_J = np.meshgrid(np.arange(-6, 7), np.arange(-6, 7), indexing="xy")
_ORI_MASK = _ORI_I ** 2 + _ORI_J ** 2 < 36
_ORI_I = _ORI_I[_ORI_MASK].astype(np.float64)
_ORI_J = _ORI_J[_ORI_MASK].astype(np.float64)
_ORI_W = np.exp(-(_ORI_I ** 2 + _ORI_J ** 2) / (2 * 2.5 ** 2))
_ORI_WINDOW = math.pi / 3


def dominant_orientation(space: ScaleSpace, kp: KazeKeypoint) -> float:
    """Angle of the strongest summed response inside a sliding 60 degree
    window, over first-derivative samples in a radius-6 sigma disc."""
    lx, ly = space.first_derivatives(kp.level)
    s = kp.sigma
    rx = _ORI_W * _bilinear(lx, kp.x + _ORI_I * s, kp.y + _ORI_J * s)
    ry = _ORI_W * _bilinear(ly, kp.x + _ORI_I * s, kp.y + _ORI_J * s)
    ang = np.arctan2(ry, rx) % (2 * math.pi)
    live = (rx != 0) | (ry != 0)
    if not live.any():
        return 0.0
    rx, ry, ang = rx[live], ry[live], ang[live]
    # windows start at every sample angle rather than on a fixed grid, so
    # the candidate set rotates with the image
    inside = ((ang[None, :] - ang[:, None]) % (2 * math.pi)) < _ORI_WINDOW
    sx = inside @ rx
    sy = inside @ ry
    norm = sx * sx + sy * sy
    k = int(np.argmax(norm))
    best_ori = math.atan2(sy[k], sx[k]) % (2 * math.pi)
    return best_ori


_SUB_CENTRES = np.array([-7.5, -2.5, 2.5, 7.5])
_SUB_OFF = np.arange(-4, 5, dtype=np.float64)
_SUB_K, _SUB_L = np.meshgrid(_SUB_OFF, _SUB_OFF, indexing="xy")
_SUB_K = _SUB_K.ravel()
_SUB_L = _SUB_L.ravel()
_SAMPLE_W = np.exp(-(_SUB_K ** 2 + _SUB_L ** 2) / (2 * 2.5 ** 2))


def describe_keypoint(space: ScaleSpace, kp: KazeKeypoint):
    """64-d M-SURF descriptor over a 24 sigma window rotated to
    ``kp.orientation``.

    Returns ``(descriptor, degenerate)``; a region without any gradient gives
    the zero vector and ``degenerate=True``.
    """
    lx, ly = space.first_derivatives(kp.level)
    s = kp.sigma
    co, si = math.cos(kp.orientation), math.sin(kp.orientation)
    out = np.empty(DESCRIPTOR_DIMS)
    idx = 0
    for cv in _SUB_CENTRES:
        for cu in _SUB_CENTRES:
            u = cu + _SUB_K
            v = cv + _SUB_L
            xs = kp.x + s * (u * co - v * si)
            ys = kp.y + s * (u * si + v * co)
            gx = _bilinear(lx, xs, ys)
            gy = _bilinear(ly, xs, ys)
            du = _SAMPLE_W * (gx * co + gy * si)
            dv = _SAMPLE_W * (-gx * si + gy * co)
            wsub = math.exp(-((cu / 5.0) ** 2 + (cv / 5.0) ** 2) / (2 * 1.5 ** 2))
            out[idx:idx + 4] = wsub * np.array([du.sum(), dv.sum(),
                                                np.abs(du).sum(), np.abs(dv).sum()])
            idx += 4
    norm = float(np.sqrt(np.sum(out * out)))
    if norm == 0.0 or not np.isfinite(norm):
        return np.zeros(DESCRIPTOR_DIMS), True
    return out / norm, False


def orient(space: ScaleSpace, kp: KazeKeypoint) -> KazeKeypoint:
    return KazeKeypoint(kp.x, kp.y, kp.sigma, kp.response, kp.level,
                        dominant_orientation(space, kp))


def kaze_vector(img: GrayImage, params: KazeParams = KazeParams()) -> KazeVector:
    """Descriptors of the ``m // 64`` strongest keypoints, concatenated in
    response order and zero-padded to length ``m``."""
    space = build_scale_space(img, params)
    kps = detect_keypoints(space, params)[:params.max_keypoints]
    vec = np.zeros(params.m)
    used = []
    degenerate = 0
    for j, kp in enumerate(kps):
        kp = orient(space, kp)
        d, flag = describe_keypoint(space, kp)
        degenerate += flag
        vec[j * DESCRIPTOR_DIMS:(j + 1) * DESCRIPTOR_DIMS] = d
        used.append(kp)
    return KazeVector(vec, len(used), tuple(used), degenerate)
