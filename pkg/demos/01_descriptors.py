"""Walk through the three descriptors on a single synthetic image.

Run with ``python demos/01_descriptors.py``.  Nothing is written to disk.
"""
import numpy as np

from deepfuse.hog import HogParams, cell_histograms, compute_gradients, hog_descriptor
from deepfuse.imgcore import GrayImage
from deepfuse.kaze import build_scale_space, kaze_vector
from deepfuse.lbp import LbpParams, lbp_code_map, lbp_histogram
from deepfuse.synthetic import blend_patch, make_texture

rng = np.random.default_rng(0)
real = GrayImage(make_texture(rng))
fake = GrayImage(blend_patch(make_texture(rng), rng))
print("image size", real.width, "x", real.height)

# LBP: each interior pixel becomes a P-bit code comparing it with P
# neighbours on a circle of radius R; codes are pooled into uniform-pattern
# histograms over a 2x2 grid of bands.
params = LbpParams()  # P=12, R=2, uniform, 2x2 bands
codes = lbp_code_map(real, params).codes
print("\nLBP codes at the image centre:\n", codes[12:16, 12:16])
h = lbp_histogram(real, params)
print("LBP vector length", h.size, "=", params.bands ** 2, "bands x", params.bin_count, "bins")
print("band sums", np.round(h.reshape(4, -1).sum(axis=1), 6))

# HOG: central-difference gradients, 9 unsigned orientation bins per 8x8
# cell, 2x2-cell blocks normalised to (just under) unit length.
field = compute_gradients(real)
cells = cell_histograms(field)
print("\nHOG cells", cells.shape, "strongest bin per cell:\n", cells.argmax(axis=2))
d = hog_descriptor(real)
print("HOG vector length", d.size, "block norms", np.round(np.linalg.norm(d.reshape(4, 36), axis=1), 6))
print("real vs fake HOG distance", round(float(np.linalg.norm(d - hog_descriptor(fake))), 4))

# KAZE: nonlinear diffusion keeps edges while smoothing flat regions, so
# the spread of intensities decays more slowly than under a Gaussian blur.
space = build_scale_space(real)
for i, lv in enumerate(space.levels):
    print(f"  level sigma={lv.sigma:5.2f}  std={space.intensity(i).std():6.2f}")
v = kaze_vector(real)
print("KAZE keypoints used", v.kp_used, "vector length", v.vector.size)
for kp in v.keypoints:
    print(f"  x={kp.x:5.2f} y={kp.y:5.2f} sigma={kp.sigma:4.2f} response={kp.response:.4f}")

# a finer HOG grid gives a longer vector
print("\nHOG length with 4x4 cells:", HogParams(cell_size=4).length(28, 28))
