"""Deepfake detection from fused classical image features.

Frames are reduced to keyframes, described with LBP, HOG and KAZE features,
fused by concatenation and classified with random forests, extra trees,
gradient boosting or an SVM.  A timing harness measures extraction,
training and inference cost.
"""
from .fuse import Dataset, ExtractorConfig, extract, prepare_dataset
from .imgcore import GrayImage, load_image

__version__ = "0.1.0"

__all__ = ["Dataset", "ExtractorConfig", "GrayImage", "extract", "load_image", "prepare_dataset"]
