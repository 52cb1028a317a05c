"""Paired-image data: IO codecs, blur synthesis, augmentation, iteration."""

from .imageio import load_image, save_image
from .kernels import BlurKernel, add_gaussian_noise, apply_blur, random_motion_kernel
from .pipeline import (
    AugmentationRecord,
    Batch,
    ImagePair,
    dataset_iter,
    downsample2,
    match_pairs,
    random_crop_pair,
)
from .synth import synthetic_sharp_image

__all__ = [
    "AugmentationRecord",
    "Batch",
    "BlurKernel",
    "ImagePair",
    "add_gaussian_noise",
    "apply_blur",
    "dataset_iter",
    "downsample2",
    "load_image",
    "match_pairs",
    "random_crop_pair",
    "random_motion_kernel",
    "save_image",
    "synthetic_sharp_image",
]
