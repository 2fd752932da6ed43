"""Restoration of malformed hands in generated images.

Builds keypoint-aligned depth control images and restoration masks, drives a
pluggable inpainting backend with multi-scale retry, and scores results with
masked PSNR/SSIM and confidence-based pose metrics.
"""

__version__ = "0.1.0"
