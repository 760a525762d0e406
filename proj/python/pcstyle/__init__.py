"""Masked style transfer with partial convolutions.

Images are float32 arrays of shape (H, W, 3) or (H, W) with values in [0, 1];
masks are float32 (H, W) arrays in [0, 1].
"""

from ._core import (
    CheckpointFormatError,
    ConfigError,
    DatasetError,
    EmptyRegionError,
    InvalidArgument,
    IoError,
    Network,
    ResourceError,
    alpha_composite,
    boundary_band,
    boundary_color_contrast,
    boundary_gradient_magnitude,
    compute_metrics,
    expand_mask,
    feather_mask,
    gray_emd,
    index_dataset,
    mask_then_style,
    masked_histogram,
    partial_conv2d,
    perceptual_style_loss,
    projection_directions,
    read_image,
    read_mask,
    region_disparity,
    rle_decode,
    rle_encode,
    sliced_emd,
    style_then_mask,
    stylize,
    stylize_multi,
    stylize_unmasked,
    update_mask_only,
    wasserstein_1d,
    write_png,
)

__version__ = "0.1.0"
