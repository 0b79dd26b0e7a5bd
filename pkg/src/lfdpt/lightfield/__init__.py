"""Light-field data model helpers.

Fields are numpy arrays laid out as [U, V, C, H, W] (angular rows, angular
columns, channels, spatial rows, spatial columns).
"""

from .color import rgb_to_ycbcr, ycbcr_to_rgb
from .formats import (export_pgm, read_blob, read_lfr, read_pgm, write_blob,
                      write_lfr, write_pgm)
from .gradient import gradient_field
from .patches import ALL_TRANSFORMS, Transform, augment, crop_patches, patch_origins
from .resample import bicubic_resize, keys_kernel
from .synth import SyntheticScene, degrade, epi_offsets, generate_scene, render_scene

__all__ = [
    "ALL_TRANSFORMS", "SyntheticScene", "Transform", "augment", "bicubic_resize",
    "crop_patches", "degrade", "epi_offsets", "export_pgm", "generate_scene",
    "gradient_field", "keys_kernel", "patch_origins", "read_blob", "read_lfr",
    "read_pgm", "render_scene", "rgb_to_ycbcr", "write_blob", "write_lfr",
    "write_pgm", "ycbcr_to_rgb",
]
