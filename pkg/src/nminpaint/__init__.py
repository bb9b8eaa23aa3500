"""GAN inpainting of facial normal maps.

Library layout:

- ``core``: normal-map types, RGB codec, unit normalization, angular error
- ``synthdata``: analytic sphere/cap scenes for desk-scale data and oracles
- ``augment``: vector-correct flip / rotate / zoom dataset expansion
- ``masking``: occlusion-mask styles and masked generator inputs
- ``model``: generator/discriminator networks, UnitNormalize layer, Adam
- ``losses``: cosine reconstruction and adversarial cross-entropy
- ``metrics``: SSIM, PSNR, discriminator accuracy, angular error
- ``trainer``: alternating training loop, evaluation, panels, checkpoints
- ``data_io``: PNG datasets on disk
- ``cli``: the ``nminpaint`` command
"""

from .core import (BACKGROUND, InvalidNormalMap, NormalMap, OcclusionMask,
                   Rgb8Image, angular_error, normal_to_rgb, rgb_to_normal,
                   unit_normalize)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "InvalidNormalMap",
    "NormalMap",
    "OcclusionMask",
    "Rgb8Image",
    "angular_error",
    "normal_to_rgb",
    "rgb_to_normal",
    "unit_normalize",
    "__version__",
]
