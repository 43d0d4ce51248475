"""
Biplanar radiograph to CT toolkit: DRR synthesis, 2D-to-3D generator and patch
discriminator forward passes, training objectives, image metrics and a
projection-matching reconstruction demo, all in numpy.
"""
from .discriminator import DiscriminatorConfig, discriminator_forward
from .drr import AttenuationModel, ProjectionGeometry, line_integral, make_biplanar, render_drr
from .generator import GeneratorConfig, audit_shapes, generator_forward
from .losses import (LossWeights, grad_projection, grad_recon, lsgan_d_loss, lsgan_g_loss, project_plane,
                     projection_loss, recon_loss, total_generator_objective)
from .metrics import aggregate, psnr, ssim
from .phantoms import phantom
from .recon import OptimizeSpec, reconstruct
from .volume import (Image2D, Volume3D, crop_metric_cube, load_image, load_volume, normalize,
                     resample_isotropic, save_image, save_volume)

__version__ = "0.1.0"

__all__ = [
    "AttenuationModel", "DiscriminatorConfig", "GeneratorConfig", "Image2D", "LossWeights", "OptimizeSpec",
    "ProjectionGeometry", "Volume3D", "aggregate", "audit_shapes", "crop_metric_cube", "discriminator_forward",
    "generator_forward", "grad_projection", "grad_recon", "line_integral", "load_image", "load_volume",
    "lsgan_d_loss", "lsgan_g_loss", "make_biplanar", "normalize", "phantom", "project_plane",
    "projection_loss", "psnr", "recon_loss", "reconstruct", "render_drr", "resample_isotropic", "save_image",
    "save_volume", "ssim", "total_generator_objective",
]
