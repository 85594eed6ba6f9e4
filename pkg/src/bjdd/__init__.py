"""Blind joint demosaicing and denoising of Bayer raw images.

A self-contained numpy implementation: its own reverse-mode autodiff tensors,
a residual generator with sub-pixel upsampling, a convolutional discriminator,
composite MSE/perceptual/adversarial training, and CPSNR/SSIM evaluation.
"""

from .cfa import (RGGB, BayerPattern, DegradationSpec, add_gaussian_noise,
                  augment8, degrade, make_rng, mosaic, pack_raw, unpack)
from .fileio import (load_checkpoint, load_generator, load_png,
                     save_checkpoint, save_png)
from .losses import (FeatureExtractor, LossWeights, adversarial_loss,
                     discriminator_loss, mse_loss, perceptual_loss, total_loss)
from .metrics import (color_ssim, cpsnr, evaluate_images, psnr, reconstruct,
                      ssim)
from .networks import (Discriminator, DiscriminatorSpec, Generator,
                       GeneratorSpec, ParameterStore, build_discriminator,
                       build_generator, count_parameters)
from .tensor import Tensor, no_grad, set_default_dtype
from .training import (AdamState, NumericalError, TrainConfig, adam_step,
                       train_loop)

__version__ = "0.1.0"
