"""Biventricular myocardium segmentation: two multi-scale networks, slice
propagation, and mesh export, built on a from-scratch layer core."""

__version__ = "0.1.0"

from .architecture import Architecture, default_architecture
from .loss import LossConfig, mask_loss, multiscale_loss, pixel_loss, pixel_loss_grad
from .metrics import dice_2d, dice_3d, slicewise_dice_profile
from .networks import (InitPredictor, ModelParameters, PropagationInput,
                       PropPredictor, init_net_forward, init_parameters,
                       prop_net_forward)
from .phantom import PhantomSpec, build_spec, generate_phantom
from .pipeline import SegmentationResult, binarize, propagate, segment_volume, select_init_slice
from .training import AugmentConfig, TrainConfig, augment_sample, sgd_step, train_init, train_prop
from .volume import Volume, normalize_intensity, preprocess, resample_isotropic

__all__ = [
    "Architecture", "default_architecture",
    "LossConfig", "pixel_loss", "pixel_loss_grad", "mask_loss", "multiscale_loss",
    "dice_2d", "dice_3d", "slicewise_dice_profile",
    "ModelParameters", "PropagationInput", "init_parameters",
    "init_net_forward", "prop_net_forward", "InitPredictor", "PropPredictor",
    "PhantomSpec", "build_spec", "generate_phantom",
    "SegmentationResult", "binarize", "propagate", "segment_volume", "select_init_slice",
    "AugmentConfig", "TrainConfig", "augment_sample", "sgd_step",
    "train_init", "train_prop",
    "Volume", "normalize_intensity", "preprocess", "resample_isotropic",
]
