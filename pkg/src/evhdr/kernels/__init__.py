"""Framework-free reference kernels of the reconstruction network.

Feature maps are ``(C, H, W)`` float64 arrays; all weights are injected.
"""
from .attention import AttentionSpec, attend, attend_keys_vjp, attention_probabilities, local_attention_fuse
from .conv import DeformableKernel, conv2d, deformable_conv2d, deformable_conv2d_vjp
from .gradcheck import GradientCase, finite_difference_check
from .losses import LossTerms, LossWeights, compute_losses, temporal_consistency_terms
from .model import ReconstructionModel
from .pyramid import PyramidSpec, align_features_pyramid, predict_offsets_pyramid, upsample_offsets
from .recurrent import ExtractorParams, KeyFrameSchedule, keyframe_gate, recurrent_extract_step
from .sampling import bilinear_sample, bilinear_sample_vjp
from .weights import load_weights, save_weights

__all__ = [
    "AttentionSpec", "attend", "attend_keys_vjp", "attention_probabilities", "local_attention_fuse",
    "DeformableKernel", "conv2d", "deformable_conv2d", "deformable_conv2d_vjp",
    "GradientCase", "finite_difference_check",
    "LossTerms", "LossWeights", "compute_losses", "temporal_consistency_terms",
    "ReconstructionModel",
    "PyramidSpec", "align_features_pyramid", "predict_offsets_pyramid", "upsample_offsets",
    "ExtractorParams", "KeyFrameSchedule", "keyframe_gate", "recurrent_extract_step",
    "bilinear_sample", "bilinear_sample_vjp",
    "load_weights", "save_weights",
]
