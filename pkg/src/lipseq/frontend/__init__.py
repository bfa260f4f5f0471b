"""Visual front-ends: preprocessing, DCT features, CNN encoders, zero ablation."""

from .video import (FrameSequence, FeatureSequence, preprocess, to_grayscale,
                    resize_bilinear, save_clip, load_clip, save_pnm, load_pnm,
                    load_frames_dir, save_features, load_features)
from .dct import (dct_features, zero_features, dct_matrix, zigzag_indices,
                  frame_dct_coefficients, regression_deltas, FEATURE_DIM as DCT_DIM)
from .cnn import (CNNParams, init_cnn_params, cnn2d_apply, cnn3d_apply,
                  cnn2d_features, cnn3d_features, flatten_width, spatial_chain,
                  FEATURE_DIM as CNN_DIM)

__all__ = [
    "FrameSequence", "FeatureSequence", "preprocess", "to_grayscale",
    "resize_bilinear", "save_clip", "load_clip", "save_pnm", "load_pnm",
    "load_frames_dir", "save_features", "load_features",
    "dct_features", "zero_features", "dct_matrix", "zigzag_indices",
    "frame_dct_coefficients", "regression_deltas", "DCT_DIM",
    "CNNParams", "init_cnn_params", "cnn2d_apply", "cnn3d_apply",
    "cnn2d_features", "cnn3d_features", "flatten_width", "spatial_chain", "CNN_DIM",
]
