"""Few-shot segmentation with multi-level prototypes and OT re-weighting."""

from .features import FeaturizerConfig, GrayImage, extract_features, read_pgm, write_pgm
from .grid import (BinaryMask, FeatureGrid, FormatError, cosine_similarity_map, read_mask, read_tensor,
                   resample_bilinear, resample_mask_nearest, write_mask, write_tensor)
from .mpg import (EmptyForegroundError, LocalPartition, MpgConfig, PrototypeSet, adaptive_k,
                  assign_to_centers, fps_centers, local_prototypes, masked_average_pool)
from .pipeline import EpisodeResult, PipelineConfig, dice, infer_episode
from .qlpe import OtConfig, TransportPlan, extract_weights, fuse, similarity_matrix, sinkhorn

__version__ = "0.1.0"
