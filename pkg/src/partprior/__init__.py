"""Part segmentation from pose-derived priors: priors, weak losses, dense CRF and a toy segmenter."""
from .crf import CrfParams, argmax_labels, meanfield_refine, refine_regions
from .errors import (DegenerateSegment, DimensionMismatch, EmptySupervision, InsufficientKeypoints, InvalidConfig,
                     ParseError, PartPriorError, SchemaError, ShapeMismatch)
from .labelmap import NUM_LABELS, NUM_PARTS, UNCERTAIN, PartClass
from .losses import fuse_supervision, mask_loss, self_paced_select, structure_loss, total_loss
from .metrics import evaluate_miou
from .pipeline import RunConfig, run_training, verify_run
from .pose import Keypoint, PersonPose, ingest_coco_keypoints, load_poses
from .priors import PriorConfig, compute_ellipse, rasterize_priors
from .segmenter import SegmenterModel, TrainParams, extract_features, train_epoch
from .synth import generate_synthetic_corpus

__version__ = "0.1.0"
