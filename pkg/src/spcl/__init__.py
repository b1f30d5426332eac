"""Self-paced curriculum learning for weakly supervised object detection."""
from ._accel import HAVE_NUMBA, USE_NUMBA
from .core import (BACKGROUND, BBox, Dataset, DetectorSet, GtObject, Hypothesis, ImageBag,
                   LabelMatrix, SpclError, WeightMatrix, instance_truth, iou, score)
from .curriculum import CurriculumConfig, initialize, partition_easy_hard, random_initialize
from .evaldet import Detection, average_precision, corloc, evaluate_detections, match_detections
from .labeler import assign_labels_one_bag, enumerate_optimal_labeling, update_labels
from .pacer import (PaceState, advance_pace, calibrate_lambda, regularizer_value,
                    solve_weights_one_bag, update_weights)
from .trainer import TrainConfig, TrainState, check_run_log, detect, evaluate_objective, localize, train
from .wsvm import DegenerateClassWarning, SvmConfig, hinge_loss, train_one_vs_all, weighted_loss_sum

__version__ = "0.1.0"
