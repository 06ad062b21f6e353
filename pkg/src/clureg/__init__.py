"""Differentiable clustering as a regularizer for semi-supervised
learning and unsupervised domain adaptation, at desk scale.

The package is organized bottom-up:

  tape, gradcheck   reverse-mode autodiff core and its verifier
  streams           counter-based reproducible randomness
  nn                MLPs, optimizers, schedules, weight averaging
  clustering        the differentiable clustering head and its loss
  centroids         label-driven centroid tracking, combined objective
  ssl_methods       consistency / pseudo-label / adversarial regularizers
  uda               gradient-reversal domain loss, proxy-A distance
  data              synthetic generators, IDX parsing, splits, batching
  evaluation        accuracy, paired t-tests, PCA projection
  config, runner    experiment configs, training loops, sweeps
  plots, cli        SVG output and the command-line interface
"""

from .centroids import (CentroidStrategy, CentroidTracker, LossWeights,
                        augment_with_pseudo, cross_entropy, predict,
                        select_confident, combined_loss, update_centroids)
from .clustering import (CMLossBreakdown, CMOutput, cm_forward, cm_loss,
                         init_cm, two_cluster_gap)
from .config import ExperimentConfig, apply_overrides, load_config
from .data import (Dataset, DomainPair, SSLSplit, gen_synthetic, load_idx,
                   make_ssl_split, next_batch, save_idx, shift_domain, to_csv)
from .evaluation import SeedSummary, paired_t_test, pca_project, top1
from .gradcheck import GradCheckReport, forward_backward, grad_check
from .nn import (LRSchedule, MLPConfig, OptimizerState, ParamSet,
                 WeightAverager, average_weights, averaged_params,
                 forward_features, init_mlp, lr_at, optimizer_step)
from .runner import RunRecord, TrainingDiverged, run_experiment, sweep
from .ssl_methods import (SSLMethodConfig, ict_loss, kl_from_probs,
                          mean_teacher_consistency, pi_consistency,
                          pseudo_label_loss, vat_loss, vat_perturbation)
from .streams import rng_stream
from .tape import Tape, Tensor, grad_reverse, softmax_rows
from .uda import (DiscriminatorConfig, dann_domain_loss, delta_schedule,
                  init_discriminator, proxy_a_distance)

__version__ = "0.1.0"
