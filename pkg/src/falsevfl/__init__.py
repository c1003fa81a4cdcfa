"""Semi-supervised vertical federated learning under blockwise missingness.

K parties hold disjoint feature blocks of the same samples; any subset of
blocks (and the label) may be missing per sample. A shared deep latent
variable model with two stochastic layers is trained in two stages on
importance-weighted evidence bounds, then predicts labels for arbitrary
observation patterns by self-normalized importance sampling.
"""

from .autodiff import Tape, Var, backward
from .bounds import (
    BoundEstimate,
    bound_replicates,
    conditional_bound,
    dataset_bound,
    log_ratio_matrix,
    marginal_bound,
)
from .data import (
    AlignmentClass,
    AvailabilityRecord,
    FeatureStats,
    PartitionedDataset,
    SampleView,
    alignment_class,
    apply_normalization,
    from_matrix,
    load_csv,
    observed_parties,
    observed_view,
    sample_view,
    save_csv,
    zscore_normalize,
)
from .distributions import DiagGaussian, reparam_sample, softmax_logits_to_logprobs
from .errors import ConfigurationError, FormatError, UsageError
from .experiment import ExperimentConfig, SyntheticPlan, run_experiment
from .inference import (
    Metrics,
    Prediction,
    classify,
    evaluate,
    normalize_log_weights,
    snis_predict,
)
from .missingness import (
    MaskSet,
    MechanismSpec,
    assign_label_availability,
    audit,
    gen_mar_type1,
    gen_mar_type2,
    gen_mcar,
    gen_mnar,
    load_masks,
    mechanism_from_name,
    save_masks,
)
from .model import (
    ArchConfig,
    ModelParams,
    aggregate_posterior,
    decode_h,
    decode_x,
    discriminate,
    encode_h,
    encode_z,
    generative_checksum,
    init_params,
    load_checkpoint,
    missing_prob,
    save_checkpoint,
)
from .optim import AdamState, adam_step
from .rng import RngStream
from .synthetic import SyntheticSpec, bayes_accuracy_two_class, gen_synthetic, simplex_means
from .training import TrainConfig, train_stage1, train_stage2

__version__ = "0.1.0"
