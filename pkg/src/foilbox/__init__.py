"""foilbox: black-box manipulation of saliency-map explanations.

A miniature dense-tensor network engine, five pixel-attribution methods,
a metered black-box oracle, and an evolution-strategy attack that molds a
model's explanation map toward an arbitrary target while leaving the
probability vector nearly unchanged.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    Candidate,
    estimate_gradients,
    fitness,
    rank_normalize,
    run_attack,
    sample_population,
    step,
)
from .attribution import (
    DeepLiftConfig,
    LrpConfig,
    channel_reduce,
    explain,
    explain_deeplift,
    explain_gradient,
    explain_grad_times_input,
    explain_guided_backprop,
    explain_lrp,
)
from .engine import (
    Conv2D,
    Flatten,
    ForwardTrace,
    GradientRule,
    Linear,
    MaxPool2D,
    Network,
    ReLU,
    Softmax,
    backward_input,
    backward_modified,
    forward,
)
from .errors import (
    BudgetExhausted,
    ConfigError,
    FoilboxError,
    FormatError,
    NumericDegeneracyError,
    ShapeError,
    TrainingError,
)
from .fileio import load_labels, load_model, load_tensor, save_labels, save_model, save_tensor
from .fixtures import SyntheticDataset, TrainConfig, evaluate_accuracy, generate_dataset, train_fixture
from .harness import ExperimentConfig, RunRecord, mse, run_experiment, summarize
from .oracle import DEFAULT_BUDGET, Oracle, OracleResponse, QueryMeter

__version__ = "0.1.0"
