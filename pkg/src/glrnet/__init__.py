"""Noisy feed-forward networks trained with likelihood-ratio gradient estimates.

The main entry points are re-exported here; see the submodules for the rest.
"""

from .errors import (
    ConfigurationError,
    FormatError,
    StructuralError,
    UndefinedMetricError,
    UnsupportedActivationError,
)
from .network import (
    Activation,
    ActivationSpec,
    NetworkSpec,
    NoiseSpec,
    ParameterSet,
    forward,
    forward_deterministic,
    init_params,
    load_params,
    predict,
    save_params,
)
from .estimators import (
    bp_gradient,
    fd_expected_gradient,
    glr_gradient,
    glr_gradient_averaged,
)
from .losses import cross_entropy, zero_one_loss
from .training import TrainConfig, evaluate, sa_step, train
from .data import Dataset, SampleSet, load_idx, load_mnist
from .attacks import AttackConfig, AttackMethod, fgsm, lbfgs_attack
from .corruptions import Corruption, corrupt, severity_averaged_accuracy

__version__ = "0.1.0"
