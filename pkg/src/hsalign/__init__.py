"""Learn orthonormal projections that align source and target domains by
minimizing a kernel-density estimate of the Hellinger distance between the
projected samples."""

__version__ = "0.1.0"

from .bandwidth import compute_bandwidth
from .datasets import (
    EvalReport,
    ShiftSpec,
    evaluate_transfer,
    knn_transfer_eval,
    load_csv,
    make_shift_pair,
    standardize,
)
from .density import (
    Bandwidth,
    DomainTag,
    KdeModel,
    ProjectionMatrix,
    SampleSet,
    kernel_value,
    log_density,
    log_density_gradient,
    scatter_matrix,
    softmax_weights,
)
from .divergence import (
    ObjectiveValue,
    contrast,
    g_derivative_identity_check,
    g_value,
    gradient,
    gradient_chain_rule,
    objective,
)
from .errors import BandwidthError, HsAlignError, InputError, NonFiniteError, RetractionError
from .gradcheck import GradCheckReport, central_difference, compare
from .optimizer import ConvergedReason, FitConfig, FitReport, fit, init_projection, retract
