"""Frequency-multiplexed ghost imaging: measurement model, simulation and
measurement reduction with box and sparsity priors."""

from .errors import (
    EstimabilityError,
    ImagingImpossibleError,
    InvalidInputError,
    NonConvergenceError,
    SingularCovarianceError,
)
from .reduction import (
    PipelineConfig,
    Reducer,
    constrained_reduction,
    false_signal_energy,
    linear_reduction,
    metrics,
    run_pipeline,
    threshold_in_basis,
)
from .sensing import DetectorGeometry, build_A, build_sigma_nu, check_estimability, make_model
from .sim import AcquisitionConfig, gen_object, simulate_gi, simulate_ordinary, two_slit
from .transforms import SparsityBasis, component_std, forward, inverse

__version__ = "0.1.0"
