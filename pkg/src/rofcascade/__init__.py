"""Hop-count and wireless-parameter estimation for radio-over-fiber RU cascades."""

__version__ = "0.1.0"

from . import kernels  # noqa: E402
from .cascade_sim import LAMBDA_1, LAMBDA_2, AmplifierModel, CascadeConfig, NoiseMode, UplinkScene  # noqa: E402
from .estimators import (  # noqa: E402
    CascadeContext,
    EstimationResult,
    LinearGridSpec,
    NonlinearGridSpec,
    coordinate_descent,
    exhaustive_oracle,
    linear_nls,
)
from .fiber_channel import FrequencyGrid, SyntheticFiberParams, UnitFiberResponse, synth_channel  # noqa: E402
from .montecarlo import ExperimentConfig, sweep  # noqa: E402
from .signal_model import generate_pilot  # noqa: E402

__all__ = [
    "__version__", "kernels", "LAMBDA_1", "LAMBDA_2", "AmplifierModel", "CascadeConfig",
    "NoiseMode", "UplinkScene", "CascadeContext", "EstimationResult", "LinearGridSpec",
    "NonlinearGridSpec", "coordinate_descent", "exhaustive_oracle", "linear_nls",
    "FrequencyGrid", "SyntheticFiberParams", "UnitFiberResponse", "synth_channel",
    "ExperimentConfig", "sweep", "generate_pilot",
]
