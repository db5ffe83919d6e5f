"""Data-driven partial estimators for nonlinear systems with uncertain parameters.

Simulate a benchmark system over randomized scenarios, turn the trajectories
into rolling windows of past measurements, fit a sparse polynomial map from a
window to a chosen state component, and score it with relative error
percentiles against a nearest-neighbor baseline.
"""
__version__ = "0.1.0"

from .errors import (CapacityError, ConfigurationError, DegenerateTargetError, NumericError,
                     ParseError, PolyestError, SchemaError, SimulationDiverged, SplitError)
from .systems import get_model, simulate
from .dataset import WindowConfig, WindowedDataset
from .polyfit import PlarsConfig, PolynomialModel, plars_fit, select_hyperparameters
from .baselines import KnnModel, select_knn
from .evalkit import relative_percentile, comparison_ratio
from .experiment import ExperimentConfig, run_cell
