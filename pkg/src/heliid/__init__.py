"""State-space identification of small helicopter dynamics.

Estimates the 40 stability and control derivatives of a linear 13-state hover
model from flight logs, using invasive weed optimization with GA and local
prediction-error baselines.
"""

from .fitness import FitnessConfig, FitnessReport, evaluate, pearson
from .harness import (
    ComparisonTable,
    ExperimentConfig,
    TrialReport,
    compare_methods,
    export_timeseries,
    run_experiment,
    synthesize_flight,
)
from .model import (
    GRAVITY,
    PARAM_NAMES,
    TRUTH_HOVER,
    ParameterSet,
    SystemMatrices,
    build_matrices,
    derivative,
    simulate,
)
from .optimizers import (
    GaConfig,
    IwoConfig,
    OptimizerResult,
    PemConfig,
    SearchSpace,
    run_ga,
    run_iwo,
    run_pem,
)
from .signals import (
    ExcitationSpec,
    LogParseError,
    TimeSeriesLog,
    butterworth_filter,
    generate_3211,
    load_log,
    save_log,
    split_train_validate,
)

__version__ = "0.1.0"
