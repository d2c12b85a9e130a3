"""Field assessment of risk models trained on self-reported data.

Train a classifier on report-driven inspections, check it against new
reports, then design and score a field sample to see whether the model
holds up where nobody called.
"""

from .core import (
    Block,
    City,
    FieldcheckError,
    LabeledInstance,
    MissingOutcomeError,
    ObservationRecord,
    PredictionSet,
    Source,
    UnknownBlockError,
    aggregate_outcomes,
    aggregate_windows,
    build_training_matrix,
    derive_seed,
)
from .design import (
    BetaPosterior,
    FieldSample,
    Method,
    PowerConfig,
    compare_field,
    power_simulation,
    prob_less,
    select_field_sample,
)
from .eval import (
    decile_table,
    calibration_slope,
    error_analysis,
    precision_at_n,
    roc_auc,
    temporal_cv,
)
from .models import ClassifierSpec, Family, predict_proba, train
from .notes import RuleTable, UnmatchedPolicy, code_all, code_note
from .synthcity import CityConfig, demo_config, field_inspect, generate_city, simulate

__version__ = "0.1.0"
