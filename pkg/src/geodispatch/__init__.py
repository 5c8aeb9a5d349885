"""Route geolocalization queries between retrieval and generation predictors.

The pipeline: build or synthesize labeled routing records, train a routing
model against the soft-label preference objective, route queries to the
better paradigm by the sign of the score, and evaluate geolocalization
accuracy, routing accuracy, and the oracle upper bound.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .data import (
    Candidate,
    PreferenceTarget,
    RoutingRecord,
    SynthConfig,
    build_dataset,
    build_targets,
    read_jsonl,
    render_prompt,
    synthesize,
    write_jsonl,
)
from .errors import DataError, GeodispatchError, NumericalError, ValidationError
from .evaluation import EvalReport, Policy, apply_policy, evaluate, routing_accuracy, sweep_alpha
from .geo import (
    DEFAULT_THRESHOLDS_KM,
    EARTH_RADIUS_KM,
    GeoCoordinate,
    ThresholdSet,
    accuracy_at_thresholds,
    geodesic_distance,
    within_threshold,
)
from .model import (
    ConcatEncoder,
    ContextEncoder,
    EmbeddingEncoder,
    FeatureEncoder,
    ParadigmChoice,
    RouterModel,
    decide,
    load_model,
    save_model,
    score,
)
from .objective import ObjectiveConfig, grad_wrt_params, grad_wrt_score, loss
from .train import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Candidate",
    "PreferenceTarget",
    "RoutingRecord",
    "SynthConfig",
    "build_dataset",
    "build_targets",
    "read_jsonl",
    "render_prompt",
    "synthesize",
    "write_jsonl",
    "DataError",
    "GeodispatchError",
    "NumericalError",
    "ValidationError",
    "EvalReport",
    "Policy",
    "apply_policy",
    "evaluate",
    "routing_accuracy",
    "sweep_alpha",
    "DEFAULT_THRESHOLDS_KM",
    "EARTH_RADIUS_KM",
    "GeoCoordinate",
    "ThresholdSet",
    "accuracy_at_thresholds",
    "geodesic_distance",
    "within_threshold",
    "ConcatEncoder",
    "ContextEncoder",
    "EmbeddingEncoder",
    "FeatureEncoder",
    "ParadigmChoice",
    "RouterModel",
    "decide",
    "load_model",
    "save_model",
    "score",
    "ObjectiveConfig",
    "grad_wrt_params",
    "grad_wrt_score",
    "loss",
    "TrainConfig",
    "TrainResult",
    "train",
    "__version__",
]
