"""Interpretable-by-design models next to the post-hoc explainers they
are meant to replace, plus the metrics to compare them and a
checkpoint-diagnostics loop for training-time inspection."""

__version__ = "0.1.0"

from .checkpoints import Checkpoint, CheckpointStore, restore_model, serialize_model
from .data import (CsvFormatError, Dataset, SyntheticSpec, gen_synthetic,
                   load_csv, save_csv, split, standardize, standardize_pair)
from .diagnostics import (Probe, ProbeReport, ProbeSuite, Timeline,
                          diff_diagnostics, evaluate_snapshot,
                          targeted_resample, timeline_report)
from .explainers import (EXPLAINER_METHODS, BlackBox, Explanation,
                         ExplainerConfig, lime_local, permutation_importance,
                         run_explainer, shapley_exact, shapley_sampled)
from .gating import GateConfig, hard_mask, sparsity_penalty, straight_through
from .groups import FeatureGroupSpec, discover_groups, load_group_spec, save_group_spec
from .metrics import (ConsistencyReport, DisagreementMatrix, LatencyStats,
                      consistency_across_seeds, disagreement_matrix,
                      forward_latency, js_distance, latency_profile,
                      prediction_gap, rank_agreement)
from .models import (FeatureGatingModel, MLPClassifier, RoutedExpertsModel,
                     RoutingDecision, TrainingDiverged, TrainingTrace,
                     matched_hidden_width, train)
from .rng import Rng
from .tensor import Tensor, gradient_check

__all__ = [
    "__version__",
    "Checkpoint", "CheckpointStore", "restore_model", "serialize_model",
    "CsvFormatError", "Dataset", "SyntheticSpec", "gen_synthetic",
    "load_csv", "save_csv", "split", "standardize", "standardize_pair",
    "Probe", "ProbeReport", "ProbeSuite", "Timeline",
    "diff_diagnostics", "evaluate_snapshot", "targeted_resample", "timeline_report",
    "EXPLAINER_METHODS", "BlackBox", "Explanation", "ExplainerConfig",
    "lime_local", "permutation_importance", "run_explainer",
    "shapley_exact", "shapley_sampled",
    "GateConfig", "hard_mask", "sparsity_penalty", "straight_through",
    "FeatureGroupSpec", "discover_groups", "load_group_spec", "save_group_spec",
    "ConsistencyReport", "DisagreementMatrix", "LatencyStats",
    "consistency_across_seeds", "disagreement_matrix", "forward_latency",
    "js_distance", "latency_profile", "prediction_gap", "rank_agreement",
    "FeatureGatingModel", "MLPClassifier", "RoutedExpertsModel",
    "RoutingDecision", "TrainingDiverged", "TrainingTrace",
    "matched_hidden_width", "train",
    "Rng", "Tensor", "gradient_check",
]
