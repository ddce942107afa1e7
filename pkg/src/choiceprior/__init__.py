"""Risky-choice prediction with cognitive-model pretraining.

Subpackages: gamble/problem domain types (gambles), problem-space sampling
(space), cognitive models (cognitive), the sparse network (net), dataset and
target-record plumbing (datasets), the experiment harness (pipeline,
baselines, reports), the collection service (service), and the CLI (cli).
"""

from .cognitive import BeastParams, PTParams, Prediction, beast_rate, eu_rate, generate_targets, pt_rate, pt_value
from .datasets import Dataset, TargetRecord, build_dataset, load_targets, save_targets, split_by_problem
from .gambles import (
    Gamble,
    LotShape,
    OutcomeDistribution,
    Problem,
    Schema,
    ValidationError,
    expand,
    expected_value,
    is_degenerate,
    load_problems,
    sample_joint,
    save_problems,
)
from .net import NetworkConfig, SparseNetwork, TrainingError, srelu
from .pipeline import ExperimentReport, PerturbationSpec, bootstrap_mse, learning_curve, mse, run_pipeline, simulate_human_targets
from .space import ProblemSet, SpaceConfig, encode_features, decode_features, generate_set, sample_problem

__version__ = "0.1.0"
