"""
AIS Recommender Package

Collaborative filtering with neighbourhoods selected by an idiotypic
artificial immune network, a Simple Pearson baseline and the experiment
harness used to compare them.
"""

__version__ = "0.1.0"

from .ais import AisParams, AisState, Antibody, new_ais, run_selection
from .dataset import (
    Dataset,
    TestCase,
    UserProfile,
    Vote,
    VoteFormat,
    generate_synthetic,
    load_votes,
    read_votes,
)
from .errors import (
    AisRecommenderError,
    DataError,
    DifferentiationCapError,
    InsufficientOverlapError,
    PoolFullError,
    StatisticsError,
)
from .evaluation import PredictionRecord, kendall_tau, mae, summarize, wilcoxon
from .harness import (
    Algorithm,
    ExperimentConfig,
    SweepParam,
    run_experiment,
    swap_experiment,
    sweep,
)
from .neighborhood import Neighborhood, inject_fixed, select_ais, select_sp
from .predictor import PredictionOptions, predict, recommend
from .similarity import SimilarityCache, SimilarityParams, pearson_amended

__all__ = [
    "AisParams",
    "AisState",
    "Antibody",
    "new_ais",
    "run_selection",
    "Dataset",
    "TestCase",
    "UserProfile",
    "Vote",
    "VoteFormat",
    "generate_synthetic",
    "load_votes",
    "read_votes",
    "AisRecommenderError",
    "DataError",
    "DifferentiationCapError",
    "InsufficientOverlapError",
    "PoolFullError",
    "StatisticsError",
    "PredictionRecord",
    "kendall_tau",
    "mae",
    "summarize",
    "wilcoxon",
    "Algorithm",
    "ExperimentConfig",
    "SweepParam",
    "run_experiment",
    "swap_experiment",
    "sweep",
    "Neighborhood",
    "inject_fixed",
    "select_ais",
    "select_sp",
    "PredictionOptions",
    "predict",
    "recommend",
    "SimilarityCache",
    "SimilarityParams",
    "pearson_amended",
]
