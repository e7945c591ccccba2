"""Relevance-aware algorithmic recourse for regression models."""

from .bayesopt import BoConfig, BoTrace, run_bo, ucb
from .engine import RecourseRequest, RecourseResult, cost, generate_recourse, iterations_to_recourse
from .harness import ExperimentPlan, aggregate, run_experiment, synthetic_plan
from .objectives import BoundsSpec, ObjectiveSpec, build_bounds
from .predictor import AnalyticPredictor, Dataset, ExternalPredictor, fit_knn, load_dataset
from .relevance import ControlPoint, RelevanceSpec, auto_relevance, build_relevance, eval_relevance, target_relevance
from .surrogate import GpModel, KernelParams, fit_gp, matern25, posterior_at

__version__ = "0.1.0"
