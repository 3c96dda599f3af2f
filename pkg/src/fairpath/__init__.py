"""Fair inference through path-specific effects.

Declare a causal graph and the paths along which the sensitive feature's
influence counts as discrimination, estimate that effect, fit models whose
estimated effect is held inside user bounds, and predict from the
constrained models.
"""
from .constrained import Bounds, FairFitResult, SolverInfo, fit_fair, select_outcome_model
from .data import Dataset, load_dataset, save_dataset
from .estimator import FairOutcomeRegressor
from .estimators import (EstimateReport, EstimatorKind, ace_plugin, estimate, models_used,
                         nde_ipw, nde_plugin, nde_triply_robust, nie_plugin, pse_closed_form,
                         pse_edge_g)
from .exceptions import (CycleError, DataError, FairPathError, FitError, GraphError,
                         InfeasibleConstraintError, ModelSpecError, NotIdentifiedError,
                         PositivityError)
from .glm import Family, FittedGlm, ModelSpec, fit_glm
from .graph import (CausalGraph, IdVerdict, PseSpec, Scale, Strategy, check_identification,
                    enumerate_causal_paths, validate_graph)
from .io import load_graph, load_pse, save_graph, save_pse
from .predict import FairPredictor, batch_predict, fair_expectation, select_w
from .simulate import Sem, bundled_sem, counterfactual_oracle, generate, load_sem

__version__ = "0.1.0"
