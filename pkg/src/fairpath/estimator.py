"""scikit-learn style wrapper around constrained fitting and fair prediction."""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .constrained import Bounds, fit_fair
from .graph import CausalGraph, PseSpec, Scale
from .predict import batch_predict


class FairOutcomeRegressor(BaseEstimator, RegressorMixin):
    """Fit the fair world on a data frame and predict E*[Y | W].

    Parameters
    ----------
    graph : CausalGraph or dict
        Causal graph over the frame's columns.
    pse : PseSpec or dict
        Effect to bound; its outcome is the prediction target.
    models : list of str
        Model formulas, e.g. ``["A ~ C", "logit: M ~ A + C", "Y ~ A + M + C"]``.
    estimator : str
        Effect estimator the bound is placed on.
    lower, upper : float
        Bounds on the effect.
    scale : str, optional
        Scale of the bounds; defaults to the scale of ``pse``.
    mc_draws, seed : int
        Monte Carlo budget and seed for continuous marginalization.

    Attributes
    ----------
    fit_ : FairFitResult
    predictor_ : FairPredictor
    w_set_ : list of str
    """

    def __init__(self, graph=None, pse=None, models=(), estimator="triply_robust",
                 lower=-0.5, upper=0.5, scale=None, mc_draws=1000, seed=0):
        self.graph = graph
        self.pse = pse
        self.models = models
        self.estimator = estimator
        self.lower = lower
        self.upper = upper
        self.scale = scale
        self.mc_draws = mc_draws
        self.seed = seed

    def _parsed(self):
        if self.graph is None or self.pse is None:
            raise ValueError("graph and pse are required")
        graph = self.graph if isinstance(self.graph, CausalGraph) else CausalGraph.from_dict(self.graph)
        spec = self.pse if isinstance(self.pse, PseSpec) else PseSpec.from_dict(self.pse)
        return graph, spec

    def fit(self, X, y=None):
        """``X`` is a data frame of every modelled column; ``y`` optionally supplies the outcome."""
        graph, spec = self._parsed()
        frame = _as_frame(X)
        if y is not None:
            frame[spec.outcome] = np.asarray(y, dtype=float)
        bounds = Bounds(self.lower, self.upper, Scale(self.scale) if self.scale else spec.scale)
        self.fit_ = fit_fair(frame, graph, spec, self.estimator, list(self.models), bounds,
                             mc_draws=self.mc_draws, seed=self.seed)
        self.predictor_ = self.fit_.predictor(mc_draws=self.mc_draws, seed=self.seed)
        self.w_set_ = list(self.predictor_.w_set)
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        frame = _as_frame(X)
        return batch_predict(self.predictor_, frame[self.w_set_]).values


def _as_frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X.copy()
    raise TypeError("FairOutcomeRegressor needs a pandas DataFrame with named columns")
