"""Predictions from the fair world: condition on the W set only and average over the rest."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ._marginal import marginal_mean
from .data import as_columns, n_rows, require_columns
from .estimators import EstimatorKind, models_used
from .exceptions import ModelSpecError
from .glm import Family
from .graph import CausalGraph, PseSpec, mediators


def select_w(estimator, graph: CausalGraph, spec: PseSpec) -> list:
    """Columns a fair predictor may read: every variable whose model the estimator does not use.

    Baseline covariates (non-descendants of the treatment) are always in W.
    The treatment joins them when the estimator leaves its model alone, as do
    mediators whose models are unused.
    """
    used = set(models_used(EstimatorKind.parse(estimator), spec, graph))
    A, Y = spec.treatment, spec.outcome
    downstream = graph.descendants(A)
    meds = set(mediators(graph, A, Y))
    out = []
    for v in graph.vertices:
        if v == Y:
            continue
        if v == A:
            if A not in used:
                out.append(v)
        elif v not in downstream:
            out.append(v)
        elif v in meds and v not in used:
            out.append(v)
    return out


def _needed(target, models, w_set):
    needed, stack = [], list(target.spec.predictors)
    while stack:
        v = stack.pop()
        if v in w_set or v in needed:
            continue
        if v not in models:
            raise ModelSpecError(f"cannot marginalize {v!r}: no model for it and it is not in W")
        needed.append(v)
        stack.extend(models[v].spec.predictors)
    return needed


@dataclass(frozen=True)
class FairPredictor:
    """Serves E*[Y | W] from a fair fit.

    ``w_set`` overrides the estimator-driven choice of W.
    """

    fit: object
    w_set: tuple | None = None
    mc_draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        w = self.fit.w_set if self.w_set is None else self.w_set
        object.__setattr__(self, "w_set", tuple(w))
        models = self.fit.constrained_models
        target = models[self.fit.spec.outcome]
        object.__setattr__(self, "_marginalized", tuple(_needed(target, models, set(self.w_set))))

    @property
    def marginalization(self) -> str:
        models = self.fit.constrained_models
        if all(models[v].family is Family.BERNOULLI for v in self._marginalized):
            return "exact_discrete"
        return f"monte_carlo(draws={self.mc_draws}, seed={self.seed})"

    def _predict(self, columns: Mapping, row_ids) -> np.ndarray:
        require_columns(columns, self.w_set, "instance")
        known = {c: np.atleast_1d(np.asarray(columns[c], dtype=float)) for c in self.w_set}
        models = self.fit.constrained_models
        target = models[self.fit.spec.outcome]
        factors = {v: models[v] for v in self._marginalized}
        use_ids = None if self.marginalization == "exact_discrete" else row_ids
        return marginal_mean(target, factors, known, list(self._marginalized),
                             mc_draws=self.mc_draws, seed=self.seed, row_ids=use_ids)

    def fair_expectation(self, instance: Mapping, row_id: int = 0) -> float:
        return float(self._predict(instance, [row_id])[0])


def fair_expectation(pred: FairPredictor, instance: Mapping, row_id: int = 0) -> float:
    return pred.fair_expectation(instance, row_id)


@dataclass
class BatchPrediction:
    values: np.ndarray
    labels: np.ndarray | None = None
    rmse: float | None = None
    accuracy: float | None = None

    def to_frame(self):
        import pandas as pd

        frame = pd.DataFrame({"row": np.arange(len(self.values)), "fair_expectation": self.values})
        if self.labels is not None:
            frame["label"] = self.labels.astype(int)
        return frame


def batch_predict(pred: FairPredictor, data) -> BatchPrediction:
    """Row-wise fair expectations, with rMSE (and accuracy for binary outcomes) when Y is present."""
    cols = as_columns(data)
    n = n_rows(cols)
    values = pred._predict(cols, np.arange(n))
    out = BatchPrediction(values)
    Y = pred.fit.spec.outcome
    binary = pred.fit.constrained_models[Y].family is Family.BERNOULLI
    if binary:
        out.labels = (values >= 0.5).astype(float)
    if Y in cols:
        y = cols[Y]
        out.rmse = float(np.sqrt(np.mean((values - y) ** 2)))
        if binary:
            out.accuracy = float(np.mean(out.labels == y))
    return out
