"""Estimators of counterfactual means, natural direct/indirect effects and path-specific effects.

All estimators take already-fitted models. ``mc_draws`` and ``seed`` only
matter when a continuous mediator has to be integrated out.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from ._marginal import marginal_mean
from .data import Dataset, as_columns, n_rows, require_columns
from .exceptions import ModelSpecError, NotIdentifiedError, PositivityError
from .glm import Family, FittedGlm, density
from .graph import (CausalGraph, PseSpec, Scale, check_identification, mediators,
                    treatment_assignment)

POSITIVITY_FLOOR = 1e-6


class Kind(str, Enum):
    PLUGIN_MEDIATION = "plugin_mediation"
    IPW = "ipw"
    TRIPLY_ROBUST = "triply_robust"
    EDGE_G_PLUGIN = "edge_g_plugin"
    CLOSED_FORM = "closed_form"


class Variant(str, Enum):
    LINEAR_NDE = "linear_nde"
    LOGISTIC_OR_NDE = "logistic_or_nde"
    CHAIN_OR_PSE = "chain_or_pse"


@dataclass(frozen=True)
class EstimatorKind:
    kind: Kind
    variant: Variant | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.variant is not None:
            object.__setattr__(self, "variant", Variant(self.variant))
        if (self.kind is Kind.CLOSED_FORM) != (self.variant is not None):
            raise ValueError("a closed-form variant is required for, and only for, kind closed_form")

    @classmethod
    def parse(cls, text) -> "EstimatorKind":
        """``"ipw"`` or ``"closed_form:linear_nde"``."""
        if isinstance(text, cls):
            return text
        kind, _, variant = str(text).partition(":")
        return cls(kind, variant or None)

    def __str__(self):
        return self.kind.value if self.variant is None else f"{self.kind.value}:{self.variant.value}"


@dataclass
class EstimateReport:
    value: float
    scale: Scale
    estimator: EstimatorKind
    models_used: tuple
    n: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scale = Scale(self.scale)
        if self.scale is Scale.ODDS_RATIO and not self.value > 0:
            raise ValueError("odds-ratio estimates must be positive")

    def to_dict(self) -> dict:
        out = {
            "estimator": self.estimator.kind.value,
            "scale": self.scale.value,
            "value": float(self.value),
            "n": int(self.n),
            "models_used": list(self.models_used),
        }
        if self.estimator.variant is not None:
            out["variant"] = self.estimator.variant.value
        scalars = {k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, str))}
        if scalars:
            out["diagnostics"] = scalars
        return out


def _mean_difference_only(spec: PseSpec, what: str):
    if spec.scale is not Scale.MEAN_DIFFERENCE:
        raise ValueError(f"{what} reports mean differences; odds ratios need a closed-form variant")


def _treatment_name(data, treatment):
    if treatment is not None:
        return treatment
    if isinstance(data, Dataset):
        found = data.columns_with_role("treatment")
        if len(found) == 1:
            return found[0]
    raise ModelSpecError("treatment column not given and not recoverable from data roles")


def counterfactual_mean_adjustment(y_model: FittedGlm, data, a: float, treatment=None) -> float:
    """Adjustment-formula mean: outcome model averaged over rows with the treatment forced to ``a``."""
    treatment = _treatment_name(data, treatment)
    if treatment not in y_model.spec.predictors:
        raise ModelSpecError(f"treatment {treatment!r} is not a predictor of {y_model.spec}")
    cols = as_columns(data)
    return float(np.mean(marginal_mean(y_model, {}, cols, [], {y_model.response: {treatment: a}})))


def _nde_arms(y_model, m_model, data, spec, mc_draws, seed):
    cols = as_columns(data)
    A, M, Y = spec.treatment, m_model.response, y_model.response

    def arm(y_a, m_a):
        return marginal_mean(y_model, {M: m_model}, cols, [M], {Y: {A: y_a}, M: {A: m_a}},
                             mc_draws=mc_draws, seed=seed)

    return cols, arm


def nde_plugin(y_model: FittedGlm, m_model: FittedGlm, data, spec: PseSpec, *,
               mc_draws: int | None = 1000, seed: int = 0) -> EstimateReport:
    """Plug-in mediation formula for E[Y(a, M(a'))] - E[Y(a')]."""
    _mean_difference_only(spec, "nde_plugin")
    cols, arm = _nde_arms(y_model, m_model, data, spec, mc_draws, seed)
    a, a0 = spec.active_value, spec.baseline_value
    cross, base = arm(a, a0), arm(a0, a0)
    return EstimateReport(
        float(np.mean(cross - base)), Scale.MEAN_DIFFERENCE, EstimatorKind(Kind.PLUGIN_MEDIATION),
        (y_model.response, m_model.response), n_rows(cols),
        {"mean_cross": float(np.mean(cross)), "mean_baseline": float(np.mean(base))},
    )


def nie_plugin(y_model: FittedGlm, m_model: FittedGlm, data, spec: PseSpec, *,
               mc_draws: int | None = 1000, seed: int = 0) -> EstimateReport:
    """Plug-in E[Y(a)] - E[Y(a, M(a'))]."""
    _mean_difference_only(spec, "nie_plugin")
    cols, arm = _nde_arms(y_model, m_model, data, spec, mc_draws, seed)
    a, a0 = spec.active_value, spec.baseline_value
    full, cross = arm(a, a), arm(a, a0)
    return EstimateReport(
        float(np.mean(full - cross)), Scale.MEAN_DIFFERENCE, EstimatorKind(Kind.PLUGIN_MEDIATION),
        (y_model.response, m_model.response), n_rows(cols),
        {"mean_active": float(np.mean(full)), "mean_cross": float(np.mean(cross))},
    )


def ace_plugin(y_model: FittedGlm, m_model: FittedGlm, data, spec: PseSpec, *,
               mc_draws: int | None = 1000, seed: int = 0) -> float:
    cols, arm = _nde_arms(y_model, m_model, data, spec, mc_draws, seed)
    a, a0 = spec.active_value, spec.baseline_value
    return float(np.mean(arm(a, a) - arm(a0, a0)))


def _check_floor(what, values, rows=None):
    values = np.asarray(values)
    idx = np.arange(values.size) if rows is None else np.flatnonzero(rows)
    if idx.size == 0:
        return
    low = values[idx] < POSITIVITY_FLOOR
    if low.any():
        row = idx[np.flatnonzero(low)[0]]
        raise PositivityError(what, row, values[row])


def _propensities(a_model, m_model, cols, spec, check=True):
    A, M = spec.treatment, m_model.response
    require_columns(cols, [A, M, spec.outcome], "data")
    a, a0 = spec.active_value, spec.baseline_value
    treat = cols[A] == a
    control = cols[A] == a0
    pa = np.broadcast_to(density(a_model, cols, a), treat.shape)
    pa0 = np.broadcast_to(density(a_model, cols, a0), treat.shape)
    if check:
        _check_floor(f"p({A}={a:g} | C)", pa)
        _check_floor(f"p({A}={a0:g} | C)", pa0)
    m = cols[M]
    pm_a = np.broadcast_to(density(m_model, {**cols, A: a}, m), treat.shape)
    pm_a0 = np.broadcast_to(density(m_model, {**cols, A: a0}, m), treat.shape)
    if check:
        _check_floor(f"p({M} | {A}={a:g}, C)", pm_a, treat)
    return treat, control, pa, pa0, pm_a, pm_a0


def nde_ipw(a_model: FittedGlm, m_model: FittedGlm, data, spec: PseSpec, *,
            check_positivity: bool = True) -> EstimateReport:
    """Inverse-probability-weighted NDE; reads only the treatment and mediator models."""
    _mean_difference_only(spec, "nde_ipw")
    cols = as_columns(data)
    y = cols[spec.outcome] if spec.outcome in cols else None
    treat, control, pa, pa0, pm_a, pm_a0 = _propensities(a_model, m_model, cols, spec,
                                                         check_positivity)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(treat, y * pm_a0 / (pa * pm_a), 0.0)
        second = np.where(control, y / pa0, 0.0)
    return EstimateReport(
        float(np.mean(first - second)), Scale.MEAN_DIFFERENCE, EstimatorKind(Kind.IPW),
        (a_model.response, m_model.response), len(y),
        {"weighted_cross": float(np.mean(first)), "weighted_baseline": float(np.mean(second))},
    )


def nde_triply_robust(a_model: FittedGlm, m_model: FittedGlm, y_model: FittedGlm, data,
                      spec: PseSpec, *, mc_draws: int | None = 1000, seed: int = 0,
                      check_positivity: bool = True) -> EstimateReport:
    """Triply robust NDE: consistent if any two of the treatment, mediator and outcome models are right.

    The per-row mediator-averaged outcome means ``eta(a, a'') =
    sum_m E[Y | a, m, c] p(m | a'', c)`` are returned in the diagnostics.
    """
    _mean_difference_only(spec, "nde_triply_robust")
    cols = as_columns(data)
    A, M, Y = spec.treatment, m_model.response, y_model.response
    a, a0 = spec.active_value, spec.baseline_value
    treat, control, pa, pa0, pm_a, pm_a0 = _propensities(a_model, m_model, cols, spec,
                                                         check_positivity)
    y = cols[spec.outcome]

    def eta(y_a, m_a):
        return marginal_mean(y_model, {M: m_model}, cols, [M], {Y: {A: y_a}, M: {A: m_a}},
                             mc_draws=mc_draws, seed=seed)

    eta_cross, eta_base = eta(a, a0), eta(a0, a0)
    fitted_cross = np.asarray(marginal_mean(y_model, {}, cols, [], {Y: {A: a}}))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(treat, pm_a0 * (y - fitted_cross) / (pa * pm_a), 0.0)
        t2 = np.where(control, (fitted_cross - eta_cross) / pa0, 0.0)
        t3 = np.where(control, (y - eta_base) / pa0, 0.0)
    cross = t1 + t2 + eta_cross
    base = t3 + eta_base
    return EstimateReport(
        float(np.mean(cross - base)), Scale.MEAN_DIFFERENCE, EstimatorKind(Kind.TRIPLY_ROBUST),
        (a_model.response, m_model.response, y_model.response), len(y),
        {"mean_eta_cross": float(np.mean(eta_cross)), "mean_eta_baseline": float(np.mean(eta_base)),
         "eta_cross": eta_cross, "eta_baseline": eta_base, "row_contributions": cross - base},
    )


def pse_edge_g(models: Mapping, data, spec: PseSpec, graph: CausalGraph, *,
               mc_draws: int | None = 1000, seed: int = 0) -> EstimateReport:
    """Plug-in edge g-formula for a general identified path-specific effect.

    Each mediator's model and the outcome model are evaluated with the
    treatment at the value its mechanism receives under the path-specific
    intervention, and mediators are integrated out in causal order. The
    contrast is taken against the all-baseline counterfactual mean.
    """
    _mean_difference_only(spec, "pse_edge_g")
    verdict = check_identification(graph, spec)
    if not verdict.identified:
        raise NotIdentifiedError(verdict)
    A, Y = spec.treatment, spec.outcome
    meds = mediators(graph, A, Y)
    missing = [v for v in meds + [Y] if v not in models]
    if missing:
        raise ModelSpecError(f"pse_edge_g needs models for {missing}")
    cols = as_columns(data)
    values = treatment_assignment(graph, spec)
    factors = {v: models[v] for v in meds}
    active = marginal_mean(models[Y], factors, cols, meds, {v: {A: values[v]} for v in meds + [Y]},
                           mc_draws=mc_draws, seed=seed)
    a0 = spec.baseline_value
    base = marginal_mean(models[Y], factors, cols, meds, {v: {A: a0} for v in meds + [Y]},
                         mc_draws=mc_draws, seed=seed)
    diff = active - base
    return EstimateReport(
        float(np.mean(diff)), Scale.MEAN_DIFFERENCE, EstimatorKind(Kind.EDGE_G_PLUGIN),
        tuple([Y] + meds), n_rows(cols),
        {"mean_path_specific": float(np.mean(active)), "mean_baseline": float(np.mean(base)),
         "row_se": float(np.std(diff, ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else 0.0,
         "strategy": verdict.strategy.value},
    )


def _has_treatment_interaction(model, treatment):
    return any(treatment in t and len(t) > 1 for t in model.spec.terms)


def _closed_form_models(variant, models, spec):
    Y = spec.outcome
    if Y not in models:
        raise ModelSpecError(f"closed form needs the outcome model {Y!r}")
    if variant is Variant.CHAIN_OR_PSE:
        inner = sorted({v for p in spec.disallowed_paths for v in p[1:-1]}, key=str)
        return [Y] + inner
    return [Y]


def pse_closed_form(models: Mapping, spec: PseSpec, variant, data=None) -> EstimateReport:
    """Closed-form effects from coefficients alone.

    ``linear_nde`` is the treatment coefficient of a linear outcome model;
    ``logistic_or_nde`` its exponential for a logistic outcome (odds ratio);
    ``chain_or_pse`` exponentiates the sum, over disallowed paths, of the
    products of main-effect coefficients along each path. Effects scale with
    (active - baseline).
    """
    variant = Variant(variant)
    A, Y = spec.treatment, spec.outcome
    names = _closed_form_models(variant, models, spec)
    missing = [v for v in names if v not in models]
    if missing:
        raise ModelSpecError(f"{variant.value} needs models for {missing}")
    y_model = models[Y]
    delta = spec.active_value - spec.baseline_value
    if variant is Variant.LINEAR_NDE:
        if y_model.family is not Family.GAUSSIAN:
            raise ModelSpecError("linear_nde needs a Gaussian outcome model")
        if _has_treatment_interaction(y_model, A):
            raise ModelSpecError("linear_nde forbids treatment interactions in the outcome model")
        value, scale = y_model.coefficient(A) * delta, Scale.MEAN_DIFFERENCE
    else:
        if y_model.family is not Family.BERNOULLI:
            raise ModelSpecError(f"{variant.value} needs a logistic outcome model")
        others = [models[v] for v in models if v != Y and v != A]
        if any(m.family is not Family.GAUSSIAN for m in others):
            raise ModelSpecError(f"{variant.value} needs linear (Gaussian) mediator models")
        if variant is Variant.LOGISTIC_OR_NDE:
            if _has_treatment_interaction(y_model, A):
                raise ModelSpecError("logistic_or_nde forbids treatment interactions in the outcome model")
            log_or = y_model.coefficient(A)
        else:
            for v in names:
                if any(len(t) > 1 for t in models[v].spec.terms):
                    raise ModelSpecError(f"chain_or_pse forbids interactions (model for {v!r})")
            log_or = 0.0
            for path in spec.disallowed_paths:
                prod = 1.0
                for tail, head in zip(path[:-1], path[1:]):
                    prod *= models[head].coefficient(tail)
                log_or += prod
        value, scale = math.exp(log_or * delta), Scale.ODDS_RATIO
        if data is not None:
            prevalence = float(np.mean(as_columns(data)[Y]))
            if prevalence > 0.1:
                warnings.warn(
                    f"outcome prevalence {prevalence:.3f} exceeds 10%; the odds-ratio closed form "
                    "is a rare-outcome approximation", stacklevel=2)
    n = n_rows(as_columns(data)) if data is not None else 0
    return EstimateReport(value, scale, EstimatorKind(Kind.CLOSED_FORM, variant), tuple(names), n)


def models_used(estimator, spec: PseSpec, graph: CausalGraph) -> list:
    """Response names of the models an estimator reads (and therefore constrains)."""
    est = EstimatorKind.parse(estimator)
    A, Y = spec.treatment, spec.outcome
    meds = mediators(graph, A, Y)
    if est.kind in (Kind.PLUGIN_MEDIATION, Kind.IPW, Kind.TRIPLY_ROBUST):
        if len(meds) != 1:
            raise ModelSpecError(f"{est.kind.value} handles a single mediator; graph has {meds}")
        M = meds[0]
        return {Kind.PLUGIN_MEDIATION: [Y, M], Kind.IPW: [A, M], Kind.TRIPLY_ROBUST: [A, M, Y]}[est.kind]
    if est.kind is Kind.EDGE_G_PLUGIN:
        return [Y] + meds
    return _closed_form_models(est.variant, {Y: None}, spec)


def estimate(estimator, models: Mapping, data, spec: PseSpec, graph: CausalGraph, *,
             mc_draws: int | None = 1000, seed: int = 0,
             check_positivity: bool = True) -> EstimateReport:
    """Dispatch to the estimator named by ``estimator`` using models keyed by response."""
    est = EstimatorKind.parse(estimator)
    used = models_used(est, spec, graph)
    missing = [v for v in used if v not in models]
    if missing:
        raise ModelSpecError(f"{est} needs models for {missing}")
    A, Y = spec.treatment, spec.outcome
    if est.kind is Kind.EDGE_G_PLUGIN:
        return pse_edge_g(models, data, spec, graph, mc_draws=mc_draws, seed=seed)
    if est.kind is Kind.CLOSED_FORM:
        return pse_closed_form(models, spec, est.variant, data)
    M = used[1]
    if est.kind is Kind.PLUGIN_MEDIATION:
        return nde_plugin(models[Y], models[M], data, spec, mc_draws=mc_draws, seed=seed)
    if est.kind is Kind.IPW:
        return nde_ipw(models[A], models[M], data, spec, check_positivity=check_positivity)
    return nde_triply_robust(models[A], models[M], models[Y], data, spec, mc_draws=mc_draws,
                             seed=seed, check_positivity=check_positivity)
