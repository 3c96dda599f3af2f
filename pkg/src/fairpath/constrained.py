"""Fair-world fitting: maximize the joint likelihood subject to bounds on the estimated effect.

Two strategies are available. When the effect is a single coefficient (the
closed-form ``linear_nde`` and ``logistic_or_nde`` variants) the bound is a box
on that coefficient: clamp it and refit everything else by maximum likelihood.
Otherwise an augmented Lagrangian runs over the concatenated coefficients of
every model the estimator reads, with the interval split into two inequality
constraints and effect gradients by forward finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .data import as_columns, n_rows, require_columns
from .estimators import EstimatorKind, Kind, Variant, estimate, models_used
from .exceptions import (FitError, InfeasibleConstraintError, ModelSpecError,
                         NotIdentifiedError, PositivityError)
from .glm import (FittedGlm, ModelSpec, design_matrix, fit_glm, log_likelihood,
                  profile_log_likelihood, profile_score)
from .graph import CausalGraph, PseSpec, Scale, check_identification
from .predict import FairPredictor, batch_predict, select_w

FEASIBILITY_TOL = 1e-4
CONVERGED_VIOLATION = 1e-6
CONVERGED_KKT = 1e-5


@dataclass(frozen=True)
class Bounds:
    lower: float = 0.95
    upper: float = 1.05
    scale: Scale = Scale.ODDS_RATIO

    def __post_init__(self):
        object.__setattr__(self, "scale", Scale(self.scale))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not self.lower <= self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        if self.scale is Scale.ODDS_RATIO and not self.lower > 0:
            raise ValueError("odds-ratio bounds must be strictly positive")

    def transformed(self) -> tuple:
        """Bounds on the scale the solver works in (log for odds ratios)."""
        if self.scale is Scale.ODDS_RATIO:
            return math.log(self.lower), math.log(self.upper)
        return self.lower, self.upper

    def contains(self, value: float) -> bool:
        if self.scale is Scale.ODDS_RATIO:
            tol_lo, tol_hi = self.lower * FEASIBILITY_TOL, self.upper * FEASIBILITY_TOL
        else:
            tol_lo = tol_hi = FEASIBILITY_TOL
        return self.lower - tol_lo <= value <= self.upper + tol_hi

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "scale": self.scale.value}


@dataclass
class SolverInfo:
    strategy: str
    iterations: int
    kkt_residual: float
    feasible: bool
    converged: bool = True
    violation: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "iterations": self.iterations,
                "kkt_residual": self.kkt_residual, "feasible": self.feasible,
                "converged": self.converged, "violation": self.violation, "message": self.message}


@dataclass
class FairFitResult:
    """Constrained model set standing in for the fair distribution.

    ``constrained_models`` holds every fitted model; those named in
    ``constrained_names`` came out of the constrained problem, the rest are
    plain maximum likelihood fits.
    """

    constrained_models: dict
    unconstrained_models: dict
    constrained_names: list
    estimator: EstimatorKind
    achieved_pse: float
    unconstrained_pse: float
    w_set: list
    loglik_constrained: float
    loglik_unconstrained: float
    solver: SolverInfo
    bounds: Bounds
    spec: PseSpec
    graph: CausalGraph
    mc_draws: int | None = 1000
    seed: int = 0
    n: int = 0

    def predictor(self, **kwargs) -> FairPredictor:
        kwargs.setdefault("mc_draws", self.mc_draws or 1000)
        kwargs.setdefault("seed", self.seed)
        return FairPredictor(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "estimator": str(self.estimator),
            "achieved_pse": self.achieved_pse,
            "unconstrained_pse": self.unconstrained_pse,
            "bounds": self.bounds.to_dict(),
            "w_set": list(self.w_set),
            "loglik_constrained": self.loglik_constrained,
            "loglik_unconstrained": self.loglik_unconstrained,
            "solver": self.solver.to_dict(),
            "constrained_names": list(self.constrained_names),
            "constrained_models": {k: m.to_dict() for k, m in self.constrained_models.items()},
            "unconstrained_models": {k: m.to_dict() for k, m in self.unconstrained_models.items()},
            "pse": self.spec.to_dict(),
            "graph": self.graph.to_dict(),
            "mc_draws": self.mc_draws,
            "seed": self.seed,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "FairFitResult":
        solver = dict(obj["solver"])
        return cls(
            constrained_models={k: FittedGlm.from_dict(v) for k, v in obj["constrained_models"].items()},
            unconstrained_models={k: FittedGlm.from_dict(v)
                                  for k, v in obj["unconstrained_models"].items()},
            constrained_names=list(obj["constrained_names"]),
            estimator=EstimatorKind.parse(obj["estimator"]),
            achieved_pse=obj["achieved_pse"],
            unconstrained_pse=obj["unconstrained_pse"],
            w_set=list(obj["w_set"]),
            loglik_constrained=obj["loglik_constrained"],
            loglik_unconstrained=obj["loglik_unconstrained"],
            solver=SolverInfo(**solver),
            bounds=Bounds(**obj["bounds"]),
            spec=PseSpec.from_dict(obj["pse"]),
            graph=CausalGraph.from_dict(obj["graph"]),
            mc_draws=obj.get("mc_draws", 1000),
            seed=obj.get("seed", 0),
            n=obj.get("n", 0),
        )


class _Problem:
    """Packs the coefficients of the constrained models into one vector."""

    def __init__(self, cols, names, mle: Mapping, evaluate):
        self.cols = cols
        self.names = list(names)
        self.mle = dict(mle)
        self.evaluate = evaluate
        self.n = n_rows(cols)
        self.blocks = []
        start = 0
        for name in self.names:
            spec = self.mle[name].spec
            X = design_matrix(spec, cols)
            self.blocks.append((name, spec, X, cols[spec.response], slice(start, start + X.shape[1])))
            start += X.shape[1]
        self.dim = start
        self.origin = self.pack(self.mle)

    def pack(self, models: Mapping) -> np.ndarray:
        return np.concatenate([np.asarray(models[name].coefficients) for name in self.names])

    def unpack(self, alpha) -> dict:
        out = dict(self.mle)
        for name, spec, X, y, sl in self.blocks:
            beta = alpha[sl]
            model = FittedGlm(spec, beta)
            if spec.family.value == "gaussian_identity":
                resid = y - X @ beta
                model = FittedGlm(spec, beta, max(float(resid @ resid) / len(y), 1e-300))
            out[name] = model
        return out

    def objective(self, alpha):
        """Negative mean profile log-likelihood and its gradient."""
        value, grad = 0.0, np.empty(self.dim)
        for name, spec, X, y, sl in self.blocks:
            value -= profile_log_likelihood(spec, X, y, alpha[sl])
            grad[sl] = -profile_score(spec, X, y, alpha[sl])
        return value / self.n, grad / self.n

    def g(self, alpha) -> float:
        return self.evaluate(self.unpack(alpha))

    def g_grad(self, alpha, g0=None) -> np.ndarray:
        """Forward differences; pass ``g0 = g(alpha)`` when it is already known."""
        g0 = self.g(alpha) if g0 is None else g0
        grad = np.empty(self.dim)
        for j in range(self.dim):
            h = 1e-7 * (1.0 + abs(alpha[j]))
            up = alpha.copy()
            up[j] += h
            grad[j] = (self.g(up) - g0) / h
        return grad


def _fit_all(data, model_specs):
    models = {}
    for spec in model_specs:
        if spec.response in models:
            raise ModelSpecError(f"two model specs for {spec.response!r}")
        models[spec.response] = fit_glm(data, spec)
    return models


def _to_solver_scale(value, scale):
    if scale is Scale.ODDS_RATIO:
        return math.log(value) if value > 0 else -math.inf
    return value


def _total_loglik(models, data):
    return float(sum(log_likelihood(m, data) for m in models.values()))


def fit_fair(data, graph: CausalGraph, spec: PseSpec, estimator, model_specs: Sequence[ModelSpec],
             bounds: Bounds | None = None, *, mc_draws: int | None = 1000, seed: int = 0,
             strategy: str = "auto", max_outer: int = 20, raise_infeasible: bool = True,
             tight_violation: float = 1e-11) -> FairFitResult:
    """Constrained maximum likelihood fit of the models the estimator reads.

    Raises :class:`NotIdentifiedError` for effects that are not identified and
    :class:`InfeasibleConstraintError` (carrying the closest result) when the
    bounds cannot be reached, unless ``raise_infeasible`` is false.
    """
    bounds = Bounds() if bounds is None else bounds
    est = EstimatorKind.parse(estimator)
    verdict = check_identification(graph, spec)
    if not verdict.identified:
        raise NotIdentifiedError(verdict)
    est_scale = Scale.ODDS_RATIO if est.variant in (Variant.LOGISTIC_OR_NDE, Variant.CHAIN_OR_PSE) \
        else Scale.MEAN_DIFFERENCE
    if bounds.scale is not est_scale:
        raise ValueError(f"estimator {est} works on the {est_scale.value} scale; "
                         f"bounds are on {bounds.scale.value}")
    cols = as_columns(data)
    model_specs = [ModelSpec.parse(s) if isinstance(s, str) else s for s in model_specs]
    names = models_used(est, spec, graph)
    mle = _fit_all(data, model_specs)
    missing = [v for v in names if v not in mle]
    if missing:
        raise ModelSpecError(f"estimator {est} needs model specs for {missing}")

    def evaluate(models, check=False):
        report = estimate(est, models, cols, spec, graph, mc_draws=mc_draws, seed=seed,
                          check_positivity=check)
        return _to_solver_scale(report.value, bounds.scale)

    def natural(value):
        return math.exp(value) if bounds.scale is Scale.ODDS_RATIO else value

    g_mle = evaluate(mle, check=True)
    lo, hi = bounds.transformed()
    ll_mle = _total_loglik(mle, cols)
    use_box = est.kind is Kind.CLOSED_FORM and est.variant in (Variant.LINEAR_NDE, Variant.LOGISTIC_OR_NDE)
    if strategy == "box" and not use_box:
        raise ValueError(f"the box strategy does not apply to {est}")
    chosen = "box" if (strategy == "auto" and use_box) or strategy == "box" else "augmented_lagrangian"

    if chosen == "box":
        models, info = _solve_box(data, mle, spec, lo, hi, g_mle)
    else:
        problem = _Problem(cols, names, mle, evaluate)
        models, info = _solve_al(problem, lo, hi, g_mle, max_outer, tight_violation)

    achieved_t = evaluate(models, check=True)
    achieved = natural(achieved_t)
    info.feasible = bounds.contains(achieved)
    ll = _total_loglik(models, cols)
    result = FairFitResult(
        constrained_models=models, unconstrained_models=mle, constrained_names=names,
        estimator=est, achieved_pse=achieved, unconstrained_pse=natural(g_mle),
        w_set=select_w(est, graph, spec), loglik_constrained=ll, loglik_unconstrained=ll_mle,
        solver=info, bounds=bounds, spec=spec, graph=graph, mc_draws=mc_draws, seed=seed,
        n=n_rows(cols),
    )
    if not info.feasible and raise_infeasible:
        raise InfeasibleConstraintError(result)
    return result


def _solve_box(data, mle, spec, lo, hi, g_mle):
    Y, A = spec.outcome, spec.treatment
    y_model = mle[Y]
    idx = y_model.spec.term_index(A)
    delta = spec.active_value - spec.baseline_value
    if idx is None:
        ok = lo <= 0.0 <= hi
        return dict(mle), SolverInfo("box", 0, 0.0, ok, True, 0.0 if ok else min(abs(lo), abs(hi)),
                                     "treatment term absent; effect fixed at the null")
    c_lo, c_hi = sorted((lo / delta, hi / delta))
    current = float(y_model.coefficients[idx])
    target = min(max(current, c_lo), c_hi)
    models = dict(mle)
    if target != current:
        models[Y] = fit_glm(data, y_model.spec, fixed={idx: target})
    refit = models[Y]
    cols = as_columns(data)
    X = design_matrix(refit.spec, cols)
    grad = profile_score(refit.spec, X, cols[Y], refit.coefficients) / len(X)
    free = [j for j in range(X.shape[1]) if j != idx]
    return models, SolverInfo("box", 1 if target != current else 0, float(np.linalg.norm(grad[free])),
                              True, True, 0.0, "clamped" if target != current else "inactive")


def _solve_al(problem: _Problem, lo, hi, g_mle, max_outer, tight_violation, gtol=1e-8):
    alpha = problem.origin.copy()
    if lo <= g_mle <= hi:
        _, grad = problem.objective(alpha)
        return dict(problem.mle), SolverInfo("augmented_lagrangian", 0, float(np.linalg.norm(grad)),
                                             True, True, 0.0, "constraint inactive at the MLE")
    equality = lo == hi
    lam_lo = lam_hi = mu = 0.0
    rho = 10.0
    prev_violation = math.inf
    info = SolverInfo("augmented_lagrangian", 0, math.inf, False, False, math.inf)

    def al(x):
        f, fg = problem.objective(x)
        gv = problem.g(x)
        if not math.isfinite(gv):
            return math.inf, np.zeros_like(x)
        gg = problem.g_grad(x, gv)
        if equality:
            h = gv - lo
            val, weight = f + mu * h + 0.5 * rho * h * h, mu + rho * h
        else:
            s_lo = max(0.0, lam_lo + rho * (lo - gv))
            s_hi = max(0.0, lam_hi + rho * (gv - hi))
            val = f + (s_lo ** 2 - lam_lo ** 2 + s_hi ** 2 - lam_hi ** 2) / (2 * rho)
            weight = s_hi - s_lo
        return val, fg + weight * gg

    for outer in range(1, max_outer + 1):
        res = minimize(al, alpha, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": gtol, "ftol": 1e-16, "maxcor": 30})
        if np.all(np.isfinite(res.x)):
            alpha = res.x
        gv = problem.g(alpha)
        if equality:
            violation = abs(gv - lo)
            mu += rho * (gv - lo)
            weight = mu
        else:
            violation = max(lo - gv, gv - hi, 0.0)
            lam_lo = max(0.0, lam_lo + rho * (lo - gv))
            lam_hi = max(0.0, lam_hi + rho * (gv - hi))
            weight = lam_hi - lam_lo
        _, fg = problem.objective(alpha)
        kkt = float(np.linalg.norm(fg + weight * problem.g_grad(alpha, gv)))
        info = SolverInfo("augmented_lagrangian", outer, kkt, False,
                          violation < CONVERGED_VIOLATION and kkt < CONVERGED_KKT, violation,
                          str(res.message))
        if violation < tight_violation * max(1.0, abs(gv)) and kkt < CONVERGED_KKT:
            break
        if violation > 0.25 * prev_violation:
            rho = min(rho * 10.0, 1e10)
        prev_violation = violation
    return problem.unpack(alpha), info


@dataclass
class CandidateScore:
    spec: ModelSpec
    rmse: float
    unconstrained_pse: float
    achieved_pse: float
    feasible: bool
    train_mean_prediction: float
    error: str = ""

    def to_dict(self) -> dict:
        return {"model": str(self.spec), "rmse": self.rmse, "unconstrained_pse": self.unconstrained_pse,
                "achieved_pse": self.achieved_pse, "feasible": self.feasible,
                "train_mean_prediction": self.train_mean_prediction, "error": self.error}


@dataclass
class Selection:
    chosen: ModelSpec
    rmse: float
    candidates: list = field(default_factory=list)
    fit: FairFitResult | None = None


def select_outcome_model(candidates: Sequence[ModelSpec], train, validate, fixed: Sequence[ModelSpec],
                         graph: CausalGraph, spec: PseSpec, bounds: Bounds,
                         estimator="triply_robust", *, mc_draws: int | None = 1000,
                         seed: int = 0) -> Selection:
    """Pick the outcome model whose fair C-only predictions have the smallest validation rMSE.

    ``fixed`` holds the treatment and mediator model specs. Only estimators
    that stay consistent under a wrong outcome model are allowed. Ties go to
    fewer terms, then to the lexicographically smaller formula.
    """
    est = EstimatorKind.parse(estimator)
    if est.kind not in (Kind.TRIPLY_ROBUST, Kind.IPW):
        raise ValueError("outcome-model selection needs the triply_robust or ipw estimator")
    if not candidates:
        raise ValueError("empty candidate list")
    fixed = [ModelSpec.parse(s) if isinstance(s, str) else s for s in fixed]
    require_columns(as_columns(validate), [spec.outcome], "validation data")
    scores, fits = [], []
    for cand in candidates:
        cand = ModelSpec.parse(cand) if isinstance(cand, str) else cand
        try:
            fit = fit_fair(train, graph, spec, est, list(fixed) + [cand], bounds, mc_draws=mc_draws,
                           seed=seed, raise_infeasible=False)
        except (FitError, PositivityError, ModelSpecError) as exc:
            scores.append(CandidateScore(cand, math.inf, math.nan, math.nan, False, math.nan, str(exc)))
            fits.append(None)
            continue
        pred = fit.predictor()
        scored = batch_predict(pred, validate)
        on_train = batch_predict(pred, train)
        scores.append(CandidateScore(cand, scored.rmse, fit.unconstrained_pse, fit.achieved_pse,
                                     fit.solver.feasible, float(np.mean(on_train.values))))
        fits.append(fit)
    ranked = sorted(range(len(scores)),
                    key=lambda i: (not scores[i].feasible, scores[i].rmse, len(scores[i].spec.terms),
                                   str(scores[i].spec)))
    best = ranked[0]
    return Selection(scores[best].spec, scores[best].rmse, scores, fits[best])
