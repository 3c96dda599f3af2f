"""Weighted-particle integration of fitted models over unobserved or counterfactual variables.

Binary variables are enumerated exactly (each particle splits in two with
weights p and 1 - p). Gaussian variables are integrated by Monte Carlo with
seeded standard-normal draws, so repeated evaluations with perturbed
coefficients reuse the same draws and stay smooth in the coefficients.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .exceptions import ModelSpecError
from .glm import Family, FittedGlm, predict_mean


def dependency_order(factors: Mapping, names: Sequence) -> list:
    names = list(names)
    pending = set(names)
    order = []
    while pending:
        ready = [v for v in names if v in pending
                 and not (set(factors[v].spec.predictors) & (pending - {v}))]
        if not ready:
            raise ModelSpecError(f"models for {sorted(pending)} depend on each other cyclically")
        order.append(ready[0])
        pending.discard(ready[0])
    return order


def standard_normals(seed, stream, n, k, row_ids=None) -> np.ndarray:
    if row_ids is None:
        return np.random.default_rng([int(seed), int(stream)]).standard_normal((n, k))
    return np.stack([np.random.default_rng([int(seed), int(stream), int(r)]).standard_normal(k)
                     for r in row_ids])


def marginal_mean(target: FittedGlm, factors: Mapping, columns: Mapping, marginalize: Sequence,
                  assign: Mapping | None = None, *, mc_draws: int | None = 1000, seed: int = 0,
                  row_ids=None) -> np.ndarray:
    """Row-wise E[target | columns] after integrating ``marginalize`` out.

    ``assign`` maps a model's response name to predictor overrides (typically
    the treatment value that mechanism sees); overrides apply only inside that
    model. Returns an array with one entry per row.
    """
    assign = assign or {}
    missing = [v for v in marginalize if v not in factors]
    if missing:
        raise ModelSpecError(f"no model supplied for marginalized variable(s) {missing}")
    order = dependency_order(factors, marginalize)
    base = {k: np.asarray(v, dtype=float)[:, None] for k, v in columns.items() if k not in order}
    n = _rows(base, row_ids)
    particles = {}
    weights = np.ones((n, 1))
    width = 1
    sampled = False
    for stream, var in enumerate(order):
        model = factors[var]
        env = _env(base, particles, assign.get(var, {}))
        mean = np.broadcast_to(predict_mean(model, env), (n, width))
        if model.family is Family.BERNOULLI:
            particles = {k: np.concatenate([v, v], axis=1) for k, v in particles.items()}
            value = np.concatenate([np.zeros((n, width)), np.ones((n, width))], axis=1)
            weights = np.concatenate([weights * (1.0 - mean), weights * mean], axis=1)
            width *= 2
        else:
            if mc_draws is None:
                raise ModelSpecError(
                    f"continuous variable {var!r} needs a Monte Carlo budget (mc_draws)")
            sd = np.sqrt(model.dispersion)
            if not sampled:
                z = standard_normals(seed, stream, n, mc_draws, row_ids)
                particles = {k: np.repeat(v, mc_draws, axis=1) for k, v in particles.items()}
                weights = np.repeat(weights, mc_draws, axis=1) / mc_draws
                mean = np.repeat(mean, mc_draws, axis=1)
                value = mean + sd * np.tile(z, (1, width))
                width *= mc_draws
                sampled = True
            else:
                value = mean + sd * standard_normals(seed, stream, n, width, row_ids)
        particles[var] = value
    env = _env(base, particles, assign.get(target.response, {}))
    out = np.broadcast_to(predict_mean(target, env), (n, width))
    if not np.all(np.isfinite(out)):
        raise ModelSpecError(f"non-finite output from model {target.spec}")
    return np.sum(weights * out, axis=1)


def _rows(base, row_ids):
    if base:
        return next(iter(base.values())).shape[0]
    if row_ids is not None:
        return len(row_ids)
    return 1


def _env(base, particles, overrides):
    env = dict(base)
    env.update(particles)
    env.update({k: float(v) for k, v in overrides.items()})
    return env
