"""Structural equation models: ancestral sampling and ground-truth nested counterfactuals.

Exogenous noise is drawn once per equation from a stream keyed by
``(seed, equation index)`` and shared across counterfactual arms, so arm
contrasts are computed unit by unit (common random numbers). Bernoulli
variables are coupled through a shared uniform draw.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd
from scipy.special import expit

from .data import Dataset
from .exceptions import GraphError, ModelSpecError
from .graph import CausalGraph, PseSpec, treatment_assignment, validate_pse

INTERCEPT = "1"


@dataclass(frozen=True)
class Equation:
    """One mechanism. ``names`` has several entries only for a multivariate-Gaussian block."""

    names: tuple
    noise: dict
    link: str = "identity"
    terms: tuple = ()  # ((factor names...), coefficient)

    @property
    def parents(self) -> list:
        seen = []
        for factors, _ in self.terms:
            for f in factors:
                if f not in seen:
                    seen.append(f)
        return seen

    def mean(self, values: Mapping, n: int, treatment=None, treatment_value=None):
        eta = np.zeros(n)
        for factors, coef in self.terms:
            prod = np.ones(n)
            for f in factors:
                prod = prod * (treatment_value if f == treatment and treatment_value is not None
                               else values[f])
            eta = eta + coef * prod
        return eta


def _parse_terms(terms: Mapping) -> tuple:
    out = []
    for key, coef in terms.items():
        factors = () if key.strip() == INTERCEPT else tuple(p.strip() for p in key.split(":"))
        out.append((factors, float(coef)))
    return tuple(out)


def _check_equation(eq: Equation):
    kind = eq.noise.get("type")
    if kind == "mvn":
        mean = np.asarray(eq.noise.get("mean", np.zeros(len(eq.names))), dtype=float)
        cov = np.asarray(eq.noise.get("cov"), dtype=float)
        k = len(eq.names)
        if mean.shape != (k,) or cov.shape != (k, k):
            raise ModelSpecError(f"mvn block {eq.names} has mismatched mean/cov shapes")
        if not np.allclose(cov, cov.T) or np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise ModelSpecError(f"mvn block {eq.names} needs a symmetric positive-definite cov")
        if eq.terms:
            raise ModelSpecError("mvn blocks take no terms")
    elif kind == "gaussian":
        if len(eq.names) != 1 or not float(eq.noise.get("variance", 1.0)) > 0:
            raise ModelSpecError(f"gaussian noise for {eq.names} needs a positive variance")
        if eq.link != "identity":
            raise ModelSpecError(f"gaussian noise needs the identity link ({eq.names[0]!r})")
    elif kind == "bernoulli":
        if "p" in eq.noise:
            p = float(eq.noise["p"])
            if eq.terms or not 0.0 <= p <= 1.0:
                raise ModelSpecError(f"constant Bernoulli p for {eq.names[0]!r} must lie in [0, 1] "
                                     "and take no terms")
        if eq.link not in ("identity", "logit"):
            raise ModelSpecError(f"unknown link {eq.link!r}")
    else:
        raise ModelSpecError(f"unknown noise type {kind!r} for {eq.names}")


@dataclass(frozen=True)
class Sem:
    equations: tuple

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        seen = set()
        for eq in self.equations:
            _check_equation(eq)
            for p in eq.parents:
                if p not in seen:
                    raise ModelSpecError(
                        f"equation for {eq.names} references {p!r} before it is defined")
            for name in eq.names:
                if name in seen:
                    raise ModelSpecError(f"variable {name!r} defined twice")
                seen.add(name)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Sem":
        eqs = []
        for item in obj["equations"]:
            names = item["name"] if isinstance(item["name"], list) else [item["name"]]
            eqs.append(Equation(tuple(names), dict(item["noise"]), item.get("link", "identity"),
                                _parse_terms(item.get("terms", {}))))
        return cls(tuple(eqs))

    def to_dict(self) -> dict:
        out = []
        for eq in self.equations:
            item = {"name": eq.names[0] if len(eq.names) == 1 else list(eq.names)}
            if eq.terms:
                item["link"] = eq.link
                item["terms"] = {(":".join(f) or INTERCEPT): c for f, c in eq.terms}
            item["noise"] = eq.noise
            out.append(item)
        return {"equations": out}

    @property
    def variables(self) -> list:
        return [n for eq in self.equations for n in eq.names]

    def graph(self) -> CausalGraph:
        edges = []
        for eq in self.equations:
            for name in eq.names:
                for p in eq.parents:
                    edges.append((p, name))
        return CausalGraph(self.variables, edges)


def load_sem(path) -> Sem:
    with open(path) as fh:
        return Sem.from_dict(json.load(fh))


def bundled_sem(name: str = "sim1.json") -> Sem:
    """Load an SEM shipped in ``fairpath/data``; ``sim1.json`` is the mediated simulation study."""
    text = resources.files("fairpath").joinpath("data", name).read_text()
    return Sem.from_dict(json.loads(text))


def _draw_noise(sem: Sem, n: int, seed: int) -> list:
    out = []
    for idx, eq in enumerate(sem.equations):
        rng = np.random.default_rng([int(seed), idx])
        kind = eq.noise["type"]
        if kind == "mvn":
            chol = np.linalg.cholesky(np.asarray(eq.noise["cov"], dtype=float))
            out.append(rng.standard_normal((n, len(eq.names))) @ chol.T)
        elif kind == "gaussian":
            out.append(rng.standard_normal(n))
        else:
            out.append(rng.random(n))
    return out


def _propagate(sem: Sem, noise: list, n: int, treatment=None, seen_values: Mapping | None = None,
               fixed: Mapping | None = None) -> dict:
    """Evaluate every equation.

    ``seen_values[v]`` replaces the treatment inside v's mechanism only;
    ``fixed`` sets variables outright (a do-intervention).
    """
    seen_values = seen_values or {}
    fixed = fixed or {}
    values = {}
    for eq, eps in zip(sem.equations, noise):
        kind = eq.noise["type"]
        if kind == "mvn":
            mean = np.asarray(eq.noise.get("mean", np.zeros(len(eq.names))), dtype=float)
            for j, name in enumerate(eq.names):
                values[name] = np.full(n, float(fixed[name])) if name in fixed else mean[j] + eps[:, j]
            continue
        name = eq.names[0]
        if name in fixed:
            values[name] = np.full(n, float(fixed[name]))
            continue
        lp = eq.mean(values, n, treatment, seen_values.get(name))
        if kind == "gaussian":
            values[name] = lp + math.sqrt(float(eq.noise.get("variance", 1.0))) * eps
        else:
            if "p" in eq.noise:
                p = np.full(n, float(eq.noise["p"]))
            elif eq.link == "logit":
                p = expit(lp)
            else:
                p = lp
                if np.any((p < 0) | (p > 1)):
                    raise ModelSpecError(f"identity-link probability for {name!r} leaves [0, 1]")
            values[name] = (eps < p).astype(float)
    return values


def generate(sem: Sem, n: int, seed: int, roles: Mapping | None = None) -> Dataset:
    """Draw ``n`` rows by ancestral sampling; identical ``(seed, n)`` gives identical data."""
    if n < 1:
        raise ValueError("n must be at least 1")
    values = _propagate(sem, _draw_noise(sem, n, seed), n)
    frame = pd.DataFrame({v: values[v] for v in sem.variables})
    return Dataset(frame, roles or {})


class OracleEstimate(NamedTuple):
    value: float
    se: float


def _contrast(diff) -> OracleEstimate:
    return OracleEstimate(float(np.mean(diff)), float(np.std(diff, ddof=1) / math.sqrt(len(diff))))


def counterfactual_oracle(sem: Sem, spec: PseSpec, n_mc: int, seed: int) -> OracleEstimate:
    """Monte Carlo value of the path-specific contrast, with its standard error.

    Each mechanism sees the active treatment value when its incoming treatment
    edge lies on disallowed paths and the baseline value otherwise; labelings
    that would need two values on the same edge are rejected.
    """
    graph = sem.graph()
    validate_pse(graph, spec)
    try:
        seen = treatment_assignment(graph, spec, districts=False)
    except GraphError as exc:
        raise GraphError(f"unsupported path labeling: {exc}") from exc
    noise = _draw_noise(sem, n_mc, seed)
    A, Y = spec.treatment, spec.outcome
    a0 = spec.baseline_value
    world = _propagate(sem, noise, n_mc, A, seen)
    base = _propagate(sem, noise, n_mc, A, {v: a0 for v in sem.variables if v != A})
    return _contrast(world[Y] - base[Y])


def intervention_contrast(sem: Sem, treatment, outcome, active: float, baseline: float,
                          n_mc: int, seed: int) -> OracleEstimate:
    """E[Y(do(A=active))] - E[Y(do(A=baseline))] with shared noise."""
    noise = _draw_noise(sem, n_mc, seed)
    hi = _propagate(sem, noise, n_mc, fixed={treatment: active})
    lo = _propagate(sem, noise, n_mc, fixed={treatment: baseline})
    return _contrast(hi[outcome] - lo[outcome])
