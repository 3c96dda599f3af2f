"""Gaussian-identity and Bernoulli-logit GLMs with product interaction terms.

Every downstream estimator reads models through :func:`linear_predictor`,
:func:`predict_mean` and :func:`density`, which accept column arrays of any
broadcastable shape. That lets callers evaluate a model on a grid of
counterfactual particles without materializing a design matrix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from .data import as_columns, n_rows, require_columns
from .exceptions import FitError, ModelSpecError

LOG_2PI = np.log(2.0 * np.pi)


class Family(str, Enum):
    GAUSSIAN = "gaussian_identity"
    BERNOULLI = "bernoulli_logit"

    @classmethod
    def parse(cls, name) -> "Family":
        aliases = {"gaussian": cls.GAUSSIAN, "identity": cls.GAUSSIAN, "linear": cls.GAUSSIAN,
                   "bernoulli": cls.BERNOULLI, "logit": cls.BERNOULLI, "logistic": cls.BERNOULLI}
        if isinstance(name, cls):
            return name
        name = str(name).strip().lower()
        if name in aliases:
            return aliases[name]
        return cls(name)


@dataclass(frozen=True)
class ModelSpec:
    """Response, family and product terms; the intercept is implicit.

    A term is a tuple of predictor names multiplied together, so ``("A", "M")``
    is the A:M interaction and ``("C1", "C1")`` a square.
    """

    response: str
    family: Family = Family.GAUSSIAN
    terms: tuple = ()

    def __post_init__(self):
        family = Family.parse(self.family)
        terms = tuple(tuple(sorted(t)) if not isinstance(t, str) else (t,) for t in self.terms)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "terms", terms)
        if any(len(t) == 0 for t in terms):
            raise ModelSpecError("empty term")
        if len(set(terms)) != len(terms):
            raise ModelSpecError(f"duplicate terms in model for {self.response!r}")
        if self.response in self.predictors:
            raise ModelSpecError(f"response {self.response!r} appears among its own predictors")

    @classmethod
    def parse(cls, text: str, family=None) -> "ModelSpec":
        """Parse ``"Y ~ A + M + A:M"``; an optional ``"logit:"`` prefix sets the family."""
        m = re.match(r"^\s*(?:([A-Za-z_]+)\s*:\s*(?=[^~]*~))?(.+?)\s*~\s*(.*)$", text)
        if not m:
            raise ModelSpecError(f"cannot parse model formula {text!r}")
        prefix, response, rhs = m.groups()
        if prefix and family is None:
            family = prefix
        terms = []
        for chunk in rhs.split("+"):
            chunk = chunk.strip()
            if chunk in ("", "1"):
                if chunk == "" and rhs.strip():
                    raise ModelSpecError(f"empty term in {text!r}")
                continue
            names = [p.strip() for p in chunk.split(":")]
            if any(not p for p in names):
                raise ModelSpecError(f"malformed term {chunk!r} in {text!r}")
            terms.append(tuple(names))
        return cls(response.strip(), Family.GAUSSIAN if family is None else family, tuple(terms))

    @property
    def predictors(self) -> list:
        seen = []
        for t in self.terms:
            for name in t:
                if name not in seen:
                    seen.append(name)
        return seen

    @property
    def term_names(self) -> list:
        return ["(Intercept)"] + [":".join(t) for t in self.terms]

    def term_index(self, *names) -> int | None:
        """Position of a term in the coefficient vector (intercept is 0)."""
        key = tuple(sorted(names))
        try:
            return 1 + self.terms.index(key)
        except ValueError:
            return None

    def with_terms(self, terms) -> "ModelSpec":
        return ModelSpec(self.response, self.family, tuple(terms))

    def __str__(self):
        rhs = " + ".join(":".join(t) for t in self.terms) or "1"
        prefix = "logit: " if self.family is Family.BERNOULLI else ""
        return f"{prefix}{self.response} ~ {rhs}"


@dataclass(frozen=True, eq=False)
class FittedGlm:
    spec: ModelSpec
    coefficients: np.ndarray
    dispersion: float = 1.0

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float).reshape(-1)
        if coef.size != 1 + len(self.spec.terms):
            raise ModelSpecError(
                f"{coef.size} coefficients for {1 + len(self.spec.terms)} terms in {self.spec}"
            )
        if not np.all(np.isfinite(coef)):
            raise FitError(f"non-finite coefficients for {self.spec}")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        dispersion = 1.0 if self.spec.family is Family.BERNOULLI else float(self.dispersion)
        if not dispersion > 0:
            raise ModelSpecError("dispersion must be positive")
        object.__setattr__(self, "dispersion", dispersion)

    @property
    def response(self) -> str:
        return self.spec.response

    @property
    def family(self) -> Family:
        return self.spec.family

    def coefficient(self, *names) -> float:
        """Coefficient of a term, 0.0 when the term is absent."""
        idx = self.spec.term_index(*names)
        return 0.0 if idx is None else float(self.coefficients[idx])

    def with_coefficients(self, coefficients, dispersion=None) -> "FittedGlm":
        return FittedGlm(self.spec, coefficients, self.dispersion if dispersion is None else dispersion)

    def to_dict(self) -> dict:
        return {
            "response": self.spec.response,
            "family": self.spec.family.value,
            "formula": str(self.spec),
            "terms": self.spec.term_names,
            "coefficients": [float(c) for c in self.coefficients],
            "dispersion": float(self.dispersion),
        }

    @classmethod
    def from_dict(cls, obj) -> "FittedGlm":
        terms = [tuple(t.split(":")) for t in obj["terms"][1:]]
        return cls(ModelSpec(obj["response"], obj["family"], terms), obj["coefficients"], obj["dispersion"])

    def __eq__(self, other):
        if not isinstance(other, FittedGlm):
            return NotImplemented
        return (self.spec == other.spec and self.dispersion == other.dispersion
                and np.array_equal(self.coefficients, other.coefficients))

    def __repr__(self):
        coefs = ", ".join(f"{n}={c:.4g}" for n, c in zip(self.spec.term_names, self.coefficients))
        return f"FittedGlm({self.spec}; {coefs}; dispersion={self.dispersion:.4g})"


def design_matrix(spec: ModelSpec, columns: Mapping) -> np.ndarray:
    """n x (1 + terms) design with an intercept column."""
    require_columns(columns, spec.predictors, f"model {spec}")
    n = n_rows({k: columns[k] for k in spec.predictors}) if spec.predictors else n_rows(columns)
    X = np.empty((n, 1 + len(spec.terms)))
    X[:, 0] = 1.0
    for j, term in enumerate(spec.terms, start=1):
        col = np.ones(n)
        for name in term:
            col = col * columns[name]
        X[:, j] = col
    return X


def linear_predictor(model: FittedGlm, columns: Mapping, offset=0.0):
    """Broadcasting linear predictor; column values may be scalars or arrays."""
    missing = [p for p in model.spec.predictors if p not in columns]
    if missing:
        raise ModelSpecError(f"missing predictor value(s) {missing} for model {model.spec}")
    coef = model.coefficients
    eta = coef[0] + offset
    for b, term in zip(coef[1:], model.spec.terms):
        prod = columns[term[0]]
        for name in term[1:]:
            prod = prod * columns[name]
        eta = eta + b * prod
    return eta


def predict_mean(model: FittedGlm, row: Mapping):
    eta = linear_predictor(model, row)
    if model.family is Family.BERNOULLI:
        return expit(eta)
    return eta if np.ndim(eta) else float(eta)


def density(model: FittedGlm, columns: Mapping, value):
    """p(response = value | predictors): mass for Bernoulli, pdf for Gaussian."""
    mean = predict_mean(model, columns)
    value = np.asarray(value, dtype=float)
    if model.family is Family.BERNOULLI:
        return np.where(value == 1.0, mean, 1.0 - mean)
    var = model.dispersion
    return np.exp(-0.5 * (value - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _loglik_terms(family, y, eta, dispersion):
    if family is Family.BERNOULLI:
        return y * eta - np.logaddexp(0.0, eta)
    return -0.5 * (LOG_2PI + np.log(dispersion)) - 0.5 * (y - eta) ** 2 / dispersion


def log_likelihood(model: FittedGlm, data) -> float:
    cols = as_columns(data)
    require_columns(cols, [model.response], "data")
    X = design_matrix(model.spec, cols)
    return float(np.sum(_loglik_terms(model.family, cols[model.response], X @ model.coefficients,
                                      model.dispersion)))


def score(model: FittedGlm, data) -> np.ndarray:
    """Gradient of :func:`log_likelihood` in the coefficients at fixed dispersion."""
    cols = as_columns(data)
    X = design_matrix(model.spec, cols)
    eta = X @ model.coefficients
    y = cols[model.response]
    if model.family is Family.BERNOULLI:
        return X.T @ (y - expit(eta))
    return X.T @ (y - eta) / model.dispersion


def fit_glm(data, spec: ModelSpec, *, fixed: Mapping | None = None, max_iter: int = 100,
            tol: float = 1e-8) -> FittedGlm:
    """Maximum likelihood fit.

    ``fixed`` maps coefficient positions (0 is the intercept) to values held
    constant; the remaining coefficients are fitted with those terms entering
    as an offset. Logistic fits use IRLS with step halving and stop when the
    score norm drops below ``tol``.
    """
    cols = as_columns(data)
    require_columns(cols, [spec.response] + spec.predictors, "data")
    X = design_matrix(spec, cols)
    y = cols[spec.response]
    n, p = X.shape
    fixed = dict(fixed or {})
    free = [j for j in range(p) if j not in fixed]
    offset = np.zeros(n)
    for j, v in fixed.items():
        offset += X[:, j] * v
    Xf = X[:, free]
    if n <= p:
        raise FitError(f"{spec}: need more rows ({n}) than coefficients ({p})")
    if free and np.linalg.matrix_rank(Xf) < len(free):
        raise FitError(f"{spec}: rank-deficient design")
    if spec.family is Family.BERNOULLI:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise FitError(f"{spec}: Bernoulli response must be 0/1")
        beta_free = _irls(Xf, y, offset, spec, max_iter, tol)
    else:
        if free:
            beta_free = np.linalg.lstsq(Xf, y - offset, rcond=None)[0]
        else:
            beta_free = np.zeros(0)
    beta = np.empty(p)
    beta[free] = beta_free
    for j, v in fixed.items():
        beta[j] = v
    return _with_profile_dispersion(FittedGlm(spec, beta), X, y)


def _with_profile_dispersion(model: FittedGlm, X, y) -> FittedGlm:
    if model.family is Family.BERNOULLI:
        return model
    resid = y - X @ model.coefficients
    return FittedGlm(model.spec, model.coefficients, max(float(resid @ resid) / len(y), 1e-300))


def _irls(X, y, offset, spec, max_iter, tol):
    beta = np.zeros(X.shape[1])
    if X.shape[1] == 0:
        return beta

    def loglik(b):
        eta = offset + X @ b
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    current = loglik(beta)
    for _ in range(max_iter):
        eta = offset + X @ beta
        mu = expit(eta)
        grad = X.T @ (y - mu)
        w = mu * (1.0 - mu)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"{spec}: singular information matrix") from exc
        if np.linalg.norm(grad) < tol:
            # one more Newton step: quadratic convergence takes the error to roundoff
            beta = beta + step
            if np.max(np.abs(offset + X @ beta)) > 15 and _separated(X, y):
                raise FitError(f"{spec}: fitted probabilities reach 0 or 1 "
                               "(complete or quasi-complete separation)")
            return beta
        t = 1.0
        while True:
            candidate = beta + t * step
            value = loglik(candidate)
            if value >= current - 1e-12 * abs(current) or t < 1e-10:
                break
            t *= 0.5
        beta, current = candidate, value
        if np.linalg.norm(beta) > 1e4:
            raise FitError(f"{spec}: coefficients diverge (complete or quasi-complete separation)")
    eta = offset + X @ beta
    if np.linalg.norm(X.T @ (y - expit(eta))) < tol:
        return beta
    raise FitError(f"{spec}: IRLS did not converge in {max_iter} iterations")


def _separated(X, y) -> bool:
    """True when some direction d has (2y - 1) * (X d) >= 0 on every row, not all zero.

    Solved as a linear program over the box |d| <= 1.
    """
    signed = X * (2.0 * y - 1.0)[:, None]
    res = linprog(-signed.sum(axis=0), A_ub=-signed, b_ub=np.zeros(len(y)),
                  bounds=[(-1.0, 1.0)] * X.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-7 * len(y))


def profile_log_likelihood(spec: ModelSpec, X, y, beta) -> float:
    """Log-likelihood with the Gaussian dispersion set to its MLE given ``beta``."""
    eta = X @ beta
    if spec.family is Family.BERNOULLI:
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    n = len(y)
    rss = float(np.sum((y - eta) ** 2))
    return -0.5 * n * (LOG_2PI + np.log(max(rss / n, 1e-300)) + 1.0)


def profile_score(spec: ModelSpec, X, y, beta) -> np.ndarray:
    eta = X @ beta
    if spec.family is Family.BERNOULLI:
        return X.T @ (y - expit(eta))
    resid = y - eta
    return X.T @ resid / max(float(resid @ resid) / len(y), 1e-300)
