import math

import numpy as np
import pytest

from fairpath import generate
from fairpath.constrained import Bounds, FairFitResult, SolverInfo, fit_fair
from fairpath.estimators import EstimatorKind
from fairpath.exceptions import DataError, ModelSpecError
from fairpath.glm import FittedGlm, ModelSpec, predict_mean
from fairpath.graph import CausalGraph, PseSpec
from fairpath.predict import FairPredictor, batch_predict, fair_expectation, select_w

from conftest import SIM_A, SIM_M, SIM_Y_TRUE

NDE = PseSpec("A", "Y", 1, 0, [("A", "Y")])
TRIANGLE = CausalGraph(["C", "A", "M", "Y"],
                       [("C", "A"), ("C", "M"), ("C", "Y"), ("A", "M"), ("A", "Y"), ("M", "Y")])
INACTIVE = Bounds(-1e9, 1e9, "mean_difference")


def by_hand(models, w_set, graph=TRIANGLE):
    models = {m.response: m for m in models}
    return FairFitResult(models, models, list(models), EstimatorKind.parse("plugin_mediation"),
                         0.0, 0.0, list(w_set), 0.0, 0.0, SolverInfo("none", 0, 0.0, True),
                         INACTIVE, NDE, graph)


def inactive_fit(data, graph, spec):
    return fit_fair(data, graph, spec, "plugin_mediation", [SIM_A, SIM_M, SIM_Y_TRUE], INACTIVE)


def test_toy_value():
    fit = by_hand([FittedGlm(ModelSpec.parse("logit: A ~ 1"), [0.0]),
                   FittedGlm(ModelSpec.parse("logit: M ~ A"), [0.0, 0.0]),
                   FittedGlm(ModelSpec.parse("Y ~ A + M"), [1.0, 2.0, 2.0])], [])
    pred = FairPredictor(fit)
    assert pred.marginalization == "exact_discrete"
    assert fair_expectation(pred, {}) == pytest.approx(3.0, abs=1e-12)


@pytest.fixture(scope="module")
def fit(sim_data, sim_graph, sim_nde):
    return inactive_fit(sim_data, sim_graph, sim_nde)


class TestSimulated:
    def test_inactive_constraint_uses_the_mle(self, fit, sim_data):
        assert fit.solver.iterations == 0
        for v, m in fit.unconstrained_models.items():
            assert fit.constrained_models[v] == m
        # W = {A, C1, C2}: average the fitted outcome model over the fitted mediator law
        pred = batch_predict(fit.predictor(), sim_data).values
        y, m = fit.unconstrained_models["Y"], fit.unconstrained_models["M"]
        cols = {c: sim_data[c] for c in sim_data.columns}
        p1 = predict_mean(m, cols)
        manual = (p1 * predict_mean(y, {**cols, "M": np.ones(len(sim_data))})
                  + (1 - p1) * predict_mean(y, {**cols, "M": np.zeros(len(sim_data))}))
        np.testing.assert_allclose(pred, manual, atol=1e-12)

    def test_reads_only_w(self, fit, sim_data):
        pred = fit.predictor()
        full = batch_predict(pred, sim_data).values
        only_w = batch_predict(pred, sim_data.frame[["A", "C1", "C2"]]).values
        scrambled = sim_data.frame.assign(M=1 - sim_data["M"], Y=0.0)
        np.testing.assert_array_equal(full, only_w)
        np.testing.assert_array_equal(full, batch_predict(pred, scrambled).values)

    def test_missing_w_column(self, fit, sim_data):
        with pytest.raises(DataError):
            batch_predict(fit.predictor(), sim_data.frame[["C1", "C2"]])

    def test_w_override_needs_models(self, fit):
        with pytest.raises(ModelSpecError):
            fit.predictor(w_set=("A", "M"))

    def test_rmse(self, fit, sim_data):
        out = batch_predict(fit.predictor(), sim_data)
        assert out.rmse == pytest.approx(math.sqrt(np.mean((out.values - sim_data["Y"]) ** 2)), rel=1e-12)
        assert out.labels is None and out.accuracy is None
        assert list(out.to_frame().columns) == ["row", "fair_expectation"]

    def test_train_mean(self, fit, sim_data):
        values = batch_predict(fit.predictor(), sim_data).values
        y = sim_data["Y"]
        assert abs(values.mean() - y.mean()) < 3 * y.std() / math.sqrt(len(y))

    def test_single_instance_matches_batch(self, fit, sim_data):
        pred = fit.predictor()
        batch = batch_predict(pred, sim_data.take(np.arange(3))).values
        row = sim_data.frame.iloc[1].to_dict()
        assert fair_expectation(pred, row, row_id=1) == pytest.approx(batch[1], abs=1e-12)


def test_more_information_lowers_error(sim_sem, sim_graph, sim_nde):
    sets = [("C1", "C2"), ("A", "C1", "C2"), ("A", "C1", "C2", "M")]
    errors = np.zeros((50, 3))
    test = generate(sim_sem, 2000, seed=999)
    for rep in range(50):
        fit = inactive_fit(generate(sim_sem, 500, seed=rep), sim_graph, sim_nde)
        for j, w in enumerate(sets):
            errors[rep, j] = batch_predict(fit.predictor(w_set=w), test).rmse
    mean = errors.mean(axis=0)
    assert mean[0] > mean[1] > mean[2]


def test_monte_carlo_matches_analytic():
    # Gaussian M given A, C; Y quadratic in M so the integral is not just a plug-in
    a = FittedGlm(ModelSpec.parse("logit: A ~ C"), [0.2, 0.7])
    m = FittedGlm(ModelSpec.parse("M ~ A + C"), [0.1, 1.0, 0.5], 1.5)
    y = FittedGlm(ModelSpec.parse("Y ~ A + M + C + M:M"), [1.0, 0.5, 2.0, -1.0, 0.3])
    pred = FairPredictor(by_hand([a, m, y], ["C"]), mc_draws=20_000, seed=4)
    assert pred.marginalization.startswith("monte_carlo")
    c = 0.8
    total = 0.0
    for av in (0, 1):
        pa = 1 / (1 + math.exp(-(0.2 + 0.7 * c)))
        w = pa if av else 1 - pa
        mu = 0.1 + av + 0.5 * c
        total += w * (1 + 0.5 * av + 2 * mu - c + 0.3 * (mu * mu + 1.5))
    assert fair_expectation(pred, {"C": c}) == pytest.approx(total, abs=0.05)
    again = FairPredictor(by_hand([a, m, y], ["C"]), mc_draws=20_000, seed=4)
    assert fair_expectation(again, {"C": c}) == fair_expectation(pred, {"C": c})


def test_binary_outcome_labels():
    a = FittedGlm(ModelSpec.parse("logit: A ~ 1"), [0.0])
    m = FittedGlm(ModelSpec.parse("logit: M ~ A"), [0.0, 1.0])
    y = FittedGlm(ModelSpec.parse("logit: Y ~ A + M + C"), [-0.5, 0.4, 0.6, 2.0])
    rows = {"C": np.array([-1.0, 0.0, 1.0, 2.0]), "Y": np.array([0.0, 0.0, 1.0, 0.0])}
    out = batch_predict(FairPredictor(by_hand([a, m, y], ["C"])), rows)
    assert np.all((out.values > 0) & (out.values < 1))
    np.testing.assert_array_equal(out.labels, out.values >= 0.5)
    assert out.accuracy == np.mean(out.labels == rows["Y"])
    assert out.to_frame()["label"].dtype.kind == "i"


class TestSelectW:
    def test_ipw(self, sim_graph, sim_nde):
        assert select_w("ipw", sim_graph, sim_nde) == ["C1", "C2"]

    def test_outcome_only_estimators(self, sim_graph, sim_nde):
        assert select_w("plugin_mediation", sim_graph, sim_nde) == ["A", "C1", "C2"]
        assert select_w("closed_form:linear_nde", sim_graph, sim_nde) == ["A", "C1", "C2", "M"]

    def test_triply_robust(self, sim_graph, sim_nde):
        assert select_w("triply_robust", sim_graph, sim_nde) == ["C1", "C2"]

    def test_edge_g(self, fig):
        graph, spec = fig("two_mediator_graph.json", "two_mediator_pse.json")
        assert select_w("edge_g_plugin", graph, spec) == ["C", "A"]
