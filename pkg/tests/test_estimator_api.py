import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fairpath import FairOutcomeRegressor, generate
from fairpath.exceptions import InfeasibleConstraintError

from conftest import SIM_A, SIM_M, SIM_Y_TRUE

LINEAR = ["Y ~ A + M + C1 + C2", SIM_M, SIM_A]


@pytest.fixture(scope="module")
def frames(sim_sem):
    return generate(sim_sem, 800, seed=31).frame, generate(sim_sem, 400, seed=32).frame


def make(sim_graph, sim_nde, **kw):
    params = dict(graph=sim_graph, pse=sim_nde, models=LINEAR, estimator="closed_form:linear_nde")
    return FairOutcomeRegressor(**{**params, **kw})


def test_params_and_clone(sim_graph, sim_nde):
    est = make(sim_graph, sim_nde, lower=-0.1, upper=0.2)
    params = est.get_params()
    assert params["lower"] == -0.1 and params["estimator"] == "closed_form:linear_nde"
    copy = clone(est)
    assert copy.get_params() == params and not hasattr(copy, "fit_")
    assert est.set_params(upper=0.3).upper == 0.3


def test_fit_predict(frames, sim_graph, sim_nde):
    train, test = frames
    est = make(sim_graph, sim_nde).fit(train)
    assert est.w_set_ == ["A", "C1", "C2", "M"]
    assert est.fit_.achieved_pse == 0.5
    pred = est.predict(test)
    assert pred.shape == (len(test),) and np.all(np.isfinite(pred))
    assert est.score(test, test["Y"]) > 0.5


def test_y_argument_supplies_outcome(frames, sim_graph, sim_nde):
    train, test = frames
    a = make(sim_graph, sim_nde).fit(train)
    b = make(sim_graph, sim_nde).fit(train.drop(columns="Y"), train["Y"])
    np.testing.assert_array_equal(a.predict(test), b.predict(test))


def test_dict_inputs(frames, sim_graph, sim_nde):
    train, test = frames
    a = make(sim_graph, sim_nde).fit(train)
    b = make(sim_graph.to_dict(), sim_nde.to_dict()).fit(train)
    np.testing.assert_array_equal(a.predict(test), b.predict(test))


def test_prediction_ignores_non_w_columns(frames, sim_graph, sim_nde):
    train, test = frames
    est = FairOutcomeRegressor(sim_graph, sim_nde, [SIM_A, SIM_M, SIM_Y_TRUE], "ipw").fit(train)
    assert est.w_set_ == ["C1", "C2"]
    flipped = test.assign(A=1 - test["A"], M=1 - test["M"])
    np.testing.assert_array_equal(est.predict(test), est.predict(flipped))


def test_not_fitted(sim_graph, sim_nde, frames):
    with pytest.raises(NotFittedError):
        make(sim_graph, sim_nde).predict(frames[1])


def test_needs_dataframe(sim_graph, sim_nde, frames):
    with pytest.raises(TypeError):
        make(sim_graph, sim_nde).fit(frames[0].to_numpy())


def test_needs_graph(frames):
    with pytest.raises(ValueError):
        FairOutcomeRegressor().fit(frames[0])


def test_infeasible_propagates(frames, sim_graph, sim_nde):
    est = make(sim_graph, sim_nde, models=["Y ~ M + C1 + C2"], lower=0.2, upper=0.3)
    with pytest.raises(InfeasibleConstraintError):
        est.fit(frames[0])
