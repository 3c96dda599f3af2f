from importlib import resources

import pytest

from fairpath import bundled_sem, generate, load_graph, load_pse

SIM_A = "logit: A ~ C1 + C2"
SIM_M = "logit: M ~ A + C1 + C2 + A:C1 + A:C2"
SIM_Y_TRUE = "Y ~ A + C1 + C2 + M + A:C1 + A:C2 + A:M + C1:C2 + M:C1 + M:C2"
# drops every interaction and adds a spurious cubic term
SIM_Y_WRONG = "Y ~ A + C1 + C2 + M + A:C1:C1"


def fixture_path(name):
    return str(resources.files("fairpath").joinpath("data", name))


@pytest.fixture(scope="session")
def sim_sem():
    return bundled_sem("sim1.json")


@pytest.fixture(scope="session")
def sim_data(sim_sem):
    return generate(sim_sem, 4000, seed=0)


@pytest.fixture(scope="session")
def sim_graph():
    return load_graph(fixture_path("sim1_graph.json"))


@pytest.fixture(scope="session")
def sim_nde():
    return load_pse(fixture_path("sim1_nde.json"))


@pytest.fixture
def fig(request):
    def load(graph_name, pse_name):
        return load_graph(fixture_path(graph_name)), load_pse(fixture_path(pse_name))
    return load
