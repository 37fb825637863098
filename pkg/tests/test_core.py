import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterabm.core import (
    SEIRD,
    AgentProfile,
    ExogenousSeries,
    Population,
    ScenarioConfig,
    StateSpace,
    build_graph,
    initialize_states,
    minority_counts,
    neighbor_state_count_matrix,
    neighbor_state_counts,
    synthetic_contact_layers,
)


# ---------------------------------------------------------------- StateSpace


def test_state_space_terminal_and_outgoing():
    assert SEIRD.terminal_states == ("D",)
    assert [SEIRD.transitions[j] for j in SEIRD.outgoing("I")] == [("I", "R"), ("I", "D")]
    assert SEIRD.outgoing("D") == []


@pytest.mark.parametrize(
    "states, transitions",
    [
        (("A",), (("A", "A"),)),
        (("A", "B"), ()),
        (("A", "B"), (("A", "C"),)),
        (("A", "B"), (("A", "A"),)),
        (("A", "A"), (("A", "B"),)),
        (("A", "B"), (("A", "B"), ("A", "B"))),
    ],
)
def test_state_space_rejects_invalid(states, transitions):
    with pytest.raises(ValueError):
        StateSpace(states=states, transitions=transitions)


# ---------------------------------------------------------------- graph


def test_single_edge_graph():
    g = build_graph(3, {"contact": [(0, 1)]})
    assert g.adjacency.toarray().tolist() == [[0, 1, 0], [1, 0, 0], [0, 0, 0]]
    assert g.degree[2] == 0


def test_duplicate_edges_merge_weights():
    g = build_graph(2, {"contact": [(0, 1, 0.5), (0, 1, 0.5)]})
    assert g.n_edges == 1
    assert g.edge_list() == [("contact", 0, 1, 1.0)]
    assert g.adjacency.toarray()[0, 1] == 1


@pytest.mark.parametrize("edges", [[(0, 3)], [(1, 1)], [(0, 1, -1.0)], [(0, 1, float("nan"))]])
def test_build_graph_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        build_graph(3, {"contact": edges})


def test_synthetic_layers_mean_degree():
    g = build_graph(1000, synthetic_contact_layers(1000, seed=0))
    # recompute the mean degree from the emitted edge list, not from adjacency
    pairs = {(min(i, j), max(i, j)) for _, i, j, _ in g.edge_list()}
    assert abs(2 * len(pairs) / 1000 - 8.2) <= 1.5


def test_synthetic_layers_deterministic():
    a = synthetic_contact_layers(300, seed=5)
    b = synthetic_contact_layers(300, seed=5)
    assert a == b


@st.composite
def graphs(draw, max_n=30):
    n = draw(st.integers(1, max_n))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1])
    edges = draw(st.lists(pairs, max_size=3 * n))
    other = draw(st.lists(pairs, max_size=n))
    return n, {"a": edges, "b": other}


@given(graphs())
@settings(max_examples=60, deadline=None)
def test_degree_sum_is_twice_edge_count(case):
    n, layers = case
    g = build_graph(n, layers)
    A = g.adjacency.toarray()
    assert np.array_equal(A, A.T)
    assert set(np.unique(A)) <= {0, 1}
    assert np.all(np.diag(A) == 0)
    assert g.degree.sum() == 2 * int(np.triu(A).sum())


# ---------------------------------------------------------------- neighbour counts


def test_isolated_agent_has_zero_counts():
    g = build_graph(3, {"c": [(0, 1)]})
    counts = neighbor_state_counts(g, np.array([0, 2, 2]), 2, SEIRD)
    assert all(v == 0 for v in counts.values())


def test_three_infected_neighbours():
    g = build_graph(4, {"c": [(0, 1), (0, 2), (0, 3)]})
    counts = neighbor_state_counts(g, np.array([0, 2, 2, 2]), 0, SEIRD)
    assert counts == {"S": 0, "E": 0, "I": 3, "R": 0, "D": 0}


def test_neighbour_counts_match_edge_scan():
    rng = np.random.default_rng(3)
    n = 50
    edges = [tuple(e) for e in rng.integers(0, n, (150, 2)) if e[0] != e[1]]
    g = build_graph(n, {"c": edges})
    states = rng.integers(0, 5, n)
    M = neighbor_state_count_matrix(g, states, 5)
    und = {(min(i, j), max(i, j)) for i, j in edges}
    for a in range(n):
        ref = np.zeros(5, dtype=int)
        for i, j in und:
            if i == a:
                ref[states[j]] += 1
            elif j == a:
                ref[states[i]] += 1
        assert np.array_equal(M[a], ref)
        single = neighbor_state_counts(g, states, a, SEIRD)
        assert [single[s] for s in SEIRD.states] == ref.tolist()
        assert sum(single.values()) == g.degree[a]


def test_neighbour_counts_bad_id():
    g = build_graph(2, {"c": [(0, 1)]})
    with pytest.raises(ValueError):
        neighbor_state_counts(g, np.zeros(2, int), 5, SEIRD)


# ---------------------------------------------------------------- initialisation


def _config(counts, seed=0):
    return ScenarioConfig(domain="epi", state_space=SEIRD, horizon=10, initial_counts=counts, seed=seed)


def test_initial_multiplicities():
    x = initialize_states(_config({"S": 991, "E": 8, "I": 1}))
    assert np.bincount(x, minlength=5).tolist() == [991, 8, 1, 0, 0]


def test_single_state_init():
    x = initialize_states(_config({"S": 40}))
    assert np.all(x == 0)


def test_minority_rounding_ceiling():
    counts = minority_counts(250, "Unaware", {"Interested": 0.01})
    assert counts == {"Unaware": 247, "Interested": 3}


def test_init_count_mismatch():
    with pytest.raises(ValueError):
        initialize_states(_config({"S": 10}), n=11)


@given(st.lists(st.integers(0, 30), min_size=5, max_size=5).filter(lambda c: sum(c) > 0), st.integers(0, 2**63))
@settings(max_examples=40, deadline=None)
def test_init_is_a_shuffle(counts, seed):
    cfg = _config(dict(zip(SEIRD.states, counts)), seed)
    x = initialize_states(cfg)
    assert np.array_equal(np.sort(x), np.repeat(np.arange(5), counts))
    assert np.array_equal(x, initialize_states(cfg))


# ---------------------------------------------------------------- profiles and config


def test_profile_modifiers_must_be_finite():
    with pytest.raises(ValueError):
        AgentProfile(id=0, attributes={}, susceptibility_modifiers={"S->E": float("inf")})


def test_population_ids_dense():
    ps = [AgentProfile(id=i, attributes={"age": 30.0}, susceptibility_modifiers={}) for i in (0, 2)]
    with pytest.raises(ValueError):
        Population.from_profiles(ps, SEIRD)


def test_exogenous_length_must_match_horizon():
    with pytest.raises(ValueError):
        ScenarioConfig("epi", SEIRD, 10, {"S": 5}, exogenous=(ExogenousSeries("x", np.zeros(9)),))


def test_generator_hazards_in_unit_interval():
    with pytest.raises(ValueError):
        ScenarioConfig("epi", SEIRD, 10, {"S": 5}, generator_hazards=np.full((10, 5), 1.5))
