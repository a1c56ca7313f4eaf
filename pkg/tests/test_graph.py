from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgossip.graph import (
    ActivationModel,
    Digraph,
    EdgeStream,
    GraphError,
    complete_digraph,
    has_globally_reachable_node,
    is_complete,
    load_graph,
    parse_edge_list,
    path_digraph,
    ring_digraph,
    sample_edge,
    uniform_activation,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def test_complete_digraph_has_all_ordered_pairs():
    g = complete_digraph(4)
    assert len(g.edges) == 12
    assert is_complete(g)
    assert (1, 2) in g and (2, 1) in g and (1, 1) not in g


@pytest.mark.parametrize(
    "n, edges",
    [
        (1, ()),
        (3, ((1, 1),)),
        (3, ((1, 4),)),
        (3, ((0, 1),)),
        (3, ((1, 2), (1, 2))),
    ],
)
def test_digraph_rejects_malformed_input(n, edges):
    with pytest.raises(GraphError):
        Digraph(n, edges)


def test_activation_probabilities_must_sum_to_one():
    g = Digraph(2, ((1, 2), (2, 1)))
    with pytest.raises(GraphError):
        ActivationModel(g, (0.5, 0.4))
    with pytest.raises(GraphError):
        ActivationModel(g, (0.5, 0.5, 0.0))
    with pytest.raises(GraphError):
        ActivationModel(Digraph(2, ((1, 2),)), (1.0,))


def test_uniform_activation():
    model = uniform_activation(complete_digraph(5))
    assert model.is_uniform()
    assert model.probability((3, 1)) == pytest.approx(1 / 20)


def test_sample_edge_is_deterministic_given_seed():
    model = uniform_activation(complete_digraph(4))
    a = [sample_edge(model, rng(3)) for _ in range(5)]
    b = [sample_edge(model, rng(3)) for _ in range(5)]
    assert a == b
    assert all(e in model.graph for e in a)


def test_edge_stream_follows_activation_weights():
    g = Digraph(3, ((1, 2), (2, 3), (3, 1)))
    model = ActivationModel(g, (0.5, 0.3, 0.2))
    stream = EdgeStream(model, rng(11))
    N = 100_000
    counts = Counter(next(stream) for _ in range(N))
    for (j, i), p in zip(g.edges, model.probabilities):
        freq = counts[(j - 1, i - 1)] / N
        assert abs(freq - p) < 4 * np.sqrt(p * (1 - p) / N)


def test_edge_stream_matches_single_draws_chunk_size_independent():
    model = uniform_activation(complete_digraph(6))
    a = EdgeStream(model, rng(5), max_chunk=64)
    b = EdgeStream(model, rng(5), max_chunk=4096)
    assert [next(a) for _ in range(3000)] == [next(b) for _ in range(3000)]


def test_globally_reachable_node():
    assert has_globally_reachable_node(complete_digraph(3))
    assert has_globally_reachable_node(path_digraph(4))
    assert has_globally_reachable_node(ring_digraph(4))
    # out-star: node 1 reaches everyone
    assert has_globally_reachable_node(Digraph(3, ((1, 2), (1, 3))))
    # in-star: nodes 2 and 3 never hear anything
    assert not has_globally_reachable_node(Digraph(3, ((2, 1), (3, 1))))


@given(st.integers(2, 7), st.data())
@settings(max_examples=60, deadline=None)
def test_globally_reachable_matches_transitive_closure(n, data):
    pairs = [(j, i) for j in range(1, n + 1) for i in range(1, n + 1) if j != i]
    edges = data.draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    g = Digraph(n, tuple(edges))
    reach = np.eye(n, dtype=bool)
    for j, i in edges:
        reach[j - 1, i - 1] = True
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    expected = any(reach[r, :].all() for r in range(n))
    assert has_globally_reachable_node(g) == expected


def test_parse_edge_list_uniform_and_weighted():
    model = parse_edge_list("# ring\nn 3\n1 2\n2 3\n3 1\n")
    assert model.graph.n == 3 and model.is_uniform()
    weighted = parse_edge_list("n 2\n1 2 0.25\n2 1 0.75\n")
    assert weighted.probability((2, 1)) == 0.75


@pytest.mark.parametrize("text", ["", "nodes 3\n1 2", "n 3\n1 2 0.5\n2 3", "n 3\n1 x"])
def test_parse_edge_list_errors(text):
    with pytest.raises(GraphError):
        parse_edge_list(text)


def test_load_graph_specs(tmp_path):
    assert load_graph("complete:4").graph.n == 4
    assert load_graph("path:4").graph.edges == ((1, 2), (2, 3), (3, 4))
    assert len(load_graph("ring:5").graph.edges) == 5
    f = tmp_path / "g.txt"
    f.write_text("n 2\n1 2\n2 1\n")
    assert is_complete(load_graph(str(f)).graph)
    with pytest.raises(GraphError):
        load_graph("star:4")
    with pytest.raises(GraphError):
        load_graph("complete:x")


def test_edge_counts_and_uniform_weights():
    assert complete_digraph(2).edges == ((1, 2), (2, 1))
    assert len(complete_digraph(3).edges) == 6
    assert len(complete_digraph(10).edges) == 90
    assert uniform_activation(complete_digraph(3)).probabilities == (1 / 6,) * 6
    assert uniform_activation(ring_digraph(4)).probabilities == (0.25,) * 4


def test_two_edge_frequencies():
    model = uniform_activation(complete_digraph(2))
    stream = EdgeStream(model, rng(2))
    counts = Counter(next(stream) for _ in range(100_000))
    assert abs(counts[(0, 1)] / 100_000 - 0.5) < 0.01


def test_reachability_examples():
    assert not has_globally_reachable_node(Digraph(4, ((1, 2), (2, 1), (3, 4), (4, 3))))
    assert has_globally_reachable_node(path_digraph(3))
    edges = complete_digraph(5).edges
    assert not is_complete(Digraph(5, edges[1:]))
