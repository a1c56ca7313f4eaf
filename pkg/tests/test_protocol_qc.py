import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgossip.graph import Digraph, complete_digraph, load_graph, uniform_activation
from qgossip.protocol_qc import (
    NonConvergenceError,
    PolicyViolationError,
    adopt,
    interval_stats,
    is_consensus,
    qc_step,
    run_qc,
    step_toward,
    x1_state,
)

from oracles import ref_qc_adopt


def test_rule_examples():
    assert qc_step((1, 1), (1, 2)) == (1, 1)
    assert qc_step((0, 1), (1, 2)) == (0, 0)
    assert qc_step((0, 5), (2, 1), "adopt") == (5, 5)
    assert qc_step((0, 5), (2, 1), "step") == (1, 5)


def test_policy_outside_interval_is_rejected():
    with pytest.raises(PolicyViolationError):
        qc_step((0, 5), (2, 1), lambda xi, xj: xi)
    with pytest.raises(PolicyViolationError):
        qc_step((0, 5), (2, 1), lambda xi, xj: xj + 1)
    with pytest.raises(ValueError):
        qc_step((0, 5), (2, 1), "median")


@given(st.lists(st.integers(-20, 20), min_size=2, max_size=6), st.data())
@settings(max_examples=200, deadline=None)
def test_step_matches_reference_and_stays_in_hull(x, data):
    n = len(x)
    j = data.draw(st.integers(1, n))
    i = data.draw(st.integers(1, n).filter(lambda v: v != j))
    assert qc_step(x, (j, i), adopt) == ref_qc_adopt(x, j - 1, i - 1)
    stepped = qc_step(x, (j, i), step_toward)
    assert min(x) <= min(stepped) and max(stepped) <= max(x)
    assert all(a == b for k, (a, b) in enumerate(zip(x, stepped)) if k != i - 1)


def test_consensus_and_interval_helpers():
    assert is_consensus((3, 3, 3))
    assert not is_consensus((1, 1, 0))
    assert is_consensus((0,) * 5)
    assert interval_stats((1, 0, 1)) == (0, 1, 1)
    assert interval_stats((5, 5)) == (5, 5, 0)
    assert interval_stats((-2, 3, 0)) == (-2, 3, 5)
    assert x1_state(3, 1) == (1, 0, 0)
    assert x1_state(4, 3) == (1, 1, 1, 0)
    assert x1_state(2, 1) == (1, 0)
    with pytest.raises(ValueError):
        x1_state(3, 3)


@pytest.mark.parametrize("seed", range(20))
def test_two_nodes_always_take_one_step(seed):
    model = uniform_activation(complete_digraph(2))
    state, t = run_qc(model.graph, model, (1, 0), seed=seed)
    assert t == 1 and is_consensus(state)


def test_constant_start_takes_zero_steps():
    model = uniform_activation(complete_digraph(3))
    assert run_qc(model.graph, model, (4, 4, 4))[1] == 0


def test_run_is_reproducible_and_accepts_generator():
    model = uniform_activation(complete_digraph(5))
    a = run_qc(model.graph, model, (3, 0, 1, 2, 0), seed=9)
    b = run_qc(model.graph, model, (3, 0, 1, 2, 0), seed=np.random.Generator(np.random.Philox(9)))
    assert a == b


def test_path_graph_converges_to_root_value():
    model = load_graph("path:4")
    state, t = run_qc(model.graph, model, (7, 0, 3, 1), seed=1)
    assert state == (7, 7, 7, 7) and t > 0


def test_no_globally_reachable_node_warns_and_fails():
    # nodes 2 and 3 both feed node 1 but never hear from anyone
    model = uniform_activation(Digraph(3, ((2, 1), (3, 1))))
    with pytest.warns(UserWarning):
        with pytest.raises(NonConvergenceError) as info:
            run_qc(model.graph, model, (0, 1, 2), seed=0, max_steps=500)
    assert info.value.steps == 500


def test_rejects_wrong_length():
    model = uniform_activation(complete_digraph(3))
    with pytest.raises(ValueError):
        run_qc(model.graph, model, (1, 0))
