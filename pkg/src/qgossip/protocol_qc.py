"""Quantized consensus (QC) on digraphs.

When edge ``(j, i)`` fires, the sender keeps its value and the receiver moves
into the half-open interval between its own value and the sender's:

* equal values: no change;
* ``x_i < x_j``: new ``x_i`` in ``(x_i, x_j]``;
* ``x_i > x_j``: new ``x_i`` in ``[x_j, x_i)``.

Where the receiver lands inside that interval is decided by a policy.
"""

from __future__ import annotations

import warnings
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .graph import ActivationModel, Digraph, EdgeStream, has_globally_reachable_node

Policy = Callable[[int, int], int]
QcState = Tuple[int, ...]


class PolicyViolationError(ValueError):
    """A policy chose a value outside the interval the update rule allows."""


class NonConvergenceError(RuntimeError):
    """Raised when a run exceeds ``max_steps`` without reaching its target set."""

    def __init__(self, steps: int, state=None):
        super().__init__(f"no convergence within {steps} steps")
        self.steps = steps
        self.state = state


def adopt(x_i: int, x_j: int) -> int:
    """Take the sender's value."""
    return x_j


def step_toward(x_i: int, x_j: int) -> int:
    """Move one unit toward the sender's value."""
    if x_i < x_j:
        return x_i + 1
    if x_i > x_j:
        return x_i - 1
    return x_i


POLICIES = {"adopt": adopt, "step": step_toward}


def resolve_policy(policy: Union[str, Policy, None]) -> Policy:
    if policy is None:
        return adopt
    if callable(policy):
        return policy
    try:
        return POLICIES[policy.lower()]
    except KeyError:
        raise ValueError(f"unknown QC policy {policy!r}; choose from {sorted(POLICIES)}") from None


def _receive(x_i: int, x_j: int, policy: Policy) -> int:
    if x_i == x_j:
        return x_i
    new = int(policy(x_i, x_j))
    if x_i < x_j:
        ok = x_i < new <= x_j
    else:
        ok = x_j <= new < x_i
    if not ok:
        lo, hi = (f"({x_i}", f"{x_j}]") if x_i < x_j else (f"[{x_j}", f"{x_i})")
        raise PolicyViolationError(f"policy chose {new}, outside {lo}, {hi}")
    return new


def qc_step(state: Sequence[int], edge: Tuple[int, int], policy: Union[str, Policy, None] = None) -> QcState:
    """Apply one QC update for the 1-based edge ``(j, i)``."""
    j, i = edge
    x = list(state)
    x[i - 1] = _receive(x[i - 1], x[j - 1], resolve_policy(policy))
    return tuple(x)


def is_consensus(state: Sequence[int]) -> bool:
    return len(set(state)) <= 1


def interval_stats(state: Sequence[int]) -> Tuple[int, int, int]:
    """Return ``(min, max, max - min)``."""
    lo, hi = min(state), max(state)
    return lo, hi, hi - lo


def x1_state(n: int, z: int) -> QcState:
    """``z`` leading ones followed by ``n - z`` zeros."""
    if not 1 <= z <= n - 1:
        raise ValueError(f"ones count z={z} must lie in 1..{n - 1}")
    return tuple([1] * z + [0] * (n - z))


def default_qc_max_steps(n: int, x0: Sequence[int]) -> int:
    return 10**4 * n * n * (max(x0) - min(x0) + 1)


def make_rng(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def run_qc(
    g: Digraph,
    model: ActivationModel,
    x0: Sequence[int],
    policy: Union[str, Policy, None] = None,
    seed: Union[int, np.random.Generator] = 0,
    max_steps: Optional[int] = None,
) -> Tuple[QcState, int]:
    """Run QC from ``x0`` until all states agree.

    Returns:
        The final state and the first step at which it was in consensus.

    Raises:
        NonConvergenceError: ``max_steps`` activations without consensus.
    """
    if len(x0) != g.n:
        raise ValueError(f"initial state has {len(x0)} entries for {g.n} nodes")
    if not has_globally_reachable_node(g):
        warnings.warn("digraph has no globally reachable node; consensus is not guaranteed", stacklevel=2)
    if max_steps is None:
        max_steps = default_qc_max_steps(g.n, x0)
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    choose = resolve_policy(policy)
    x = [int(v) for v in x0]
    if is_consensus(x):
        return tuple(x), 0
    edges = EdgeStream(model, make_rng(seed))
    for k in range(1, max_steps + 1):
        j, i = next(edges)
        xi, xj = x[i], x[j]
        if xi == xj:
            continue
        x[i] = _receive(xi, xj, choose)
        if min(x) == max(x):
            return tuple(x), k
    raise NonConvergenceError(max_steps, tuple(x))
