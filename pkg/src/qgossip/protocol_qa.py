"""Quantized averaging (QA) with one-bit surplus variables.

Each node carries a state ``x_i`` and a surplus ``s_i``. When edge ``(j, i)``
fires, ``j`` sends ``(x_j, s_j)`` to ``i`` and clears its own surplus; ``i``
then either updates or returns ``s_j`` over the reverse edge. The six cases:

======  =========================  ==========================================
rule    condition                  effect
======  =========================  ==========================================
R1i     x_i == x_j, s_i>0, s_j>0   send-back: nothing changes
R1ii    x_i == x_j otherwise       s_i += s_j, s_j = 0
R2i     x_i < x_j, s_i+s_j > 0     x_i += 1, s_i = s_i+s_j-1, s_j = 0
R2ii    x_i < x_j, s_i+s_j == 0    nothing changes
R3i     x_i > x_j, s_i+s_j == 0    x_i -= 1, s_i = 1, s_j = 0
R3ii    x_i > x_j, s_i+s_j > 0     send-back: nothing changes
======  =========================  ==========================================

``x + s`` summed over nodes is conserved, surpluses stay in {0, 1}, and the
send-back cases need the reverse edge, so QA runs on complete digraphs only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .graph import ActivationModel, Digraph, EdgeStream, is_complete
from .protocol_qc import NonConvergenceError, make_rng


class UnsupportedTopologyError(ValueError):
    """QA needs a complete digraph for the surplus send-back."""


class QaRule(enum.Enum):
    R1i = "R1i"
    R1ii = "R1ii"
    R2i = "R2i"
    R2ii = "R2ii"
    R3i = "R3i"
    R3ii = "R3ii"

    @property
    def generates(self) -> bool:
        return self is QaRule.R3i

    @property
    def consumes(self) -> bool:
        return self is QaRule.R2i


@dataclass(frozen=True)
class QaState:
    """Node states ``x`` and surpluses ``s``.

    Surpluses are not checked to be binary here, so that an audit can count
    a faulty rule's output instead of crashing on it.
    """

    x: Tuple[int, ...]
    s: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(int(v) for v in self.x))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        if len(self.x) != len(self.s):
            raise ValueError("x and s must have the same length")

    @classmethod
    def initial(cls, x0: Sequence[int]) -> "QaState":
        return cls(tuple(x0), (0,) * len(x0))

    @property
    def n(self) -> int:
        return len(self.x)

    def total(self) -> int:
        return sum(self.x) + sum(self.s)


@dataclass(frozen=True)
class QaRuleFired:
    """Which rule fired, at which receiver (1-based), and the receiver's prior state."""

    rule: QaRule
    receiver: int
    x_before: int


def _apply(x: List[int], s: List[int], j: int, i: int) -> QaRule:
    """Update ``x`` and ``s`` in place for 0-based sender ``j`` and receiver ``i``."""
    xi, xj = x[i], x[j]
    si, sj = s[i], s[j]
    if xi == xj:
        if si > 0 and sj > 0:
            return QaRule.R1i
        s[i] = si + sj
        s[j] = 0
        return QaRule.R1ii
    if xi < xj:
        if si + sj > 0:
            x[i] = xi + 1
            s[i] = si + sj - 1
            s[j] = 0
            return QaRule.R2i
        return QaRule.R2ii
    if si + sj == 0:
        x[i] = xi - 1
        s[i] = 1
        s[j] = 0
        return QaRule.R3i
    return QaRule.R3ii


def qa_step(state: QaState, edge: Tuple[int, int]) -> Tuple[QaState, QaRuleFired]:
    """Apply one QA update for the 1-based edge ``(j, i)``."""
    j, i = edge
    if j == i:
        raise ValueError("self-loop edges are not allowed")
    x, s = list(state.x), list(state.s)
    x_before = x[i - 1]
    rule = _apply(x, s, j - 1, i - 1)
    return QaState(tuple(x), tuple(s)), QaRuleFired(rule, i, x_before)


def average_bounds(initial_sum: int, n: int) -> Tuple[int, int]:
    """Floor and ceiling of ``initial_sum / n`` (floor toward minus infinity)."""
    lo = initial_sum // n
    return lo, lo if initial_sum % n == 0 else lo + 1


def is_average_consensus(state: Union[QaState, Sequence[int]], initial_sum: int, n: Optional[int] = None) -> bool:
    """True iff every state equals the floor or the ceiling of the initial average.

    Surpluses are not inspected.
    """
    x = state.x if isinstance(state, QaState) else tuple(state)
    n = len(x) if n is None else n
    lo, hi = average_bounds(initial_sum, n)
    return all(v == lo or v == hi for v in x)


def default_qa_max_steps(n: int, x0: Sequence[int]) -> int:
    return 10**4 * n**3 * (max(x0) - min(x0) + 1)


def check_qa_topology(g: Digraph) -> None:
    if not is_complete(g):
        raise UnsupportedTopologyError(
            "QA requires a complete digraph: the surplus send-back uses the reverse edge"
        )


StepHook = Callable[[QaState, QaRuleFired, QaState], None]


def run_qa(
    g: Digraph,
    model: ActivationModel,
    x0: Sequence[int],
    seed: Union[int, np.random.Generator] = 0,
    max_steps: Optional[int] = None,
    tracker=None,
    on_step: Optional[StepHook] = None,
) -> Tuple[QaState, int]:
    """Run QA from ``(x0, 0)`` until average consensus.

    Args:
        tracker: Optional object with a ``feed(fired)`` method, called with
            every :class:`QaRuleFired` (for instance a Lyapunov tracker).
        on_step: Optional ``hook(before, fired, after)`` called after every
            step; slows the run since states are materialized per step.

    Returns:
        The final :class:`QaState` and the hitting step ``T_qa``.

    Raises:
        UnsupportedTopologyError: ``g`` is not complete.
        NonConvergenceError: ``max_steps`` exceeded.
    """
    check_qa_topology(g)
    if len(x0) != g.n:
        raise ValueError(f"initial state has {len(x0)} entries for {g.n} nodes")
    if max_steps is None:
        max_steps = default_qa_max_steps(g.n, x0)
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    x = [int(v) for v in x0]
    s = [0] * len(x)
    lo, hi = average_bounds(sum(x), g.n)
    if all(v == lo or v == hi for v in x):
        return QaState(tuple(x), tuple(s)), 0
    edges = EdgeStream(model, make_rng(seed))
    observe = tracker is not None or on_step is not None
    for k in range(1, max_steps + 1):
        j, i = next(edges)
        if observe:
            before = QaState(tuple(x), tuple(s)) if on_step is not None else None
            x_before = x[i]
            rule = _apply(x, s, j, i)
            fired = QaRuleFired(rule, i + 1, x_before)
            if tracker is not None:
                tracker.feed(fired)
            if on_step is not None:
                on_step(before, fired, QaState(tuple(x), tuple(s)))
        else:
            rule = _apply(x, s, j, i)
        if (rule is QaRule.R2i or rule is QaRule.R3i) and min(x) >= lo and max(x) <= hi:
            return QaState(tuple(x), tuple(s)), k
    raise NonConvergenceError(max_steps, QaState(tuple(x), tuple(s)))
