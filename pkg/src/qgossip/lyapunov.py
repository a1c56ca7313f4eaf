"""Positive/negative surplus bookkeeping and the QA Lyapunov function.

With ``L = floor(sum(x0) / n)`` and ``R = sum(x0) - n*L``, the tracker keeps

    D  = sum_i |x_i - L|
    S+ = surpluses generated while moving toward L (or consumed the other way)
    S- = surpluses generated while moving away from L
    V  = D + S+ - S-

``V`` never increases. It drops, by exactly 2, only when a surplus is
consumed by a node below ``L`` while ``S-`` is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .protocol_qa import QaRule, QaRuleFired, QaState


class TrackerCorruptionError(RuntimeError):
    """The tracker would go negative: protocol and tracker are out of sync."""


@dataclass(frozen=True)
class LyapunovState:
    L: int
    R: int
    D: int
    S_plus: int
    S_minus: int

    @property
    def V(self) -> int:
        return self.D + self.S_plus - self.S_minus


def decompose_sum(total: int, n: int) -> Tuple[int, int]:
    """Split ``total = n*L + R`` with ``0 <= R < n``."""
    if n < 1:
        raise ValueError("n must be positive")
    L = total // n
    return L, total - n * L


def init_tracker(x0: Sequence[int]) -> LyapunovState:
    L, R = decompose_sum(sum(x0), len(x0))
    return LyapunovState(L=L, R=R, D=sum(abs(v - L) for v in x0), S_plus=0, S_minus=0)


def apply_rule(tracker: LyapunovState, fired: QaRuleFired) -> LyapunovState:
    """Advance the tracker by one fired QA rule.

    Generation (R3i) lowers the receiver by one: ``S+`` grows if it started
    above ``L`` (D falls), otherwise ``S-`` grows (D rises). Consumption (R2i)
    raises it by one: from ``x_i >= L`` D rises and ``S+`` shrinks; from
    ``x_i < L`` D falls and ``S-`` shrinks if positive, else ``S+`` does.
    Every other rule leaves the tracker untouched.
    """
    xi = fired.x_before
    L = tracker.L
    if fired.rule is QaRule.R3i:
        if xi > L:
            return replace(tracker, D=tracker.D - 1, S_plus=tracker.S_plus + 1)
        return replace(tracker, D=tracker.D + 1, S_minus=tracker.S_minus + 1)
    if fired.rule is QaRule.R2i:
        if xi >= L:
            out = replace(tracker, D=tracker.D + 1, S_plus=tracker.S_plus - 1)
        elif tracker.S_minus == 0:
            out = replace(tracker, D=tracker.D - 1, S_plus=tracker.S_plus - 1)
        else:
            out = replace(tracker, D=tracker.D - 1, S_minus=tracker.S_minus - 1)
        if out.S_plus < 0 or out.S_minus < 0:
            raise TrackerCorruptionError(f"surplus counter below zero after {fired}")
        return out
    return tracker


class LyapunovTracker:
    """Mutable per-trajectory wrapper around :class:`LyapunovState`.

    Pass one to ``run_qa(tracker=...)``. Keeps the running state, the number
    of events, and the steps at which ``V`` decreased.
    """

    def __init__(self, x0: Sequence[int], record: bool = False):
        self.state = init_tracker(x0)
        self.steps = 0
        self.decrements: List[int] = []
        self.trace: Optional[List[Tuple[int, str, int, int, int, int]]] = [] if record else None
        if record:
            self._record("init")

    def _record(self, tag: str) -> None:
        st = self.state
        self.trace.append((self.steps, tag, st.D, st.S_plus, st.S_minus, st.V))

    def feed(self, fired: QaRuleFired) -> None:
        v_before = self.state.V
        self.state = apply_rule(self.state, fired)
        self.steps += 1
        if self.state.V < v_before:
            self.decrements.append(self.steps)
        if self.trace is not None:
            self._record(fired.rule.value)

    def trace_csv(self) -> str:
        """Per-step trace as CSV: ``k,rule,D,S_plus,S_minus,V``."""
        if self.trace is None:
            raise ValueError("tracker was created with record=False")
        rows = ["k,rule,D,S_plus,S_minus,V"]
        rows += [",".join(str(v) for v in row) for row in self.trace]
        return "\n".join(rows) + "\n"


def check_lyapunov_clauses(tracker: LyapunovState, state: QaState) -> Dict[str, bool]:
    """Evaluate the four structural facts about ``V`` on a synchronized pair.

    Keys:
        ``lower_bound``: ``V >= R``.
        ``at_floor``: if ``V == R`` then ``S- == 0`` and every ``x_i >= L``.
        ``zero_error``: if ``D == 0`` then ``S- == 0`` and ``V == S+ == R``.
        ``exact_average``: if ``R == 0`` then ``D == 0`` iff ``V == 0``, and
        then ``S+ == S- == 0``.
    """
    L, R, D = tracker.L, tracker.R, tracker.D
    V, sp, sm = tracker.V, tracker.S_plus, tracker.S_minus
    at_floor = V != R or (sm == 0 and sp >= 0 and all(v >= L for v in state.x))
    zero_error = D != 0 or (sm == 0 and V == R and sp == R)
    if R == 0:
        exact_average = (D == 0) == (V == 0) and (D != 0 or (sp == 0 and sm == 0))
    else:
        exact_average = True
    return {
        "lower_bound": V >= R,
        "at_floor": at_floor,
        "zero_error": zero_error,
        "exact_average": exact_average,
    }


def v_upper_bound(n: int, m: int, M: int, R: int) -> Fraction:
    """Largest value ``V`` can take from any start in ``[m, M]^n``: ``(M-m)n/2 + R``."""
    if M < m:
        raise ValueError("need M >= m")
    if not 0 <= R < n:
        raise ValueError(f"remainder R={R} outside 0..{n - 1}")
    return Fraction((M - m) * n, 2) + R


@dataclass(frozen=True)
class LevelSet:
    level: int
    descent_ready: bool


def level_set_membership(tracker: LyapunovState) -> LevelSet:
    """Number of 2-unit decrements left before ``V`` reaches ``R``.

    ``descent_ready`` is true on the subset with ``S- == 0``, the only place
    from which ``V`` can step down a level.
    """
    gap = tracker.V - tracker.R
    if gap < 0 or gap % 2:
        raise TrackerCorruptionError(f"V - R = {gap} is not a nonnegative even number")
    return LevelSet(gap // 2, tracker.S_minus == 0 and tracker.S_plus >= 0)
