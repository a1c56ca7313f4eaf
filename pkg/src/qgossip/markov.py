"""Mean hitting times of finite Markov chains.

Two independent routes are provided for every chain family used in the
convergence analysis:

* :func:`solve_hitting_times` solves the first-step equations
  ``E_i = 0`` on the target and ``E_i = 1 + sum_{j not in target} P_ij E_j``
  elsewhere, in floating point (LU with partial pivoting) or exactly over the
  rationals;
* closed forms for three birth-death-like families:

  - :class:`SymmetricWalk`: states ``0..n``, both ends absorbing, equal up and
    down rates ``p_z = q_z`` (the QC interval-shrinkage chain);
  - :class:`ForwardWalk`: states ``1..n``, ``n`` absorbing, no down move from
    state 1 (the QA maximum-decay chain);
  - :class:`Ladder`: two rows ``1..n-1`` joined by crossing rates ``d_z``,
    only the upper row at ``n-1`` stepping into absorbing state ``n`` (the QA
    one-decrement chain). The closed form is exact for the upper row at
    ``n-1`` and an upper bound for the lower row.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

import numpy as np

Number = Union[float, Fraction]

ROW_TOL = 1e-12


class ChainError(ValueError):
    """Malformed chain or parameters."""


class NoFiniteHittingTimeError(ChainError):
    """Some non-target state cannot reach the target set."""


class HypothesisViolationError(ChainError):
    """Closed form called on parameters outside its validity conditions."""


@dataclass(frozen=True)
class ChainSpec:
    """Finite chain with a target set.

    Attributes:
        labels: Display name per state.
        P: Row-stochastic matrix as nested sequences; ``Fraction`` entries
            allow the exact solver.
        target: Indices of target states.
    """

    labels: Tuple[str, ...]
    P: Tuple[Tuple[Number, ...], ...]
    target: Tuple[int, ...]

    def __post_init__(self) -> None:
        k = len(self.labels)
        P = tuple(tuple(row) for row in self.P)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "target", tuple(sorted(set(int(t) for t in self.target))))
        if len(P) != k or any(len(row) != k for row in P):
            raise ChainError(f"transition matrix must be {k}x{k}")
        if not self.target:
            raise ChainError("target set is empty")
        if any(not 0 <= t < k for t in self.target):
            raise ChainError("target index out of range")
        for idx, row in enumerate(P):
            if any(v < 0 for v in row):
                raise ChainError(f"negative probability in row {self.labels[idx]}")
            total = sum(row)
            if isinstance(total, Fraction):
                ok = total == 1
            else:
                ok = abs(float(total) - 1.0) <= ROW_TOL
            if not ok:
                raise ChainError(f"row {self.labels[idx]} sums to {total}, not 1")

    @property
    def size(self) -> int:
        return len(self.labels)

    def is_exact(self) -> bool:
        return all(isinstance(v, (Fraction, int)) for row in self.P for v in row)

    def matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.P])

    def index(self, label: str) -> int:
        return self.labels.index(label)


def _can_reach_target(chain: ChainSpec) -> List[bool]:
    k = chain.size
    preds: List[List[int]] = [[] for _ in range(k)]
    for a, row in enumerate(chain.P):
        for b, v in enumerate(row):
            if v > 0 and a != b:
                preds[b].append(a)
    ok = [False] * k
    queue = deque(chain.target)
    for t in chain.target:
        ok[t] = True
    while queue:
        b = queue.popleft()
        for a in preds[b]:
            if not ok[a]:
                ok[a] = True
                queue.append(a)
    return ok


def _exact_solve(A: List[List[Fraction]], b: List[Fraction]) -> List[Fraction]:
    import sympy

    M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in A])
    rhs = sympy.Matrix([sympy.Rational(v.numerator, v.denominator) for v in b])
    sol = M.LUsolve(rhs)
    return [Fraction(int(v.p), int(v.q)) for v in sol]


def solve_hitting_times(chain: ChainSpec, exact: bool = False) -> Union[np.ndarray, List[Fraction]]:
    """Mean hitting times of ``chain.target`` from every state.

    Args:
        exact: Solve over the rationals; requires ``Fraction``/``int`` entries.

    Raises:
        NoFiniteHittingTimeError: a non-target state cannot reach the target.
    """
    reach = _can_reach_target(chain)
    if not all(reach):
        bad = [chain.labels[i] for i, ok in enumerate(reach) if not ok]
        raise NoFiniteHittingTimeError(f"target unreachable from states {bad}")
    targets = set(chain.target)
    free = [i for i in range(chain.size) if i not in targets]
    if exact:
        if not chain.is_exact():
            raise ChainError("exact solve needs Fraction or int probabilities")
        A = [[Fraction(int(a == b)) - Fraction(chain.P[a][b]) for b in free] for a in free]
        sol = _exact_solve(A, [Fraction(1)] * len(free)) if free else []
        out = [Fraction(0)] * chain.size
        for a, v in zip(free, sol):
            out[a] = v
        return out
    P = chain.matrix()
    E = np.zeros(chain.size)
    if free:
        A = np.eye(len(free)) - P[np.ix_(free, free)]
        E[free] = np.linalg.solve(A, np.ones(len(free)))
    return E


def first_step_residual(chain: ChainSpec, E: Sequence[Number]) -> float:
    """Largest relative violation of the first-step equations by ``E``."""
    P = chain.matrix()
    E = np.asarray([float(v) for v in E])
    targets = set(chain.target)
    worst = 0.0
    for i in range(chain.size):
        if i in targets:
            worst = max(worst, abs(E[i]))
            continue
        rhs = 1.0 + sum(P[i, j] * E[j] for j in range(chain.size) if j not in targets)
        worst = max(worst, abs(E[i] - rhs) / max(1.0, abs(E[i])))
    return worst


def simulate_hitting_time(chain: ChainSpec, start: int, rng: np.random.Generator, max_steps: int = 10**7) -> int:
    """Sample one hitting time of the target set from ``start``."""
    targets = set(chain.target)
    cdfs = np.cumsum(chain.matrix(), axis=1)
    state, k = start, 0
    while state not in targets:
        if k >= max_steps:
            raise RuntimeError(f"no hit within {max_steps} steps")
        row = cdfs[state]
        state = min(int(np.searchsorted(row, rng.random(), side="right")), chain.size - 1)
        k += 1
    return k


def _prod(values) -> Number:
    out: Number = 1
    for v in values:
        out = out * v
    return out


def _positive(name: str, values: Sequence[Number]) -> None:
    for z, v in enumerate(values, start=1):
        if v <= 0:
            raise ChainError(f"{name}_{z} must be positive, got {v}")


# --------------------------------------------------------------------------
# symmetric two-sided walk


@dataclass(frozen=True)
class SymmetricWalk:
    """States ``0..n``; ``p[z-1]``/``q[z-1]`` are the up/down rates of state ``z``."""

    n: int
    p: Tuple[Number, ...]
    q: Tuple[Number, ...]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ChainError("need n >= 2")
        if len(self.p) != self.n - 1 or len(self.q) != self.n - 1:
            raise ChainError(f"need {self.n - 1} rates for states 1..{self.n - 1}")
        _positive("p", self.p)
        for z, (a, b) in enumerate(zip(self.p, self.q), start=1):
            if b < 0 or a + b > 1 + ROW_TOL:
                raise ChainError(f"state {z}: p + q must not exceed 1")

    def to_chain_spec(self) -> ChainSpec:
        n = self.n
        one = Fraction(1) if all(isinstance(v, (Fraction, int)) for v in self.p + self.q) else 1.0
        rows = []
        for z in range(n + 1):
            row = [0 * one] * (n + 1)
            if z in (0, n):
                row[z] = one
            else:
                pz, qz = self.p[z - 1], self.q[z - 1]
                row[z + 1] = pz
                row[z - 1] = qz
                row[z] = one - pz - qz
            rows.append(tuple(row))
        return ChainSpec(tuple(str(z) for z in range(n + 1)), tuple(rows), (0, n))


def symmetric_walk_hitting_time(chain: SymmetricWalk, z: int) -> Number:
    """Closed-form mean time to hit ``{0, n}`` from ``z``.

    ``(1 - z/n) * sum_{i<z} i/p_i + (z/n) * sum_{j>=z} (n-j)/p_j``.
    """
    n = chain.n
    if not 1 <= z <= n - 1:
        raise ChainError(f"start state must lie in 1..{n - 1}")
    if any(a != b for a, b in zip(chain.p, chain.q)):
        raise HypothesisViolationError("closed form needs equal up and down rates")
    p = (None,) + tuple(chain.p)
    frac = Fraction(z, n) if isinstance(p[1], Fraction) else z / n
    left = sum((i / p[i] for i in range(1, z)), 0 * p[1])
    right = sum(((n - j) / p[j] for j in range(z, n)), 0 * p[1])
    return (1 - frac) * left + frac * right


# --------------------------------------------------------------------------
# forward walk with a reflecting start


@dataclass(frozen=True)
class ForwardWalk:
    """States ``1..n``, ``n`` absorbing.

    ``p[z-1]`` is the forward rate of state ``z`` for ``z = 1..n-1``;
    ``q[z-2]`` the backward rate of state ``z`` for ``z = 2..n-1``.
    """

    n: int
    p: Tuple[Number, ...]
    q: Tuple[Number, ...]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ChainError("need n >= 2")
        if len(self.p) != self.n - 1 or len(self.q) != self.n - 2:
            raise ChainError("need n-1 forward and n-2 backward rates")
        _positive("p", self.p)
        if self.p[0] > 1:
            raise ChainError("p_1 must not exceed 1")
        for z in range(2, self.n):
            if self.q[z - 2] < 0 or self.p[z - 1] + self.q[z - 2] > 1 + ROW_TOL:
                raise ChainError(f"state {z}: p + q must not exceed 1")

    def _q(self, z: int) -> Number:
        return self.q[z - 2]

    def _p(self, z: int) -> Number:
        return self.p[z - 1]

    def to_chain_spec(self) -> ChainSpec:
        n = self.n
        one = Fraction(1) if all(isinstance(v, (Fraction, int)) for v in self.p + self.q) else 1.0
        rows = []
        for z in range(1, n + 1):
            row = [0 * one] * n
            if z == n:
                row[n - 1] = one
            else:
                row[z] = self._p(z)
                back = self._q(z) if z >= 2 else 0 * one
                if z >= 2:
                    row[z - 2] = back
                row[z - 1] = one - self._p(z) - back
            rows.append(tuple(row))
        return ChainSpec(tuple(str(z) for z in range(1, n + 1)), tuple(rows), (n - 1,))

    def bracket(self, l: int) -> Number:
        """``(prod_{i=2..l} q_i/p_i)/p_1 + sum_{j=2..l} (prod_{i=j+1..l} q_i/p_i)/p_j``."""
        # each extra level scales the old bracket by q_l/p_l and adds 1/p_l
        out = 1 / self._p(1)
        for i in range(2, l + 1):
            out = out * self._q(i) / self._p(i) + 1 / self._p(i)
        return out


def forward_walk_hitting_time(chain: ForwardWalk, z: int) -> Number:
    """Closed-form mean time to hit ``n`` from ``z``.

    For ``z >= 2`` the sum of :meth:`ForwardWalk.bracket` over ``l = z..n-1``;
    from state 1 add ``1/p_1`` to the value at state 2.
    """
    n = chain.n
    if not 1 <= z <= n - 1:
        raise ChainError(f"start state must lie in 1..{n - 1}")
    start = max(z, 2)
    total = sum((chain.bracket(l) for l in range(start, n)), 0 * chain.p[0])
    if z == 1:
        total = total + 1 / chain.p[0]
    return total


# --------------------------------------------------------------------------
# two-row ladder


@dataclass(frozen=True)
class Ladder:
    """Two rows of states ``1..n-1`` plus absorbing state ``n``.

    Column rates are shared by both rows: forward ``p_z`` (``z = 1..n-1``),
    backward ``q_z`` (``z = 2..n-1``), crossing ``d_z`` (``z = 1..n-1``).
    Only the upper state at ``n-1`` moves forward, into ``n``; the lower state
    at ``n-1`` has no forward move. Self-loops absorb the remainder of each row.
    """

    n: int
    p: Tuple[Number, ...]
    q: Tuple[Number, ...]
    d: Tuple[Number, ...]

    def __post_init__(self) -> None:
        n = self.n
        if n < 2:
            raise ChainError("need n >= 2")
        if len(self.p) != n - 1 or len(self.d) != n - 1 or len(self.q) != n - 2:
            raise ChainError("need n-1 forward, n-2 backward and n-1 crossing rates")
        _positive("p", self.p)
        for z in range(1, n):
            back = self.q[z - 2] if z >= 2 else 0
            d = self.d[z - 1]
            if back < 0 or d < 0:
                raise ChainError(f"column {z}: negative rate")
            if self.p[z - 1] + back + d > 1 + ROW_TOL:
                raise ChainError(f"column {z}: upper row rates exceed 1")

    def labels(self) -> Tuple[str, ...]:
        out = []
        for z in range(1, self.n):
            out += [f"{z}upper", f"{z}lower"]
        return tuple(out + [str(self.n)])

    def to_chain_spec(self) -> ChainSpec:
        n = self.n
        exact = all(isinstance(v, (Fraction, int)) for v in self.p + self.q + self.d)
        one = Fraction(1) if exact else 1.0
        size = 2 * (n - 1) + 1
        absorb = size - 1

        def up(z: int) -> int:
            return 2 * (z - 1)

        def low(z: int) -> int:
            return 2 * (z - 1) + 1

        rows = [[0 * one] * size for _ in range(size)]
        for z in range(1, n):
            pz, dz = self.p[z - 1], self.d[z - 1]
            qz = self.q[z - 2] if z >= 2 else 0 * one
            for here, there, row_kind in ((up(z), low(z), "upper"), (low(z), up(z), "lower")):
                row = rows[here]
                if z < n - 1:
                    row[up(z + 1) if row_kind == "upper" else low(z + 1)] += pz
                    forward = pz
                elif row_kind == "upper":
                    row[absorb] += pz
                    forward = pz
                else:
                    forward = 0 * one
                if z >= 2:
                    row[up(z - 1) if row_kind == "upper" else low(z - 1)] += qz
                row[there] += dz
                row[here] += one - forward - qz - dz
        rows[absorb][absorb] = one
        return ChainSpec(self.labels(), tuple(tuple(r) for r in rows), (absorb,))


def ladder_hitting_times(chain: Ladder) -> Tuple[Number, Number]:
    """Exact mean time from the upper state at ``n-1`` and a bound for the lower one.

    The exact value is ``2 * bracket(n-1)`` in the notation of
    :meth:`ForwardWalk.bracket`; the lower-row bound multiplies it by
    ``1 + p_{n-1}/d_{n-1}``.

    Raises:
        ChainError: ``d_{n-1}`` is zero, so the bound is undefined.
    """
    n = chain.n
    d_last = chain.d[n - 2]
    if d_last <= 0:
        raise ChainError("crossing rate d_{n-1} must be positive for the lower-row bound")
    p = (None,) + tuple(chain.p)
    q = (None, None) + tuple(chain.q)
    upper = _prod(q[i] / p[i] for i in range(2, n)) * 2 / p[1]
    for j in range(2, n):
        upper = upper + _prod(q[i] / p[i] for i in range(j + 1, n)) * 2 / p[j]
    return upper, (1 + p[n - 1] / d_last) * upper


# --------------------------------------------------------------------------
# chains induced by QC and QA on complete digraphs with uniform activation


def _edge_prob(n: int) -> Fraction:
    return Fraction(1, n * (n - 1))


def qc_shrink_chain(n: int) -> SymmetricWalk:
    """QC from a 0/1 state with ``z`` ones: ``p_z = q_z = z(n-z)/(n(n-1))``."""
    if n < 2:
        raise ChainError("need n >= 2")
    p = _edge_prob(n)
    rates = tuple(z * (n - z) * p for z in range(1, n))
    return SymmetricWalk(n, rates, rates)


def _ladder_columns(n: int, deep: bool) -> Ladder:
    if n < 4:
        raise ChainError(f"ladder construction needs n >= 4, got {n}")
    p = _edge_prob(n)
    fwd = [(n - 2) * p] + [(n - 1 - z) * z * p for z in range(2, n - 1)] + [p]
    back = [(z - 1) * p for z in range(2, n - 1)] + [(n - 2) * p]
    if deep:
        cross = [p] + [(z - 1) * p for z in range(2, n - 1)] + [(n - 2) * p]
    else:
        cross = [p] + [z * p for z in range(2, n - 1)] + [(n - 1) * p]
    return Ladder(n, tuple(fwd), tuple(back), tuple(cross))


def qa_one_level_ladder(n: int) -> Ladder:
    """Ladder for the last QA decrement, from ``[2, 1, ..., 1, 0]``."""
    return _ladder_columns(n, deep=False)


def qa_deep_level_ladder(n: int) -> Ladder:
    """Ladder bounding one QA decrement from two or more levels up."""
    return _ladder_columns(n, deep=True)


def qa_max_decay_chain(n: int, R: int) -> ForwardWalk:
    """Chain for one decrement of the maximum state once ``V`` sits at ``R``.

    With ``h = floor(R/2)`` nodes at ``L+2``: length ``h + 1``,
    ``p_1 = h(n-h)p``, ``p_z = (h-z+1)(n-h)p`` and ``q_z = (z-1)(h-z+1)p``
    for ``z = 2..h``. Odd ``R`` uses the same rates with ``h = (R-1)/2``.
    """
    if not 0 <= R < n:
        raise ChainError(f"remainder R={R} outside 0..{n - 1}")
    h = R // 2
    if h < 1:
        raise ChainError(f"R={R} leaves no maximum-state decay to analyse")
    p = _edge_prob(n)
    fwd = [h * (n - h) * p] + [(h - z + 1) * (n - h) * p for z in range(2, h + 1)]
    back = [(z - 1) * (h - z + 1) * p for z in range(2, h + 1)]
    return ForwardWalk(h + 1, tuple(fwd), tuple(back))


# --------------------------------------------------------------------------
# text format


def _parse_prob(tok: str) -> Number:
    # fractions and bare integers stay exact, decimals become floats
    if "/" in tok or tok.lstrip("+-").isdigit():
        return Fraction(tok)
    return float(tok)


def parse_chain_file(text: str) -> ChainSpec:
    """Parse ``states <k> target <i...>`` followed by ``k`` rows of ``k`` probabilities.

    States are labeled ``0..k-1``. Entries may be decimals or ``a/b``
    fractions; an all-fraction file can be solved exactly.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ChainError("empty chain file")
    head = lines[0].split()
    if len(head) < 4 or head[0] != "states" or head[2] != "target":
        raise ChainError(f"header must read 'states <k> target <labels...>', got {lines[0]!r}")
    try:
        k = int(head[1])
        target = tuple(int(t) for t in head[3:])
    except ValueError as exc:
        raise ChainError(f"bad header {lines[0]!r}") from exc
    if len(lines) - 1 != k:
        raise ChainError(f"expected {k} matrix rows, got {len(lines) - 1}")
    rows = []
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != k:
            raise ChainError(f"row {ln!r} does not have {k} entries")
        try:
            rows.append(tuple(_parse_prob(t) for t in toks))
        except ValueError as exc:
            raise ChainError(f"bad probability in row {ln!r}") from exc
    if any(isinstance(v, float) for row in rows for v in row):
        rows = [tuple(float(v) for v in row) for row in rows]
    return ChainSpec(tuple(str(i) for i in range(k)), tuple(rows), target)

