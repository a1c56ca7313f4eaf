"""Closed-form upper bounds on mean convergence times.

All bounds assume a complete digraph on ``n`` nodes with uniform edge
activation, initial states in ``[m, M]`` and, for averaging, remainder
``R = sum(x0) mod n``. Values are exact :class:`~fractions.Fraction` objects.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

from .lyapunov import v_upper_bound


def _check(n: int, m: int = 0, M: int = 0, R: int = 0) -> None:
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if M < m:
        raise ValueError(f"need M >= m, got m={m}, M={M}")
    if not 0 <= R <= n - 1:
        raise ValueError(f"remainder R={R} outside 0..{n - 1}")


def qc_shrink_bound(n: int) -> Fraction:
    """Mean time for one shrinkage of the state interval: ``n(n-1)``."""
    _check(n)
    return Fraction(n * (n - 1))


def qc_time_bound(n: int, m: int, M: int) -> Fraction:
    """Mean QC convergence time: ``n(n-1)(M-m)``."""
    _check(n, m, M)
    return qc_shrink_bound(n) * (M - m)


def qa_decrement_bound(n: int) -> Fraction:
    """Mean time for one 2-unit decrement of the Lyapunov function: ``6n(n-1)``."""
    _check(n)
    return Fraction(6 * n * (n - 1))


def qa_max_decay_bound(n: int, R: int) -> Fraction:
    """Mean time for one decrement of the maximum state: ``n(n-1) R / (n - R/2)``.

    Odd ``R`` keeps ``R/2`` as an exact half.
    """
    _check(n, R=R)
    if R < 2:
        raise ValueError(f"R={R}: the maximum-state decay phase is empty for R < 2")
    half = Fraction(R, 2)
    return Fraction(n * (n - 1) * R) / (n - half)


def qa_time_bound(n: int, m: int, M: int, R: int) -> Fraction:
    """Mean QA convergence time.

    ``(3/2) n^2 (n-1)(M-m)`` for the Lyapunov decay, plus
    ``n(n-1) R(R-1) / (n - R/2)`` for the final maximum-state decay, which
    vanishes for ``R`` in {0, 1}.
    """
    _check(n, m, M, R)
    decay = Fraction(3, 2) * n * n * (n - 1) * (M - m)
    if R < 2:
        return decay
    return decay + qa_max_decay_bound(n, R) * (R - 1)


def decrement_budgets(n: int, m: int, M: int, R: int) -> Tuple[int, int, Optional[int]]:
    """Event counts that turn per-event times into total-time bounds.

    Returns:
        ``(M - m)`` interval shrinkages for QC, ``ceil((M - m) n / 4)``
        Lyapunov decrements for QA, and ``R - 1`` maximum-state decrements
        (``None`` when ``R < 2``).
    """
    _check(n, m, M, R)
    v_decrements = math.ceil(Fraction((M - m) * n, 4))
    return M - m, v_decrements, (R - 1 if R >= 2 else None)


@dataclass(frozen=True)
class BoundReport:
    n: int
    m: int
    M: int
    R: int
    qc_time: Fraction
    qc_shrink: Fraction
    qa_time: Fraction
    lyapunov_max: Fraction
    qa_decrement: Fraction
    qa_max_decay: Optional[Fraction]
    v_decrement_count: int
    max_decay_budget: Optional[Fraction]

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def bound_report(n: int, m: int, M: int, R: int = 0) -> BoundReport:
    _check(n, m, M, R)
    _, v_count, _ = decrement_budgets(n, m, M, R)
    max_decay = qa_max_decay_bound(n, R) if R >= 2 else None
    return BoundReport(
        n=n,
        m=m,
        M=M,
        R=R,
        qc_time=qc_time_bound(n, m, M),
        qc_shrink=qc_shrink_bound(n),
        qa_time=qa_time_bound(n, m, M, R),
        lyapunov_max=v_upper_bound(n, m, M, R),
        qa_decrement=qa_decrement_bound(n),
        qa_max_decay=max_decay,
        v_decrement_count=v_count,
        max_decay_budget=max_decay * (R - 1) if max_decay is not None else None,
    )
