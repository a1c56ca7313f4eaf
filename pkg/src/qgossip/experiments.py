"""Monte Carlo harness for QC and QA.

Every trial draws edges from its own Philox stream keyed by
``(master seed, trial index)``. Statistics are kept as exact integer sums,
so results do not depend on trial order or on how trials are split across
worker processes.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import protocol_qa
from .bounds import qa_time_bound, qc_time_bound
from .graph import ActivationModel, EdgeStream, GraphError, is_complete, load_graph
from .lyapunov import (
    LyapunovTracker,
    apply_rule,
    check_lyapunov_clauses,
    decompose_sum,
    init_tracker,
    v_upper_bound,
)
from .protocol_qa import QaRule, QaState, UnsupportedTopologyError, is_average_consensus, qa_step, run_qa
from .protocol_qc import NonConvergenceError, qc_step, run_qc, x1_state


class InitSpecError(ValueError):
    """Unparseable or inconsistent initial-state spec."""


def qc_worst_init(n: int) -> Tuple[int, ...]:
    """``floor(n/2)`` ones followed by zeros."""
    if n < 2:
        raise ValueError("need n >= 2")
    return x1_state(n, n // 2)


def qa_worst_init(n: int) -> Tuple[int, ...]:
    """``[2, 1, ..., 1, 0]``: sum ``n``, so the average is exactly 1."""
    if n < 2:
        raise ValueError("need n >= 2")
    return (2,) + (1,) * (n - 2) + (0,)


def uniform_init(n: int, m: int, M: int, seed: int) -> Tuple[int, ...]:
    """I.i.d. integers uniform on ``{m, ..., M}`` (both ends included)."""
    if M < m:
        raise InitSpecError("need M >= m")
    rng = np.random.Generator(np.random.Philox(seed))
    return tuple(int(v) for v in rng.integers(m, M, size=n, endpoint=True))


def parse_init(spec: str, n: Optional[int] = None) -> Tuple[int, ...]:
    """Resolve an initial-state spec.

    Accepted forms: an explicit vector (``"2,1,0"`` or ``"2 1 0"``),
    ``x1:<n>:<z>``, ``halfsplit:<n>``, ``qaworst:<n>`` and
    ``uniform:<n>:<m>:<M>:<seed>``. When ``n`` is given the length is checked.
    """
    spec = spec.strip()
    name, _, rest = spec.partition(":")
    try:
        args = [int(a) for a in rest.split(":")] if rest else []
        if name == "x1" and len(args) == 2:
            x = x1_state(*args)
        elif name == "halfsplit" and len(args) == 1:
            x = qc_worst_init(args[0])
        elif name == "qaworst" and len(args) == 1:
            x = qa_worst_init(args[0])
        elif name == "uniform" and len(args) == 4:
            x = uniform_init(*args)
        elif not rest:
            x = tuple(int(tok) for tok in spec.replace(",", " ").split())
        else:
            raise InitSpecError(f"unknown initial-state spec {spec!r}")
    except ValueError as exc:
        if isinstance(exc, InitSpecError):
            raise
        raise InitSpecError(f"bad initial-state spec {spec!r}: {exc}") from exc
    if not x:
        raise InitSpecError("empty initial state")
    if n is not None and len(x) != n:
        raise InitSpecError(f"initial state has {len(x)} entries but the graph has {n} nodes")
    return x


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial, keyed by ``(seed, trial)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    graph: str
    init: str
    trials: int = 2000
    seed: int = 0
    max_steps: Optional[int] = None
    policy: str = "adopt"
    tracker: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", self.algorithm.lower())
        if self.algorithm not in ("qc", "qa"):
            raise ValueError(f"algorithm must be 'qc' or 'qa', got {self.algorithm!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def resolve(self) -> Tuple[ActivationModel, Tuple[int, ...]]:
        """Load graph and initial state, enforcing QA's completeness requirement."""
        model = load_graph(self.graph)
        if self.algorithm == "qa" and not is_complete(model.graph):
            raise UnsupportedTopologyError(
                f"QA requires a complete digraph; {self.graph!r} is not complete"
            )
        return model, parse_init(self.init, model.graph.n)


@dataclass
class TrialStats:
    """Aggregate of trial hitting times.

    ``mean``, ``variance`` and ``se`` are over converged trials; with no
    failures that is all of them.
    """

    trials: int = 0
    failures: int = 0
    total: int = 0
    total_sq: int = 0
    min: Optional[int] = None
    max: Optional[int] = None
    violations: int = 0

    def add(self, t: Optional[int]) -> None:
        self.trials += 1
        if t is None:
            self.failures += 1
            return
        self.total += t
        self.total_sq += t * t
        self.min = t if self.min is None else min(self.min, t)
        self.max = t if self.max is None else max(self.max, t)

    def merge(self, other: "TrialStats") -> "TrialStats":
        mins = [v for v in (self.min, other.min) if v is not None]
        maxs = [v for v in (self.max, other.max) if v is not None]
        return TrialStats(
            trials=self.trials + other.trials,
            failures=self.failures + other.failures,
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
            min=min(mins) if mins else None,
            max=max(maxs) if maxs else None,
            violations=self.violations + other.violations,
        )

    @property
    def converged(self) -> int:
        return self.trials - self.failures

    @property
    def mean(self) -> float:
        return self.total / self.converged if self.converged else math.nan

    @property
    def variance(self) -> float:
        c = self.converged
        if c < 2:
            return 0.0 if c == 1 else math.nan
        return float(Fraction(c * self.total_sq - self.total**2, c * (c - 1)))

    @property
    def se(self) -> float:
        c = self.converged
        return math.sqrt(self.variance / c) if c else math.nan


def _trial_block(config: ExperimentConfig, start: int, stop: int) -> TrialStats:
    model, x0 = config.resolve()
    stats = TrialStats()
    for trial in range(start, stop):
        rng = trial_rng(config.seed, trial)
        try:
            if config.algorithm == "qc":
                _, t = run_qc(model.graph, model, x0, config.policy, rng, config.max_steps)
            elif config.tracker:
                audit = audit_qa_trajectory(x0, rng, max_steps=config.max_steps, model=model)
                stats.violations += audit.total_violations
                t = audit.steps
            else:
                _, t = run_qa(model.graph, model, x0, rng, config.max_steps)
        except NonConvergenceError:
            t = None
        stats.add(t)
    return stats


def run_ensemble(config: ExperimentConfig, workers: int = 1) -> TrialStats:
    """Run ``config.trials`` independent trajectories and aggregate hitting times.

    Non-converged trials are counted in ``failures``. The result is identical
    for any ``workers`` value.
    """
    config.resolve()  # fail fast on bad specs
    if workers <= 1 or config.trials < 2 * workers:
        return _trial_block(config, 0, config.trials)
    bounds = np.linspace(0, config.trials, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_trial_block, [config] * workers, bounds[:-1].tolist(), bounds[1:].tolist()))
    out = TrialStats()
    for part in parts:
        out = out.merge(part)
    return out


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    n: int
    trials: int
    seed: int
    mean: float
    se: float
    min: Optional[int]
    max: Optional[int]
    failures: int
    bound: Optional[float]

    @classmethod
    def from_stats(cls, algorithm: str, n: int, seed: int, stats: TrialStats, bound) -> "SweepRow":
        return cls(
            algorithm, n, stats.trials, seed, stats.mean, stats.se, stats.min, stats.max,
            stats.failures, None if bound is None else float(bound),
        )


def worst_case_bound(algorithm: str, x0: Sequence[int]) -> Fraction:
    """Convergence-time bound matching ``x0``'s range (and remainder, for QA)."""
    n, m, M = len(x0), min(x0), max(x0)
    if algorithm == "qc":
        return qc_time_bound(n, m, M)
    _, R = decompose_sum(sum(x0), n)
    return qa_time_bound(n, m, M, R)


def sweep(algorithm: str, n_values: Sequence[int], trials: int = 2000, seed: int = 0, workers: int = 1) -> List[SweepRow]:
    """Ensembles from the worst-case initial state for each ``n``."""
    if list(n_values) != sorted(n_values):
        raise ValueError("n_values must be sorted ascending")
    rows = []
    for n in n_values:
        init = f"halfsplit:{n}" if algorithm == "qc" else f"qaworst:{n}"
        config = ExperimentConfig(algorithm, f"complete:{n}", init, trials=trials, seed=seed)
        stats = run_ensemble(config, workers=workers)
        x0 = parse_init(init)
        rows.append(SweepRow.from_stats(algorithm, n, seed, stats, worst_case_bound(algorithm, x0)))
    return rows


def loglog_slope(ns: Sequence[float], means: Sequence[float]) -> float:
    """Least-squares slope of ``log(mean)`` against ``log(n)``."""
    slope, _ = np.polyfit(np.log(ns), np.log(means), 1)
    return float(slope)


def transition_frequencies(n: int, z: int, steps: int, seed: int) -> Dict[str, float]:
    """Empirical one-step QC moves from the 0/1 state with ``z`` ones.

    Each of ``steps`` draws restarts at ``x1_state(n, z)``, activates one
    uniform edge of the complete digraph and records whether the ones count
    went up, down or stayed.
    """
    model = load_graph(f"complete:{n}")
    x = x1_state(n, z)
    edges = EdgeStream(model, np.random.Generator(np.random.Philox(seed)))
    counts = Counter()
    for _ in range(steps):
        j, i = next(edges)
        after = sum(qc_step(x, (j + 1, i + 1)))
        counts["up" if after > z else "down" if after < z else "stay"] += 1
    return {k: counts[k] / steps for k in ("up", "down", "stay")}


@dataclass
class AuditResult:
    """Per-invariant violation counts along one QA trajectory."""

    steps: Optional[int]
    tail_steps: int
    v_initial: int
    decrements: int
    violations: Counter = field(default_factory=Counter)

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


AUDIT_CHECKS = (
    "conservation",
    "binary_surplus",
    "min_nondecreasing",
    "max_nonincreasing",
    "single_receiver",
    "surplus_accounting",
    "v_nonincreasing",
    "v_drop_is_two_on_consumption",
    "tracker_d_sync",
    "tracker_surplus_sync",
    "lower_bound",
    "at_floor",
    "zero_error",
    "exact_average",
    "v_upper_bound",
    "consensus_invariant",
    "run_qa_agrees",
)


def audit_qa_trajectory(
    x0: Sequence[int],
    seed,
    max_steps: Optional[int] = None,
    tail: int = 0,
    model: Optional[ActivationModel] = None,
    stop_on_violation: bool = False,
) -> AuditResult:
    """Run QA step by step on the complete digraph, checking every invariant.

    Checks after each step: conservation of ``sum(x + s)``, binary surpluses,
    hull monotonicity, that only the receiver changes, that only generation
    and consumption move ``sum(s)`` (by +1 and -1), the Lyapunov facts
    (``V`` non-increasing, drops of exactly 2 on a consumption with ``S- == 0``,
    tracker ``D`` and ``S+ + S-`` matching the state, the four structural
    clauses, the global upper bound on ``V``). After reaching average
    consensus it keeps going for ``tail`` steps to check the set is never
    left. Finally it confirms :func:`run_qa` with the same seed reports the
    same hitting step.

    Args:
        seed: Integer seed or generator; an integer is used for both the
            audit and the :func:`run_qa` cross-check.
        stop_on_violation: Return as soon as anything is violated, which
            keeps a broken protocol from running to ``max_steps``.
    """
    n = len(x0)
    model = model or load_graph(f"complete:{n}")
    if model.graph.n != n:
        raise GraphError("model and initial state disagree on n")
    if max_steps is None:
        max_steps = protocol_qa.default_qa_max_steps(n, x0)
    total = sum(x0)
    tracker = init_tracker(x0)
    v_cap = v_upper_bound(n, min(x0), max(x0), tracker.R)
    result = AuditResult(steps=None, tail_steps=0, v_initial=tracker.V, decrements=0)
    bad = result.violations

    def audit_state(state: QaState, tr) -> None:
        if tr.D != sum(abs(v - tr.L) for v in state.x):
            bad["tracker_d_sync"] += 1
        if tr.S_plus + tr.S_minus != sum(state.s):
            bad["tracker_surplus_sync"] += 1
        for name, ok in check_lyapunov_clauses(tr, state).items():
            if not ok:
                bad[name] += 1
        if tr.V > v_cap:
            bad["v_upper_bound"] += 1

    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    state = QaState.initial(x0)
    audit_state(state, tracker)
    if is_average_consensus(state, total, n):
        result.steps = 0
    edges = EdgeStream(model, rng)
    k = 0
    while k < max_steps and (result.steps is None or result.tail_steps < tail):
        if stop_on_violation and bad:
            return result
        j, i = next(edges)
        k += 1
        new, fired = qa_step(state, (j + 1, i + 1))
        if new.total() != total:
            bad["conservation"] += 1
        if any(v not in (0, 1) for v in new.s):
            bad["binary_surplus"] += 1
        if min(new.x) < min(state.x):
            bad["min_nondecreasing"] += 1
        if max(new.x) > max(state.x):
            bad["max_nonincreasing"] += 1
        if any(a != b for idx, (a, b) in enumerate(zip(state.x, new.x)) if idx != i):
            bad["single_receiver"] += 1
        ds = sum(new.s) - sum(state.s)
        expected_ds = 1 if fired.rule is QaRule.R3i else -1 if fired.rule is QaRule.R2i else 0
        if ds != expected_ds:
            bad["surplus_accounting"] += 1
        new_tracker = apply_rule(tracker, fired)
        dv = new_tracker.V - tracker.V
        if dv > 0:
            bad["v_nonincreasing"] += 1
        elif dv < 0:
            result.decrements += 1
            s2ii = fired.rule is QaRule.R2i and fired.x_before < tracker.L and tracker.S_minus == 0
            if dv != -2 or not s2ii:
                bad["v_drop_is_two_on_consumption"] += 1
        state, tracker = new, new_tracker
        audit_state(state, tracker)
        reached = is_average_consensus(state, total, n)
        if result.steps is None:
            if reached:
                result.steps = k
        else:
            result.tail_steps += 1
            if not reached:
                bad["consensus_invariant"] += 1
    if not isinstance(seed, np.random.Generator) and result.steps is not None:
        try:
            _, t = run_qa(model.graph, model, x0, seed, max_steps)
        except NonConvergenceError:
            t = None
        if t != result.steps:
            bad["run_qa_agrees"] += 1
    return result


def qa_level_descent(n: int, seed: int) -> Tuple[int, int, int]:
    """``V(0)``, the number of ``V`` decrements and the final ``V`` for one QA run from ``qa_worst_init(n)``."""
    x0 = qa_worst_init(n)
    tracker = LyapunovTracker(x0)
    model = load_graph(f"complete:{n}")
    v0 = tracker.state.V
    run_qa(model.graph, model, x0, seed, tracker=tracker)
    return v0, len(tracker.decrements), tracker.state.V
