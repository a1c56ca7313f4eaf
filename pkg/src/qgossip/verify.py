"""Self-check suite: oracle equivalence, invariants and bound dominance.

Functions under test are looked up through their modules at call time, so a
monkeypatched (mutated) implementation is what gets checked.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Sequence

import numpy as np

from . import bounds, experiments, markov

REL_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)  # numpy comparisons yield np.bool_

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


@dataclass
class VerifyReport:
    depth: str
    seed: int
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]


@dataclass(frozen=True)
class Depth:
    name: str
    max_n: int
    oracle_instances: int
    trials: int
    qc_exact_cases: Sequence[tuple]
    qc_sweep: Sequence[int]
    qa_sweep: Sequence[int]
    audit_trajectories: int
    audit_max_n: int
    structure_steps: int
    check_slope: bool


DEPTHS = {
    "small": Depth("small", 8, 20, 2000, ((3, 1), (5, 2), (8, 4)), (4, 6, 8), (4, 6, 8), 200, 8, 10**4, False),
    "full": Depth("full", 50, 100, 20000, ((3, 1), (5, 2), (8, 4)), (4, 8, 16, 32), (4, 8, 16), 1000, 10, 10**5, True),
}


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# randomized instances respecting each closed form's hypotheses


def random_symmetric_walk(rng: np.random.Generator, n: int) -> markov.SymmetricWalk:
    p = tuple(float(v) for v in rng.uniform(0.02, 0.5, size=n - 1))
    return markov.SymmetricWalk(n, p, p)


def random_forward_walk(rng: np.random.Generator, n: int) -> markov.ForwardWalk:
    p = tuple(float(v) for v in rng.uniform(0.05, 0.5, size=n - 1))
    q = tuple(float(v) for v in rng.uniform(0.0, 0.5, size=n - 2))
    return markov.ForwardWalk(n, p, q)


def random_ladder(rng: np.random.Generator, n: int) -> markov.Ladder:
    p = tuple(float(v) for v in rng.uniform(0.05, 0.33, size=n - 1))
    q = tuple(float(v) for v in rng.uniform(0.0, 0.33, size=n - 2))
    d = tuple(float(v) for v in rng.uniform(0.02, 0.33, size=n - 1))
    return markov.Ladder(n, p, q, d)


def check_oracles(instances: int, max_n: int, seed: int) -> CheckResult:
    """Closed forms against the linear solver on random chains of all three families."""
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    problems = []
    for _ in range(instances):
        n = int(rng.integers(2, max_n + 1))
        walk = random_symmetric_walk(rng, n)
        E = markov.solve_hitting_times(walk.to_chain_spec())
        for z in range(1, n):
            worst = max(worst, rel_err(float(markov.symmetric_walk_hitting_time(walk, z)), E[z]))

        fw = random_forward_walk(rng, n)
        E = markov.solve_hitting_times(fw.to_chain_spec())
        for z in range(1, n):
            worst = max(worst, rel_err(float(markov.forward_walk_hitting_time(fw, z)), E[z - 1]))

        lad = random_ladder(rng, n)
        spec = lad.to_chain_spec()
        E = markov.solve_hitting_times(spec)
        upper, bound = markov.ladder_hitting_times(lad)
        worst = max(worst, rel_err(float(upper), E[spec.index(f"{n - 1}upper")]))
        if not E[spec.index(f"{n - 1}lower")] < float(bound):
            problems.append(f"ladder n={n}: lower-row time {E[spec.index(f'{n - 1}lower')]:.6g} >= bound {float(bound):.6g}")
    ok = worst <= REL_TOL and not problems
    detail = f"{instances} instances per family, n<={max_n}, max rel err {worst:.2e}"
    if problems:
        detail += "; " + problems[0]
    return CheckResult("oracle_equivalence", ok, detail)


def check_worked_ladder() -> CheckResult:
    third, quarter = Fraction(1, 3), Fraction(1, 4)
    lad = markov.Ladder(3, (third, quarter), (quarter,), (third, quarter))
    E = markov.solve_hitting_times(lad.to_chain_spec(), exact=True)
    upper, bound = markov.ladder_hitting_times(lad)
    expected = [Fraction(75, 4), Fraction(41, 2), Fraction(14), Fraction(77, 4)]
    ok = E[:4] == expected and upper == 14 and bound == 28 and bound > E[3]
    return CheckResult("worked_ladder_instance", ok, f"solver {[str(v) for v in E[:4]]}, closed form {upper}, bound {bound}")


def _within(stats, exact: float, k: float = 3.0) -> bool:
    return stats.failures == 0 and abs(stats.mean - exact) < k * stats.se


def check_qc_exactness(cases, trials: int, seed: int) -> CheckResult:
    parts, ok = [], True
    for n, z in cases:
        walk = markov.qc_shrink_chain(n)
        exact = float(markov.solve_hitting_times(walk.to_chain_spec(), exact=True)[z])
        stats = experiments.run_ensemble(
            experiments.ExperimentConfig("qc", f"complete:{n}", f"x1:{n}:{z}", trials=trials, seed=seed)
        )
        ok &= _within(stats, exact)
        parts.append(f"n={n},z={z}: {stats.mean:.3f}+-{stats.se:.3f} vs {exact:.3f}")
    return CheckResult("qc_exactness", ok, "; ".join(parts))


def check_qc_dominance(ns, trials: int, seed: int, slope: bool) -> CheckResult:
    rows = experiments.sweep("qc", ns, trials=trials, seed=seed)
    ok = all(r.failures == 0 and r.mean + 3 * r.se < float(bounds.qc_shrink_bound(r.n)) for r in rows)
    detail = ", ".join(f"n={r.n}: {r.mean:.2f}+3*{r.se:.2f} < {r.bound:g}" for r in rows)
    if slope:
        s = experiments.loglog_slope([r.n for r in rows], [r.mean for r in rows])
        ok &= 1.5 <= s <= 2.3
        detail += f"; log-log slope {s:.3f} in [1.5, 2.3]"
    else:
        for r in rows:
            exact = float(markov.solve_hitting_times(markov.qc_shrink_chain(r.n).to_chain_spec())[r.n // 2])
            ok &= abs(r.mean - exact) < 3 * r.se
        detail += "; means match exact chain values"
    return CheckResult("qc_dominance", ok, detail)


def check_qa_exact_two_nodes(trials: int, seed: int) -> CheckResult:
    stats = experiments.run_ensemble(experiments.ExperimentConfig("qa", "complete:2", "2,0", trials=trials, seed=seed))
    return CheckResult("qa_exactness_n2", _within(stats, 4.0), f"{stats.mean:.4f}+-{stats.se:.4f} vs 4")


def check_qa_dominance(ns, trials: int, seed: int) -> CheckResult:
    rows = experiments.sweep("qa", ns, trials=trials, seed=seed)
    ok = all(r.failures == 0 and r.mean + 3 * r.se < float(bounds.qa_time_bound(r.n, 0, 2, 0)) for r in rows)
    detail = ", ".join(f"n={r.n}: {r.mean:.2f}+3*{r.se:.2f} < {r.bound:g}, failures {r.failures}" for r in rows)
    return CheckResult("qa_dominance", ok, detail)


def random_qa_inits(count: int, max_n: int, seed: int):
    rng = np.random.Generator(np.random.Philox(seed))
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        yield tuple(int(v) for v in rng.integers(-5, 5, size=n, endpoint=True))


def check_qa_invariants(count: int, max_n: int, seed: int) -> List[CheckResult]:
    """Protocol invariants and Lyapunov facts on random QA trajectories."""
    protocol_names = {
        "conservation", "binary_surplus", "min_nondecreasing", "max_nonincreasing",
        "single_receiver", "surplus_accounting", "consensus_invariant", "run_qa_agrees",
    }
    totals = {}
    unconverged = 0
    steps = 0
    for t, x0 in enumerate(random_qa_inits(count, max_n, seed)):
        # 20x the time bound: unreachable for a correct build, short for a broken one
        cap = 20 * int(bounds.qa_time_bound(len(x0), min(x0), max(x0), sum(x0) % len(x0))) + 1000
        audit = experiments.audit_qa_trajectory(x0, seed * 100003 + t, max_steps=cap, tail=10, stop_on_violation=True)
        if audit.steps is None:
            unconverged += 1
        else:
            steps += audit.steps
        for name, c in audit.violations.items():
            totals[name] = totals.get(name, 0) + c
    proto = {k: v for k, v in totals.items() if k in protocol_names and v}
    lyap = {k: v for k, v in totals.items() if k not in protocol_names and v}
    head = f"{count} trajectories, n<={max_n}, x0 in [-5,5], {steps} steps"
    return [
        CheckResult("qa_conservation_invariants", not proto and unconverged == 0,
                    f"{head}; violations {proto or 0}, unconverged {unconverged}"),
        CheckResult("lyapunov_suite", not lyap, f"{head}; violations {lyap or 0}"),
    ]


def check_chain_structure(steps: int, seed: int) -> CheckResult:
    worst = 0.0
    for n in (4, 6):
        for z in range(1, n):
            p = z * (n - z) / (n * (n - 1))
            tol = 4 * math.sqrt(p * (1 - p) / steps)
            freq = experiments.transition_frequencies(n, z, steps, seed + 31 * n + z)
            for key in ("up", "down"):
                worst = max(worst, abs(freq[key] - p) / tol)
    return CheckResult("qc_chain_structure", worst < 1.0, f"max deviation {worst:.3f} of the 4-sigma band, N={steps}")


def check_level_descent(seed: int) -> CheckResult:
    results = [experiments.qa_level_descent(n, seed + n) for n in (3, 4, 6, 8)]
    ok = all(r == (2, 1, 0) for r in results)
    return CheckResult("qa_single_level_descent", ok, f"(V0, decrements, V_final) = {results}")


def check_bound_regression() -> CheckResult:
    exact = [
        bounds.qc_time_bound(10, 0, 1) == 90,
        bounds.qa_time_bound(4, 0, 2, 0) == 144,
        bounds.qa_decrement_bound(4) == 72,
        bounds.qa_max_decay_bound(10, 4) == 45,
        bounds.qc_shrink_bound(3) == 6,
    ]
    dominated = []
    for n in range(4, 33):
        upper, _ = markov.ladder_hitting_times(markov.qa_one_level_ladder(n))
        dominated.append(bounds.qa_decrement_bound(n) > upper)
        for R in range(2, n):
            chain = markov.qa_max_decay_chain(n, R)
            dominated.append(bounds.qa_max_decay_bound(n, R) > markov.forward_walk_hitting_time(chain, 1))
    ok = all(exact) and all(dominated)
    return CheckResult("bound_regression", ok, f"5 exact values {'ok' if all(exact) else 'WRONG'}; "
                       f"{sum(dominated)}/{len(dominated)} closed-form comparisons dominated")


def verify_suite(depth: str = "small", seed: int = 0, progress: Callable[[CheckResult], None] = None) -> VerifyReport:
    """Run every check at the given depth ("small" or "full")."""
    if depth not in DEPTHS:
        raise ValueError(f"depth must be one of {sorted(DEPTHS)}")
    d = DEPTHS[depth]
    report = VerifyReport(depth, seed)
    jobs = [
        ("oracle_equivalence", lambda: [check_oracles(d.oracle_instances, d.max_n, seed)]),
        ("worked_ladder_instance", lambda: [check_worked_ladder()]),
        ("qc_exactness", lambda: [check_qc_exactness(d.qc_exact_cases, d.trials, seed)]),
        ("qc_dominance", lambda: [check_qc_dominance(d.qc_sweep, 2000, seed, d.check_slope)]),
        ("qa_exactness_n2", lambda: [check_qa_exact_two_nodes(d.trials, seed)]),
        ("qa_dominance", lambda: [check_qa_dominance(d.qa_sweep, 2000, seed)]),
        ("qa_invariants", lambda: check_qa_invariants(d.audit_trajectories, d.audit_max_n, seed)),
        ("qc_chain_structure", lambda: [check_chain_structure(d.structure_steps, seed)]),
        ("qa_single_level_descent", lambda: [check_level_descent(seed)]),
        ("bound_regression", lambda: [check_bound_regression()]),
    ]
    for name, job in jobs:
        t0 = time.perf_counter()
        try:
            results = job()
        except Exception as exc:  # a crashing check is a failing check
            results = [CheckResult(name, False, f"raised {exc!r}")]
        elapsed = time.perf_counter() - t0
        for r in results:
            r.seconds = elapsed / len(results)
            report.checks.append(r)
            if progress is not None:
                progress(r)
    return report
