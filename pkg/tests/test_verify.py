"""The self-check suite passes on this build and catches deliberate breakage."""

from fractions import Fraction

import pytest

from qgossip import bounds, experiments, lyapunov, markov, protocol_qa, verify
from qgossip.protocol_qa import QaRule


@pytest.fixture(scope="module")
def small_report():
    return verify.verify_suite("small", seed=0)


def test_small_suite_passes(small_report):
    assert small_report.passed, [c.line() for c in small_report.checks if not c.passed]
    names = {c.name for c in small_report.checks}
    assert {"oracle_equivalence", "qa_conservation_invariants", "lyapunov_suite", "qc_dominance"} <= names


def test_unknown_depth():
    with pytest.raises(ValueError):
        verify.verify_suite("medium", seed=0)


# mutations


def apply_without_sender_reset(x, s, j, i):
    """QA with every ``s_j = 0`` reset dropped."""
    xi, xj, si, sj = x[i], x[j], s[i], s[j]
    if xi == xj:
        if si > 0 and sj > 0:
            return QaRule.R1i
        s[i] = si + sj
        return QaRule.R1ii
    if xi < xj:
        if si + sj > 0:
            x[i] = xi + 1
            s[i] = si + sj - 1
            return QaRule.R2i
        return QaRule.R2ii
    if si + sj == 0:
        x[i] = xi - 1
        s[i] = 1
        return QaRule.R3i
    return QaRule.R3ii


def test_dropping_surplus_reset_breaks_conservation(monkeypatch):
    monkeypatch.setattr(protocol_qa, "_apply", apply_without_sender_reset)
    proto, _ = verify.check_qa_invariants(30, 6, seed=0)
    assert not proto.passed
    assert "conservation" in proto.detail


def symmetric_walk_weights_swapped(chain, z):
    n = chain.n
    p = (None,) + tuple(chain.p)
    left = sum(i / p[i] for i in range(1, z))
    right = sum((n - j) / p[j] for j in range(z, n))
    return (z / n) * left + (1 - z / n) * right


def test_mutated_symmetric_walk_formula_fails_oracle(monkeypatch):
    monkeypatch.setattr(markov, "symmetric_walk_hitting_time", symmetric_walk_weights_swapped)
    result = verify.check_oracles(10, 8, seed=0)
    assert not result.passed


def test_swapping_forward_and_backward_rates_fails_oracle(monkeypatch):
    original = markov.ForwardWalk.bracket

    def swapped(self, l):
        mirror = markov.ForwardWalk(self.n, (self.p[0],) + tuple(self.q), tuple(self.p[1:]))
        return original(mirror, l)

    monkeypatch.setattr(markov.ForwardWalk, "bracket", swapped)
    assert not verify.check_oracles(10, 8, seed=0).passed


def test_ignoring_negative_surplus_breaks_lyapunov_suite(monkeypatch):
    def no_negative_branch(tracker, fired):
        if fired.rule is QaRule.R2i and fired.x_before < tracker.L:
            return lyapunov.replace(tracker, D=tracker.D - 1, S_plus=tracker.S_plus - 1)
        return lyapunov.apply_rule(tracker, fired)

    monkeypatch.setattr(experiments, "apply_rule", no_negative_branch)
    _, lyap = verify.check_qa_invariants(60, 6, seed=0)
    assert not lyap.passed


def test_wrong_bound_constant_fails_regression(monkeypatch):
    monkeypatch.setattr(bounds, "qa_decrement_bound", lambda n: Fraction(5 * n * (n - 1)))
    assert not verify.check_bound_regression().passed


def test_wrong_ladder_closed_form_fails_worked_instance(monkeypatch):
    original = markov.ladder_hitting_times
    monkeypatch.setattr(markov, "ladder_hitting_times", lambda chain: tuple(v + 1 for v in original(chain)))
    assert not verify.check_worked_ladder().passed


def test_crashing_check_is_reported(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("broken")

    monkeypatch.setattr(markov, "qc_shrink_chain", boom)
    report = verify.verify_suite("small", seed=1)
    assert not report.passed
    failed = [c for c in report.checks if not c.passed]
    assert "qc_exactness" in [c.name for c in failed]
    assert all("broken" in c.detail for c in failed)
