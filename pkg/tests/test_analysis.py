import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsrop.analysis import (
    FAIL,
    NA,
    OK,
    InequalityRow,
    default_xi,
    format_rows,
    markov_tail,
    markov_tail_check,
    paired_diagnostics,
    paired_run,
    sqrt_expectation_check,
    theorem_bounds,
    verify_claim_inequality,
    wval_diagnostics,
)
from qsrop.attacks import GroverForgery, MauledTag, WeakTagForgery, grover_theory
from qsrop.experiments import ExperimentConfig, estimate_advantage, run_trial
from qsrop.schemes import C1_PRIME, C2, C2_IDEAL, Widths


def cca_cfg(n_tau=6, scheme=C2_IDEAL, **kw):
    base = dict(game="rop-qscca", scheme=scheme, inner=C1_PRIME, widths=Widths(n_m=2, n_r=2, n_tau=n_tau), trials=100, master_seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


# --- closed-form bounds -------------------------------------------------------------


def test_qprf_bound_example():
    assert theorem_bounds(0.1, 9, 1, 1, 8).qprf_bound == 0.005


def test_cca_slack_example():
    rep = theorem_bounds(0.5, 1, 1, 10, 40)
    assert abs(rep.cca_slack - 2 * 201 * 2**-10) <= 1e-12
    assert rep.cca_slack == pytest.approx(0.392578125, abs=1e-12)
    assert rep.cca_bound == pytest.approx(0.5 - 0.392578125, abs=1e-12)


def test_additive_term_example():
    rep = theorem_bounds(0.1, 1, 1, 2, 16, xi=2**-4)
    assert rep.additive_term == pytest.approx(0.5625, abs=1e-15)
    assert rep.claim_term == pytest.approx(0.5625, abs=1e-15)
    assert rep.markov_tail == pytest.approx(2 / 2**-4 * 4 * 2**-8)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 50), st.integers(1, 128))
def test_additive_term_matches_claim_at_default_xi(q_d, n_tau):
    rep = theorem_bounds(0.3, 1, 1, q_d, n_tau)
    assert rep.xi == default_xi(n_tau)
    assert math.isclose(rep.additive_term, (1 + 2 * q_d * q_d) * 2.0 ** (-n_tau / 4), rel_tol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.integers(0, 100), st.integers(0, 30), st.integers(1, 64))
def test_bounds_monotone(eps, q, q_d, n_tau):
    a = theorem_bounds(eps, q, 1, q_d, n_tau)
    assert theorem_bounds(eps, q + 1, 1, q_d, n_tau).qprf_bound <= a.qprf_bound
    assert theorem_bounds(eps, q, 1, q_d + 1, n_tau).cca_slack >= a.cca_slack
    assert theorem_bounds(eps, q, 1, q_d, n_tau + 1).cca_slack <= a.cca_slack
    assert a.grover_exact == grover_theory(q_d, n_tau).exact


def test_bounds_reject_bad_inputs():
    with pytest.raises(ValueError):
        theorem_bounds(1.5, 1, 1, 1, 8)
    with pytest.raises(ValueError):
        theorem_bounds(0.1, -1, 1, 1, 8)
    with pytest.raises(ValueError):
        theorem_bounds(0.1, 1, 1, 1, 8, xi=0.0)
    with pytest.raises(ValueError):
        markov_tail(1, 8, -1.0)


def test_bounds_json():
    d = json.loads(theorem_bounds(0.1, 9, 1, 1, 8).to_json())
    assert d["type"] == "bounds" and d["qprf_bound"] == 0.005


# --- rows -----------------------------------------------------------------------------


def test_inequality_rows():
    assert InequalityRow("x", 1, 0.5, 0.5).status == OK
    assert InequalityRow("x", 1, 0.5 + 1e-10, 0.5).status == OK
    assert InequalityRow("x", 1, 0.6, 0.5).status == FAIL
    assert InequalityRow("x", 1, 0.6, 0.5, sense=">=").status == OK
    assert InequalityRow("x", 1, 0.6, 0.5, status=NA).status == NA
    text = format_rows([InequalityRow("step", 2, 0.1, 0.2)])
    assert "step" in text and OK in text


# --- paired diagnostics ------------------------------------------------------------------


def test_diagnostics_without_valid_weight():
    for t in range(5):
        d = paired_diagnostics(cca_cfg(scheme=C2), MauledTag(), 1, t)
        assert d.wval == [0.0]
        assert d.final_distance < 1e-7
        assert d.ok


def test_diagnostics_with_certain_forgery():
    cfg = cca_cfg(n_tau=4, scheme=C2, tag_family="weak")
    q1, q0 = paired_run(cfg, WeakTagForgery(), 1, 0)
    d = wval_diagnostics(q1, q0, 4)
    assert d.wval == [pytest.approx(1.0)]
    assert d.fidelity[0] == pytest.approx(0.0, abs=1e-12)
    statuses = {r.name: r.status for r in d.rows}
    assert statuses["step-middle"] == NA
    assert d.ok


def test_grover_diagnostics_hold_and_are_tight():
    diags = [paired_diagnostics(cca_cfg(), GroverForgery(q_d=3), b, t) for b in (0, 1) for t in range(10)]
    for d in diags:
        assert d.ok
        assert len(d.wval) == 3
        for w, f in zip(d.wval, d.fidelity):
            assert f == pytest.approx(1 - 2 * w, abs=1e-9)
        for i, w in enumerate(d.wval, start=1):
            assert w == pytest.approx(math.sin((i - 0.5) * 2 * math.asin(2**-3)) ** 2, abs=1e-9)
    assert min(d.min_slack for d in diags) > -1e-9


def test_diagnostics_reject_unpaired_runs():
    cfg = cca_cfg()
    q1 = run_trial(cfg, GroverForgery(q_d=1), 1, 0, capture=True, scenario="q1")
    other = run_trial(cfg, GroverForgery(q_d=1), 1, 1, capture=True, scenario="q0")
    with pytest.raises(ValueError):
        wval_diagnostics(q1, other, 6)
    with pytest.raises(ValueError):
        wval_diagnostics(q1, q1, 6)
    plain = run_trial(cfg, GroverForgery(q_d=1), 1, 0, scenario="q0")
    with pytest.raises(ValueError):
        wval_diagnostics(q1, plain, 6)
    with pytest.raises(ValueError):
        paired_run(ExperimentConfig(game="rop-qscpa", scheme=C1_PRIME), GroverForgery(q_d=1), 1, 0)


def test_diagnostics_json():
    d = paired_diagnostics(cca_cfg(), GroverForgery(q_d=2), 1, 0)
    out = json.loads(d.to_json())
    assert out["trial"] == 0 and len(out["wval"]) == 2


def test_markov_tail_check():
    diags = [paired_diagnostics(cca_cfg(n_tau=8), GroverForgery(q_d=1), 1, t) for t in range(20)]
    tc = markov_tail_check(diags, 8, 1)
    assert tc.bound == pytest.approx(2 / 2**-2 * 2**-4)
    assert tc.holds
    with pytest.raises(ValueError):
        markov_tail_check([], 8, 1)


# --- claim inequality --------------------------------------------------------------------


def _pair(cfg, adv):
    q1 = estimate_advantage(cfg, adv, scenario="q1")
    q0 = estimate_advantage(cfg, adv, scenario="q0")
    return q1, q0


def test_claim_inequality_grover_n8():
    cfg = cca_cfg(n_tau=8, scheme=C2, trials=200)
    rows = verify_claim_inequality([_pair(cfg, GroverForgery(q_d=1))], 8, 1)
    assert len(rows) == 2
    for row in rows:
        assert row.term == pytest.approx(0.75)
        assert abs(row.p_q1 - row.p_q0) <= 0.75 + row.ci
        assert row.holds
        assert row.vacuous == (row.p_q0 + 0.75 > 1)


def test_claim_inequality_vacuous_at_small_tag():
    cfg = cca_cfg(n_tau=4, scheme=C2, trials=100)
    rows = verify_claim_inequality([_pair(cfg, GroverForgery(q_d=2))], 4, 2)
    assert all(r.term == pytest.approx(4.5) and r.vacuous for r in rows)
    d = rows[0].to_dict()
    assert {"rhs", "slack", "holds", "vacuous", "q0_le_q1"} <= set(d)


def test_claim_inequality_rejects_mismatch():
    a = estimate_advantage(cca_cfg(trials=100), GroverForgery(q_d=1), scenario="q1")
    b = estimate_advantage(cca_cfg(trials=100, master_seed=2), GroverForgery(q_d=1), scenario="q0")
    with pytest.raises(ValueError):
        verify_claim_inequality([(a, b)], 6, 1)
    with pytest.raises(ValueError):
        verify_claim_inequality([(a, a)], 6, 1)


# --- square-root expectation ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_jensen_holds(samples):
    (row,) = sqrt_expectation_check([samples])
    assert row.jensen


def test_sqrt_check_against_grover_weights():
    diags = [paired_diagnostics(cca_cfg(n_tau=8), GroverForgery(q_d=3), 1, t) for t in range(5)]
    groups = {i + 1: [d.wval[i] for d in diags] for i in range(3)}
    rows = sqrt_expectation_check(groups, n_tau=8)
    for row in rows:
        assert row.within_bound and row.jensen
        assert row.bound == 2 * row.index * 2**-4


def test_sqrt_check_errors():
    with pytest.raises(ValueError):
        sqrt_expectation_check([[]])
    with pytest.raises(ValueError):
        sqrt_expectation_check([[-0.1]])
    assert sqrt_expectation_check({2: np.zeros(3)})[0].bound is None
