import json
import math

import numpy as np
import pytest

from qsrop.attacks import (
    AlwaysOne,
    FourierDistinguisher,
    GroverForgery,
    MauledTag,
    RandomGuess,
    RandomTag,
    Replay,
    WeakTagForgery,
    XorTest,
)
from qsrop.experiments import (
    AdversaryProgram,
    BudgetExceeded,
    DecQuery,
    EncQuery,
    ExperimentConfig,
    Finish,
    Measure,
    OracleQuery,
    RestrictionViolation,
    TrialError,
    TrialSeeds,
    estimate_advantage,
    hoeffding_half_width,
    run_arm,
    run_qprf_trial,
    run_rop_qscca_trial,
    run_rop_qscpa_trial,
    run_trial,
    wrap_reduction_B,
    wrap_reduction_J,
)
from qsrop.experiments.games import RECORD_FIELDS
from qsrop.qcore import PermutationTable, RegisterLayout, basis_state, xor_constant
from qsrop.schemes import (
    C1,
    C1_IDEAL,
    C1_PRIME,
    C2,
    C2_IDEAL,
    Widths,
    decrypt,
    make_family,
    make_scheme,
)


def seeds(t=0, master=1):
    return TrialSeeds(master, t)


class Program(AdversaryProgram):
    """Adversary from a plain generator function, for one-off tests."""

    def __init__(self, fn, q=0, q_e=0, q_d=0, name="program"):
        self.fn, self.q, self.q_e, self.q_d, self.name = fn, q, q_e, q_d, name

    def run(self, ctx):
        return (yield from self.fn(ctx))


# --- seeds ------------------------------------------------------------------------


def test_seed_streams_are_deterministic_and_distinct():
    s = TrialSeeds(5, 3)
    assert s.stream("enc", 0).integers(1 << 30) == TrialSeeds(5, 3).stream("enc", 0).integers(1 << 30)
    draws = {s.stream(name, *idx).integers(1 << 62) for name, idx in [("enc", (0,)), ("enc", (1,)), ("perm", (0,)), ("key", ())]}
    assert len(draws) == 4
    assert TrialSeeds(5, 4).stream("key").integers(1 << 62) != s.stream("key").integers(1 << 62)


def test_hoeffding_value():
    assert hoeffding_half_width(4000) == pytest.approx(math.sqrt(math.log(40) / 8000))
    assert 2 * hoeffding_half_width(4000) == pytest.approx(0.04295, abs=1e-5)


# --- QPRF game ----------------------------------------------------------------------


def qprf_cfg(**kw):
    base = dict(game="qprf", family="weak", widths=Widths(n_m=4), trials=4000, master_seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_qprf_always_one():
    fam = make_family("strong", 32, 4, 4)
    for b in (0, 1):
        assert run_qprf_trial(fam, AlwaysOne(), b, seeds()).guess == 1


def test_qprf_xor_test_breaks_weak_family():
    est = estimate_advantage(qprf_cfg(), XorTest())
    assert est.advantage >= 1 - 2**-4 - est.half_width
    assert est.p0_hat == 0.0


def test_qprf_random_guess_on_strong_family():
    est = estimate_advantage(qprf_cfg(family="strong", trials=2000), RandomGuess())
    assert abs(est.advantage) <= est.half_width


def test_qprf_key_fixed_within_trial():
    fam = make_family("strong", 32, 3, 3)
    seen = []

    def twice(ctx):
        layout = RegisterLayout.of(("x", 3), ("y", 3))
        for _ in range(2):
            resp = yield OracleQuery(basis_state(layout, x=5), "x", "y")
            out = yield Measure(resp.state, "y")
            seen.append(out.value.value)
        return Finish(0)

    for b in (0, 1):
        seen.clear()
        run_qprf_trial(fam, Program(twice, q=2), b, seeds(2))
        assert seen[0] == seen[1]


# --- budgets and errors ---------------------------------------------------------------


def test_budget_exceeded_by_extra_query():
    def greedy(ctx):
        layout = RegisterLayout.of(("x", ctx.in_width), ("y", ctx.out_width))
        state = basis_state(layout)
        for _ in range(3):
            resp = yield OracleQuery(state, "x", "y")
            state = resp.state
        return Finish(0)

    with pytest.raises(BudgetExceeded):
        run_qprf_trial(make_family("weak", 2, 2, 2), Program(greedy, q=2), 0, seeds())


def test_budget_exceeded_by_declaration():
    cfg = qprf_cfg(q=1, trials=100)
    with pytest.raises(TrialError) as info:
        run_arm(cfg, XorTest(), 1)
    assert info.value.trial == 0 and isinstance(info.value.error, BudgetExceeded)


def test_estimate_needs_100_trials():
    with pytest.raises(ValueError):
        estimate_advantage(qprf_cfg(trials=99), AlwaysOne())


def test_trial_error_carries_index():
    def fails_late(ctx):
        if ctx.seeds.trial == 7:
            raise RuntimeError("boom")
        return Finish(0)
        yield

    with pytest.raises(TrialError) as info:
        estimate_advantage(qprf_cfg(trials=100), Program(fails_late))
    assert info.value.trial == 7 and "boom" in str(info.value)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(game="rop-qscpa", scheme=C2)
    with pytest.raises(ValueError):
        ExperimentConfig(game="rop-qscca", scheme=C1)
    with pytest.raises(ValueError):
        ExperimentConfig(game="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(game="rop-qscca", scheme=C2, scenario="q2")


# --- estimates ---------------------------------------------------------------------


def cpa_cfg(**kw):
    base = dict(game="rop-qscpa", scheme=C1_PRIME, widths=Widths(n_m=3), trials=200, master_seed=4)
    base.update(kw)
    return ExperimentConfig(**base)


def test_always_one_estimate():
    est = estimate_advantage(cpa_cfg(), AlwaysOne())
    assert est.p1_hat == est.p0_hat == 1.0 and est.advantage == 0.0


def test_random_guess_estimate():
    est = estimate_advantage(cpa_cfg(trials=1000), RandomGuess())
    assert abs(est.advantage) <= est.half_width


def test_estimate_is_deterministic():
    a = estimate_advantage(cpa_cfg(), FourierDistinguisher(3))
    b = estimate_advantage(cpa_cfg(), FourierDistinguisher(3))
    assert a.to_json() == b.to_json()


def test_estimate_independent_of_workers():
    cfg = cpa_cfg(trials=120)
    one, a1, a0 = estimate_advantage(cfg, FourierDistinguisher(3), workers=1, return_records=True)
    two, b1, b0 = estimate_advantage(cfg, FourierDistinguisher(3), workers=2, return_records=True)
    assert one.to_json() == two.to_json()
    assert [r.to_json() for r in a1 + a0] == [r.to_json() for r in b1 + b0]


def test_trial_record_serialization_order():
    rec = run_trial(cpa_cfg(), FourierDistinguisher(3), 1, 0)
    d = json.loads(rec.to_json())
    assert list(d) == ["type"] + list(RECORD_FIELDS)
    assert d["type"] == "trial" and d["queries"] == ["enc/0"]


def test_trial_records_bit_identical_on_rerun():
    cfg = ExperimentConfig(game="rop-qscca", scheme=C2, inner=C1_PRIME, widths=Widths(n_m=2, n_tau=4), trials=100, master_seed=9)
    a = [run_trial(cfg, GroverForgery(q_d=2, q_e=1), b, t).to_json() for b in (0, 1) for t in range(5)]
    b = [run_trial(cfg, GroverForgery(q_d=2, q_e=1), b, t).to_json() for b in (0, 1) for t in range(5)]
    assert a == b


# --- CPA game ----------------------------------------------------------------------


def _encrypt_once(message, store):
    def prog(ctx):
        sh = ctx.shape
        layout = RegisterLayout.of(("m", sh.n_m), ("ct", sh.body))
        resp = yield EncQuery(basis_state(layout, m=message), "m", "ct")
        r = resp.value.value if resp.value is not None else None
        out = yield Measure(resp.state, "ct")
        store.append((out.value.value, r))
        return Finish(0)

    return Program(prog, q_e=1)


@pytest.mark.parametrize("scheme", [C1_PRIME, C1, C1_IDEAL])
def test_cpa_b1_basis_query_encrypts(scheme):
    inst = make_scheme(scheme, Widths(n_m=3), np.random.default_rng(1))
    for t in range(20):
        store = []
        run_rop_qscpa_trial(inst, _encrypt_once(5, store), 1, seeds(t))
        c, r = store[0]
        assert decrypt(inst, c, r) == 5


def test_cpa_b0_permuted_message_uniform():
    inst = make_scheme(C1_PRIME, Widths(n_m=3), np.random.default_rng(2))
    n = 10_000
    counts = np.zeros(8)
    for t in range(n):
        store = []
        run_rop_qscpa_trial(inst, _encrypt_once(5, store), 0, seeds(t))
        c, r = store[0]
        counts[decrypt(inst, c, r)] += 1
    expected = n / 8
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 24.32  # 0.999 quantile of chi^2 with 7 degrees of freedom


def test_cpa_identity_permutation_makes_arms_identical():
    inst = make_scheme(C1_PRIME, Widths(n_m=3), np.random.default_rng(3))
    ident = lambda width, rng: PermutationTable(width, np.arange(1 << width))
    for t in range(30):
        r1 = run_rop_qscpa_trial(inst, FourierDistinguisher(3), 1, seeds(t), perm_sampler=ident)
        r0 = run_rop_qscpa_trial(inst, FourierDistinguisher(3), 0, seeds(t), perm_sampler=ident)
        assert (r1.guess, r1.p_one, r1.views) == (r0.guess, r0.p_one, r0.views)


def test_cpa_rejects_cca_scheme():
    inst = make_scheme(C2, Widths(n_m=2), np.random.default_rng(), inner=C1_PRIME)
    with pytest.raises(ValueError):
        run_rop_qscpa_trial(inst, AlwaysOne(), 1, seeds())


def test_c1_ideal_collisions_abort_and_are_counted():
    cfg = cpa_cfg(scheme=C1_IDEAL, widths=Widths(n_m=3, n_s=4), trials=200)
    est = estimate_advantage(cfg, FourierDistinguisher(3))
    assert est.excluded1 > 0 and est.excluded1 + est.n1 == 200
    assert est.collisions == est.excluded1 + est.excluded0


def test_keyed_c1_collisions_flagged_not_aborted():
    cfg = cpa_cfg(scheme=C1, widths=Widths(n_m=3, n_s=3), trials=100)
    recs = run_arm(cfg, FourierDistinguisher(3), 1)
    assert any(r.collision for r in recs)
    assert not any(r.aborted for r in recs)


# --- CCA game ----------------------------------------------------------------------


CCA_W = Widths(n_m=2, n_r=2, n_tau=4)


def cca_inst(seed=0, scheme=C2, **kw):
    return make_scheme(scheme, CCA_W, np.random.default_rng(seed), inner=C1_PRIME, **kw)


def test_q0_decryption_xors_bot():
    inst = cca_inst()
    captured = {}

    def prog(ctx):
        sh = ctx.shape
        layout = RegisterLayout.of(("x", sh.n_x), ("body", sh.body), ("tag", sh.n_tau))
        state = basis_state(layout, x=1, body=3, tag=7)
        captured["pre"] = state
        resp = yield DecQuery(state, "x", ("body", "tag"))
        captured["post"] = resp.state
        return Finish(0)

    run_rop_qscca_trial(inst, Program(prog, q_d=1), 1, "q0", seeds())
    expect = xor_constant(captured["pre"], "x", 1 << 2)
    assert np.array_equal(captured["post"].amplitudes, expect.amplitudes)


def test_random_tag_acceptance_rate():
    cfg = ExperimentConfig(game="rop-qscca", scheme=C2, inner=C1_PRIME, widths=CCA_W, trials=500, master_seed=5)
    recs = run_arm(cfg, RandomTag(q_d=4), 1)
    w = np.concatenate([r.wval for r in recs])
    assert set(np.unique(w).tolist()) <= {0.0, 1.0}
    assert abs(w.mean() - 2**-4) <= hoeffding_half_width(w.size)


def test_wval_in_unit_interval():
    cfg = ExperimentConfig(game="rop-qscca", scheme=C2_IDEAL, inner=C1_PRIME, widths=CCA_W, trials=100, master_seed=6)
    for rec in run_arm(cfg, GroverForgery(q_d=3, q_e=2), 1)[:20]:
        assert len(rec.wval) == 3
        assert all(0.0 <= w <= 1.0 for w in rec.wval)
        assert rec.violations == []


def test_replay_flagged_by_monitor():
    rec = run_rop_qscca_trial(cca_inst(), Replay(), 1, "q1", seeds())
    assert len(rec.violations) == 1
    v = rec.violations[0]
    assert v.query == 0 and v.weight >= 1 - 1e-9
    assert rec.wval == [0.0]


def test_strict_monitor_raises():
    with pytest.raises(RestrictionViolation):
        run_rop_qscca_trial(cca_inst(), Replay(), 1, "q1", seeds(), strict=True)


def test_delta_relaxation():
    rec = run_rop_qscca_trial(cca_inst(), Replay(), 1, "q1", seeds(), delta=1.0)
    assert rec.violations == []


def test_superposed_encryptions_all_recorded():
    inst = cca_inst(1)
    found = {}

    def prog(ctx):
        sh = ctx.shape
        layout = RegisterLayout.of(("m", sh.n_m), ("x", sh.n_x), ("body", sh.body), ("tag", sh.n_tau))
        from qsrop.qcore import walsh_hadamard

        state = walsh_hadamard(basis_state(layout), "m")
        resp = yield EncQuery(state, "m", ("body", "tag"))
        found["state"] = resp.state
        resp = yield DecQuery(resp.state, "x", ("body", "tag"))
        return Finish(0)

    rec = run_rop_qscca_trial(inst, Program(prog, q_e=1, q_d=1), 1, "q1", seeds())
    assert len(rec.violations) == 4
    assert all(v.weight == pytest.approx(0.25) for v in rec.violations)


def test_tag_avoiding_scenarios_agree():
    for t in range(10):
        q1 = run_rop_qscca_trial(cca_inst(t), MauledTag(), 1, "q1", seeds(t), capture=True)
        q0 = run_rop_qscca_trial(cca_inst(t), MauledTag(), 1, "q0", seeds(t), capture=True)
        assert q1.wval == [0.0]
        for s1, s0 in zip(q1.snapshots, q0.snapshots):
            assert np.max(np.abs(s1.pre.amplitudes - s0.pre.amplitudes)) < 1e-9
            assert np.max(np.abs(s1.after_real.amplitudes - s1.after_bot.amplitudes)) < 1e-9
        assert np.max(np.abs(q1.final_state.amplitudes - q0.final_state.amplitudes)) < 1e-9


def test_compliant_adversary_has_no_violations():
    cfg = ExperimentConfig(game="rop-qscca", scheme=C2, inner=C1_PRIME, widths=CCA_W, trials=100, master_seed=7)
    for rec in run_arm(cfg, GroverForgery(q_d=2, q_e=3), 0)[:30]:
        assert rec.violations == []
        assert rec.n_enc == 3 and rec.n_dec == 2


def test_weak_tag_forgery_succeeds_only_with_weak_tag():
    base = dict(game="rop-qscca", inner=C1_PRIME, tag_family="weak", widths=CCA_W, trials=400, master_seed=8)
    keyed = estimate_advantage(ExperimentConfig(scheme=C2, **base), WeakTagForgery())
    ideal = estimate_advantage(ExperimentConfig(scheme=C2_IDEAL, **base), WeakTagForgery())
    assert keyed.p1_exact == pytest.approx(1.0)
    assert keyed.exact_advantage == pytest.approx(0.75, abs=keyed.half_width)
    assert abs(ideal.exact_advantage) < 0.1


# --- reductions ----------------------------------------------------------------------


@pytest.mark.parametrize("inner,widths", [(C1_PRIME, Widths(n_m=2, n_r=2, n_tau=5)), (C1, Widths(n_m=2, n_s=4, n_tau=4)), (C1_IDEAL, Widths(n_m=2, n_s=5, n_tau=4))])
def test_reduction_B_matches_q0_transcripts(inner, widths):
    adv = GroverForgery(q_d=2, q_e=2)
    cpa = ExperimentConfig(game="rop-qscpa", scheme=inner, widths=widths, trials=100, master_seed=12)
    cca = ExperimentConfig(game="rop-qscca", scheme=C2_IDEAL, inner=inner, widths=widths, trials=100, master_seed=12, scenario="q0")
    B = wrap_reduction_B(adv, widths.n_tau)
    assert B.q_e == adv.q_e and B.q_d == 0
    for b in (0, 1):
        for t in range(6):
            rb = run_trial(cpa, B, b, t)
            rq = run_trial(cca, adv, b, t)
            assert rb.transcript() == rq.transcript()
            assert rb.n_enc == rq.n_enc
            if not rq.aborted:
                assert rq.n_enc == adv.q_e


def test_reduction_B_advantage_equals_q0_advantage():
    w = Widths(n_m=2, n_r=2, n_tau=4)
    adv = GroverForgery(q_d=1, q_e=1)
    eb = estimate_advantage(ExperimentConfig(game="rop-qscpa", scheme=C1_PRIME, widths=w, trials=300, master_seed=2), wrap_reduction_B(adv, 4))
    eq = estimate_advantage(ExperimentConfig(game="rop-qscca", scheme=C2_IDEAL, inner=C1_PRIME, widths=w, trials=300, master_seed=2, scenario="q0"), adv)
    assert abs(eb.advantage - eq.advantage) <= 2 * eq.half_width
    assert eb.advantage == eq.advantage


def test_reduction_B_rejects_nonzero_target():
    def dirty(ctx):
        sh = ctx.shape
        layout = RegisterLayout.of(("m", sh.n_m), ("ct", sh.body + sh.n_tau))
        yield EncQuery(basis_state(layout, ct=1), "m", "ct")
        return Finish(0)

    from qsrop.experiments import ReductionError

    cfg = ExperimentConfig(game="rop-qscpa", scheme=C1_PRIME, widths=Widths(n_m=2), trials=100)
    with pytest.raises(ReductionError):
        run_trial(cfg, wrap_reduction_B(Program(dirty, q_e=1), 4), 1, 0)


def test_reduction_J_query_accounting():
    w = Widths(n_m=2, n_r=2, n_tau=4)
    adv = GroverForgery(q_d=3, q_e=2)
    J = wrap_reduction_J(adv, w, inner=C1_PRIME)
    assert J.q == adv.q_e + 2 * adv.q_d
    cfg = ExperimentConfig(game="qprf", family="strong", n_in=4, n_out=4, widths=w, trials=100, master_seed=1)
    for t in range(4):
        rec = run_trial(cfg, J, 1, t)
        assert rec.n_oracle == J.q
        assert rec.n_oracle <= adv.q_d * 2 + adv.q_e


def test_reduction_J_tag_avoiding_variant_has_no_edge():
    w = Widths(n_m=2, n_r=2, n_tau=4)
    J = wrap_reduction_J(WeakTagForgery(invalidate=True), w, inner=C1_PRIME)
    cfg = ExperimentConfig(game="qprf", family="weak", n_in=4, n_out=4, widths=w, trials=400, master_seed=3)
    est = estimate_advantage(cfg, J)
    assert abs(est.advantage) <= est.half_width


def test_reduction_J_checks_oracle_widths():
    w = Widths(n_m=2, n_r=2, n_tau=4)
    J = wrap_reduction_J(WeakTagForgery(), w, inner=C1_PRIME)
    cfg = ExperimentConfig(game="qprf", family="weak", n_in=3, n_out=3, widths=w, trials=100)
    with pytest.raises(TrialError):
        run_arm(cfg, J, 1)
