"""Point checks of the Q1/Q0 hybrid argument on simulated states, and bound calculators.

The hybrid argument compares a run where decryption checks tags (V) with
one where it always answers bot (V-tilde).  With the joint pure state in
hand every step of the argument can be evaluated exactly:

* fidelity     |<V psi | V~ psi>|          >= 1 - 2 W
* step         D(V psi, V~ psi)            <= sqrt(1 - (1 - 2W)^2) <= 2 sqrt(W)
* accumulated  D(psi_k, psi~_k)            <= 2 sum_{i<k} sqrt(W_i)
* measurement  |Pr_Q1[b'=1] - Pr_Q0[b'=1]|  <= D(final, final~)

The chain assumes the adversary evolves unitarily from its first
decryption query on; a mid-run measurement would collapse the two runs
independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attacks import grover_theory
from .experiments.actions import AdversaryProgram
from .experiments.estimate import AdvantageEstimate, ExperimentConfig, hoeffding_half_width, run_trial
from .experiments.games import TrialRecord
from .qcore import NORM_TOL, fidelity, pure_trace_distance

OK, FAIL, NA = "ok", "FAIL", "n/a"


@dataclass
class InequalityRow:
    """One checked inequality ``lhs <= rhs`` (or ``>=`` when ``sense`` is ">=")."""

    name: str
    index: Optional[int]
    lhs: float
    rhs: float
    sense: str = "<="
    tol: float = NORM_TOL
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = OK if self.slack >= -self.tol else FAIL

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs if self.sense == "<=" else self.lhs - self.rhs


def format_rows(rows: Sequence[InequalityRow]) -> str:
    """Human-readable table with one row per inequality."""
    lines = [f"{'inequality':<16}{'i':>4}  {'lhs':>14}  {'rhs':>14}  {'slack':>14}  status"]
    for r in rows:
        idx = "" if r.index is None else str(r.index)
        lines.append(f"{r.name:<16}{idx:>4}  {r.lhs:>14.9f}  {r.rhs:>14.9f}  {r.slack:>14.3e}  {r.status}")
    return "\n".join(lines)


@dataclass
class WvalDiagnostics:
    trial: int
    b: int
    wval: list
    fidelity: list
    step_distance: list
    running_distance: list
    accumulated_bound: list
    final_distance: float
    final_bound: float
    p_one_q1: Optional[float]
    p_one_q0: Optional[float]
    xi: float
    markov_tail: float
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status != FAIL for r in self.rows)

    @property
    def min_slack(self) -> float:
        return min((r.slack for r in self.rows if r.status != NA), default=math.inf)

    def to_dict(self) -> dict:
        out = {"type": "wval-diagnostics"}
        d = asdict(self)
        d["rows"] = [[r.name, r.index, r.lhs, r.rhs, r.slack, r.status] for r in self.rows]
        out.update(d)
        out["ok"] = self.ok
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def default_xi(n_tau: int) -> float:
    return 2.0 ** (-n_tau / 4)


def markov_tail(q_d: int, n_tau: int, xi: float) -> float:
    """Pr(2 sum sqrt(W) >= xi) <= (2 / xi) q_d^2 2^(-n_tau / 2)."""
    if xi <= 0:
        raise ValueError("xi must be positive")
    return 2.0 / xi * q_d * q_d * 2.0 ** (-n_tau / 2)


def _check_paired(q1: TrialRecord, q0: TrialRecord) -> None:
    if (q1.master_seed, q1.trial, q1.b, q1.scheme) != (q0.master_seed, q0.trial, q0.b, q0.scheme):
        raise ValueError("runs do not share seeds, trial index, challenge bit and scheme")
    if (q1.scenario, q0.scenario) != ("q1", "q0"):
        raise ValueError("expected one q1 run and one q0 run")
    if not q1.snapshots or len(q1.snapshots) != len(q0.snapshots):
        raise ValueError("both runs need captured decryption snapshots (run with capture=True)")
    if q1.final_state is None or q0.final_state is None:
        raise ValueError("both runs need a captured final state (adversary must end with Guess)")


def wval_diagnostics(q1: TrialRecord, q0: TrialRecord, n_tau: int, xi: Optional[float] = None) -> WvalDiagnostics:
    """Evaluate the hybrid-argument chain on a captured Q1/Q0 pair of the same trial."""
    _check_paired(q1, q0)
    xi = default_xi(n_tau) if xi is None else xi
    rows: list[InequalityRow] = []
    W, F, D, R, A = [], [], [], [], []
    acc = 0.0
    for i, (s1, s0) in enumerate(zip(q1.snapshots, q0.snapshots), start=1):
        w = s1.wval
        f = fidelity(s1.after_real, s1.after_bot)
        d = pure_trace_distance(s1.after_real, s1.after_bot)
        running = pure_trace_distance(s1.pre, s0.pre)
        W.append(w), F.append(f), D.append(d), R.append(running), A.append(2.0 * acc)
        rows.append(InequalityRow("accumulated", i, running, 2.0 * acc))
        rows.append(InequalityRow("fidelity", i, f, 1.0 - 2.0 * w, sense=">="))
        middle = math.sqrt(max(0.0, 1.0 - (1.0 - 2.0 * w) ** 2))
        rows.append(InequalityRow("step-middle", i, d, middle, status="" if w <= 0.5 else NA))
        rows.append(InequalityRow("middle-sqrt", i, middle, 2.0 * math.sqrt(w)))
        rows.append(InequalityRow("step", i, d, 2.0 * math.sqrt(w)))
        acc += math.sqrt(w)
    final = pure_trace_distance(q1.final_state, q0.final_state)
    rows.append(InequalityRow("final", len(W) + 1, final, 2.0 * acc))
    gap = abs(q1.p_one - q0.p_one)
    rows.append(InequalityRow("measurement", None, gap, final))
    return WvalDiagnostics(
        trial=q1.trial,
        b=q1.b,
        wval=W,
        fidelity=F,
        step_distance=D,
        running_distance=R,
        accumulated_bound=A,
        final_distance=final,
        final_bound=2.0 * acc,
        p_one_q1=q1.p_one,
        p_one_q0=q0.p_one,
        xi=xi,
        markov_tail=markov_tail(len(W), n_tau, xi),
        rows=rows,
    )


def paired_run(config: ExperimentConfig, adversary: AdversaryProgram, b: int, trial: int) -> tuple[TrialRecord, TrialRecord]:
    """The same trial in scenario q1 and q0, with states captured."""
    if config.game != "rop-qscca":
        raise ValueError("paired runs need the rop-qscca game")
    q1 = run_trial(config, adversary, b, trial, capture=True, scenario="q1")
    q0 = run_trial(config, adversary, b, trial, capture=True, scenario="q0")
    return q1, q0


def paired_diagnostics(config: ExperimentConfig, adversary: AdversaryProgram, b: int, trial: int, xi: Optional[float] = None) -> WvalDiagnostics:
    """:func:`wval_diagnostics` on a fresh pair; the captured states are dropped afterwards."""
    q1, q0 = paired_run(config, adversary, b, trial)
    diag = wval_diagnostics(q1, q0, config.widths.n_tau, xi)
    for rec in (q1, q0):
        rec.snapshots.clear()
        rec.final_state = None
    return diag


@dataclass(frozen=True)
class TailCheck:
    trials: int
    xi: float
    frequency: float
    bound: float
    half_width: float

    @property
    def holds(self) -> bool:
        return self.frequency <= self.bound + self.half_width


def markov_tail_check(diags: Sequence[WvalDiagnostics], n_tau: int, q_d: int, xi: Optional[float] = None) -> TailCheck:
    """Observed frequency of 2 sum sqrt(W) >= xi against the Markov tail bound."""
    if not diags:
        raise ValueError("no diagnostics given")
    xi = default_xi(n_tau) if xi is None else xi
    freq = float(np.mean([d.final_bound >= xi for d in diags]))
    return TailCheck(len(diags), xi, freq, markov_tail(q_d, n_tau, xi), hoeffding_half_width(len(diags)))


@dataclass
class BoundReport:
    eps: float
    q: int
    q_e: int
    q_d: int
    n_tau: int
    xi: float
    qprf_bound: float
    cca_slack: float
    cca_bound: float
    claim_term: float
    markov_tail: float
    additive_term: float
    grover_exact: float
    grover_approx: float

    def to_dict(self) -> dict:
        out = {"type": "bounds"}
        out.update(asdict(self))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def theorem_bounds(eps: float, q: int, q_e: int, q_d: int, n_tau: int, xi: Optional[float] = None) -> BoundReport:
    """Closed-form bounds.

    * QPRF advantage lower bound from a CPA attack: eps / (2 (q + 1)).
    * CCA slack 2 (1 + 2 q_d^2) 2^(-n_tau / 4), and eps minus it.
    * For ``xi`` (default 2^(-n_tau / 4)) the Markov tail
      (2 / xi) q_d^2 2^(-n_tau / 2) and the additive term xi + tail, which
      at the default equals (1 + 2 q_d^2) 2^(-n_tau / 4).
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if min(q, q_e, q_d, n_tau) < 0:
        raise ValueError("query counts and tag width must be nonnegative")
    xi = default_xi(n_tau) if xi is None else xi
    tail = markov_tail(q_d, n_tau, xi)
    claim = (1 + 2 * q_d * q_d) * 2.0 ** (-n_tau / 4)
    g = grover_theory(q_d, n_tau)
    return BoundReport(
        eps=eps,
        q=q,
        q_e=q_e,
        q_d=q_d,
        n_tau=n_tau,
        xi=xi,
        qprf_bound=eps / (2 * (q + 1)),
        cca_slack=2.0 * claim,
        cca_bound=eps - 2.0 * claim,
        claim_term=claim,
        markov_tail=tail,
        additive_term=xi + tail,
        grover_exact=g.exact,
        grover_approx=g.approx,
    )


@dataclass
class ClaimRow:
    adversary: str
    b: int
    p_q1: float
    p_q0: float
    term: float
    ci: float
    exact_q1: Optional[float] = None
    exact_q0: Optional[float] = None

    @property
    def rhs(self) -> float:
        return self.p_q0 + self.term

    @property
    def slack(self) -> float:
        return self.rhs + self.ci - self.p_q1

    @property
    def holds(self) -> bool:
        return self.slack >= 0

    @property
    def vacuous(self) -> bool:
        return self.rhs > 1.0

    @property
    def q0_le_q1(self) -> bool:
        """Whether Pr^Q0 <= Pr^Q1 held here; recorded, never assumed."""
        return self.p_q0 <= self.p_q1

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(rhs=self.rhs, slack=self.slack, holds=self.holds, vacuous=self.vacuous, q0_le_q1=self.q0_le_q1)
        return d


def _pair_key(e: AdvantageEstimate) -> tuple:
    return (e.game, e.scheme, e.adversary, e.master_seed, e.trials)


def verify_claim_inequality(pairs: Sequence[tuple[AdvantageEstimate, AdvantageEstimate]], n_tau: int, q_d: int) -> list[ClaimRow]:
    """Check Pr^Q1(b'=1) <= Pr^Q0(b'=1) + (1 + 2 q_d^2) 2^(-n_tau/4) for both arms of every pair.

    The confidence slack is the sum of the two one-arm Hoeffding half-widths.
    Rows whose right-hand side exceeds 1 are flagged ``vacuous``.
    """
    term = (1 + 2 * q_d * q_d) * 2.0 ** (-n_tau / 4)
    rows = []
    for q1, q0 in pairs:
        if _pair_key(q1) != _pair_key(q0) or (q1.scenario, q0.scenario) != ("q1", "q0"):
            raise ValueError(f"estimates are not a q1/q0 pair: {_pair_key(q1)} vs {_pair_key(q0)}")
        for b, p1, p0, n1, n0, e1, e0 in (
            (1, q1.p1_hat, q0.p1_hat, q1.n1, q0.n1, q1.p1_exact, q0.p1_exact),
            (0, q1.p0_hat, q0.p0_hat, q1.n0, q0.n0, q1.p0_exact, q0.p0_exact),
        ):
            ci = hoeffding_half_width(n1) + hoeffding_half_width(n0)
            rows.append(ClaimRow(q1.adversary, b, p1, p0, term, ci, e1, e0))
    return rows


@dataclass
class SqrtCheck:
    index: int
    n: int
    mean_sqrt: float
    sqrt_mean: float
    bound: Optional[float]
    half_width: float

    @property
    def jensen(self) -> bool:
        return self.mean_sqrt <= self.sqrt_mean + 1e-12

    @property
    def within_bound(self) -> Optional[bool]:
        if self.bound is None:
            return None
        return self.mean_sqrt <= self.bound + self.half_width


def sqrt_expectation_check(groups, n_tau: Optional[int] = None) -> list[SqrtCheck]:
    """Per query index i (1-based): mean(sqrt W) <= sqrt(mean W), and mean(sqrt W) vs 2 i 2^(-n_tau/2).

    ``groups`` maps i to its samples, or is a sequence whose k-th entry holds
    the samples of query k + 1.
    """
    items = groups.items() if isinstance(groups, dict) else enumerate(groups, start=1)
    out = []
    for i, samples in items:
        x = np.asarray(samples, dtype=float)
        if x.size == 0:
            raise ValueError(f"no samples for query {i}")
        if np.any(x < 0):
            raise ValueError("samples must be nonnegative")
        bound = 2.0 * i * 2.0 ** (-n_tau / 2) if n_tau is not None else None
        out.append(SqrtCheck(int(i), int(x.size), float(np.mean(np.sqrt(x))), float(math.sqrt(np.mean(x))), bound, hoeffding_half_width(x.size)))
    return out
