"""Experiment configuration, single trials, and paired Monte Carlo estimates."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..qcore import ZERO_TOL
from ..schemes import C1, C2, CCA_SCHEMES, CPA_SCHEMES, Widths, make_family, make_scheme
from .actions import AdversaryProgram, TrialSeeds
from .games import SCENARIOS, TrialRecord, run_qprf_trial, run_rop_qscca_trial, run_rop_qscpa_trial

GAMES = ("qprf", "rop-qscpa", "rop-qscca")
MIN_TRIALS = 100


class TrialError(RuntimeError):
    """A trial raised; carries the arm and trial index."""

    def __init__(self, b: int, trial: int, error: BaseException):
        super().__init__(b, trial, error)
        self.b = b
        self.trial = trial
        self.error = error

    def __str__(self) -> str:
        return f"trial {self.trial} (b={self.b}) failed: {type(self.error).__name__}: {self.error}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a batch of trials, besides the adversary.

    ``q``/``q_e``/``q_d`` are budget ceilings; ``None`` trusts the
    adversary's declaration.  ``n_in``/``n_out`` are the QPRF game's widths
    (defaulting to ``n_m``).
    """

    game: str
    scheme: Optional[str] = None
    family: str = "strong"
    tag_family: str = "strong"
    inner: str = C1
    scenario: str = "q1"
    trials: int = 1000
    master_seed: int = 0
    widths: Widths = field(default_factory=Widths)
    n_in: Optional[int] = None
    n_out: Optional[int] = None
    q: Optional[int] = None
    q_e: Optional[int] = None
    q_d: Optional[int] = None
    delta: float = ZERO_TOL
    strict: bool = False

    def __post_init__(self):
        if self.game not in GAMES:
            raise ValueError(f"game must be one of {GAMES}, got {self.game!r}")
        if self.game == "rop-qscpa" and self.scheme not in CPA_SCHEMES:
            raise ValueError(f"rop-qscpa needs a scheme in {CPA_SCHEMES}, got {self.scheme!r}")
        if self.game == "rop-qscca" and self.scheme not in CCA_SCHEMES:
            raise ValueError(f"rop-qscca needs a scheme in {CCA_SCHEMES}, got {self.scheme!r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def budget(self) -> dict:
        return {"q": self.q, "q_e": self.q_e, "q_d": self.q_d}

    def qprf_widths(self) -> tuple[int, int]:
        n_in = self.n_in if self.n_in is not None else self.widths.n_m
        n_out = self.n_out if self.n_out is not None else n_in
        return n_in, n_out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["widths"] = asdict(self.widths)
        return out


def hoeffding_half_width(n: int, alpha: float = 0.05) -> float:
    """Two-sided distribution-free half-width sqrt(ln(2/alpha) / (2n))."""
    if n <= 0:
        return math.inf
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def run_trial(config: ExperimentConfig, adversary: AdversaryProgram, b: int, trial: int, capture: bool = False, scenario: Optional[str] = None) -> TrialRecord:
    """One trial of the configured game; ``scenario`` overrides the config's."""
    seeds = TrialSeeds(config.master_seed, trial)
    if config.game == "qprf":
        n_in, n_out = config.qprf_widths()
        family = make_family(config.family, config.widths.n_k, n_in, n_out)
        return run_qprf_trial(family, adversary, b, seeds, budget=config.budget, capture=capture)
    instance = make_scheme(
        config.scheme,
        config.widths,
        seeds.stream("key"),
        family=config.family,
        tag_family=config.tag_family,
        inner=config.inner,
        tag_rng=seeds.stream("tag"),
    )
    if config.game == "rop-qscpa":
        return run_rop_qscpa_trial(instance, adversary, b, seeds, budget=config.budget, capture=capture)
    return run_rop_qscca_trial(
        instance,
        adversary,
        b,
        scenario or config.scenario,
        seeds,
        budget=config.budget,
        delta=config.delta,
        strict=config.strict,
        capture=capture,
    )


def _run_chunk(args) -> list[TrialRecord]:
    config, adversary, b, start, stop, scenario = args
    out = []
    for t in range(start, stop):
        try:
            out.append(run_trial(config, adversary, b, t, scenario=scenario))
        except Exception as exc:
            raise TrialError(b, t, exc) from exc
    return out


def run_arm(config: ExperimentConfig, adversary: AdversaryProgram, b: int, workers: int = 1, scenario: Optional[str] = None) -> list[TrialRecord]:
    """All trials of one arm, in trial order regardless of ``workers``."""
    n = config.trials
    if workers <= 1 or n < 2 * workers:
        return _run_chunk((config, adversary, b, 0, n, scenario))
    step = math.ceil(n / (4 * workers))
    jobs = [(config, adversary, b, s, min(s + step, n), scenario) for s in range(0, n, step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_run_chunk, jobs))
    return [rec for chunk in chunks for rec in chunk]


@dataclass
class AdvantageEstimate:
    """Paired-arm estimate; ``p*_exact`` average the exact Pr[b'=1] when available."""

    game: str
    scheme: Optional[str]
    scenario: Optional[str]
    adversary: str
    master_seed: int
    trials: int
    n1: int
    n0: int
    excluded1: int
    excluded0: int
    p1_hat: float
    p0_hat: float
    advantage: float
    half_width: float
    p1_exact: Optional[float] = None
    p0_exact: Optional[float] = None
    collisions: int = 0
    violations: int = 0

    @property
    def exact_advantage(self) -> Optional[float]:
        if self.p1_exact is None or self.p0_exact is None:
            return None
        return self.p1_exact - self.p0_exact

    def to_dict(self) -> dict:
        out = {"type": "estimate"}
        out.update(asdict(self))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _arm_stats(records: list[TrialRecord]) -> tuple[int, int, float, Optional[float]]:
    kept = [r for r in records if not r.aborted]
    n = len(kept)
    p_hat = float(np.mean([r.guess for r in kept])) if n else math.nan
    exact = [r.p_one for r in kept]
    p_exact = float(np.mean(exact)) if n and all(p is not None for p in exact) else None
    return n, len(records) - n, p_hat, p_exact


def summarize(config: ExperimentConfig, adversary: AdversaryProgram, arm1: list[TrialRecord], arm0: list[TrialRecord], scenario: Optional[str] = None) -> AdvantageEstimate:
    n1, x1, p1, e1 = _arm_stats(arm1)
    n0, x0, p0, e0 = _arm_stats(arm0)
    both = arm1 + arm0
    return AdvantageEstimate(
        game=config.game,
        scheme=config.scheme if config.game != "qprf" else f"family-{config.family}",
        scenario=(scenario or config.scenario) if config.game == "rop-qscca" else None,
        adversary=adversary.name,
        master_seed=config.master_seed,
        trials=config.trials,
        n1=n1,
        n0=n0,
        excluded1=x1,
        excluded0=x0,
        p1_hat=p1,
        p0_hat=p0,
        advantage=p1 - p0,
        half_width=hoeffding_half_width(n1) + hoeffding_half_width(n0),
        p1_exact=e1,
        p0_exact=e0,
        collisions=sum(r.collision for r in both),
        violations=sum(len(r.violations) for r in both),
    )


def estimate_advantage(
    config: ExperimentConfig,
    adversary: AdversaryProgram,
    workers: int = 1,
    scenario: Optional[str] = None,
    return_records: bool = False,
):
    """Run ``config.trials`` trials per arm and estimate Pr[b'=1|b=1] - Pr[b'=1|b=0].

    Both arms use trial indices ``0..trials-1``, so they share keys and
    per-query randomness.  Aborted trials are excluded and counted.  With
    ``return_records`` the result is ``(estimate, arm1_records, arm0_records)``.
    """
    if config.trials < MIN_TRIALS:
        raise ValueError(f"estimate_advantage needs at least {MIN_TRIALS} trials, got {config.trials}")
    arm1 = run_arm(config, adversary, 1, workers, scenario)
    arm0 = run_arm(config, adversary, 0, workers, scenario)
    est = summarize(config, adversary, arm1, arm0, scenario)
    if return_records:
        return est, arm1, arm0
    return est


def default_cca_config(**overrides) -> ExperimentConfig:
    base = dict(game="rop-qscca", scheme=C2)
    base.update(overrides)
    return ExperimentConfig(**base)
