"""The QPRF, RoP-qsCPA and RoP-qsCCA games as exact simulations.

Each game drives an adversary generator, answers its queries on the joint
pure state, and fills a :class:`TrialRecord`.  All randomness comes from
named streams of :class:`TrialSeeds`:

========== ===========================================================
stream     used for
========== ===========================================================
key        scheme keys / QPRF key (and construction 1-ideal's ``g``)
tag        construction 2 tag key or ideal tag table
func       the QPRF game's random function
enc, j     randomness of the j-th encryption invocation
perm, j    the fresh permutation of the j-th RoP query (b = 0)
measure    every measurement made on the adversary's behalf
========== ===========================================================
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..qcore import (
    ZERO_TOL,
    FunctionTable,
    LayoutError,
    QState,
    apply_xor_oracle,
    measure_segment,
    sample_basis,
    segment_values,
)
from ..schemes import (
    C1_IDEAL,
    CCA_SCHEMES,
    CPA_SCHEMES,
    QprfFamily,
    SchemeError,
    SchemeInstance,
    c2_decrypt_table,
    c2_query_tables,
    encryption_table,
    intermediate_values,
    sample_random_function,
    sample_random_permutation,
    tag_table,
)
from .actions import (
    AdversaryProgram,
    DecQuery,
    EncQuery,
    Finish,
    Guess,
    Measure,
    Note,
    OracleQuery,
    Response,
    TrialContext,
    TrialSeeds,
    final_guess,
)

SCENARIOS = ("q1", "q0")


class BudgetExceeded(RuntimeError):
    pass


class RestrictionViolation(RuntimeError):
    """Strict-mode abort: a decryption query touched an encrypted ciphertext."""


class _Aborted(Exception):
    pass


@dataclass
class Violation:
    query: int
    ciphertext: int
    weight: float


@dataclass
class DecSnapshot:
    """Pre-query state of one decryption query, with both oracle answers."""

    pre: QState
    after_real: Optional[QState]
    after_bot: Optional[QState]
    wval: float


# Serialized field order; the line format is one JSON object per record.
RECORD_FIELDS = (
    "game",
    "scheme",
    "scenario",
    "b",
    "trial",
    "master_seed",
    "guess",
    "p_one",
    "n_enc",
    "n_dec",
    "n_oracle",
    "wval",
    "violations",
    "collision",
    "aborted",
    "queries",
    "views",
)


@dataclass
class TrialRecord:
    game: str
    b: int
    trial: int
    master_seed: int
    scheme: Optional[str] = None
    scenario: Optional[str] = None
    guess: Optional[int] = None
    p_one: Optional[float] = None
    n_enc: int = 0
    n_dec: int = 0
    n_oracle: int = 0
    wval: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    collision: bool = False
    aborted: bool = False
    queries: list = field(default_factory=list)
    views: list = field(default_factory=list)
    snapshots: list = field(default_factory=list, repr=False)
    final_state: Optional[QState] = field(default=None, repr=False)

    def transcript(self) -> tuple:
        """What the adversary saw and did: views, query count, guess."""
        return (self.n_enc, tuple(self.views), self.guess, self.p_one, self.aborted)

    def to_dict(self) -> dict:
        out = {"type": "trial"}
        for name in RECORD_FIELDS:
            value = getattr(self, name)
            if name == "violations":
                value = [[v.query, v.ciphertext, v.weight] for v in value]
            out[name] = value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _check_declared(adversary: AdversaryProgram, budget: Optional[dict]) -> None:
    if not budget:
        return
    for name, limit in budget.items():
        if limit is not None and getattr(adversary, name, 0) > limit:
            raise BudgetExceeded(f"{adversary!r} declares {name}={getattr(adversary, name)}, budget is {limit}")


class _Game:
    game = ""

    def __init__(self, adversary: AdversaryProgram, b: int, seeds: TrialSeeds, budget=None, capture=False):
        if b not in (0, 1):
            raise ValueError(f"challenge bit must be 0 or 1, got {b!r}")
        _check_declared(adversary, budget)
        self.adversary = adversary
        self.b = b
        self.seeds = seeds
        self.capture = capture
        self.meas_rng = seeds.stream("measure")
        self.rec = TrialRecord(self.game, b, seeds.trial, seeds.master)

    def context(self) -> TrialContext:
        return TrialContext(self.game, self.seeds)

    def _count(self, attr: str, limit_attr: str, label: str) -> int:
        n = getattr(self.rec, attr)
        limit = getattr(self.adversary, limit_attr)
        if n + 1 > limit:
            raise BudgetExceeded(f"{self.adversary!r} exceeded {limit_attr}={limit}")
        setattr(self.rec, attr, n + 1)
        self.rec.queries.append(f"{label}/{n}")
        return n

    def _view(self, resp: Response, silent: bool = False) -> Response:
        if not silent and resp.state is not None:
            self.rec.views.append(resp.state.digest())
        return resp

    def handle(self, action) -> Response:
        if isinstance(action, Measure):
            outcome, state = measure_segment(action.state, action.segment, self.meas_rng)
            return Response(state, outcome)
        if isinstance(action, Note):
            return self._view(Response(action.state))
        if isinstance(action, EncQuery):
            return self._view(self.enc(action), action.silent)
        if isinstance(action, DecQuery):
            return self._view(self.dec(action), action.silent)
        if isinstance(action, OracleQuery):
            return self._view(self.oracle(action), action.silent)
        raise TypeError(f"{self.game} game cannot handle {type(action).__name__}")

    def enc(self, action):
        raise TypeError(f"{self.game} game has no encryption oracle")

    def dec(self, action):
        raise TypeError(f"{self.game} game has no decryption oracle")

    def oracle(self, action):
        raise TypeError(f"{self.game} game has no function oracle")

    def run(self) -> TrialRecord:
        gen = self.adversary.run(self.context())
        try:
            action = next(gen)
            while True:
                action = gen.send(self.handle(action))
        except StopIteration as stop:
            final = final_guess(stop.value)
        except _Aborted:
            self.rec.aborted = True
            gen.close()
            return self.rec
        self._finish(final)
        return self.rec

    def _finish(self, final) -> None:
        if isinstance(final, Finish):
            self.rec.guess = int(final.guess)
            return
        state = final.state
        values = [segment_values(state.layout, s) for s in final.segments]
        accepted = np.asarray(final.accept(*values), dtype=bool)
        probs = np.abs(state.amplitudes) ** 2
        self.rec.p_one = float(np.sum(probs[accepted]))
        self.rec.guess = int(accepted[sample_basis(state, self.meas_rng)])
        if self.capture:
            self.rec.final_state = state


class _SchemeGame(_Game):
    def __init__(self, instance: SchemeInstance, adversary, b, seeds, budget=None, capture=False, perm_sampler=None):
        super().__init__(adversary, b, seeds, budget, capture)
        self.instance = instance
        self.rec.scheme = instance.scheme_id
        self.perm_sampler = perm_sampler or sample_random_permutation
        self._seen_s: set = set()

    def context(self) -> TrialContext:
        return TrialContext(self.game, self.seeds, shape=self.instance.shape)

    def _check_collisions(self, table: FunctionTable) -> None:
        s = intermediate_values(self.instance, table)
        if s is None:
            return
        values = set(int(v) for v in s)
        if len(values) < s.size or values & self._seen_s:
            self.rec.collision = True
            if self.instance.core.scheme_id == C1_IDEAL:
                raise _Aborted()
        self._seen_s |= values

    def _rop(self, table: FunctionTable, j: int) -> FunctionTable:
        """b = 0 applies a fresh permutation to the message before encrypting.

        Acting as |m, x> -> |m, x xor E(Pi(m))>, i.e. Pi on the message
        register, the encryption oracle, then Pi^-1, folded into one table.
        """
        if self.b == 1:
            return table
        perm = self.perm_sampler(self.instance.widths.n_m, self.seeds.stream("perm", j))
        return table.compose(perm)


class RopCpaGame(_SchemeGame):
    game = "rop-qscpa"

    def __init__(self, instance, adversary, b, seeds, **kw):
        if instance.scheme_id not in CPA_SCHEMES:
            raise SchemeError(f"RoP-qsCPA needs one of {CPA_SCHEMES}, got {instance.scheme_id!r}")
        super().__init__(instance, adversary, b, seeds, **kw)

    def enc(self, action: EncQuery) -> Response:
        j = self._count("n_enc", "q_e", "enc")
        table, r = encryption_table(self.instance, self.seeds.stream("enc", j))
        self._check_collisions(table)
        state = apply_xor_oracle(action.state, self._rop(table, j), action.message, action.target)
        return Response(state, r)


class RopCcaGame(_SchemeGame):
    game = "rop-qscca"

    def __init__(self, instance, adversary, b, seeds, scenario="q1", delta=ZERO_TOL, strict=False, **kw):
        if instance.scheme_id not in CCA_SCHEMES:
            raise SchemeError(f"RoP-qsCCA needs one of {CCA_SCHEMES}, got {instance.scheme_id!r}")
        if scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
        super().__init__(instance, adversary, b, seeds, **kw)
        self.rec.scenario = scenario
        self.scenario = scenario
        self.delta = delta
        self.strict = strict
        self.n_c = instance.body_width
        self.n_tau = instance.widths.n_tau
        self.encrypted = np.zeros(1 << self.n_c, dtype=bool)
        self.tags = tag_table(instance).entries
        self.V = c2_decrypt_table(instance)
        self.V_bot = c2_decrypt_table(instance, always_bot=True)

    def _split(self, state: QState, segs) -> tuple[np.ndarray, np.ndarray]:
        if state.layout.width_of(segs) != self.n_c + self.n_tau:
            raise LayoutError(f"ciphertext register must be {self.n_c + self.n_tau} bits (body + tag)")
        vals = segment_values(state.layout, segs)
        return vals & ((1 << self.n_c) - 1), vals >> self.n_c

    def enc(self, action: EncQuery) -> Response:
        j = self._count("n_enc", "q_e", "enc")
        table = c2_query_tables(self.instance, self.seeds.stream("enc", j))
        self._check_collisions(table)
        state = apply_xor_oracle(action.state, self._rop(table, j), action.message, action.target)
        body, _ = self._split(state, action.target)
        weights = np.bincount(body, weights=np.abs(state.amplitudes) ** 2, minlength=1 << self.n_c)
        self.encrypted |= weights > ZERO_TOL
        return Response(state)

    def wval(self, state: QState, ciphertext) -> float:
        """Weight of the query state on C_valid = {(c, f(c)) : c never encrypted}."""
        body, tau = self._split(state, ciphertext)
        valid = (self.tags[body] == tau) & ~self.encrypted[body]
        return float(np.sum(np.abs(state.amplitudes[valid]) ** 2))

    def _monitor(self, state: QState, ciphertext, i: int) -> None:
        if not self.encrypted.any():
            return
        body, _ = self._split(state, ciphertext)
        weights = np.bincount(body, weights=np.abs(state.amplitudes) ** 2, minlength=1 << self.n_c)
        for c in np.flatnonzero(self.encrypted & (weights > self.delta)):
            v = Violation(i, int(c), float(weights[c]))
            self.rec.violations.append(v)
            if self.strict:
                raise RestrictionViolation(f"decryption query {i} has weight {v.weight:.3g} on encrypted c={v.ciphertext}")

    def dec(self, action: DecQuery) -> Response:
        i = self._count("n_dec", "q_d", "dec")
        pre = action.state
        self._monitor(pre, action.ciphertext, i)
        w = self.wval(pre, action.ciphertext)
        self.rec.wval.append(w)
        need_real = self.scenario == "q1" or self.capture
        need_bot = self.scenario == "q0" or self.capture
        real = apply_xor_oracle(pre, self.V, action.ciphertext, action.plaintext) if need_real else None
        bot = apply_xor_oracle(pre, self.V_bot, action.ciphertext, action.plaintext) if need_bot else None
        if self.capture:
            self.rec.snapshots.append(DecSnapshot(pre, real, bot, w))
        return Response(real if self.scenario == "q1" else bot)


class QprfGame(_Game):
    game = "qprf"

    def __init__(self, family: QprfFamily, adversary, b, seeds, **kw):
        super().__init__(adversary, b, seeds, **kw)
        self.family = family
        self.rec.scheme = f"family-{family.kind}"
        if b == 0:
            self.table = family.table(family.sample_key(seeds.stream("key")))
        else:
            self.table = sample_random_function(family.in_width, family.out_width, seeds.stream("func"))

    def context(self) -> TrialContext:
        return TrialContext(self.game, self.seeds, in_width=self.family.in_width, out_width=self.family.out_width)

    def oracle(self, action: OracleQuery) -> Response:
        self._count("n_oracle", "q", "oracle")
        return Response(apply_xor_oracle(action.state, self.table, action.inp, action.out))


def run_qprf_trial(
    family: QprfFamily, adversary: AdversaryProgram, b: int, seeds: TrialSeeds, *, budget=None, capture=False
) -> TrialRecord:
    """b = 0 answers with U_{F_K} for a random key; b = 1 with U_f for a random table f."""
    return QprfGame(family, adversary, b, seeds, budget=budget, capture=capture).run()


def run_rop_qscpa_trial(
    instance: SchemeInstance,
    adversary: AdversaryProgram,
    b: int,
    seeds: TrialSeeds,
    *,
    budget=None,
    capture=False,
    perm_sampler: Optional[Callable] = None,
) -> TrialRecord:
    """One RoP-qsCPA experiment.  ``perm_sampler`` overrides the b = 0 permutation source."""
    return RopCpaGame(instance, adversary, b, seeds, budget=budget, capture=capture, perm_sampler=perm_sampler).run()


def run_rop_qscca_trial(
    instance: SchemeInstance,
    adversary: AdversaryProgram,
    b: int,
    scenario: str,
    seeds: TrialSeeds,
    *,
    budget=None,
    delta: float = ZERO_TOL,
    strict: bool = False,
    capture: bool = False,
    perm_sampler: Optional[Callable] = None,
) -> TrialRecord:
    """One RoP-qsCCA experiment in scenario ``q1`` (tag-checking V) or ``q0`` (always-bot V-tilde).

    Before every decryption query the restriction monitor logs each
    previously encrypted ciphertext body whose weight exceeds ``delta``;
    ``strict`` turns the first violation into :class:`RestrictionViolation`.
    """
    game = RopCcaGame(
        instance,
        adversary,
        b,
        seeds,
        scenario=scenario,
        delta=delta,
        strict=strict,
        budget=budget,
        capture=capture,
        perm_sampler=perm_sampler,
    )
    return game.run()
