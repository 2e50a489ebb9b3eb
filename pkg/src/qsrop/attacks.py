"""Concrete adversaries: Fourier distinguisher, Grover tag forgery, classical baselines."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .experiments.actions import (
    AdversaryProgram,
    DecQuery,
    EncQuery,
    Finish,
    Guess,
    Measure,
    OracleQuery,
    TrialContext,
)
from .experiments.estimate import ExperimentConfig, estimate_advantage, hoeffding_half_width
from .qcore import (
    RegisterLayout,
    apply_xor_oracle,
    basis_state,
    basis_weight,
    marginal,
    phase_flip,
    walsh_hadamard,
    xor_constant,
)
from .schemes import (
    C1_IDEAL,
    C1_PRIME,
    C2_IDEAL,
    CCA_SCHEMES,
    CPA_SCHEMES,
    SchemeError,
    Widths,
    c2_decrypt_table,
    make_scheme,
    tag_table,
)


def _equal(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u == v


def _low_bit(t: np.ndarray) -> np.ndarray:
    return (t & 1) == 1


@dataclass
class AttackReport:
    attack: str
    params: dict
    estimate: float
    half_width: Optional[float] = None
    theory: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"type": "attack"}
        out.update(asdict(self))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class RandomGuess(AdversaryProgram):
    name = "random-guess"

    def run(self, ctx: TrialContext):
        return Finish(int(ctx.stream("adv/guess").integers(0, 2)))
        yield  # pragma: no cover


class AlwaysOne(AdversaryProgram):
    name = "always-one"

    def run(self, ctx: TrialContext):
        return Finish(1)
        yield  # pragma: no cover


class XorTest(AdversaryProgram):
    """QPRF adversary: query 0 and 1 classically, guess "random" unless y0 xor y1 == 1.

    Against F_K(x) = K xor x the relation always holds, against a random
    function it holds with probability 2^-n_out.
    """

    name = "xor-test"
    q = 2

    def run(self, ctx: TrialContext):
        layout = RegisterLayout.of(("x", ctx.in_width), ("y", ctx.out_width))
        ys = []
        for x in (0, 1):
            resp = yield OracleQuery(basis_state(layout, x=x), "x", "y")
            out = yield Measure(resp.state, "y")
            ys.append(out.value.value)
        return Finish(int(ys[0] ^ ys[1] != 1))


class FourierDistinguisher(AdversaryProgram):
    """One superposition query on the uniform message state, then Hadamard on both registers.

    Against construction 1' the b = 1 state is sum_m |m, m xor y>, whose
    transform is supported on u = v only; a permuted message destroys that.
    Constant registers (classical r) are ignored, and for construction 1 the
    s prefix is left untouched.
    """

    name = "fourier"
    q_e = 1

    def __init__(self, n_m: int, n_r: Optional[int] = None):
        self.n_m = n_m
        self.n_r = n_r if n_r is not None else n_m

    def run(self, ctx: TrialContext):
        shape = ctx.shape
        if shape.tagged:
            raise SchemeError("the Fourier distinguisher plays the RoP-qsCPA game")
        if shape.n_m != self.n_m:
            raise SchemeError(f"distinguisher built for n_m={self.n_m}, scheme has n_m={shape.n_m}")
        widths = [("m", shape.n_m), ("ct", shape.n_m)]
        if shape.body > shape.n_m:
            widths.append(("pre", shape.body - shape.n_m))
        layout = RegisterLayout.of(*widths)
        target = ("ct", "pre") if "pre" in layout else "ct"
        state = walsh_hadamard(basis_state(layout), "m")
        resp = yield EncQuery(state, "m", target)
        state = walsh_hadamard(resp.state, ("m", "ct"))
        return Guess(state, ("m", "ct"), _equal)


class ClassicalBaseline(AdversaryProgram):
    """Encrypt the same basis message twice and guess 1 iff the bodies repeat."""

    name = "classical-repeat"
    q_e = 2

    def __init__(self, scheme_id: str):
        if scheme_id not in CPA_SCHEMES + CCA_SCHEMES:
            raise SchemeError(f"unknown scheme {scheme_id!r}")
        self.scheme_id = scheme_id

    def run(self, ctx: TrialContext):
        shape = ctx.shape
        layout = RegisterLayout.of(("m", shape.n_m), ("ct", shape.enc_out))
        seen = []
        state = basis_state(layout)
        for _ in range(2):
            resp = yield EncQuery(state, "m", "ct")
            out = yield Measure(resp.state, "ct")
            r = resp.value.value if resp.value is not None else None
            seen.append((out.value.value & ((1 << shape.body) - 1), r))
            state = xor_constant(out.state, "ct", out.value)
        return Finish(int(seen[0] == seen[1]))


def _cca_layout(shape) -> RegisterLayout:
    return RegisterLayout.of(("m", shape.n_m), ("x", shape.n_x), ("body", shape.body), ("tag", shape.n_tau))


class Replay(AdversaryProgram):
    """Decrypts the very register an encryption query just filled: a restriction violation."""

    name = "replay"
    q_e = 1
    q_d = 1

    def run(self, ctx: TrialContext):
        layout = _cca_layout(ctx.shape)
        resp = yield EncQuery(basis_state(layout), "m", ("body", "tag"))
        resp = yield DecQuery(resp.state, "x", ("body", "tag"))
        return Guess(resp.state, ("x",), _low_bit)


class RandomTag(AdversaryProgram):
    """Submits classical (c, tau) pairs chosen uniformly at random; never encrypts."""

    name = "random-tag"

    def __init__(self, q_d: int = 1):
        self.q_d = q_d

    def run(self, ctx: TrialContext):
        shape = ctx.shape
        layout = _cca_layout(shape)
        rng = ctx.stream("adv/random-tag")
        accepted = 0
        for _ in range(self.q_d):
            body = int(rng.integers(0, 1 << shape.body))
            tau = int(rng.integers(0, 1 << shape.n_tau))
            resp = yield DecQuery(basis_state(layout, body=body, tag=tau), "x", ("body", "tag"))
            out = yield Measure(resp.state, "x")
            accepted += out.value.value != shape.bot
        return Finish(int(accepted > 0))


class MauledTag(AdversaryProgram):
    """Encrypts m = 0, measures (c, tau) and asks to decrypt (c, tau xor 1).

    The tag is wrong for sure, so the query never touches C_valid; it does
    reuse an encrypted body, which the restriction monitor reports.
    """

    name = "mauled-tag"
    q_e = 1
    q_d = 1

    def run(self, ctx: TrialContext):
        layout = _cca_layout(ctx.shape)
        resp = yield EncQuery(basis_state(layout), "m", ("body", "tag"))
        out = yield Measure(resp.state, "tag")
        state = xor_constant(out.state, "tag", 1)
        resp = yield DecQuery(state, "x", ("body", "tag"))
        return Guess(resp.state, ("x",), _low_bit)


class WeakTagForgery(AdversaryProgram):
    """Positive control against construction 2 with the weak tag family tau = K2 xor c.

    One encryption of m0 = 0 reveals K2 = c xor tau.  The adversary then
    submits c xor 1 with its correct tag and guesses 1 iff the plaintext is
    m0 xor 1, which happens for sure when b = 1 and with probability 2^-n_m
    under a random permutation.  ``invalidate`` submits a wrong tag instead.
    """

    name = "weak-tag-forgery"
    q_e = 1
    q_d = 1

    def __init__(self, invalidate: bool = False):
        self.invalidate = invalidate
        if invalidate:
            self.name = "weak-tag-forgery-invalid"

    def run(self, ctx: TrialContext):
        shape = ctx.shape
        if shape.body != shape.n_tau:
            raise SchemeError("weak-tag forgery needs tag width equal to body width")
        layout = _cca_layout(shape)
        resp = yield EncQuery(basis_state(layout), "m", ("body", "tag"))
        out = yield Measure(resp.state, "body")
        c0 = out.value.value
        out = yield Measure(out.state, "tag")
        tau0 = out.value.value
        k2 = c0 ^ tau0
        forged = c0 ^ 1
        tau = k2 ^ forged ^ int(self.invalidate)
        state = xor_constant(xor_constant(out.state, "body", c0 ^ forged), "tag", tau0 ^ tau)
        resp = yield DecQuery(state, "x", ("body", "tag"))
        return Guess(resp.state, ("x",), _forged_plaintext)


def _forged_plaintext(x: np.ndarray) -> np.ndarray:
    return x == 1


class GroverForgery(AdversaryProgram):
    """Grover search for the valid tag of one never-encrypted body c*.

    The plaintext register is prepared as |+>^n_m |->, so each decryption
    query acts as a phase oracle: V gives -1 on invalid tags (the bot bit
    flips |->), V-tilde gives -1 everywhere.  Between queries the tag
    register is reflected about the uniform state.  The final measurement
    reads the low tag bit; it only serves to compare the two scenarios.
    """

    name = "grover-forgery"

    def __init__(self, q_d: int, q_e: int = 0):
        self.q_d = q_d
        self.q_e = q_e

    def run(self, ctx: TrialContext):
        shape = ctx.shape
        layout = _cca_layout(shape)
        state = basis_state(layout)
        encrypted = set()
        for j in range(self.q_e):
            m = j % (1 << shape.n_m)
            state = xor_constant(state, "m", m)
            resp = yield EncQuery(state, "m", ("body", "tag"))
            out = yield Measure(resp.state, ("body", "tag"))
            encrypted.add(out.value.value & ((1 << shape.body) - 1))
            state = xor_constant(xor_constant(out.state, ("body", "tag"), out.value), "m", m)
        free = [c for c in range(1 << shape.body) if c not in encrypted]
        target = free[int(ctx.stream("adv/target").integers(0, len(free)))]
        state = xor_constant(state, "body", target)
        state = xor_constant(state, "x", shape.bot)
        state = walsh_hadamard(state, ("x", "tag"))
        for _ in range(self.q_d):
            resp = yield DecQuery(state, "x", ("body", "tag"))
            state = _diffusion(resp.state, "tag")
        return Guess(state, ("tag",), _low_bit)


def _diffusion(state, seg):
    return walsh_hadamard(phase_flip(walsh_hadamard(state, seg), seg, 0), seg)


def fourier_distinguisher(n_m: int, n_r: Optional[int] = None) -> FourierDistinguisher:
    return FourierDistinguisher(n_m, n_r)


def classical_baseline(scheme_id: str) -> ClassicalBaseline:
    return ClassicalBaseline(scheme_id)


def collision_bound(n_m: int, n_s: int, q_e: int = 1) -> float:
    """Union bound on any two of the q_e * 2^n_m intermediate values colliding."""
    k = q_e * (1 << n_m)
    return min(1.0, k * (k - 1) / 2 / (1 << n_s))


def fourier_attack(
    scheme_id: str = C1_PRIME,
    n_m: int = 4,
    n_r: Optional[int] = None,
    n_s: Optional[int] = None,
    trials: int = 4000,
    seed: int = 0,
    family: str = "strong",
    workers: int = 1,
    return_records: bool = False,
):
    """Estimate the Fourier distinguisher's RoP-qsCPA advantage against ``scheme_id``."""
    widths = Widths(n_m=n_m, n_r=n_r, n_s=n_s)
    cfg = ExperimentConfig(game="rop-qscpa", scheme=scheme_id, family=family, trials=trials, master_seed=seed, widths=widths)
    adv = FourierDistinguisher(n_m, widths.n_r)
    est, arm1, arm0 = estimate_advantage(cfg, adv, workers=workers, return_records=True)
    kept1 = [r for r in arm1 if not r.aborted]
    extra = {
        "p1_hat": est.p1_hat,
        "p0_hat": est.p0_hat,
        "p1_exact": est.p1_exact,
        "p0_exact": est.p0_exact,
        "b1_all_equal": all(r.guess == 1 for r in kept1),
        "b1_min_exact": min((r.p_one for r in kept1), default=None),
        "excluded": est.excluded1 + est.excluded0,
        "collisions": est.collisions,
        "collision_rate": est.collisions / (2 * trials),
    }
    theory = None
    if scheme_id == C1_IDEAL:
        theory = 0.0
        extra["collision_bound"] = collision_bound(n_m, widths.n_s)
    report = AttackReport(
        "fourier",
        {"scheme": scheme_id, "n_m": n_m, "n_r": widths.n_r, "n_s": widths.n_s, "trials": trials, "seed": seed, "family": family},
        est.advantage,
        est.half_width,
        theory,
        extra,
    )
    if return_records:
        return report, arm1, arm0
    return report


def fourier_vs_construction1(n_m: int, n_r: Optional[int] = None, n_s: Optional[int] = None, trials: int = 4000, seed: int = 0, workers: int = 1) -> AttackReport:
    """The same distinguisher against idealized construction 1; the expected advantage is 0."""
    return fourier_attack(C1_IDEAL, n_m, n_r, n_s, trials, seed, workers=workers)


@dataclass(frozen=True)
class GroverTheory:
    exact: float
    approx: float
    w_bound: float
    sqrt_w_bound: float


def grover_angle(n_tau: int) -> float:
    """theta with sin(theta / 2) = 2^(-n_tau / 2)."""
    return 2.0 * math.asin(2.0 ** (-n_tau / 2))


def grover_first_max(n_tau: int) -> int:
    # the small slack keeps exact integers (n_tau = 2 gives 1) from rounding down
    return int(math.floor(math.pi / (2 * grover_angle(n_tau)) - 0.5 + 1e-9))


def grover_theory(i: int, n_tau: int) -> GroverTheory:
    """Exact sin^2((i + 1/2) theta), the 4 i^2 2^-n approximation, and the per-query weight bounds."""
    if i < 0:
        raise ValueError("iteration count must be nonnegative")
    theta = grover_angle(n_tau)
    exact = math.sin((i + 0.5) * theta) ** 2
    approx = 4.0 * i * i * 2.0 ** (-n_tau)
    return GroverTheory(_clamp(exact), _clamp(approx), _clamp(approx), 2.0 * i * 2.0 ** (-n_tau / 2))


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def grover_forgery(n_tau: int, iterations: int, trials: int = 0, seed: int = 0) -> AttackReport:
    """Textbook Grover on the tag register of one never-encrypted body, driving V directly.

    Reports the exact success probability Pr[tag = f(c*)] and, with
    ``trials`` > 0, the frequency observed over that many seeded
    measurements of the final state.
    """
    if iterations < 0:
        raise ValueError("iteration count must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n_tau, iterations)))
    inst = make_scheme(C2_IDEAL, Widths(n_m=1, n_r=1, n_tau=n_tau), rng, inner=C1_PRIME)
    n_c = inst.body_width
    layout = RegisterLayout.of(("x", 2), ("body", n_c), ("tag", n_tau))
    target = 0
    V = c2_decrypt_table(inst)
    state = xor_constant(basis_state(layout, body=target), "x", 2)
    state = walsh_hadamard(state, ("x", "tag"))
    for _ in range(iterations):
        state = _diffusion(apply_xor_oracle(state, V, ("body", "tag"), "x"), "tag")
    good = tag_table(inst)(target)
    exact = basis_weight(state, "tag", good)
    extra = {"first_max": grover_first_max(n_tau)}
    half = None
    if trials > 0:
        probs = marginal(state, "tag")
        hits = rng.choice(probs.size, size=trials, p=probs / probs.sum()) == good
        extra["frequency"] = float(np.mean(hits))
        half = hoeffding_half_width(trials)
    th = grover_theory(iterations, n_tau)
    extra["approx"] = th.approx
    return AttackReport("grover", {"n_tau": n_tau, "iterations": iterations, "trials": trials, "seed": seed}, exact, half, th.exact, extra)
