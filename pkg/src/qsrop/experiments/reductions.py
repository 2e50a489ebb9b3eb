"""Wrappers that turn a RoP-qsCCA adversary into a CPA adversary (B) or a QPRF adversary (J).

Both wrappers run the wrapped adversary as a sub-generator and answer its
queries themselves, forwarding only what their own game provides.  They
need the wrapped adversary's encryption targets to start in |0...0>: the
tag a simulated oracle appends must be computed from the body it just wrote.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..qcore import (
    ZERO_TOL,
    FunctionTable,
    QState,
    RegisterLayout,
    apply_xor_oracle,
    basis_weight,
    xor_constant,
)
from ..schemes import (
    C1,
    C1_PRIME,
    C2,
    C2_IDEAL,
    Shape,
    Widths,
    body_decryption_table,
    body_table,
    make_scheme,
    sample_random_function,
    sample_random_permutation,
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
    final_guess,
)
from .games import BudgetExceeded


class ReductionError(RuntimeError):
    pass


def carve(layout: RegisterLayout, segs, widths: Sequence[int], prefix: str) -> tuple[RegisterLayout, list[tuple[str, ...]]]:
    """Cut a (multi-segment) register into consecutive parts of the given widths.

    Segments straddling a part boundary are split in place, so the returned
    layout describes the same amplitude array.  Parts are returned as tuples
    of segment names, least significant first.
    """
    names = (segs,) if isinstance(segs, str) else tuple(segs)
    if sum(widths) != layout.width_of(names):
        raise ReductionError(f"cannot cut a {layout.width_of(names)}-bit register into {list(widths)}")
    parts: list[list[str]] = [[] for _ in widths]
    k, room = 0, widths[0]
    for name in names:
        pieces = []
        left = layout[name].width
        while left:
            while room == 0:
                k += 1
                room = widths[k]
            take = min(left, room)
            pieces.append((k, take))
            left -= take
            room -= take
        if len(pieces) == 1:
            parts[pieces[0][0]].append(name)
            continue
        new = [(f"{prefix}{name}.{i}", w) for i, (_, w) in enumerate(pieces)]
        layout = layout.split(name, new)
        for (part, _), (piece, _) in zip(pieces, new):
            parts[part].append(piece)
    return layout, [tuple(p) for p in parts]


def _require_zero(state: QState, segs, who: str) -> None:
    if basis_weight(state, segs, 0) < 1.0 - ZERO_TOL:
        raise ReductionError(f"{who} needs encryption targets in |0...0>")


def cca_shape(inner: Shape, n_tau: int, scheme_id: str) -> Shape:
    """Public shape of construction 2 over a CPA scheme with public shape ``inner``."""
    prefix = inner.n_r if inner.scheme_id == C1_PRIME else inner.n_s
    return Shape(scheme_id, inner.n_m, inner.n_r, inner.n_s, n_tau, body=inner.n_m + prefix, prefix=prefix, inner_id=inner.scheme_id)


class _Negated:
    """accept'(...) = not accept(...)."""

    def __init__(self, accept):
        self.accept = accept

    def __call__(self, *values):
        return ~np.asarray(self.accept(*values), dtype=bool)


class ReductionB(AdversaryProgram):
    """RoP-qsCPA adversary built from a RoP-qsCCA adversary.

    Encryption queries go to the CPA oracle on the ciphertext body; B then
    tags the body with its own random function (so it plays construction 2
    with an ideal tag).  Every decryption query is answered with bot.  Its
    transcript therefore coincides with the wrapped adversary's scenario q0
    transcript against ``construction-2-ideal`` on the same seeds.
    """

    def __init__(self, adversary: AdversaryProgram, n_tau: int):
        self.adversary = adversary
        self.n_tau = n_tau
        self.name = f"B[{adversary.name}]"
        self.q_e = adversary.q_e
        self.q_d = 0

    def run(self, ctx: TrialContext):
        shape = cca_shape(ctx.shape, self.n_tau, C2_IDEAL)
        n_m, n_c = shape.n_m, shape.body
        f = sample_random_function(n_c, self.n_tau, ctx.stream("tag"))
        gen = self.adversary.run(ctx.with_shape(shape, "rop-qscca"))
        n_dec = 0
        try:
            action = next(gen)
            while True:
                if isinstance(action, EncQuery):
                    base = action.state.layout
                    layout, (body, tag) = carve(base, action.target, (n_c, self.n_tau), "B.")
                    state = action.state.relayout(layout)
                    _require_zero(state, body, "reduction B")
                    if ctx.shape.scheme_id == C1_PRIME:
                        layout, (c, r) = carve(layout, body, (n_m, n_c - n_m), "B.")
                        state = state.relayout(layout)
                        resp = yield EncQuery(state, action.message, c, silent=True)
                        state = xor_constant(resp.state, r, resp.value.value)
                        body = c + r
                    else:
                        resp = yield EncQuery(state, action.message, body, silent=True)
                        state = resp.state
                    state = apply_xor_oracle(state, f, body, tag)
                    reply = yield Note(state.relayout(base), "enc")
                elif isinstance(action, DecQuery):
                    n_dec += 1
                    if n_dec > self.adversary.q_d:
                        raise BudgetExceeded(f"{self.adversary!r} exceeded q_d={self.adversary.q_d}")
                    if action.state.layout.width_of(action.ciphertext) != n_c + self.n_tau:
                        raise ReductionError("ciphertext register must be body + tag")
                    reply = yield Note(xor_constant(action.state, action.plaintext, shape.bot), "dec")
                elif isinstance(action, (Measure, Note)):
                    reply = yield action
                else:
                    raise ReductionError(f"reduction B cannot forward {type(action).__name__}")
                action = gen.send(reply)
        except StopIteration as stop:
            return final_guess(stop.value)


class ReductionJ(AdversaryProgram):
    """QPRF adversary built from a RoP-qsCCA adversary.

    J flips its own challenge bit, samples the inner scheme itself, and
    simulates construction 2 with the QPRF oracle as the tag function.  One
    oracle query tags each encryption; each decryption computes the oracle
    into an ancilla, decrypts conditioned on the tag matching, and
    uncomputes (two queries).  J outputs 1 iff the simulated guess differs
    from its bit, so its advantage is half the gap between the adversary's
    advantage with a keyed tag and with an ideal one.
    """

    def __init__(self, adversary: AdversaryProgram, widths: Widths, inner: str = C1, family: str = "strong"):
        self.adversary = adversary
        self.widths = widths
        self.inner = inner
        self.family = family
        self.name = f"J[{adversary.name}]"
        self.q = adversary.q_e + 2 * adversary.q_d

    def run(self, ctx: TrialContext):
        b = int(ctx.stream("J/b").integers(0, 2))
        inner = make_scheme(self.inner, self.widths, ctx.stream("J/key"), family=self.family)
        shape = cca_shape(inner.shape, self.widths.n_tau, C2)
        n_m, n_c, n_tau = shape.n_m, shape.body, shape.n_tau
        if (ctx.in_width, ctx.out_width) != (n_c, n_tau):
            raise ReductionError(f"oracle must map {n_c} -> {n_tau} bits, got {ctx.in_width} -> {ctx.out_width}")
        h = _guarded_decryption(body_decryption_table(inner), n_c, n_tau, shape.bot)
        gen = self.adversary.run(ctx.with_shape(shape, "rop-qscca"))
        n_enc = n_dec = 0
        try:
            action = next(gen)
            while True:
                if isinstance(action, EncQuery):
                    if n_enc >= self.adversary.q_e:
                        raise BudgetExceeded(f"{self.adversary!r} exceeded q_e={self.adversary.q_e}")
                    table = body_table(inner, ctx.stream("J/enc", n_enc))
                    if b == 0:
                        table = table.compose(sample_random_permutation(n_m, ctx.stream("J/perm", n_enc)))
                    n_enc += 1
                    base = action.state.layout
                    layout, (body, tag) = carve(base, action.target, (n_c, n_tau), "J.")
                    state = action.state.relayout(layout)
                    _require_zero(state, body, "reduction J")
                    state = apply_xor_oracle(state, table, action.message, body)
                    resp = yield OracleQuery(state, body, tag, silent=True)
                    reply = Response(resp.state.relayout(base))
                elif isinstance(action, DecQuery):
                    if n_dec >= self.adversary.q_d:
                        raise BudgetExceeded(f"{self.adversary!r} exceeded q_d={self.adversary.q_d}")
                    n_dec += 1
                    base = action.state.layout
                    layout, (body, tag) = carve(base, action.ciphertext, (n_c, n_tau), "J.")
                    state = action.state.relayout(layout).extend("J.anc", n_tau)
                    resp = yield OracleQuery(state, body, "J.anc", silent=True)
                    state = apply_xor_oracle(resp.state, h, body + tag + ("J.anc",), action.plaintext)
                    resp = yield OracleQuery(state, body, "J.anc", silent=True)
                    reply = Response(resp.state.drop_last().relayout(base))
                elif isinstance(action, (Measure, Note)):
                    reply = yield action
                else:
                    raise ReductionError(f"reduction J cannot forward {type(action).__name__}")
                action = gen.send(reply)
        except StopIteration as stop:
            final = final_guess(stop.value)
        if isinstance(final, Finish):
            return Finish(int(final.guess != b))
        accept = final.accept if b == 0 else _Negated(final.accept)
        return Guess(final.state, final.segments, accept)


def _guarded_decryption(dec: FunctionTable, n_c: int, n_tau: int, bot: int) -> FunctionTable:
    """h(c, tau, t) = D(c) if t == tau else bot, over the register (body, tag, ancilla)."""
    idx = np.arange(1 << (n_c + 2 * n_tau), dtype=np.int64)
    body = idx & ((1 << n_c) - 1)
    tau = (idx >> n_c) & ((1 << n_tau) - 1)
    anc = idx >> (n_c + n_tau)
    out = np.where(anc == tau, dec.entries[body], bot)
    return FunctionTable(n_c + 2 * n_tau, dec.out_width + 1, out)


def wrap_reduction_B(cca_adversary: AdversaryProgram, n_tau: int) -> ReductionB:
    return ReductionB(cca_adversary, n_tau)


def wrap_reduction_J(cca_adversary: AdversaryProgram, widths: Widths, inner: str = C1, family: str = "strong") -> ReductionJ:
    return ReductionJ(cca_adversary, widths, inner, family)
