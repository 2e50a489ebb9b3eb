"""Function families, random samplers, and the three encryption constructions.

Every encryption invocation is materialized as one exhaustive
:class:`~qsrop.qcore.FunctionTable` over the whole message space.  The
per-invocation randomness is drawn once when the table is built, so a single
XOR oracle built from it uses the same randomness in every superposition
branch.

Ciphertext bodies pack the randomness-derived prefix above the masked
message: ``body = c | (prefix << n_m)`` where the prefix is ``r`` for
construction 1' and ``s`` for construction 1.  Construction 2 appends the tag
above the body: ``body | (tau << n_c)``.  Plaintext outputs of the
construction 2 decryption oracle are ``n_m + 1`` bits wide; messages embed as
``0 || m`` and the rejection symbol is ``1 || 0^n_m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .qcore import BitString, FunctionTable, PermutationTable, check_cap

C1_PRIME = "construction-1prime"
C1 = "construction-1"
C1_IDEAL = "construction-1-ideal"
C2 = "construction-2"
C2_IDEAL = "construction-2-ideal"

CPA_SCHEMES = (C1_PRIME, C1, C1_IDEAL)
CCA_SCHEMES = (C2, C2_IDEAL)
SCHEME_IDS = CPA_SCHEMES + CCA_SCHEMES
FAMILY_KINDS = ("strong", "weak")


class SchemeError(ValueError):
    """Wrong scheme for an operation, or inconsistent widths."""


# --- function families -------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@lru_cache(maxsize=512)
def _strong_table(key: int, key_width: int, in_width: int, out_width: int) -> FunctionTable:
    domain = np.array([(key_width << 16) | (in_width << 8) | out_width], dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64(_mix64(domain) ^ np.array([key], dtype=np.uint64))
        x = np.arange(1 << in_width, dtype=np.uint64)
        h = _mix64(base + (x + np.uint64(1)) * _GOLDEN)
    out = (h >> np.uint64(64 - out_width)).astype(np.int64)
    return FunctionTable(in_width, out_width, out)


@dataclass(frozen=True)
class QprfFamily:
    """Keyed family F: {0,1}^key_width x {0,1}^in_width -> {0,1}^out_width.

    ``strong`` hashes ``key || x`` through a splitmix64-style mixer and keeps
    the top ``out_width`` bits.  ``weak`` is ``F_K(x) = K xor x`` and exists as
    a positive control for distinguishers and forgers.
    """

    kind: str
    key_width: int
    in_width: int
    out_width: int

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise SchemeError(f"unknown family kind {self.kind!r}")
        if self.kind == "weak" and not (self.key_width == self.in_width == self.out_width):
            raise SchemeError("the weak family needs key_width == in_width == out_width")
        if not 1 <= self.key_width <= 64 or not 1 <= self.out_width <= 62:
            raise SchemeError("key width must be in [1, 64] and output width in [1, 62]")
        check_cap(self.in_width, "function table")

    def table(self, key: int) -> FunctionTable:
        key = int(key)
        if not 0 <= key < (1 << self.key_width):
            raise SchemeError(f"key {key} does not fit in {self.key_width} bits")
        if self.kind == "weak":
            return FunctionTable(self.in_width, self.out_width, np.arange(1 << self.in_width, dtype=np.int64) ^ key)
        return _strong_table(key, self.key_width, self.in_width, self.out_width)

    def sample_key(self, rng: np.random.Generator) -> int:
        return int(rng.integers(0, 1 << self.key_width, dtype=np.uint64))


def make_family(kind: str, key_width: int, in_width: int, out_width: int) -> QprfFamily:
    if kind == "weak":
        key_width = in_width
    return QprfFamily(kind, key_width, in_width, out_width)


def qprf_eval(family: QprfFamily, key, x) -> BitString:
    """F_K(x) for one input."""
    if isinstance(key, BitString) and key.width != family.key_width:
        raise SchemeError(f"key has width {key.width}, family expects {family.key_width}")
    if isinstance(x, BitString) and x.width != family.in_width:
        raise SchemeError(f"input has width {x.width}, family expects {family.in_width}")
    x = int(x)
    if not 0 <= x < (1 << family.in_width):
        raise SchemeError(f"input {x} does not fit in {family.in_width} bits")
    return BitString(family.out_width, family.table(int(key))(x))


# --- samplers ----------------------------------------------------------------


def sample_random_function(in_width: int, out_width: int, rng: np.random.Generator) -> FunctionTable:
    """A uniformly random table {0,1}^in_width -> {0,1}^out_width, fully materialized."""
    check_cap(in_width, "random function")
    if not 1 <= out_width <= 62:
        raise SchemeError(f"output width must be in [1, 62], got {out_width}")
    entries = rng.integers(0, 1 << out_width, size=1 << in_width, dtype=np.int64)
    return FunctionTable(in_width, out_width, entries)


def sample_random_permutation(width: int, rng: np.random.Generator) -> PermutationTable:
    """A uniformly random bijection on {0,1}^width (Fisher-Yates via numpy)."""
    check_cap(width, "random permutation")
    return PermutationTable(width, rng.permutation(1 << width).astype(np.int64))


# --- schemes -----------------------------------------------------------------


@dataclass(frozen=True)
class Widths:
    """Register widths; ``n_r`` defaults to ``n_m`` and ``n_s`` to ``n_m + 8``."""

    n_m: int = 4
    n_r: Optional[int] = None
    n_s: Optional[int] = None
    n_tau: int = 4
    n_k: int = 32

    def __post_init__(self):
        if self.n_r is None:
            object.__setattr__(self, "n_r", self.n_m)
        if self.n_s is None:
            object.__setattr__(self, "n_s", self.n_m + 8)
        for name in ("n_m", "n_r", "n_s", "n_tau", "n_k"):
            if getattr(self, name) < 1:
                raise SchemeError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Shape:
    """Public parameters of a scheme instance, as an adversary sees them.

    ``body`` is the width the encryption oracle writes besides the tag: for
    construction 1' in the CPA game that is only ``c`` (``r`` is returned
    classically); elsewhere it is ``c`` plus the prefix.
    """

    scheme_id: str
    n_m: int
    n_r: int
    n_s: int
    n_tau: int
    body: int
    prefix: int
    inner_id: Optional[str] = None

    @property
    def n_x(self) -> int:
        return self.n_m + 1

    @property
    def bot(self) -> int:
        return 1 << self.n_m

    @property
    def tagged(self) -> bool:
        return self.scheme_id in CCA_SCHEMES

    @property
    def enc_out(self) -> int:
        return self.body + (self.n_tau if self.tagged else 0)


@dataclass(frozen=True, eq=False)
class SchemeInstance:
    scheme_id: str
    widths: Widths
    keys: tuple[int, ...]
    family: str = "strong"
    tag_family: str = "strong"
    inner: Optional["SchemeInstance"] = None
    ideal_g: Optional[FunctionTable] = None
    ideal_tag: Optional[FunctionTable] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def core(self) -> "SchemeInstance":
        """The construction-1-style scheme that produces ciphertext bodies."""
        return self.inner if self.inner is not None else self

    @property
    def body_width(self) -> int:
        core = self.core
        prefix = core.widths.n_r if core.scheme_id == C1_PRIME else core.widths.n_s
        return self.widths.n_m + prefix

    @property
    def shape(self) -> Shape:
        w = self.widths
        if self.scheme_id == C1_PRIME:
            return Shape(self.scheme_id, w.n_m, w.n_r, w.n_s, w.n_tau, body=w.n_m, prefix=0)
        prefix = self.body_width - w.n_m
        inner_id = self.inner.scheme_id if self.inner is not None else None
        return Shape(self.scheme_id, w.n_m, w.n_r, w.n_s, w.n_tau, body=self.body_width, prefix=prefix, inner_id=inner_id)

    def enc_family(self) -> QprfFamily:
        """F_K of the core scheme: r -> pad (1') or s -> pad (1)."""
        core = self.core
        w = core.widths
        in_width = w.n_r if core.scheme_id == C1_PRIME else w.n_s
        if core.family == "weak" and in_width != w.n_m:
            raise SchemeError("weak family needs the pad input width to equal n_m")
        return make_family(core.family, w.n_k, in_width, w.n_m)

    def tag_family_obj(self) -> QprfFamily:
        return make_family(self.tag_family, self.widths.n_k, self.body_width, self.widths.n_tau)


def make_scheme(
    scheme_id: str,
    widths: Widths,
    rng: np.random.Generator,
    *,
    family: str = "strong",
    tag_family: str = "strong",
    inner: str = C1,
    tag_rng: Optional[np.random.Generator] = None,
) -> SchemeInstance:
    """Sample keys (and experiment-lifetime ideal tables) for one experiment.

    Construction 2 samples its inner scheme from ``rng`` first, exactly as a
    stand-alone inner instance would, then its tag key or ideal tag table from
    ``tag_rng`` (default ``rng``).
    """
    if scheme_id not in SCHEME_IDS:
        raise SchemeError(f"unknown scheme {scheme_id!r}")
    if scheme_id in CCA_SCHEMES:
        if inner not in CPA_SCHEMES:
            raise SchemeError(f"inner scheme must be one of {CPA_SCHEMES}, got {inner!r}")
        inner_inst = make_scheme(inner, widths, rng, family=family)
        tag_rng = rng if tag_rng is None else tag_rng
        proto = SchemeInstance(scheme_id, widths, (), family, tag_family, inner=inner_inst)
        if scheme_id == C2:
            k2 = proto.tag_family_obj().sample_key(tag_rng)
            return replace(proto, keys=inner_inst.keys + (k2,), _cache={})
        f = sample_random_function(proto.body_width, widths.n_tau, tag_rng)
        return replace(proto, keys=inner_inst.keys, ideal_tag=f, _cache={})

    proto = SchemeInstance(scheme_id, widths, (), family)
    k = proto.enc_family().sample_key(rng)
    g = sample_random_function(widths.n_s, widths.n_m, rng) if scheme_id == C1_IDEAL else None
    return replace(proto, keys=(k,), ideal_g=g, _cache={})


def _require(instance: SchemeInstance, allowed: tuple[str, ...], op: str) -> None:
    if instance.scheme_id not in allowed:
        raise SchemeError(f"{op} needs one of {allowed}, got {instance.scheme_id!r}")


def _pad_table(core: SchemeInstance) -> FunctionTable:
    """F_K (or its idealized replacement g) as a table over its whole input."""
    if core.scheme_id == C1_IDEAL:
        return core.ideal_g
    return core.enc_family().table(core.keys[0])


def c1p_query_tables(instance: SchemeInstance, rng: np.random.Generator) -> tuple[BitString, FunctionTable]:
    """One invocation of construction 1': fresh r, table m -> F_K(r) xor m."""
    _require(instance, (C1_PRIME,), "c1p_query_tables")
    w = instance.widths
    r = int(rng.integers(0, 1 << w.n_r))
    pad = _pad_table(instance)(r)
    table = FunctionTable(w.n_m, w.n_m, np.arange(1 << w.n_m, dtype=np.int64) ^ pad)
    return BitString(w.n_r, r), table


def c1_query_tables(instance: SchemeInstance, rng: np.random.Generator) -> FunctionTable:
    """One invocation of construction 1: table m -> (s, F_K(s) xor m) with s = F_r(m).

    The idealized variant replaces F_r by a fresh random table and F_K by the
    experiment-lifetime table ``ideal_g``.
    """
    _require(instance, (C1, C1_IDEAL), "c1_query_tables")
    w = instance.widths
    m = np.arange(1 << w.n_m, dtype=np.int64)
    if instance.scheme_id == C1_IDEAL:
        s = sample_random_function(w.n_m, w.n_s, rng).entries
    else:
        r = int(rng.integers(0, 1 << w.n_r))
        s = make_family(instance.family, w.n_r, w.n_m, w.n_s).table(r).entries
    c = _pad_table(instance).entries[s] ^ m
    return FunctionTable(w.n_m, w.n_m + w.n_s, c | (s << w.n_m))


def body_table(core: SchemeInstance, rng: np.random.Generator) -> FunctionTable:
    """Ciphertext body table for one invocation of a CPA-style scheme.

    For construction 1' the body is ``(r, c)``; this is how it appears inside
    construction 2, where decryption needs ``r``.
    """
    if core.scheme_id == C1_PRIME:
        r, f_c = c1p_query_tables(core, rng)
        n_m = core.widths.n_m
        return FunctionTable(n_m, n_m + core.widths.n_r, f_c.entries | (r.value << n_m))
    return c1_query_tables(core, rng)


def tag_table(instance: SchemeInstance) -> FunctionTable:
    """F_K2 (or the ideal f) over all ciphertext bodies."""
    _require(instance, CCA_SCHEMES, "tag_table")
    if instance.scheme_id == C2_IDEAL:
        return instance.ideal_tag
    key = "tag"
    if key not in instance._cache:
        instance._cache[key] = instance.tag_family_obj().table(instance.keys[-1])
    return instance._cache[key]


def c2_query_tables(instance: SchemeInstance, rng: np.random.Generator) -> FunctionTable:
    """One invocation of construction 2: table m -> (c, tau) with tau = tag(c)."""
    _require(instance, CCA_SCHEMES, "c2_query_tables")
    body = body_table(instance.inner, rng)
    tau = tag_table(instance).entries[body.entries]
    n_c = instance.body_width
    return FunctionTable(body.in_width, n_c + instance.widths.n_tau, body.entries | (tau << n_c))


def body_decryption_table(instance: SchemeInstance) -> FunctionTable:
    """D_K(body) for every body value: m = pad(prefix) xor c."""
    core = instance.core
    key = "dec"
    if key not in instance._cache:
        n_m = instance.widths.n_m
        bodies = np.arange(1 << instance.body_width, dtype=np.int64)
        prefix = bodies >> n_m
        m = _pad_table(core).entries[prefix] ^ (bodies & ((1 << n_m) - 1))
        instance._cache[key] = FunctionTable(instance.body_width, n_m, m)
    return instance._cache[key]


def bot_string(n_m: int) -> BitString:
    return BitString(n_m + 1, 1 << n_m)


def c2_decrypt_table(instance: SchemeInstance, always_bot: bool = False) -> FunctionTable:
    """Decryption oracle table g(c, tau) -> 0||D(c) if the tag verifies, else bot.

    Applied as an XOR oracle from ``(body, tag)`` onto the plaintext register
    this is the unitary V; with ``always_bot`` it is V-tilde.
    """
    _require(instance, CCA_SCHEMES, "c2_decrypt_table")
    n_c, n_tau, n_m = instance.body_width, instance.widths.n_tau, instance.widths.n_m
    bot = 1 << n_m
    if always_bot:
        return FunctionTable.constant(n_c + n_tau, n_m + 1, bot)
    key = "V"
    if key not in instance._cache:
        idx = np.arange(1 << (n_c + n_tau), dtype=np.int64)
        body, tau = idx & ((1 << n_c) - 1), idx >> n_c
        valid = tag_table(instance).entries[body] == tau
        out = np.where(valid, body_decryption_table(instance).entries[body], bot)
        instance._cache[key] = FunctionTable(n_c + n_tau, n_m + 1, out)
    return instance._cache[key]


def encryption_table(instance: SchemeInstance, rng: np.random.Generator) -> tuple[FunctionTable, Optional[BitString]]:
    """Dispatch to the right per-invocation table; returns (table, classical r or None)."""
    if instance.scheme_id == C1_PRIME:
        r, table = c1p_query_tables(instance, rng)
        return table, r
    if instance.scheme_id in (C1, C1_IDEAL):
        return c1_query_tables(instance, rng), None
    return c2_query_tables(instance, rng), None


def intermediate_values(instance: SchemeInstance, table: FunctionTable) -> Optional[np.ndarray]:
    """The s = f_j(m) values of a construction 1 invocation, for collision checks."""
    core = instance.core
    if core.scheme_id not in (C1, C1_IDEAL):
        return None
    n_m = instance.widths.n_m
    body_mask = (1 << instance.body_width) - 1
    return (table.entries & body_mask) >> n_m


def decrypt(instance: SchemeInstance, ciphertext: int, r: Optional[int] = None) -> Optional[int]:
    """Classical decryption of one ciphertext; ``None`` stands for bot.

    Construction 1' takes the masked message with ``r`` passed separately;
    construction 1 takes the body; construction 2 takes ``body | tau << n_c``.
    """
    n_m = instance.widths.n_m
    if instance.scheme_id == C1_PRIME:
        if r is None:
            raise SchemeError("construction 1' decryption needs r")
        return _pad_table(instance)(r) ^ ciphertext
    if instance.scheme_id in (C1, C1_IDEAL):
        return body_decryption_table(instance)(ciphertext)
    out = c2_decrypt_table(instance)(ciphertext)
    return None if out >> n_m else out


def scheme_config(instance: SchemeInstance) -> dict:
    """Plain key-value view of the public parameters (keys excluded)."""
    w = instance.widths
    cfg = {
        "scheme": instance.scheme_id,
        "family": instance.family,
        "n_m": w.n_m,
        "n_r": w.n_r,
        "n_s": w.n_s,
        "n_tau": w.n_tau,
        "n_k": w.n_k,
    }
    if instance.inner is not None:
        cfg["inner"] = instance.inner.scheme_id
        cfg["tag_family"] = instance.tag_family
    return cfg
