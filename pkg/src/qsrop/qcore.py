"""Exact state-vector kernels for XOR-query oracle games.

Basis convention: segment 0 of a layout occupies the least-significant bits,
so the basis index of a joint state is ``sum(value_k << offset_k)``.  When an
operation takes several segments as one logical register (a tuple of names),
the first listed segment holds the least-significant bits of the combined
value.

All operations are pure: they return a new :class:`QState` and never mutate
their inputs.  Randomness enters only through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

DEFAULT_QUBIT_CAP = 22
NORM_TOL = 1e-9
ZERO_TOL = 1e-12

_SQRT1_2 = 1.0 / np.sqrt(2.0)


class LayoutError(ValueError):
    """Unknown segment, width mismatch, or overlapping registers."""


class QubitCapError(LayoutError):
    """A register layout exceeds the configured qubit cap."""


class NormError(ValueError):
    """A state failed the normalization invariant."""


def qubit_cap() -> int:
    """Current qubit cap; ``QSROP_QUBIT_CAP`` overrides the default of 22."""
    raw = os.environ.get("QSROP_QUBIT_CAP")
    if raw is None:
        return DEFAULT_QUBIT_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise QubitCapError(f"QSROP_QUBIT_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise QubitCapError(f"QSROP_QUBIT_CAP must be positive, got {cap}")
    return cap


def check_cap(n_qubits: int, what: str = "layout") -> None:
    cap = qubit_cap()
    if n_qubits > cap:
        raise QubitCapError(f"{what} needs {n_qubits} qubits, cap is {cap}")


@dataclass(frozen=True)
class BitString:
    width: int
    value: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value} does not fit in {self.width} bits")

    def __int__(self) -> int:
        return self.value

    def __str__(self) -> str:
        return format(self.value, f"0{self.width}b")

    @classmethod
    def parse(cls, bits: str) -> "BitString":
        """Build from a string of '0'/'1' characters, most significant first."""
        return cls(len(bits), int(bits, 2))


Value = Union[BitString, int]


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    width: int

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered, contiguous, disjoint segments; segment 0 is least significant."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise LayoutError("layout needs at least one segment")
        names = set()
        expected = 0
        for seg in self.segments:
            if seg.width < 1:
                raise LayoutError(f"segment {seg.name!r} has width {seg.width}")
            if seg.offset != expected:
                raise LayoutError(f"segment {seg.name!r} is not contiguous (offset {seg.offset}, expected {expected})")
            if seg.name in names:
                raise LayoutError(f"duplicate segment name {seg.name!r}")
            names.add(seg.name)
            expected += seg.width
        check_cap(expected)

    @classmethod
    def of(cls, *widths: tuple[str, int]) -> "RegisterLayout":
        """Layout from ``(name, width)`` pairs, least significant first."""
        segs = []
        offset = 0
        for name, width in widths:
            segs.append(Segment(name, offset, width))
            offset += width
        return cls(tuple(segs))

    @property
    def total_qubits(self) -> int:
        last = self.segments[-1]
        return last.offset + last.width

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.segments)

    def __getitem__(self, name: str) -> Segment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise LayoutError(f"unknown segment {name!r}; layout has {self.names}")

    def __contains__(self, name: str) -> bool:
        return any(s.name == name for s in self.segments)

    def width_of(self, segs: Union[str, Sequence[str]]) -> int:
        return sum(self[n].width for n in _names(segs))

    def extend(self, name: str, width: int) -> "RegisterLayout":
        """Append a new most-significant segment."""
        return RegisterLayout(self.segments + (Segment(name, self.total_qubits, width),))

    def split(self, name: str, parts: Sequence[tuple[str, int]]) -> "RegisterLayout":
        """Replace segment ``name`` by contiguous sub-segments (least significant first).

        The amplitude array of a state is valid for both layouts, so
        :meth:`QState.relayout` can switch between them for free.
        """
        seg = self[name]
        if sum(w for _, w in parts) != seg.width:
            raise LayoutError(f"parts of {name!r} must sum to width {seg.width}")
        out = []
        for s in self.segments:
            if s.name != name:
                out.append(s)
                continue
            offset = s.offset
            for part, width in parts:
                out.append(Segment(part, offset, width))
                offset += width
        return RegisterLayout(tuple(out))


def _names(segs: Union[str, Sequence[str]]) -> tuple[str, ...]:
    return (segs,) if isinstance(segs, str) else tuple(segs)


@lru_cache(maxsize=64)
def _basis_index(total_qubits: int) -> np.ndarray:
    idx = np.arange(1 << total_qubits, dtype=np.int64)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=256)
def _segment_values_cached(layout: RegisterLayout, names: tuple[str, ...]) -> np.ndarray:
    idx = _basis_index(layout.total_qubits)
    out = np.zeros_like(idx)
    shift = 0
    for name in names:
        seg = layout[name]
        out |= ((idx >> seg.offset) & seg.mask) << shift
        shift += seg.width
    out.setflags(write=False)
    return out


def segment_values(layout: RegisterLayout, segs: Union[str, Sequence[str]]) -> np.ndarray:
    """For every basis index, the (combined) value of the given segment(s)."""
    return _segment_values_cached(layout, _names(segs))


def _scatter(layout: RegisterLayout, segs: tuple[str, ...], values: np.ndarray) -> np.ndarray:
    """Place combined ``values`` into basis-index bit positions of ``segs``."""
    out = np.zeros_like(values)
    shift = 0
    for name in segs:
        seg = layout[name]
        out |= ((values >> shift) & seg.mask) << seg.offset
        shift += seg.width
    return out


@dataclass(frozen=True, eq=False)
class QState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.layout.dim,):
            raise LayoutError(f"expected {self.layout.dim} amplitudes, got shape {self.amplitudes.shape}")

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def check_norm(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm - 1.0) > tol:
            raise NormError(f"state norm {self.norm!r} deviates from 1 by more than {tol}")

    def relayout(self, layout: RegisterLayout) -> "QState":
        """Reinterpret the same amplitudes under a compatible layout."""
        if layout.total_qubits != self.layout.total_qubits:
            raise LayoutError("relayout must preserve the qubit count")
        return QState(layout, self.amplitudes)

    def extend(self, name: str, width: int) -> "QState":
        """Tensor a fresh |0...0> segment on as the most significant register."""
        layout = self.layout.extend(name, width)
        amps = np.zeros(layout.dim, dtype=complex)
        amps[: self.layout.dim] = self.amplitudes
        return QState(layout, amps)

    def drop_last(self, tol: float = ZERO_TOL) -> "QState":
        """Inverse of :meth:`extend`; the top segment must be back in |0...0>."""
        segs = self.layout.segments
        if len(segs) < 2:
            raise LayoutError("cannot drop the only segment")
        layout = RegisterLayout(segs[:-1])
        rest = self.amplitudes[layout.dim:]
        leaked = float(np.vdot(rest, rest).real)
        if leaked > tol:
            raise LayoutError(f"segment {segs[-1].name!r} is not cleared (weight {leaked:.3e})")
        return QState(layout, self.amplitudes[: layout.dim].copy())

    def digest(self) -> str:
        """Hash of the exact amplitude bytes, for bit-identity comparisons."""
        import hashlib

        h = hashlib.sha256()
        h.update(repr(self.layout.segments).encode())
        h.update(np.ascontiguousarray(self.amplitudes, dtype=complex).tobytes())
        return h.hexdigest()[:32]


@dataclass(frozen=True, eq=False)
class FunctionTable:
    in_width: int
    out_width: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.shape != (1 << self.in_width,):
            raise ValueError(f"table needs {1 << self.in_width} entries, got {entries.shape}")
        if entries.size and (entries.min() < 0 or entries.max() >= (1 << self.out_width)):
            raise ValueError(f"entries must lie in [0, 2^{self.out_width})")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __call__(self, x: Value) -> int:
        return int(self.entries[int(x)])

    def __eq__(self, other):
        if not isinstance(other, FunctionTable):
            return NotImplemented
        return (self.in_width, self.out_width) == (other.in_width, other.out_width) and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash((self.in_width, self.out_width, self.entries.tobytes()))

    @classmethod
    def constant(cls, in_width: int, out_width: int, value: int) -> "FunctionTable":
        return cls(in_width, out_width, np.full(1 << in_width, value, dtype=np.int64))

    @classmethod
    def identity(cls, width: int) -> "FunctionTable":
        return cls(width, width, np.arange(1 << width, dtype=np.int64))

    def compose(self, inner: "FunctionTable") -> "FunctionTable":
        """``x -> self(inner(x))``."""
        if inner.out_width != self.in_width:
            raise ValueError("width mismatch in composition")
        return FunctionTable(inner.in_width, self.out_width, self.entries[inner.entries])

    def hexdump(self) -> str:
        digits = max(1, (self.out_width + 3) // 4)
        return " ".join(format(int(v), f"0{digits}x") for v in self.entries)


class PermutationTable(FunctionTable):
    """Bijective table on ``width`` bits."""

    def __init__(self, width: int, entries):
        super().__init__(width, width, entries)

    def __post_init__(self):
        super().__post_init__()
        if not np.array_equal(np.sort(self.entries), np.arange(1 << self.in_width)):
            raise ValueError("entries are not a bijection")

    @property
    def width(self) -> int:
        return self.in_width

    def inverse(self) -> "PermutationTable":
        inv = np.empty_like(self.entries)
        inv[self.entries] = np.arange(self.entries.size)
        return PermutationTable(self.width, inv)


def _value(v: Value, width: int) -> int:
    if isinstance(v, BitString):
        if v.width != width:
            raise LayoutError(f"value has width {v.width}, segment has width {width}")
        return v.value
    v = int(v)
    if not 0 <= v < (1 << width):
        raise LayoutError(f"value {v} does not fit in {width} bits")
    return v


def init_state(layout: RegisterLayout, basis: Value = 0) -> QState:
    """Computational basis state ``|basis>`` on the whole layout."""
    check_cap(layout.total_qubits)
    amps = np.zeros(layout.dim, dtype=complex)
    amps[_value(basis, layout.total_qubits)] = 1.0
    return QState(layout, amps)


def basis_state(layout: RegisterLayout, **values: int) -> QState:
    """Basis state given per-segment values; unnamed segments are zero."""
    idx = 0
    for name, v in values.items():
        seg = layout[name]
        idx |= _value(v, seg.width) << seg.offset
    return init_state(layout, idx)


def _permute(state: QState, new_index: np.ndarray) -> QState:
    out = np.empty_like(state.amplitudes)
    out[new_index] = state.amplitudes
    return QState(state.layout, out)


def apply_xor_oracle(
    state: QState,
    f: FunctionTable,
    in_seg: Union[str, Sequence[str]],
    out_seg: Union[str, Sequence[str]],
) -> QState:
    """U_f |x, y> = |x, y XOR f(x)> on the named input and output registers."""
    layout = state.layout
    ins, outs = _names(in_seg), _names(out_seg)
    if set(ins) & set(outs):
        raise LayoutError("input and output registers must be disjoint")
    if layout.width_of(ins) != f.in_width or layout.width_of(outs) != f.out_width:
        raise LayoutError(
            f"table is {f.in_width}->{f.out_width} bits, registers are "
            f"{layout.width_of(ins)}->{layout.width_of(outs)} bits"
        )
    x = segment_values(layout, ins)
    delta = _scatter(layout, outs, f.entries[x])
    return _permute(state, _basis_index(layout.total_qubits) ^ delta)


def xor_constant(state: QState, seg: Union[str, Sequence[str]], value: Value) -> QState:
    """Flip the bits of ``value`` into a register (a product of Pauli-X gates)."""
    layout = state.layout
    names = _names(seg)
    v = _value(value, layout.width_of(names))
    if v == 0:
        return QState(layout, state.amplitudes.copy())
    delta = int(_scatter(layout, names, np.array([v], dtype=np.int64))[0])
    return _permute(state, _basis_index(layout.total_qubits) ^ delta)


def apply_permutation(state: QState, p: PermutationTable, seg: Union[str, Sequence[str]]) -> QState:
    """In-place relabeling |x> -> |p(x)> on one register."""
    layout = state.layout
    names = _names(seg)
    if layout.width_of(names) != p.width:
        raise LayoutError(f"permutation is on {p.width} bits, register has {layout.width_of(names)}")
    idx = _basis_index(layout.total_qubits)
    x = segment_values(layout, names)
    moved = (idx ^ _scatter(layout, names, x)) | _scatter(layout, names, p.entries[x])
    return _permute(state, moved)


@lru_cache(maxsize=16)
def _hadamard_matrix(width: int) -> np.ndarray:
    """Dense H^{(x) width} with entries 2^(-width/2) (-1)^popcount(i & j)."""
    i = np.arange(1 << width)
    parity = np.zeros((i.size, i.size), dtype=np.int64)
    anded = i[:, None] & i[None, :]
    for q in range(width):
        parity ^= (anded >> q) & 1
    h = np.where(parity == 1, -1.0, 1.0) * 2.0 ** (-width / 2)
    h.setflags(write=False)
    return h


_DENSE_H_MAX = 5


def walsh_hadamard(state: QState, seg: Union[str, Sequence[str]]) -> QState:
    """Hadamard gate on every qubit of the register."""
    layout = state.layout
    amps = state.amplitudes.copy()
    n = layout.total_qubits
    for name in _names(seg):
        s = layout[name]
        if s.width <= _DENSE_H_MAX:
            view = amps.reshape(1 << (n - s.offset - s.width), 1 << s.width, 1 << s.offset)
            amps = np.matmul(_hadamard_matrix(s.width), view).reshape(-1)
            continue
        for q in range(s.offset, s.offset + s.width):
            view = amps.reshape(1 << (n - q - 1), 2, 1 << q)
            a = view[:, 0, :].copy()
            b = view[:, 1, :]
            view[:, 0, :] = (a + b) * _SQRT1_2
            view[:, 1, :] = (a - b) * _SQRT1_2
    return QState(layout, amps)


def phase_flip(state: QState, seg: Union[str, Sequence[str]], value: Value) -> QState:
    """Multiply by -1 every basis amplitude whose register equals ``value``."""
    layout = state.layout
    names = _names(seg)
    v = _value(value, layout.width_of(names))
    amps = state.amplitudes.copy()
    amps[segment_values(layout, names) == v] *= -1
    return QState(layout, amps)


def marginal(state: QState, seg: Union[str, Sequence[str]]) -> np.ndarray:
    """Outcome distribution of measuring a register (not renormalized)."""
    names = _names(seg)
    probs = np.abs(state.amplitudes) ** 2
    return np.bincount(segment_values(state.layout, names), weights=probs, minlength=1 << state.layout.width_of(names))


def basis_weight(state: QState, seg: Union[str, Sequence[str]], value: Value) -> float:
    """Tr(Proj_value rho) for the pure state: summed |a|^2 where the register equals ``value``."""
    names = _names(seg)
    v = _value(value, state.layout.width_of(names))
    mask = segment_values(state.layout, names) == v
    return float(np.sum(np.abs(state.amplitudes[mask]) ** 2))


def measure_segment(
    state: QState, seg: Union[str, Sequence[str]], rng: np.random.Generator
) -> tuple[BitString, QState]:
    """Projective measurement of one register; returns outcome and collapsed state."""
    state.check_norm()
    names = _names(seg)
    width = state.layout.width_of(names)
    probs = marginal(state, names)
    cdf = np.cumsum(probs)
    outcome = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    outcome = min(outcome, probs.size - 1)
    while probs[outcome] <= 0.0:  # guard against landing on a zero-width bin
        outcome -= 1
    amps = state.amplitudes.copy()
    amps[segment_values(state.layout, names) != outcome] = 0.0
    amps /= np.sqrt(probs[outcome])
    return BitString(width, outcome), QState(state.layout, amps)


def sample_basis(state: QState, rng: np.random.Generator) -> int:
    """Measure every qubit at once; returns the basis index."""
    state.check_norm()
    cdf = np.cumsum(np.abs(state.amplitudes) ** 2)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, cdf.size - 1)


def _same_layout(a: QState, b: QState) -> None:
    if a.layout != b.layout:
        raise LayoutError("states live on different layouts")


def inner_product(a: QState, b: QState) -> complex:
    _same_layout(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: QState, b: QState) -> float:
    """|<a|b>| (the square-root fidelity of two pure states)."""
    return min(1.0, abs(inner_product(a, b)))


def pure_trace_distance(a: QState, b: QState) -> float:
    """Trace distance sqrt(1 - |<a|b>|^2) of two normalized pure states.

    1 - F is evaluated as |a - e^{i phi} b|^2 / 2 with the relative phase
    removed, which stays accurate when the states nearly coincide.
    """
    a.check_norm()
    b.check_norm()
    ip = inner_product(a, b)
    f = min(1.0, abs(ip))
    phase = ip / abs(ip) if abs(ip) > 0 else 1.0
    diff = a.amplitudes - np.conj(phase) * b.amplitudes
    one_minus_f = min(1.0, max(0.0, 0.5 * float(np.vdot(diff, diff).real)))
    return float(np.sqrt(one_minus_f * (1.0 + f)))


def uniform_superposition(layout: RegisterLayout, segs: Iterable[str], **values: int) -> QState:
    """Basis state ``values`` with a Hadamard applied to each register in ``segs``."""
    state = basis_state(layout, **values)
    return walsh_hadamard(state, tuple(segs))
