"""What an adversary can ask of a game, and what it gets back.

Adversaries are generator functions.  Each ``yield`` hands the game an
action; the game answers with a :class:`Response`.  The generator finishes
by *returning* a :class:`Finish` or :class:`Guess` (a bare ``0``/``1`` is
accepted too).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from ..qcore import BitString, QState
from ..schemes import Shape

Seg = Union[str, Sequence[str]]


@dataclass
class EncQuery:
    """Encryption query: XOR the scheme's output for ``message`` into ``target``.

    In the CCA game ``target`` holds the body in its low ``n_c`` bits and the
    tag above it.  ``silent`` queries are not logged as adversary views (used
    by wrappers that post-process the answer before their inner adversary
    sees it).
    """

    state: QState
    message: Seg
    target: Seg
    silent: bool = False


@dataclass
class DecQuery:
    """Decryption query on the ``ciphertext`` register (body low, tag high)."""

    state: QState
    plaintext: Seg
    ciphertext: Seg
    silent: bool = False


@dataclass
class OracleQuery:
    """Function-oracle query of the QPRF game."""

    state: QState
    inp: Seg
    out: Seg
    silent: bool = False


@dataclass
class Measure:
    state: QState
    segment: Seg


@dataclass
class Note:
    """Log ``state`` as an adversary view without touching it."""

    state: QState
    label: str


@dataclass
class Finish:
    guess: int


@dataclass
class Guess:
    """Final binary measurement.

    ``accept`` receives one integer array per segment (the segment value of
    every basis index) and returns a boolean array; the guess is 1 on the
    accepted outcomes.  Declaring the measurement this way lets the game
    compute Pr[b' = 1] exactly as well as sample it.
    """

    state: QState
    segments: tuple
    accept: Callable[..., np.ndarray]


@dataclass
class Response:
    state: Optional[QState]
    value: Optional[BitString] = None


def _code(name: str) -> int:
    return zlib.crc32(name.encode())


@dataclass(frozen=True)
class TrialSeeds:
    """Seed splitting rule: stream ``(name, *index)`` of trial ``t`` is
    ``SeedSequence(master, spawn_key=(t, crc32(name), *index))``.

    The challenge bit is deliberately not part of the key, so both arms of a
    trial (and both scenarios) see the same keys, permutations and
    measurement randomness.
    """

    master: int
    trial: int

    def stream(self, name: str, *index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master, spawn_key=(self.trial, _code(name)) + tuple(index))
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class TrialContext:
    """Everything public an adversary may read during one trial."""

    game: str
    seeds: TrialSeeds
    shape: Optional[Shape] = None
    in_width: Optional[int] = None
    out_width: Optional[int] = None

    def stream(self, name: str, *index: int) -> np.random.Generator:
        return self.seeds.stream(name, *index)

    def with_shape(self, shape: Shape, game: Optional[str] = None) -> "TrialContext":
        return replace(self, shape=shape, game=game or self.game)


class AdversaryProgram:
    """Base class for adversaries.  Subclasses set budgets and implement ``run``.

    ``q`` is the function-oracle budget (QPRF game); ``q_e``/``q_d`` the
    encryption/decryption budgets.  Instances must be picklable so trials can
    run in worker processes.
    """

    name = "adversary"
    q = 0
    q_e = 0
    q_d = 0

    def run(self, ctx: TrialContext):
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(q={self.q}, q_e={self.q_e}, q_d={self.q_d})"


def final_guess(action: Any) -> Union[Finish, Guess]:
    if isinstance(action, (Finish, Guess)):
        return action
    if action in (0, 1):
        return Finish(int(action))
    raise TypeError(f"adversary must finish with Finish/Guess/0/1, got {action!r}")
