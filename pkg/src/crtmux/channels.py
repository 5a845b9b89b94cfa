"""Deterministic channel selection and moduli-to-channel assignment.

Sender and receiver run the same generator from the same seed, so both sides
derive byte-identical channel choices without any coordination traffic.
"""
from __future__ import annotations

from dataclasses import dataclass

from .crt import ModuliSet
from .errors import GeneratorExhausted, SizeMismatch

# Knuth-style full-period 64-bit LCG constants (MMIX).
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1

# One configured master seed feeds three independent streams.
CHANNEL_SEED_DOMAIN = 0x0101010101010101
MODULI_SEED_DOMAIN = 0x0202020202020202
DECOY_SEED_DOMAIN = 0x0303030303030303

_REJECTION_BOUND = 128

MODE_DYNAMIC = "dynamic"
MODE_STATIC = "static"


class Lcg:
    """Full-period 64-bit linear congruential generator.

    state' = state * 6364136223846793005 + 1442695040888963407 (mod 2^64).
    Not cryptographically strong; it only has to be identically reproducible
    on both ends of the link.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state * LCG_MULTIPLIER + LCG_INCREMENT) & _MASK64
        return self.state

    def draw_uniform(self, census: int) -> int:
        """Unbiased index in [0, census) via top-32-bit rejection sampling."""
        if census < 1:
            raise ValueError("census must be >= 1")
        limit = ((1 << 32) // census) * census
        for _ in range(_REJECTION_BOUND):
            value = self.next_u64() >> 32
            if value < limit:
                return value % census
        raise GeneratorExhausted(
            f"no accepted draw in {_REJECTION_BOUND} iterations (census={census})"
        )

    def next_bytes(self, n: int) -> bytes:
        """n pseudorandom bytes, big-endian words, high bytes first."""
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "big")
        return bytes(out[:n])


def select_channels(rng: Lcg, available: int, count: int) -> tuple[int, ...]:
    """Draw `count` distinct channel ids from [0, available).

    Duplicates are discarded and redrawn; a channel cannot carry two residues.
    First-acceptance order is preserved because dynamic moduli assignment is
    positional.
    """
    if not 1 <= count <= available:
        raise ValueError(f"need 1 <= count <= available, got {count}/{available}")
    chosen: list[int] = []
    seen = set()
    while len(chosen) < count:
        c = rng.draw_uniform(available)
        if c not in seen:
            seen.add(c)
            chosen.append(c)
    return tuple(chosen)


@dataclass(frozen=True)
class ChannelAssignment:
    """The selected channels and which modulus index each one carries."""

    selected: tuple[int, ...]
    modulus_of: dict[int, int]

    def __post_init__(self) -> None:
        if set(self.selected) != set(self.modulus_of):
            raise SizeMismatch("selected channels and modulus map disagree")
        if len(set(self.selected)) != len(self.selected):
            raise SizeMismatch("selected channels must be distinct")


def assign_moduli(
    mode: str,
    moduli: ModuliSet,
    selected: tuple[int, ...],
    available: int,
) -> ChannelAssignment:
    """Bind moduli to the selected channels.

    Static mode keeps one modulus per channel for the life of the key
    (index = channel id, so |moduli| must equal the census); dynamic mode
    re-binds the S moduli positionally to this session's selection.
    """
    if mode == MODE_STATIC:
        if len(moduli) != available:
            raise SizeMismatch(
                f"static mode needs {available} moduli, got {len(moduli)}"
            )
        modulus_of = {c: c for c in selected}
    elif mode == MODE_DYNAMIC:
        if len(moduli) != len(selected):
            raise SizeMismatch(
                f"dynamic mode needs {len(selected)} moduli, got {len(moduli)}"
            )
        modulus_of = {c: k for k, c in enumerate(selected)}
    else:
        raise ValueError(f"unknown assignment mode {mode!r}")
    return ChannelAssignment(selected=tuple(selected), modulus_of=modulus_of)
