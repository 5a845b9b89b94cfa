"""Arbitrary-precision residue arithmetic: CRT split/combine and moduli generation.

All integers are plain Python ints (nonnegative unless stated otherwise),
so "arbitrary precision" comes for free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .errors import (
    BothZero,
    InputOutOfRange,
    NotCoprime,
    NotEnoughPrimes,
    ResidueOutOfRange,
)

# Deterministic Miller-Rabin with this fixed base set is exact below this bound
# (Sorenson & Webster); above it the answer is only probabilistic, but there
# are never false negatives.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

# Exact prime counting by sieve is used up to this bit length; beyond it a
# logarithmic-integral estimate stands in.
EXACT_COUNT_BIT_LIMIT = 20


def ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    """Extended Euclid: returns (g, u, v) with g = gcd(a, b) = u*a + v*b."""
    if a == 0 and b == 0:
        raise BothZero("gcd(0, 0) is undefined")
    old_r, r = a, b
    old_u, u = 1, 0
    old_v, v = 0, 1
    while r != 0:
        quot = old_r // r
        old_r, r = r, old_r - quot * r
        old_u, u = u, old_u - quot * u
        old_v, v = v, old_v - quot * v
    return old_r, old_u, old_v


@dataclass(frozen=True)
class ModuliSet:
    """An ordered set of pairwise-coprime moduli, the CRT basis.

    Immutable; the combination basis is computed lazily and cached, so one
    instance can be reused across many split/combine calls.
    """

    moduli: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.moduli:
            raise NotCoprime("empty moduli set")
        object.__setattr__(self, "moduli", tuple(int(q) for q in self.moduli))
        for q in self.moduli:
            if q <= 1:
                raise NotCoprime(f"modulus {q} must be > 1")
        for i in range(len(self.moduli)):
            for j in range(i + 1, len(self.moduli)):
                if math.gcd(self.moduli[i], self.moduli[j]) != 1:
                    raise NotCoprime(
                        f"moduli {self.moduli[i]} and {self.moduli[j]} share a factor"
                    )

    def __len__(self) -> int:
        return len(self.moduli)

    @cached_property
    def product(self) -> int:
        return math.prod(self.moduli)

    @cached_property
    def bit_lengths(self) -> tuple[int, ...]:
        """ceil(log2 q_i) per modulus: the bits needed to hold any residue."""
        return tuple((q - 1).bit_length() for q in self.moduli)

    @cached_property
    def byte_widths(self) -> tuple[int, ...]:
        return tuple((l + 7) // 8 for l in self.bit_lengths)

    @cached_property
    def _combine_basis(self) -> tuple[int, ...]:
        # basis[i] = (product/q_i) * inverse(product/q_i mod q_i), so that
        # combine is a dot product with the residues modulo the product.
        basis = []
        for q in self.moduli:
            partial = self.product // q
            _, inv, _ = ext_gcd(partial % q, q)
            basis.append(partial * (inv % q))
        return tuple(basis)


def crt_split(x: int, m: ModuliSet) -> tuple[int, ...]:
    """Residues of x with respect to each modulus; requires x < product."""
    if not 0 <= x < m.product:
        raise InputOutOfRange(f"{x} not in [0, {m.product})")
    return tuple(x % q for q in m.moduli)


def crt_combine(residues: tuple[int, ...] | list[int], m: ModuliSet) -> int:
    """The unique x in [0, product) with x = residues[i] mod moduli[i]."""
    if len(residues) != len(m.moduli):
        raise ResidueOutOfRange(
            f"{len(residues)} residues for {len(m.moduli)} moduli"
        )
    for r, q in zip(residues, m.moduli):
        if not 0 <= r < q:
            raise ResidueOutOfRange(f"residue {r} not in [0, {q})")
    acc = 0
    for r, b in zip(residues, m._combine_basis):
        acc += r * b
    return acc % m.product


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin with a fixed base set.

    Exact for n < MR_DETERMINISTIC_BOUND; never reports a prime as composite.
    """
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def count_primes_with_bit_length(l: int) -> int:
    """Number of primes in [2^(l-1), 2^l).

    Exact by sieve for l <= EXACT_COUNT_BIT_LIMIT, estimated by the
    logarithmic integral above that.
    """
    if l < 1:
        return 0
    if l == 1:
        return 0  # no prime is a single bit (1 is not prime)
    if l <= EXACT_COUNT_BIT_LIMIT:
        return _sieve_count(1 << (l - 1), 1 << l)
    import mpmath

    return int(mpmath.li(1 << l) - mpmath.li(1 << (l - 1)))


def _sieve_count(lo: int, hi: int) -> int:
    sieve = bytearray([1]) * hi
    sieve[0] = sieve[1] = 0
    for i in range(2, int(math.isqrt(hi - 1)) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
    return sum(sieve[lo:hi])


def gen_moduli(N: int, S: int, seed: int, count: int | None = None) -> ModuliSet:
    """Deterministically generate distinct primes to serve as CRT moduli.

    Each prime has bit length exactly ceil(N/S) + 1, so any S of them have
    product >= 2^N.  `count` defaults to S; static channel assignment asks
    for one prime per available channel at the same bit length.
    """
    from .channels import Lcg  # avoids a module cycle at import time

    if S < 1 or N < 8:
        raise ValueError(f"need S >= 1 and N >= 8, got S={S}, N={N}")
    if count is None:
        count = S
    l = -(-N // S) + 1
    available = count_primes_with_bit_length(l)
    if l == 2:
        available -= 1  # 2 is unreachable: candidates are forced odd
    if available < count:
        raise NotEnoughPrimes(
            f"bit length {l} offers ~{available} primes, need {count}"
        )
    rng = Lcg(seed)
    primes: list[int] = []
    while len(primes) < count:
        cand = _draw_exact_bits(rng, l)
        cand |= 1 << (l - 1)  # exact bit length
        cand |= 1  # odd
        if cand in primes:
            continue
        if is_probable_prime(cand):
            primes.append(cand)
    return ModuliSet(tuple(primes))


def _draw_exact_bits(rng, nbits: int) -> int:
    words = (nbits + 63) // 64
    value = 0
    for _ in range(words):
        value = (value << 64) | rng.next_u64()
    return value >> (64 * words - nbits)
