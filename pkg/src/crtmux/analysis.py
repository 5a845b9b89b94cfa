"""Quantitative and security analyses: bandwidth loss, channel-count bound,
residue independence, distinguishability, and the cipher-breaker reduction.

Everything here is a pure function over immutable inputs; the CLI's analyze
subcommand renders the reports as text tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .crt import (
    ModuliSet,
    count_primes_with_bit_length,
    crt_split,
    gen_moduli,
)
from .errors import NotCoprime, ProductTooSmall, WidthMismatch


@dataclass(frozen=True)
class BandwidthReport:
    """Per-channel payload size and the byte-alignment bandwidth loss."""

    superblock_bits: int
    channels: int
    bits_per_channel: int
    bytes_per_channel: int
    loss_fraction: float


@dataclass(frozen=True)
class DistinguisherReport:
    """The two never-appearing value sets quantified for one moduli set."""

    superblock_bits: int
    total_residue_bits: int
    p_d_theoretical: float
    per_channel_gap: tuple[tuple[int, int], ...]  # (q_i, 2^l_i - q_i)
    empirical_detection_rate: float | None = None


def bandwidth_loss(block_bits: int, multiplier: int, channels: int) -> BandwidthReport:
    """Bandwidth wasted by rounding each channel's residue up to whole bytes."""
    if block_bits < 1 or multiplier < 1 or channels < 1:
        raise ValueError("all parameters must be >= 1")
    n = block_bits * multiplier
    bits = -(-n // channels)
    nbytes = -(-bits // 8)
    loss = (8 * nbytes - bits) / (8 * nbytes)
    return BandwidthReport(
        superblock_bits=n,
        channels=channels,
        bits_per_channel=bits,
        bytes_per_channel=nbytes,
        loss_fraction=loss,
    )


def s_max_estimate(n: int) -> int:
    """Largest channel count for which enough primes exist at the moduli size
    this toolkit uses (bit length ceil(N/S) + 1).

    Exact prime counts below 20 bits, logarithmic-integral estimate above;
    grows like N / log N.
    """
    if n < 8:
        raise ValueError("superblock size must be >= 8 bits")
    best = 0
    for s in range(1, n + 1):
        l = -(-n // s) + 1
        available = count_primes_with_bit_length(l)
        if l == 2:
            available -= 1  # generation cannot reach the prime 2
        if available >= s:
            best = s
    return best


def independence_check(p: int, q: int) -> list[list[int]]:
    """Exhaustive joint tally of (x mod p, x mod q) over x in [0, pq).

    For coprime p, q every cell comes out exactly 1, making the joint
    distribution the product of the uniform marginals.
    """
    if math.gcd(p, q) != 1:
        raise NotCoprime(f"gcd({p}, {q}) != 1")
    if p * q > 1 << 20:
        raise ValueError("exhaustive regime is limited to products <= 2^20")
    table = [[0] * q for _ in range(p)]
    for x in range(p * q):
        table[x % p][x % q] += 1
    return table


def distinguishability(n: int, m: ModuliSet) -> DistinguisherReport:
    """Theoretical probability that a uniformly random residue-bit tuple is
    invalid, i.e. corresponds to no superblock value below 2^n."""
    if m.product < 1 << n:
        raise ProductTooSmall(f"product {m.product} < 2^{n}")
    total_bits = sum(m.bit_lengths)
    p_d = 1.0 - math.ldexp(1.0, n - total_bits)
    gaps = tuple((q, (1 << l) - q) for q, l in zip(m.moduli, m.bit_lengths))
    return DistinguisherReport(
        superblock_bits=n,
        total_residue_bits=total_bits,
        p_d_theoretical=p_d,
        per_channel_gap=gaps,
    )


def exhaustive_invalid_fraction(n: int, m: ModuliSet) -> float:
    """Oracle for distinguishability: enumerate every residue-bit tuple and
    count those no superblock below 2^n can produce.  Exponential in the
    total residue bits; keep them <= ~24."""
    total_bits = sum(m.bit_lengths)
    valid = set()
    for x in range(1 << n):
        valid.add(tuple(x % q for q in m.moduli))
    # valid tuples are distinct (CRT, product >= 2^n), so the invalid count
    # is the tuple space minus them
    invalid = (1 << total_bits) - len(valid)
    return invalid / (1 << total_bits)


def invalid_residue_scan(cells, q: int) -> tuple[int, int]:
    """Count cells whose big-endian value is >= q.

    Genuine residue traffic never trips this; uniform decoy bytes do with
    probability 1 - q / 2^(8 * width).
    """
    invalid = 0
    total = 0
    for cell in cells:
        total += 1
        if int.from_bytes(cell, "big") >= q:
            invalid += 1
    return invalid, total


@dataclass(frozen=True)
class ChannelVerdict:
    channel: int
    verdict: str  # real or decoy
    first_invalid: int | None  # cell index of the first out-of-range value
    cells_seen: int


def channel_classifier(transcript, hypothesis) -> list[ChannelVerdict]:
    """The paper-style wire adversary: flag a channel as decoy as soon as any
    of its cells decodes to a value at or above the hypothesized modulus.

    `transcript` maps channel id -> sequence of equal-width cells;
    `hypothesis` maps channel id -> modulus guess.  Without the true moduli
    the verdicts are vacuous, which is exactly the point: distinguishing
    requires guessing part of the key.
    """
    verdicts = []
    for channel in sorted(transcript):
        cells = transcript[channel]
        if len(cells) == 0:
            raise WidthMismatch(f"channel {channel} has no cells")
        width = len(cells[0])
        q = hypothesis[channel]
        first_invalid = None
        for i, cell in enumerate(cells):
            if len(cell) != width:
                raise WidthMismatch(
                    f"channel {channel} cell {i} is {len(cell)} bytes, expected {width}"
                )
            if first_invalid is None and int.from_bytes(cell, "big") >= q:
                first_invalid = i
        verdicts.append(
            ChannelVerdict(
                channel=channel,
                verdict="decoy" if first_invalid is not None else "real",
                first_invalid=first_invalid,
                cells_seen=len(cells),
            )
        )
    return verdicts


def split_cell_stream(stream: bytes, width: int) -> list[bytes]:
    """Cut a raw captured channel stream into its fixed-width cells."""
    if width < 1 or len(stream) % width != 0:
        raise WidthMismatch(f"stream of {len(stream)} bytes is not whole {width}-byte cells")
    return [stream[i : i + width] for i in range(0, len(stream), width)]


def cipher_breaker_reduction(
    ciphertext_sb: bytes, crt_breaker, channels: int = 10, seed: int = 0
):
    """Executable form of the security reduction: any procedure that extracts
    information from (moduli, residues) works on a bare ciphertext too, since
    the adversary can pick moduli and split the ciphertext themselves."""
    n = len(ciphertext_sb) * 8
    m = gen_moduli(n, channels, seed)
    x = int.from_bytes(ciphertext_sb, "big")
    residues = crt_split(x, m)
    return crt_breaker(m, residues)


# --- text rendering for the CLI ---

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render_table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def render_bandwidth_table(block_bits: int, channels: int, multipliers) -> str:
    rows = []
    for L in multipliers:
        r = bandwidth_loss(block_bits, L, channels)
        rows.append(
            [
                L,
                r.superblock_bits,
                r.bits_per_channel,
                r.bytes_per_channel,
                r.loss_fraction,
                f"{100 * r.loss_fraction:.2f}%",
            ]
        )
    return render_table(
        ["L", "N_bits", "bits/ch", "bytes/ch", "loss", "loss%"], rows
    )


def render_distinguisher_report(rep: DistinguisherReport) -> str:
    lines = [
        f"superblock_bits     {rep.superblock_bits}",
        f"total_residue_bits  {rep.total_residue_bits}",
        f"p_d_theoretical     {_fmt(rep.p_d_theoretical)}",
    ]
    rows = [[i, q, gap] for i, (q, gap) in enumerate(rep.per_channel_gap)]
    lines.append(render_table(["i", "q_i", "gap_to_2^l_i"], rows))
    return "\n".join(lines)
