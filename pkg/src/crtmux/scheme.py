"""The two-phase protocol: one-time setup (the composite key) and sessions.

Setup fixes the cipher material, channel census, seed, and moduli; each
session then pseudo-randomly selects channels, binds moduli to them, and
pushes superblocks through encrypt -> CRT split -> per-channel cells, with
decoy cells on the unselected channels.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

from . import cipher as cipher_mod
from .channels import (
    CHANNEL_SEED_DOMAIN,
    DECOY_SEED_DOMAIN,
    MODE_DYNAMIC,
    MODE_STATIC,
    MODULI_SEED_DOMAIN,
    ChannelAssignment,
    Lcg,
    assign_moduli,
    select_channels,
)
from .cipher import CipherSuite
from .crt import ModuliSet, crt_combine, crt_split, gen_moduli
from .errors import (
    BadMagic,
    BadParameters,
    BadVersion,
    CrtmuxError,
    InvariantViolation,
    MissingChannel,
    Overflow,
    ResidueOutOfRange,
    Truncated,
)

KEY_MAGIC = b"CRTM"
KEY_VERSION = 0x01

ROLE_SENDER = "sender"
ROLE_RECEIVER = "receiver"

DEFAULT_SUPERBLOCKS_PER_SESSION = 1024

# PKCS#7-style padding caps the superblock at 255 bytes.
MAX_MULTIPLIER = 15


@dataclass(frozen=True)
class SetupConfig:
    """The scheme's composite key: everything both parties must share."""

    suite: CipherSuite
    available: int  # channel census (A)
    used: int  # channels carrying real residues (S)
    multiplier: int  # cipher blocks per superblock (L)
    seed: int
    mode: str  # static or dynamic moduli assignment
    moduli: ModuliSet
    superblocks_per_session: int = DEFAULT_SUPERBLOCKS_PER_SESSION

    @property
    def superblock_bits(self) -> int:
        return self.multiplier * self.suite.block_bits

    @property
    def superblock_bytes(self) -> int:
        return self.superblock_bits // 8

    @cached_property
    def cell_widths(self) -> tuple[int, ...]:
        """Fixed cell width per channel, decoys included.

        Dynamic mode gives every channel the worst-case width over the S
        moduli so cell sizes cannot reveal which channels were selected.
        Static mode uses each channel's own (long-lived, hence already
        public) modulus width.
        """
        if self.mode == MODE_STATIC:
            return self.moduli.byte_widths
        w = max(self.moduli.byte_widths)
        return (w,) * self.available


def validate_config(cfg: SetupConfig) -> None:
    """Raise BadParameters unless cfg satisfies every scheme invariant."""
    if not 1 <= cfg.used <= cfg.available:
        raise BadParameters(
            f"need 1 <= used <= available, got {cfg.used}/{cfg.available}"
        )
    if not 1 <= cfg.multiplier <= MAX_MULTIPLIER:
        raise BadParameters(
            f"multiplier must be in [1, {MAX_MULTIPLIER}], got {cfg.multiplier}"
        )
    if cfg.mode not in (MODE_STATIC, MODE_DYNAMIC):
        raise BadParameters(f"unknown mode {cfg.mode!r}")
    if cfg.superblocks_per_session < 1:
        raise BadParameters("superblocks_per_session must be >= 1")
    if not 0 <= cfg.seed < 1 << 64:
        raise BadParameters("seed must fit in 64 bits")
    expected = cfg.available if cfg.mode == MODE_STATIC else cfg.used
    if len(cfg.moduli) != expected:
        raise BadParameters(
            f"{cfg.mode} mode needs {expected} moduli, got {len(cfg.moduli)}"
        )
    n = cfg.superblock_bits
    if cfg.mode == MODE_DYNAMIC:
        if cfg.moduli.product < 1 << n:
            raise BadParameters("moduli product below 2^N")
    else:
        # worst S-subset is the S smallest moduli
        worst = 1
        for q in sorted(cfg.moduli.moduli)[: cfg.used]:
            worst *= q
        if worst < 1 << n:
            raise BadParameters("some S-subset of the moduli has product below 2^N")


def setup(
    cipher_id: int,
    key: bytes,
    iv: bytes,
    available: int,
    used: int,
    multiplier: int,
    seed: int,
    mode: str,
    superblocks_per_session: int = DEFAULT_SUPERBLOCKS_PER_SESSION,
) -> SetupConfig:
    """Run the setup phase: generate moduli and assemble the composite key.

    Static mode generates one modulus per available channel, all sized so any
    S-subset's product clears 2^N; dynamic mode generates exactly S.
    """
    if not 1 <= used <= available:
        raise BadParameters(f"need 1 <= used <= available, got {used}/{available}")
    if not 1 <= multiplier <= MAX_MULTIPLIER:
        raise BadParameters(
            f"multiplier must be in [1, {MAX_MULTIPLIER}], got {multiplier}"
        )
    if available > 0xFFFF:
        raise BadParameters("channel census exceeds the key format's 16-bit field")
    n = multiplier * cipher_mod.BLOCK_BITS
    count = available if mode == MODE_STATIC else used
    moduli = gen_moduli(n, used, seed ^ MODULI_SEED_DOMAIN, count=count)
    cfg = SetupConfig(
        suite=CipherSuite(cipher_id=cipher_id, key=key, iv=iv),
        available=available,
        used=used,
        multiplier=multiplier,
        seed=seed,
        mode=mode,
        moduli=moduli,
        superblocks_per_session=superblocks_per_session,
    )
    validate_config(cfg)
    return cfg


# --- key file format ---

_HEADER = struct.Struct(">4sBB16s16sHHHBQIH")
_MODE_BYTE = {MODE_DYNAMIC: 0, MODE_STATIC: 1}
_BYTE_MODE = {v: k for k, v in _MODE_BYTE.items()}


def serialize_config(cfg: SetupConfig) -> bytes:
    """Binary key-file encoding, big-endian throughout."""
    out = bytearray(
        _HEADER.pack(
            KEY_MAGIC,
            KEY_VERSION,
            cfg.suite.cipher_id,
            cfg.suite.key,
            cfg.suite.iv,
            cfg.available,
            cfg.used,
            cfg.multiplier,
            _MODE_BYTE[cfg.mode],
            cfg.seed,
            cfg.superblocks_per_session,
            len(cfg.moduli),
        )
    )
    for q in cfg.moduli.moduli:
        qb = q.to_bytes((q.bit_length() + 7) // 8, "big")
        out += struct.pack(">H", len(qb))
        out += qb
    return bytes(out)


def deserialize_config(blob: bytes) -> SetupConfig:
    """Parse and validate a key file; the inverse of serialize_config."""
    if len(blob) < 4:
        raise Truncated("key file shorter than the magic")
    if blob[:4] != KEY_MAGIC:
        raise BadMagic(f"expected {KEY_MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < _HEADER.size:
        raise Truncated("key file shorter than its header")
    (
        _,
        version,
        cipher_id,
        key,
        iv,
        available,
        used,
        multiplier,
        mode_byte,
        seed,
        sbs,
        count,
    ) = _HEADER.unpack_from(blob)
    if version != KEY_VERSION:
        raise BadVersion(f"unsupported key file version {version}")
    if mode_byte not in _BYTE_MODE:
        raise InvariantViolation(f"unknown mode byte {mode_byte}")
    offset = _HEADER.size
    moduli: list[int] = []
    for _ in range(count):
        if offset + 2 > len(blob):
            raise Truncated("key file ends inside a modulus length prefix")
        (qlen,) = struct.unpack_from(">H", blob, offset)
        offset += 2
        if offset + qlen > len(blob):
            raise Truncated("key file ends inside a modulus")
        moduli.append(int.from_bytes(blob[offset : offset + qlen], "big"))
        offset += qlen
    if offset != len(blob):
        raise InvariantViolation(f"{len(blob) - offset} trailing bytes")
    try:
        cfg = SetupConfig(
            suite=CipherSuite(cipher_id=cipher_id, key=key, iv=iv),
            available=available,
            used=used,
            multiplier=multiplier,
            seed=seed,
            mode=_BYTE_MODE[mode_byte],
            moduli=ModuliSet(tuple(moduli)),
            superblocks_per_session=sbs,
        )
        validate_config(cfg)
    except (CrtmuxError, ValueError) as exc:
        if isinstance(exc, InvariantViolation):
            raise
        raise InvariantViolation(str(exc)) from exc
    return cfg


# --- sessions ---

@dataclass
class SessionState:
    """Mutable per-session state for one role of one connection."""

    role: str
    assignment: ChannelAssignment
    session_moduli: ModuliSet  # the S moduli in selected-channel order
    cbc_chain: bytes
    superblock_index: int = 0


@dataclass(frozen=True)
class ChannelPacket:
    """One fixed-width cell for one channel; `kind` never hits the wire."""

    channel: int
    payload: bytes
    kind: str  # real or decoy


def begin_session(cfg: SetupConfig, rng: Lcg, role: str) -> SessionState:
    """Select this session's channels and reset the per-session state.

    Both roles call this with Lcg instances in identical states, so they
    derive identical assignments; the rng is advanced in place.
    """
    selected = select_channels(rng, cfg.available, cfg.used)
    assignment = assign_moduli(cfg.mode, cfg.moduli, selected, cfg.available)
    session_moduli = ModuliSet(
        tuple(cfg.moduli.moduli[assignment.modulus_of[c]] for c in selected)
    )
    return SessionState(
        role=role,
        assignment=assignment,
        session_moduli=session_moduli,
        cbc_chain=cfg.suite.iv,
    )


def encode_residue(r: int, width: int) -> bytes:
    """Fixed-width big-endian cell encoding."""
    if r < 0 or r >= 1 << (8 * width):
        raise Overflow(f"{r} does not fit in {width} bytes")
    return r.to_bytes(width, "big")


def decode_residue(cell: bytes) -> int:
    return int.from_bytes(cell, "big")


def gen_decoy(rng: Lcg, width: int) -> bytes:
    """Uniformly random cover-traffic cell from the decoy seed domain."""
    return rng.next_bytes(width)


def sender_process_superblock(
    st: SessionState, cfg: SetupConfig, plaintext_sb: bytes, decoy_rng: Lcg
) -> list[ChannelPacket]:
    """Encrypt, split, and frame one superblock into one packet per channel.

    Selected channels carry residue cells, the other A-S carry decoys of the
    same width, emitted in lockstep so cadence reveals nothing.
    """
    if st.role != ROLE_SENDER:
        raise ValueError("sender_process_superblock on a non-sender session")
    ct, st.cbc_chain = cipher_mod.encrypt_superblock(
        plaintext_sb, cfg.suite, st.cbc_chain
    )
    x = cipher_mod.superblock_to_natural(ct)
    residues = crt_split(x, st.session_moduli)
    cell_of = {
        c: encode_residue(residues[k], cfg.cell_widths[c])
        for k, c in enumerate(st.assignment.selected)
    }
    packets = []
    for c in range(cfg.available):
        if c in cell_of:
            packets.append(ChannelPacket(channel=c, payload=cell_of[c], kind="real"))
        else:
            packets.append(
                ChannelPacket(
                    channel=c,
                    payload=gen_decoy(decoy_rng, cfg.cell_widths[c]),
                    kind="decoy",
                )
            )
    st.superblock_index += 1
    return packets


def receiver_process_packets(
    st: SessionState, cfg: SetupConfig, packets
) -> bytes:
    """Decode residues from the selected channels and invert the pipeline.

    Accepts any iterable of ChannelPacket (or (channel, payload) pairs);
    non-selected channels are ignored.  Out-of-range residues or a combined
    value at or above 2^N signal corruption or desynchronization.
    """
    if st.role != ROLE_RECEIVER:
        raise ValueError("receiver_process_packets on a non-receiver session")
    cell_of = {}
    for p in packets:
        if isinstance(p, ChannelPacket):
            cell_of[p.channel] = p.payload
        else:
            channel, payload = p
            cell_of[channel] = payload
    residues = []
    for k, c in enumerate(st.assignment.selected):
        if c not in cell_of:
            raise MissingChannel(f"no packet for selected channel {c}")
        r = decode_residue(cell_of[c])
        if r >= st.session_moduli.moduli[k]:
            raise ResidueOutOfRange(
                f"channel {c} cell decodes to {r} >= modulus"
            )
        residues.append(r)
    x = crt_combine(residues, st.session_moduli)
    if x >= 1 << cfg.superblock_bits:
        raise Overflow("combined value at or above 2^N; streams desynchronized")
    ct = cipher_mod.natural_to_superblock(x, cfg.superblock_bits)
    pt, st.cbc_chain = cipher_mod.decrypt_superblock(ct, cfg.suite, st.cbc_chain)
    st.superblock_index += 1
    return pt


# --- whole-message transmission over a transport bundle ---

def send_stream(cfg: SetupConfig, data: bytes, bundle, capture=None) -> int:
    """Pad, encrypt, split, and broadcast a whole message; returns the
    superblock count.  Sessions rotate every superblocks_per_session blocks.

    `capture`, if given, is a mapping channel id -> bytearray that receives
    every emitted cell (real and decoy alike) for offline analysis.
    """
    channel_rng = Lcg(cfg.seed ^ CHANNEL_SEED_DOMAIN)
    decoy_rng = Lcg(cfg.seed ^ DECOY_SEED_DOMAIN)
    st = None
    count = 0
    for sb in cipher_mod.pad(data, cfg.superblock_bits):
        if st is None or st.superblock_index >= cfg.superblocks_per_session:
            st = begin_session(cfg, channel_rng, ROLE_SENDER)
        packets = sender_process_superblock(st, cfg, sb, decoy_rng)
        bundle.broadcast_superblock([p.payload for p in packets])
        if capture is not None:
            for p in packets:
                capture.setdefault(p.channel, bytearray()).extend(p.payload)
        count += 1
    return count


def recv_stream(cfg: SetupConfig, bundle) -> bytes:
    """Gather cells in lockstep until the peer closes; returns the message."""
    from .errors import EndOfStream

    channel_rng = Lcg(cfg.seed ^ CHANNEL_SEED_DOMAIN)
    st = None
    blocks: list[bytes] = []
    while True:
        if st is None or st.superblock_index >= cfg.superblocks_per_session:
            st = begin_session(cfg, channel_rng, ROLE_RECEIVER)
        try:
            cells = bundle.gather_superblock(st.assignment.selected)
        except EndOfStream:
            break
        blocks.append(receiver_process_packets(st, cfg, cells.items()))
    return cipher_mod.unpad(blocks)
