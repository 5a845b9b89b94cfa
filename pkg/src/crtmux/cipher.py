"""Superblock encryption: AES-128 in CBC mode with chaining across superblocks.

A superblock is L consecutive cipher blocks handled as one unit; the CBC
chain survives from one superblock to the next within a session, so the
stream is bit-identical to plain CBC over the concatenated blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import BadLength, BadPadding, Overflow

CIPHER_AES128 = 0x01
BLOCK_BITS = 128
BLOCK_BYTES = BLOCK_BITS // 8


@dataclass(frozen=True)
class CipherSuite:
    """Block cipher choice plus key material.  AES-128 is the mandatory suite."""

    cipher_id: int
    key: bytes
    iv: bytes

    def __post_init__(self) -> None:
        if self.cipher_id != CIPHER_AES128:
            raise ValueError(f"unsupported cipher id {self.cipher_id:#x}")
        if len(self.key) != BLOCK_BYTES:
            raise ValueError(f"AES-128 key must be 16 bytes, got {len(self.key)}")
        if len(self.iv) != BLOCK_BYTES:
            raise ValueError(f"IV must be 16 bytes, got {len(self.iv)}")

    @property
    def block_bits(self) -> int:
        return BLOCK_BITS


def _check_superblock(sb: bytes) -> None:
    if len(sb) == 0 or len(sb) % BLOCK_BYTES != 0:
        raise BadLength(
            f"superblock must be a positive multiple of {BLOCK_BYTES} bytes,"
            f" got {len(sb)}"
        )


def encrypt_superblock(
    sb: bytes, cs: CipherSuite, chain: bytes
) -> tuple[bytes, bytes]:
    """CBC-encrypt one superblock; returns (ciphertext, new chain value).

    `chain` is the running CBC state: the IV at session start, thereafter the
    last ciphertext block of the previous superblock.
    """
    _check_superblock(sb)
    enc = Cipher(algorithms.AES(cs.key), modes.CBC(chain)).encryptor()
    ct = enc.update(sb) + enc.finalize()
    return ct, ct[-BLOCK_BYTES:]


def decrypt_superblock(
    sb: bytes, cs: CipherSuite, chain: bytes
) -> tuple[bytes, bytes]:
    """Inverse of encrypt_superblock; chain discipline is identical."""
    _check_superblock(sb)
    dec = Cipher(algorithms.AES(cs.key), modes.CBC(chain)).decryptor()
    pt = dec.update(sb) + dec.finalize()
    return pt, sb[-BLOCK_BYTES:]


def pad(data: bytes, superblock_bits: int) -> list[bytes]:
    """Split data into padded superblocks, PKCS#7-style at superblock width.

    Appends k bytes of value k (1 <= k <= width); a full padding superblock
    is added when the length is already a multiple, so unpad is unambiguous.
    """
    width = superblock_bits // 8
    if width > 255:
        raise BadLength(f"superblock width {width} exceeds the 255-byte pad limit")
    k = width - (len(data) % width)
    padded = data + bytes([k]) * k
    return [padded[i : i + width] for i in range(0, len(padded), width)]


def unpad(blocks: list[bytes]) -> bytes:
    """Strip the padding appended by pad(); raises BadPadding when malformed."""
    if not blocks:
        raise BadPadding("no superblocks")
    data = b"".join(blocks)
    width = len(blocks[0])
    k = data[-1]
    if k == 0 or k > width:
        raise BadPadding(f"pad byte {k} invalid for width {width}")
    if data[-k:] != bytes([k]) * k:
        raise BadPadding("inconsistent pad tail")
    return data[:-k]


def superblock_to_natural(sb: bytes) -> int:
    """Big-endian bytes-to-integer bijection."""
    return int.from_bytes(sb, "big")


def natural_to_superblock(x: int, superblock_bits: int) -> bytes:
    """Inverse of superblock_to_natural; x must fit in the superblock."""
    if x < 0 or x >= 1 << superblock_bits:
        raise Overflow(f"{x} does not fit in {superblock_bits} bits")
    return x.to_bytes(superblock_bits // 8, "big")
