"""crtmux: secure multi-channel transmission via CRT residue splitting.

Superblocks are encrypted with a block cipher, split into Chinese Remainder
Theorem residues, and spread over pseudo-randomly selected channels while the
remaining channels carry decoy traffic of identical shape.
"""

from .channels import (
    ChannelAssignment,
    Lcg,
    assign_moduli,
    select_channels,
)
from .cipher import CipherSuite
from .crt import (
    ModuliSet,
    crt_combine,
    crt_split,
    ext_gcd,
    gen_moduli,
    is_probable_prime,
)
from .scheme import (
    ChannelPacket,
    SessionState,
    SetupConfig,
    begin_session,
    deserialize_config,
    receiver_process_packets,
    recv_stream,
    send_stream,
    sender_process_superblock,
    serialize_config,
    setup,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelAssignment",
    "ChannelPacket",
    "CipherSuite",
    "Lcg",
    "ModuliSet",
    "SessionState",
    "SetupConfig",
    "assign_moduli",
    "begin_session",
    "crt_combine",
    "crt_split",
    "deserialize_config",
    "ext_gcd",
    "gen_moduli",
    "is_probable_prime",
    "receiver_process_packets",
    "recv_stream",
    "select_channels",
    "send_stream",
    "sender_process_superblock",
    "serialize_config",
    "setup",
]
