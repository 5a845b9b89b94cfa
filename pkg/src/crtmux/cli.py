"""Operator command line: keygen, send, recv, and analyze.

Exit codes are a stable contract: 0 success, 2 bad usage or parameters,
3 transport failure, 4 integrity failure (desync or tamper).
"""
from __future__ import annotations

import argparse
import os
import sys
import threading

from . import analysis, scheme, transport
from .channels import MODE_DYNAMIC, MODE_STATIC, Lcg
from .cipher import CIPHER_AES128
from .crt import ModuliSet
from .errors import (
    BadPadding,
    BadParameters,
    CrtmuxError,
    KeyFormatError,
    MissingChannel,
    NotCoprime,
    NotEnoughPrimes,
    Overflow,
    ResidueOutOfRange,
    TransportError,
    WidthMismatch,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRANSPORT = 3
EXIT_INTEGRITY = 4

# Key and IV bytes, when not supplied explicitly, derive from the seed so
# keygen is reproducible.  Weak by design: this artifact distributes keys as
# files, it does not try to be a key-generation ceremony.
_KEY_MATERIAL_DOMAIN = 0x0404040404040404

_INTEGRITY_ERRORS = (ResidueOutOfRange, Overflow, BadPadding, MissingChannel)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crtmux",
        description="Multi-channel secure transmission via CRT residue splitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("keygen", help="run the setup phase and write a key file")
    kg.add_argument("--channels", type=int, required=True, help="available channels (A)")
    kg.add_argument("--used", type=int, required=True, help="channels carrying residues (S)")
    kg.add_argument("--multiplier", type=int, default=1, help="cipher blocks per superblock (L)")
    kg.add_argument("--seed", type=lambda s: int(s, 0), required=True, help="64-bit master seed")
    kg.add_argument("--mode", choices=[MODE_DYNAMIC, MODE_STATIC], default=MODE_DYNAMIC)
    kg.add_argument("--cipher", choices=["aes128"], default="aes128")
    kg.add_argument("--superblocks-per-session", type=int, default=scheme.DEFAULT_SUPERBLOCKS_PER_SESSION)
    kg.add_argument("--key-hex", help="cipher key bytes (default: derived from seed)")
    kg.add_argument("--iv-hex", help="initialization vector (default: derived from seed)")
    kg.add_argument("--out", required=True, help="key file path")

    sd = sub.add_parser("send", help="transmit a file to a listening receiver")
    sd.add_argument("--key", required=True)
    sd.add_argument("--in", dest="input", default="-", help="input file ('-' for stdin)")
    sd.add_argument("--backend", choices=["tcp", "memory"], default="tcp")
    sd.add_argument("--host", default="127.0.0.1")
    sd.add_argument("--port-base", type=int, default=9000)
    sd.add_argument("--capture", help="directory for per-channel cell transcripts")
    sd.add_argument("--out", help="output file for the in-process memory self-test")

    rc = sub.add_parser("recv", help="listen and receive a file")
    rc.add_argument("--key", required=True)
    rc.add_argument("--out", default="-", help="output file ('-' for stdout)")
    rc.add_argument("--host", default="127.0.0.1")
    rc.add_argument("--port-base", type=int, default=9000)
    rc.add_argument("--timeout", type=float, default=30.0)

    an = sub.add_parser("analyze", help="reproduce the scheme's analyses")
    ansub = an.add_subparsers(dest="report", required=True)

    bw = ansub.add_parser("bandwidth", help="byte-alignment bandwidth loss table")
    bw.add_argument("--nb", type=int, default=128, help="cipher block bits")
    bw.add_argument("--channels", type=int, required=True)
    bw.add_argument("--multipliers", default="1..8", help="e.g. 1..8 or 1,2,4")

    pd = ansub.add_parser("pd", help="distinguishability of a moduli set")
    pd.add_argument("--n", type=int, required=True, help="superblock bits")
    pd.add_argument("--moduli", required=True, help="comma-separated moduli")

    sm = ansub.add_parser("smax", help="maximum feasible channel count")
    sm.add_argument("--n", type=int, required=True, help="superblock bits")

    cl = ansub.add_parser("classify", help="real/decoy verdicts for a captured transcript")
    cl.add_argument("--key", required=True)
    cl.add_argument("--capture", required=True, help="directory of ch_<id>.bin streams")
    cl.add_argument("--uninformed", action="store_true",
                    help="use the all-max hypothesis instead of the key's moduli")

    return parser


def _parse_multipliers(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as f:
        return f.read()


def _write_output(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as f:
            f.write(data)


def _load_key(path: str) -> scheme.SetupConfig:
    with open(path, "rb") as f:
        return scheme.deserialize_config(f.read())


def _derived_key_material(seed: int) -> bytes:
    return Lcg(seed ^ _KEY_MATERIAL_DOMAIN).next_bytes(32)


def _cmd_keygen(args) -> int:
    material = _derived_key_material(args.seed)
    key = bytes.fromhex(args.key_hex) if args.key_hex else material[:16]
    iv = bytes.fromhex(args.iv_hex) if args.iv_hex else material[16:]
    cfg = scheme.setup(
        cipher_id=CIPHER_AES128,
        key=key,
        iv=iv,
        available=args.channels,
        used=args.used,
        multiplier=args.multiplier,
        seed=args.seed,
        mode=args.mode,
        superblocks_per_session=args.superblocks_per_session,
    )
    with open(args.out, "wb") as f:
        f.write(scheme.serialize_config(cfg))
    bw = analysis.bandwidth_loss(cfg.suite.block_bits, cfg.multiplier, cfg.used)
    rep = analysis.distinguishability(
        cfg.superblock_bits,
        ModuliSet(tuple(sorted(cfg.moduli.moduli)[: cfg.used]))
        if cfg.mode == MODE_STATIC
        else cfg.moduli,
    )
    print(f"key file            {args.out}")
    print(f"channels            {cfg.used} of {cfg.available} ({cfg.mode} moduli)")
    print(f"superblock          {cfg.superblock_bits} bits (L={cfg.multiplier})")
    print(f"moduli bit length   {cfg.moduli.bit_lengths[0]}")
    print(f"payload/channel     {bw.bits_per_channel} bits in {bw.bytes_per_channel} bytes")
    print(f"bandwidth loss      {100 * bw.loss_fraction:.2f}%")
    print(f"p_d_theoretical     {rep.p_d_theoretical:.6g}")
    return EXIT_OK


def _cmd_send(args) -> int:
    cfg = _load_key(args.key)
    data = _read_input(args.input)
    capture: dict[int, bytearray] | None = {} if args.capture else None

    if args.backend == "memory":
        if args.out is None:
            print("crtmux: --backend memory needs --out (in-process self-test)", file=sys.stderr)
            return EXIT_USAGE
        tx, rx = transport.open_memory_pair(cfg.available, cfg.cell_widths)
        result: dict = {}

        def run_receiver():
            try:
                result["data"] = scheme.recv_stream(cfg, rx)
            except CrtmuxError as exc:
                result["error"] = exc

        t = threading.Thread(target=run_receiver)
        t.start()
        scheme.send_stream(cfg, data, tx, capture=capture)
        tx.close()
        t.join()
        if "error" in result:
            exc = result["error"]
            print(f"crtmux: receive failed: {exc}", file=sys.stderr)
            return EXIT_INTEGRITY if isinstance(exc, _INTEGRITY_ERRORS) else EXIT_TRANSPORT
        _write_output(args.out, result["data"])
    else:
        bundle = transport.connect_bundle(
            cfg.available, cfg.cell_widths, args.host, args.port_base
        )
        scheme.send_stream(cfg, data, bundle, capture=capture)
        bundle.close()

    if args.capture:
        os.makedirs(args.capture, exist_ok=True)
        for c, stream in (capture or {}).items():
            with open(os.path.join(args.capture, f"ch_{c}.bin"), "wb") as f:
                f.write(stream)
    return EXIT_OK


def _cmd_recv(args) -> int:
    cfg = _load_key(args.key)
    bundle = transport.listen_bundle(
        cfg.available,
        cfg.cell_widths,
        args.port_base,
        host=args.host,
        timeout=args.timeout,
    )
    try:
        data = scheme.recv_stream(cfg, bundle)
    finally:
        bundle.close()
    _write_output(args.out, data)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    if args.report == "bandwidth":
        print(
            analysis.render_bandwidth_table(
                args.nb, args.channels, _parse_multipliers(args.multipliers)
            )
        )
    elif args.report == "pd":
        moduli = ModuliSet(tuple(int(t) for t in args.moduli.split(",")))
        rep = analysis.distinguishability(args.n, moduli)
        print(analysis.render_distinguisher_report(rep))
    elif args.report == "smax":
        print(analysis.s_max_estimate(args.n))
    elif args.report == "classify":
        cfg = _load_key(args.key)
        if not args.uninformed and cfg.mode != MODE_STATIC:
            print(
                "crtmux: informed classification needs a static-mode key"
                " (dynamic assignments change per session)",
                file=sys.stderr,
            )
            return EXIT_USAGE
        transcript = {}
        for c in range(cfg.available):
            path = os.path.join(args.capture, f"ch_{c}.bin")
            if not os.path.exists(path):
                continue
            with open(path, "rb") as f:
                transcript[c] = analysis.split_cell_stream(f.read(), cfg.cell_widths[c])
        if args.uninformed:
            hypothesis = {c: 1 << (8 * cfg.cell_widths[c]) for c in transcript}
        else:
            hypothesis = {c: cfg.moduli.moduli[c] for c in transcript}
        rows = [
            [v.channel, v.verdict, v.cells_seen,
             v.first_invalid if v.first_invalid is not None else "-"]
            for v in analysis.channel_classifier(transcript, hypothesis)
        ]
        print(analysis.render_table(["channel", "verdict", "cells", "first_invalid"], rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "keygen":
            return _cmd_keygen(args)
        if args.command == "send":
            return _cmd_send(args)
        if args.command == "recv":
            return _cmd_recv(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return EXIT_USAGE
    except _INTEGRITY_ERRORS as exc:
        print(f"crtmux: integrity failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except TransportError as exc:
        print(f"crtmux: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (KeyFormatError, BadParameters, NotEnoughPrimes, NotCoprime,
            WidthMismatch, ValueError, OSError) as exc:
        print(f"crtmux: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
