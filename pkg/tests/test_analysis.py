import math
import os

import pytest

from crtmux import scheme, transport
from crtmux.analysis import (
    bandwidth_loss,
    channel_classifier,
    cipher_breaker_reduction,
    distinguishability,
    exhaustive_invalid_fraction,
    independence_check,
    invalid_residue_scan,
    render_bandwidth_table,
    render_distinguisher_report,
    s_max_estimate,
    split_cell_stream,
)
from crtmux.channels import CHANNEL_SEED_DOMAIN, Lcg
from crtmux.cipher import CIPHER_AES128
from crtmux.crt import ModuliSet, crt_combine, gen_moduli
from crtmux.errors import NotCoprime, ProductTooSmall, WidthMismatch


class TestBandwidthLoss:
    def test_single_block_ten_channels(self):
        r = bandwidth_loss(128, 1, 10)
        assert r.bits_per_channel == 13
        assert r.bytes_per_channel == 2
        assert r.loss_fraction == 0.1875

    def test_four_blocks_ten_channels(self):
        r = bandwidth_loss(128, 4, 10)
        assert r.bits_per_channel == 52
        assert r.bytes_per_channel == 7
        assert abs(r.loss_fraction - 0.0714) < 5e-4

    def test_byte_aligned_no_loss(self):
        r = bandwidth_loss(128, 1, 1)
        assert r.bits_per_channel == 128
        assert r.bytes_per_channel == 16
        assert r.loss_fraction == 0

    def test_table_rendering(self):
        table = render_bandwidth_table(128, 10, [1, 4])
        assert "18.75%" in table
        assert "7.14%" in table


class TestSMaxEstimate:
    def test_tiny_superblock(self):
        # S=2 needs 5-bit primes (5 exist); S=3 would need 4-bit primes
        # and only {11, 13} exist
        assert s_max_estimate(8) == 2

    def test_monotone(self):
        for n in (8, 16, 64, 128, 512):
            assert s_max_estimate(2 * n) >= s_max_estimate(n)

    def test_asymptotic_shape(self):
        for n in (128, 512, 4096):
            ratio = s_max_estimate(n) * math.log2(n) / n
            assert 0.3 <= ratio <= 3

    def test_feasible_against_moduli_generation(self):
        n = 64
        s = s_max_estimate(n)
        assert len(gen_moduli(n, s, seed=3)) == s


class TestIndependence:
    def test_3_5(self):
        table = independence_check(3, 5)
        assert all(cell == 1 for row in table for cell in row)
        assert sum(map(sum, table)) == 15

    def test_2_3(self):
        table = independence_check(2, 3)
        assert all(cell == 1 for row in table for cell in row)

    def test_not_coprime(self):
        with pytest.raises(NotCoprime):
            independence_check(4, 6)

    def test_sample_of_larger_pairs(self):
        for p, q in ((7, 64), (255, 256), (121, 125)):
            table = independence_check(p, q)
            assert all(cell == 1 for row in table for cell in row)


class TestDistinguishability:
    def test_exhaustive_example(self):
        m = ModuliSet((3, 5, 7))
        rep = distinguishability(6, m)
        assert rep.total_residue_bits == 8
        assert rep.p_d_theoretical == 0.75
        assert exhaustive_invalid_fraction(6, m) == 0.75
        assert rep.per_channel_gap == ((3, 1), (5, 3), (7, 1))

    def test_degenerate_power_of_two(self):
        # single modulus 2^N: residue bits cover N exactly, nothing to detect
        rep = distinguishability(6, ModuliSet((64,)))
        assert rep.p_d_theoretical == 0

    def test_product_too_small(self):
        with pytest.raises(ProductTooSmall):
            distinguishability(10, ModuliSet((3, 5, 7)))

    def test_generated_sets_exceed_one_half(self):
        # S >= 2 forces total residue bits >= N+1, hence P_D >= 0.5
        for n, s in ((128, 2), (128, 10), (512, 10), (256, 5)):
            m = gen_moduli(n, s, seed=11)
            rep = distinguishability(n, m)
            assert rep.total_residue_bits >= n + 1
            assert rep.p_d_theoretical >= 0.5

    def test_report_rendering(self):
        rep = distinguishability(6, ModuliSet((3, 5, 7)))
        text = render_distinguisher_report(rep)
        assert "0.75" in text
        assert "total_residue_bits  8" in text


class TestInvalidResidueScan:
    def test_real_residues_never_invalid(self):
        m = gen_moduli(16, 2, seed=1)
        q = m.moduli[0]
        cells = [(x % q).to_bytes(2, "big") for x in range(0, 1 << 16, 7)]
        assert invalid_residue_scan(cells, q) == (0, len(cells))

    def test_uniform_decoys_within_3_sigma(self):
        m = gen_moduli(128, 10, seed=4)
        q = max(m.moduli)  # 14-bit modulus in 2-byte cells
        rng = Lcg(77)
        n = 10**5
        cells = [rng.next_bytes(2) for _ in range(n)]
        invalid, total = invalid_residue_scan(cells, q)
        p = 1 - q / 65536
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(invalid - n * p) <= 3 * sigma

    def test_full_range_modulus_never_trips(self):
        rng = Lcg(5)
        cells = [rng.next_bytes(2) for _ in range(1000)]
        assert invalid_residue_scan(cells, 1 << 16) == (0, 1000)


def run_static_capture(available=16, used=10, superblocks=64, seed=42):
    """Transmit over a static-mode config and capture every channel's cells."""
    cfg = scheme.setup(
        CIPHER_AES128, bytes(16), bytes(16), available, used, 1, seed, "static"
    )
    tx, rx = transport.open_memory_pair(cfg.available, cfg.cell_widths)
    capture: dict[int, bytearray] = {}
    import threading

    t = threading.Thread(target=lambda: scheme.recv_stream(cfg, rx))
    t.start()
    data = os.urandom(cfg.superblock_bytes * superblocks - 1)
    scheme.send_stream(cfg, data, tx, capture=capture)
    tx.close()
    t.join(timeout=30)
    selected = scheme.begin_session(
        cfg, Lcg(seed ^ CHANNEL_SEED_DOMAIN), scheme.ROLE_SENDER
    ).assignment.selected
    return cfg, capture, set(selected)


class TestChannelClassifier:
    def test_true_moduli_find_decoys(self):
        cfg, capture, selected = run_static_capture()
        transcript = {
            c: split_cell_stream(bytes(stream), cfg.cell_widths[c])
            for c, stream in capture.items()
        }
        hypothesis = {c: cfg.moduli.moduli[c] for c in transcript}
        verdicts = channel_classifier(transcript, hypothesis)
        for v in verdicts:
            if v.channel in selected:
                assert v.verdict == "real"
            else:
                assert v.verdict == "decoy"

    def test_uninformed_hypothesis_is_useless(self):
        cfg, capture, _ = run_static_capture()
        transcript = {
            c: split_cell_stream(bytes(stream), cfg.cell_widths[c])
            for c, stream in capture.items()
        }
        hypothesis = {c: 1 << (8 * cfg.cell_widths[c]) for c in transcript}
        verdicts = channel_classifier(transcript, hypothesis)
        assert all(v.verdict == "real" for v in verdicts)

    def test_empty_channel_rejected(self):
        with pytest.raises(WidthMismatch):
            channel_classifier({0: []}, {0: 3})

    def test_ragged_cells_rejected(self):
        with pytest.raises(WidthMismatch):
            channel_classifier({0: [b"ab", b"c"]}, {0: 1000})

    def test_split_cell_stream_validates(self):
        with pytest.raises(WidthMismatch):
            split_cell_stream(b"abc", 2)
        assert split_cell_stream(b"abcd", 2) == [b"ab", b"cd"]


class TestCipherBreakerReduction:
    def test_combine_is_identity(self):
        ct = os.urandom(16)
        combine = lambda m, residues: crt_combine(residues, m)
        out = cipher_breaker_reduction(ct, combine, channels=10, seed=9)
        assert out == int.from_bytes(ct, "big")

    def test_constant_breaker(self):
        assert cipher_breaker_reduction(bytes(16), lambda m, r: "nope") == "nope"

    def test_residues_match_mod_oracle(self):
        ct = os.urandom(16)
        seen = {}

        def spy(m, residues):
            seen["m"], seen["r"] = m, residues

        cipher_breaker_reduction(ct, spy, channels=6, seed=2)
        x = int.from_bytes(ct, "big")
        assert seen["r"] == tuple(x % q for q in seen["m"].moduli)
        assert seen["m"].product >= 1 << 128
