"""Selection scheme tests.

Oracles: a naive two-pass windowed-kurtosis implementation, exhaustive
candidate rescoring for argmin correctness, analytic kurtosis corner cases,
a linear-fiber zero-cost bound for the channel-emulation metric, and a
Monte Carlo AWGN run for pilot detection.
"""

import math

import numpy as np
import pytest

from passel.channel import FiberParams, SsfmStepConfig, WdmConfig
from passel.seeding import substream
from passel.selection import (
    NliMetric,
    PermutationBook,
    PilotBook,
    ScramblerBook,
    SelectionConfig,
    SelectionError,
    SelectionResult,
    bsss_decode,
    bsss_encode,
    bsss_pilot_bits,
    generate_books,
    index_to_pilot_bits,
    make_wk_metric,
    pilot_bits_to_index,
    siss_decode,
    siss_encode,
    siss_pilot_symbols,
    wk_metric,
)
from passel.shaping import AmplitudeAlphabet, PasShaper, trellis_for

RAILS = np.array([-7, -5, -3, -1, 1, 3, 5, 7], dtype=float)


def random_block(rng, n):
    re = rng.choice(RAILS, size=(2, n))
    im = rng.choice(RAILS, size=(2, n))
    return re + 1j * im


def small_shaper(n=8):
    return PasShaper(trellis_for(4, 5), block_len_4d=n)


class TestPilotArithmetic:
    def test_bit_counts(self):
        assert [bsss_pilot_bits(v) for v in (1, 2, 4, 5, 16, 256)] == [0, 1, 2, 3, 4, 8]

    def test_symbol_counts(self):
        assert [siss_pilot_symbols(v) for v in (1, 2, 16, 17, 256)] == [0, 1, 1, 2, 2]

    def test_invalid(self):
        with pytest.raises(SelectionError):
            bsss_pilot_bits(0)
        with pytest.raises(SelectionError):
            siss_pilot_symbols(0)

    def test_index_bits_roundtrip(self):
        for width in (1, 2, 3, 8):
            for v in range(2 ** width):
                bits = index_to_pilot_bits(v, width)
                assert bits.size == width
                assert pilot_bits_to_index(bits) == v

    def test_index_overflow(self):
        with pytest.raises(SelectionError):
            index_to_pilot_bits(4, 2)


class TestBooks:
    def test_scrambler_identity_row(self):
        book = ScramblerBook.generate(11, 8, 40)
        assert not book.masks[0].any()

    def test_scrambler_distinct_and_deterministic(self):
        a = ScramblerBook.generate(11, 16, 40)
        b = ScramblerBook.generate(11, 16, 40)
        assert np.array_equal(a.masks, b.masks)
        assert len({m.tobytes() for m in a.masks}) == 16
        c = ScramblerBook.generate(12, 16, 40)
        assert not np.array_equal(a.masks, c.masks)

    def test_scrambler_nesting(self):
        small = ScramblerBook.generate(11, 4, 40)
        large = ScramblerBook.generate(11, 16, 40)
        assert np.array_equal(large.masks[:4], small.masks)

    def test_scrambler_exhaustion(self):
        full = ScramblerBook.generate(5, 4, 2)
        assert len({m.tobytes() for m in full.masks}) == 4
        with pytest.raises(SelectionError):
            ScramblerBook.generate(5, 5, 2)

    def test_permutation_identity_row(self):
        book = PermutationBook.generate(11, 8, 32)
        assert np.array_equal(book.perms[0], np.arange(32))

    def test_permutations_valid_distinct_nested(self):
        big = PermutationBook.generate(11, 16, 32)
        for p in big.perms:
            assert np.array_equal(np.sort(p), np.arange(32))
        assert len({p.tobytes() for p in big.perms}) == 16
        small = PermutationBook.generate(11, 4, 32)
        assert np.array_equal(big.perms[:4], small.perms)

    def test_permutation_inverses(self):
        book = PermutationBook.generate(3, 8, 20)
        for p, q in zip(book.perms, book.inverses):
            assert np.array_equal(p[q], np.arange(20))

    def test_permutation_too_short(self):
        with pytest.raises(SelectionError):
            PermutationBook.generate(3, 2, 1)

    def test_dispatcher(self):
        cfg = SelectionConfig(scheme="bsss", n_t=4, block_len_4d=8)
        book = generate_books(9, cfg, payload_bits=30)
        assert isinstance(book, ScramblerBook) and book.masks.shape == (4, 30)
        with pytest.raises(SelectionError):
            generate_books(9, cfg)
        cfg = SelectionConfig(scheme="siss", n_t=4, block_len_4d=8)
        perms, pilots = generate_books(9, cfg)
        assert isinstance(perms, PermutationBook) and perms.perms.shape == (4, 8)
        assert isinstance(pilots, PilotBook)

    def test_config_validation(self):
        with pytest.raises(SelectionError):
            SelectionConfig(scheme="other")
        with pytest.raises(SelectionError):
            SelectionConfig(metric="other")
        with pytest.raises(SelectionError):
            SelectionConfig(n_t=0)


class TestPilotBook:
    def test_sixteen_corner_points(self):
        book = PilotBook.build()
        assert book.points.shape == (16, 2)
        assert len({(p[0], p[1]) for p in book.points}) == 16
        for p in book.points.ravel():
            assert abs(p.real) == 7.0 and abs(p.imag) == 7.0

    def test_index_roundtrip_all_two_pilot(self):
        book = PilotBook.build()
        for idx in range(256):
            sym = book.symbols_for_index(idx, 2)
            assert sym.shape == (2, 2)
            assert book.detect_index(sym) == idx

    def test_zero_distance_detection(self):
        book = PilotBook.build()
        assert book.detect_index(book.points[5][:, None]) == 5

    def test_empty_prefix(self):
        book = PilotBook.build()
        assert book.symbols_for_index(0, 0).shape == (2, 0)
        with pytest.raises(SelectionError):
            book.symbols_for_index(1, 0)
        with pytest.raises(SelectionError):
            book.symbols_for_index(16, 1)

    def test_detection_error_rate_12db_awgn(self):
        # MC oracle: at 12 dB SNR per 4D pilot, wrong-corner rate < 1e-3
        book = PilotBook.build()
        rng = substream(31, 1)
        total, errors = 0, 0
        e4 = 4.0 * 49.0  # pilot symbol energy over both polarizations
        sigma2 = e4 / (2.0 * 10 ** 1.2)  # per 2D polarization
        spot_rx, spot_true = None, None
        for _ in range(10):
            m = 100_000
            true_idx = rng.integers(0, 16, size=m)
            tx = book.points[true_idx]  # (m, 2)
            noise = rng.standard_normal((m, 2)) + 1j * rng.standard_normal((m, 2))
            rx = tx + noise * math.sqrt(sigma2 / 2.0)
            d2 = (np.abs(rx[:, None, 0] - book.points[None, :, 0]) ** 2
                  + np.abs(rx[:, None, 1] - book.points[None, :, 1]) ** 2)
            got = d2.argmin(axis=1)
            errors += int((got != true_idx).sum())
            total += m
            if spot_rx is None:
                spot_rx, spot_true = rx[:100], got[:100]
        assert total >= 1_000_000
        assert errors / total < 1e-3
        for r, g in zip(spot_rx, spot_true):
            assert book.detect_index(r[:, None]) == g


def naive_wk(symbols, window, stride, aggregate="mean"):
    x, y = symbols
    n = len(x)
    e = [abs(x[k]) ** 2 + abs(y[k]) ** 2 for k in range(n)]
    kappas = []
    off = 0
    while off + window <= n:
        win = e[off:off + window]
        m1 = sum(win) / window
        m2 = sum(v * v for v in win) / window
        kappas.append(m2 / (m1 * m1))
        off += stride
    return max(kappas) if aggregate == "max" else sum(kappas) / len(kappas)


class TestWkMetric:
    def test_matches_naive_oracle(self):
        rng = substream(31, 2)
        for n, w, s in ((256, 128, 64), (256, 64, 32), (100, 30, 7), (64, 64, 1)):
            block = random_block(rng, n)
            for agg in ("mean", "max"):
                got = wk_metric(block, window=w, stride=s, aggregate=agg)
                want = naive_wk(block, w, s, agg)
                assert abs(got - want) < 1e-12 * want

    def test_equal_energy_gives_one(self):
        block = np.full((2, 200), 3.0 + 3.0j)
        assert abs(wk_metric(block) - 1.0) < 1e-12

    def test_single_spike_gives_window_length(self):
        w = 32
        block = np.zeros((2, w), dtype=complex)
        block[:, 7] = 1.0 + 1.0j
        assert abs(wk_metric(block, window=w, stride=w) - w) < 1e-9

    def test_zero_window_rejected(self):
        with pytest.raises(SelectionError):
            wk_metric(np.zeros((2, 64), dtype=complex))

    def test_default_window_caps_at_block(self):
        rng = substream(31, 3)
        block = random_block(rng, 48)
        got = wk_metric(block)
        assert abs(got - naive_wk(block, 48, 24)) < 1e-12

    def test_permutation_invariant_single_window(self):
        rng = substream(31, 4)
        block = random_block(rng, 64)
        perm = rng.permutation(64)
        a = wk_metric(block, window=64, stride=64)
        b = wk_metric(block[:, perm], window=64, stride=64)
        assert abs(a - b) < 1e-12

    def test_permutation_sensitive_below_block(self):
        e_lo, e_hi = 1.0 + 0.0j, 3.0 + 0.0j
        block = np.zeros((2, 4), dtype=complex)
        block[0] = [e_lo, e_lo, e_hi, e_hi]
        swapped = block[:, [0, 2, 1, 3]]
        a = wk_metric(block, window=2, stride=2)
        b = wk_metric(swapped, window=2, stride=2)
        assert abs(a - b) > 1e-3

    def test_batched_matches_per_block(self):
        rng = substream(31, 5)
        stack = np.stack([random_block(rng, 96) for _ in range(5)])
        got = wk_metric(stack, window=48, stride=16)
        for i in range(5):
            assert abs(got[i] - wk_metric(stack[i], window=48, stride=16)) < 1e-12

    def test_payload_slice(self):
        rng = substream(31, 6)
        block = random_block(rng, 66)
        m = make_wk_metric(window=32, stride=16, payload=slice(2, None))
        assert abs(m(block) - wk_metric(block[:, 2:], window=32, stride=16)) < 1e-12

    def test_window_validation(self):
        block = np.full((2, 16), 1.0 + 1.0j)
        with pytest.raises(SelectionError):
            wk_metric(block, window=17)
        with pytest.raises(SelectionError):
            wk_metric(block, window=8, stride=9)
        with pytest.raises(SelectionError):
            wk_metric(block, aggregate="median")


def metric_wdm(sps=4):
    return WdmConfig(n_channels=1, sps=sps)


class TestNliMetric:
    def test_linear_fiber_zero_cost(self):
        rng = substream(31, 7)
        fiber = FiberParams(gamma_per_w_km=0.0, n_spans=2)
        metric = NliMetric(fiber, metric_wdm(), SsfmStepConfig(steps_per_span=20),
                           launch_power_dbm=2.0)
        block = random_block(rng, 64)
        cost = metric(block)
        assert cost / np.linalg.norm(block) < 1e-6

    def test_spm_only_removed_by_phase_comp(self):
        # beta2 = 0 and a constant block: nonlinearity is one common rotation
        fiber = FiberParams(beta2_ps2_per_km=0.0, n_spans=1)
        metric = NliMetric(fiber, metric_wdm(sps=8), SsfmStepConfig(steps_per_span=20),
                           launch_power_dbm=0.0)
        block = np.full((2, 128), 3.0 + 3.0j)
        cost = metric(block)
        assert cost / np.linalg.norm(block) < 1e-3

    def test_cost_grows_with_power(self):
        rng = substream(31, 8)
        fiber = FiberParams(n_spans=1)
        block = random_block(rng, 64)
        costs = []
        for p in (-10.0, -6.0, -2.0, 2.0):
            metric = NliMetric(fiber, metric_wdm(), SsfmStepConfig(steps_per_span=25),
                               launch_power_dbm=p)
            costs.append(metric(block))
        assert all(a < b for a, b in zip(costs, costs[1:]))

    def test_batched_matches_single(self):
        rng = substream(31, 9)
        fiber = FiberParams(n_spans=1)
        metric = NliMetric(fiber, metric_wdm(), SsfmStepConfig(steps_per_span=25),
                           launch_power_dbm=1.0)
        stack = np.stack([random_block(rng, 64) for _ in range(3)])
        got = metric(stack)
        assert got.shape == (3,)
        for i in range(3):
            assert abs(got[i] - metric(stack[i])) < 1e-9

    def test_payload_slice_excludes_pilots(self):
        rng = substream(31, 10)
        fiber = FiberParams(n_spans=1)
        body = random_block(rng, 60)
        pilots = np.full((2, 4), 7.0 + 7.0j)
        cand = np.concatenate([pilots, body], axis=1)
        kw = dict(step_cfg=SsfmStepConfig(steps_per_span=25), launch_power_dbm=2.0)
        all_in = NliMetric(fiber, metric_wdm(), **kw)
        payload_only = NliMetric(fiber, metric_wdm(), payload=slice(4, None), **kw)
        assert payload_only(cand) < all_in(cand)

    def test_requires_single_channel(self):
        with pytest.raises(SelectionError):
            NliMetric(FiberParams(), WdmConfig(n_channels=3))


class TestBsss:
    def test_roundtrip(self):
        rng = substream(31, 11)
        shaper = small_shaper(8)
        metric = make_wk_metric(window=8, stride=8)
        for n_t in (1, 2, 4, 8):
            cfg = SelectionConfig(scheme="bsss", n_t=n_t, metric="wk", block_len_4d=8)
            payload = shaper.bits_per_selection_block - cfg.pilot_bits
            book = ScramblerBook.generate(77, n_t, payload)
            bits = rng.integers(0, 2, size=payload, dtype=np.uint8)
            res = bsss_encode(bits, book, cfg, shaper.encode, metric)
            assert isinstance(res, SelectionResult)
            assert res.symbols.shape == (2, 8)
            back = bsss_decode(shaper.decode(res.symbols), book, cfg)
            assert np.array_equal(back, bits)

    def test_degenerate_single_candidate(self):
        rng = substream(31, 12)
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=1, metric="wk", block_len_4d=8)
        book = ScramblerBook.generate(77, 1, shaper.bits_per_selection_block)
        bits = rng.integers(0, 2, size=shaper.bits_per_selection_block, dtype=np.uint8)
        res = bsss_encode(bits, book, cfg, shaper.encode, make_wk_metric())
        assert res.index == 0
        assert np.array_equal(res.symbols, shaper.encode(bits))

    def test_two_candidates_are_plain_and_scrambled(self):
        rng = substream(31, 13)
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=2, metric="wk", block_len_4d=8)
        payload = shaper.bits_per_selection_block - 1
        book = ScramblerBook.generate(78, 2, payload)
        bits = rng.integers(0, 2, size=payload, dtype=np.uint8)
        res = bsss_encode(bits, book, cfg, shaper.encode, make_wk_metric())
        plain = shaper.encode(np.concatenate([[0], bits]))
        masked = shaper.encode(np.concatenate([[1], book.masks[1] ^ bits]))
        expect = plain if res.index == 0 else masked
        assert np.array_equal(res.symbols, expect)

    def test_argmin_matches_exhaustive_rescore(self):
        rng = substream(31, 14)
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=4, metric="wk", block_len_4d=8)
        payload = shaper.bits_per_selection_block - 2
        book = ScramblerBook.generate(79, 4, payload)
        metric = make_wk_metric(window=8, stride=8)
        for _ in range(10):
            bits = rng.integers(0, 2, size=payload, dtype=np.uint8)
            res = bsss_encode(bits, book, cfg, shaper.encode, metric)
            rescored = []
            for i in range(4):
                blk = np.concatenate([index_to_pilot_bits(i, 2), book.masks[i] ^ bits])
                rescored.append(wk_metric(shaper.encode(blk), window=8, stride=8))
            assert res.index == int(np.argmin(rescored))
            assert abs(res.cost - min(rescored)) < 1e-12
            assert abs(res.cost - res.costs[res.index]) < 1e-15

    def test_tie_breaks_to_lowest_index(self):
        rng = substream(31, 15)
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=4, metric="wk", block_len_4d=8)
        payload = shaper.bits_per_selection_block - 2
        book = ScramblerBook.generate(79, 4, payload)
        bits = rng.integers(0, 2, size=payload, dtype=np.uint8)
        res = bsss_encode(bits, book, cfg, shaper.encode, lambda s: 1.0)
        assert res.index == 0

    def test_scalar_only_metric_fallback(self):
        rng = substream(31, 16)
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=4, metric="wk", block_len_4d=8)
        payload = shaper.bits_per_selection_block - 2
        book = ScramblerBook.generate(79, 4, payload)

        def scalar_metric(s):
            if s.ndim != 2:
                raise ValueError("one block at a time")
            return wk_metric(s, window=8, stride=8)

        bits = rng.integers(0, 2, size=payload, dtype=np.uint8)
        a = bsss_encode(bits, book, cfg, shaper.encode, scalar_metric)
        b = bsss_encode(bits, book, cfg, shaper.encode, make_wk_metric(window=8, stride=8))
        assert a.index == b.index
        assert np.array_equal(a.symbols, b.symbols)

    def test_identity_pilot_leaves_bits(self):
        cfg = SelectionConfig(scheme="bsss", n_t=4, metric="wk", block_len_4d=8)
        book = ScramblerBook.generate(79, 4, 10)
        rx = np.concatenate([np.zeros(2, np.uint8),
                             np.arange(10, dtype=np.uint8) % 2])
        out = bsss_decode(rx, book, cfg)
        assert np.array_equal(out, rx[2:])

    def test_decode_pilot_out_of_range(self):
        cfg = SelectionConfig(scheme="bsss", n_t=3, metric="wk", block_len_4d=8)
        book = ScramblerBook.generate(79, 3, 10)
        rx = np.concatenate([np.array([1, 1], np.uint8), np.zeros(10, np.uint8)])
        with pytest.raises(SelectionError):
            bsss_decode(rx, book, cfg)

    def test_length_validation(self):
        shaper = small_shaper(8)
        cfg = SelectionConfig(scheme="bsss", n_t=2, metric="wk", block_len_4d=8)
        book = ScramblerBook.generate(79, 2, 20)
        with pytest.raises(SelectionError):
            bsss_encode(np.zeros(19, np.uint8), book, cfg, shaper.encode,
                        make_wk_metric())

    def test_monotone_selected_cost_in_family_size(self):
        rng = substream(31, 17)
        shaper = small_shaper(8)
        payloads = {}
        results = {}
        for n_t in (1, 2, 4, 8, 16):
            cfg = SelectionConfig(scheme="bsss", n_t=n_t, metric="wk", block_len_4d=8)
            payloads[n_t] = shaper.bits_per_selection_block - cfg.pilot_bits
        # same payload length everywhere so candidate sets nest: use the
        # largest family's pilot width for all runs
        width = payloads[16]
        book = ScramblerBook.generate(80, 16, width)
        metric = make_wk_metric(window=8, stride=8)
        bits = [rng.integers(0, 2, size=width, dtype=np.uint8) for _ in range(30)]
        cfg16 = SelectionConfig(scheme="bsss", n_t=16, metric="wk", block_len_4d=8)
        prev = None
        for n_t in (1, 2, 4, 8, 16):
            # score the first n_t candidates of the nested family directly
            costs = []
            for b in bits:
                per_cand = []
                for i in range(n_t):
                    blk = np.concatenate([index_to_pilot_bits(i, cfg16.pilot_bits),
                                          book.masks[i] ^ b])
                    per_cand.append(metric(shaper.encode(blk)))
                costs.append(min(per_cand))
            mean_cost = float(np.mean(costs))
            if prev is not None:
                assert mean_cost <= prev + 1e-12
            prev = mean_cost


class TestSiss:
    def test_roundtrip(self):
        rng = substream(31, 18)
        pilots = PilotBook.build()
        for n_t, n in ((1, 16), (2, 16), (16, 16), (256, 16)):
            cfg = SelectionConfig(scheme="siss", n_t=n_t, metric="wk", block_len_4d=n)
            book = PermutationBook.generate(91, n_t, n)
            payload = random_block(rng, n)
            npil = cfg.pilot_symbols
            metric = make_wk_metric(window=8, stride=8, payload=slice(npil, None))
            res = siss_encode(payload, book, pilots, cfg, metric)
            assert res.symbols.shape == (2, npil + n)
            back, idx = siss_decode(res.symbols, book, pilots, cfg)
            assert idx == res.index
            assert np.array_equal(back, payload)

    def test_pilot_symbol_counts(self):
        rng = substream(31, 19)
        pilots = PilotBook.build()
        payload = random_block(rng, 16)
        for n_t, want in ((2, 1), (16, 1), (256, 2)):
            cfg = SelectionConfig(scheme="siss", n_t=n_t, metric="wk", block_len_4d=16)
            book = PermutationBook.generate(91, n_t, 16)
            metric = make_wk_metric(window=8, stride=8, payload=slice(want, None))
            res = siss_encode(payload, book, pilots, cfg, metric)
            assert res.symbols.shape[1] == 16 + want

    def test_single_candidate_prepends_identity(self):
        rng = substream(31, 20)
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=1, metric="wk", block_len_4d=16)
        book = PermutationBook.generate(91, 1, 16)
        payload = random_block(rng, 16)
        res = siss_encode(payload, book, pilots, cfg, make_wk_metric())
        assert res.index == 0
        assert np.array_equal(res.symbols, payload)

    def test_two_candidates_identity_and_permuted(self):
        rng = substream(31, 21)
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=2, metric="wk", block_len_4d=16)
        book = PermutationBook.generate(91, 2, 16)
        payload = random_block(rng, 16)
        metric = make_wk_metric(window=8, stride=8, payload=slice(1, None))
        res = siss_encode(payload, book, pilots, cfg, metric)
        want_payload = payload[:, book.perms[res.index]]
        assert np.array_equal(res.symbols[:, 1:], want_payload)
        assert np.array_equal(res.symbols[:, :1],
                              pilots.symbols_for_index(res.index, 1))

    def test_payload_multiset_preserved(self):
        rng = substream(31, 22)
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=16, metric="wk", block_len_4d=64)
        book = PermutationBook.generate(91, 16, 64)
        payload = random_block(rng, 64)
        metric = make_wk_metric(window=16, stride=8, payload=slice(1, None))
        res = siss_encode(payload, book, pilots, cfg, metric)
        got = res.symbols[:, 1:]
        for pol in range(2):
            assert np.array_equal(np.sort_complex(got[pol]),
                                  np.sort_complex(payload[pol]))

    def test_argmin_matches_exhaustive_rescore(self):
        rng = substream(31, 23)
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=8, metric="wk", block_len_4d=32)
        book = PermutationBook.generate(91, 8, 32)
        metric = make_wk_metric(window=8, stride=4, payload=slice(1, None))
        for _ in range(5):
            payload = random_block(rng, 32)
            res = siss_encode(payload, book, pilots, cfg, metric)
            rescored = []
            for i in range(8):
                cand = np.concatenate([pilots.symbols_for_index(i, 1),
                                       payload[:, book.perms[i]]], axis=1)
                rescored.append(metric(cand))
            assert res.index == int(np.argmin(rescored))
            assert abs(res.cost - min(rescored)) < 1e-12

    def test_monotone_selected_cost_in_family_size(self):
        rng = substream(31, 24)
        pilots = PilotBook.build()
        book = PermutationBook.generate(92, 16, 64)
        blocks = [random_block(rng, 64) for _ in range(200)]
        prev = None
        for n_t in (1, 2, 4, 8, 16):
            cfg = SelectionConfig(scheme="siss", n_t=n_t, metric="wk", block_len_4d=64)
            npil = cfg.pilot_symbols
            metric = make_wk_metric(window=32, stride=16, payload=slice(npil, None))
            mean_cost = float(np.mean([
                siss_encode(b, book, pilots, cfg, metric).cost for b in blocks]))
            if prev is not None:
                assert mean_cost <= prev + 1e-12
            prev = mean_cost

    def test_decode_rejects_out_of_family_pilot(self):
        rng = substream(31, 25)
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=4, metric="wk", block_len_4d=16)
        book = PermutationBook.generate(91, 4, 16)
        payload = random_block(rng, 16)
        bad = np.concatenate([pilots.symbols_for_index(9, 1), payload], axis=1)
        with pytest.raises(SelectionError):
            siss_decode(bad, book, pilots, cfg)

    def test_shape_validation(self):
        pilots = PilotBook.build()
        cfg = SelectionConfig(scheme="siss", n_t=2, metric="wk", block_len_4d=16)
        book = PermutationBook.generate(91, 2, 16)
        with pytest.raises(SelectionError):
            siss_encode(np.zeros((2, 8), complex), book, pilots, cfg, make_wk_metric())
        with pytest.raises(SelectionError):
            siss_decode(np.zeros((2, 1), complex), book, pilots, cfg)

    def test_scheme_cross_checks(self):
        pilots = PilotBook.build()
        bs = SelectionConfig(scheme="bsss", n_t=2, metric="wk", block_len_4d=16)
        si = SelectionConfig(scheme="siss", n_t=2, metric="wk", block_len_4d=16)
        book = PermutationBook.generate(91, 2, 16)
        with pytest.raises(SelectionError):
            siss_encode(np.zeros((2, 16), complex), book, pilots, bs, make_wk_metric())
        sb = ScramblerBook.generate(91, 2, 8)
        with pytest.raises(SelectionError):
            bsss_decode(np.zeros(9, np.uint8), sb, si)
