"""Command line front end.

passel run      sweep schemes x powers x family sizes, write CSV + metadata
passel bound    post-selection rate bound at one power
passel selftest fast built-in invariant checks, no test framework needed

Settings resolve in order: preset from --scale, then the --config file,
then explicit flags. The emitted CSV is byte-stable for a fixed config and
seed, whatever --workers says.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (
    ExperimentConfig,
    config_hash,
    desk_preset,
    emit_csv,
    paper_preset,
    parse_config,
    parse_csv,
    run_point,
    ss_bound_estimate,
    sweep,
    write_meta,
)


def _build_config(args) -> "ExperimentConfig":
    if args.scale == "desk":
        cfg = desk_preset()
    elif args.scale == "paper":
        cfg = paper_preset()
    else:
        cfg = ExperimentConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), base=cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["max_workers"] = args.workers
    if args.timing:
        overrides["include_timing"] = True
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("--scale", choices=("desk", "paper"),
                   help="start from a built-in preset")
    p.add_argument("--timing", action="store_true",
                   help="record wall time per point (breaks byte-stable output)")


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    out = args.out or "results.csv"
    print("config %s -> %s" % (config_hash(cfg), out))
    rows, errors, resolved = sweep(cfg)
    emit_csv(rows, out)
    meta = write_meta(out, cfg, errors, resolved)
    n_best = sum(1 for r in rows if r.scheme.startswith("best:"))
    print("wrote %d point rows + %d summary rows, metadata in %s"
          % (len(rows) - n_best, n_best, meta))
    for r in rows:
        if r.scheme.startswith("best:"):
            print("  %-14s n_t=%-4d P=%+.1f dBm  SE=%.4f bits/s/Hz"
                  % (r.scheme, r.n_t, r.power_dbm, r.se_bits_s_hz))
    if errors:
        for label, msg in errors.items():
            print("FAILED point %s: %s" % (label, msg), file=sys.stderr)
        return 1
    return 0


def _cmd_bound(args) -> int:
    cfg = _build_config(args)
    out = args.out or "bound.csv"
    detail = ss_bound_estimate(cfg, power_dbm=args.power, eta=args.eta,
                               m_total=args.m_total)
    emit_csv([detail.row], out)
    meta = write_meta(out, cfg, {}, [detail.resolved])
    r = detail.row
    print("bound eta=%g  P=%+.1f dBm  AIR=%.4f bits/4D  SE=%.4f bits/s/Hz"
          % (detail.resolved["eta"], r.power_dbm, r.air_bits_4d, r.se_bits_s_hz))
    print("wrote %s, metadata in %s" % (out, meta))
    return 0


def _selftest_checks():
    from .channel import FiberParams, WdmConfig, rrc_modulate
    from .receiver import (RxChain, air_bitwise, constellation_priors,
                           matched_filter_sample, pas_constellation)
    from .seeding import substream
    from .selection import (PermutationBook, PilotBook, ScramblerBook,
                            SelectionConfig, bsss_decode, bsss_encode,
                            siss_decode, siss_encode, wk_metric)
    from .shaping import PasShaper, ess_decode, ess_encode, trellis_for

    def ess_roundtrip():
        tr = trellis_for(4, 5)
        for idx in range(1 << 5):
            bits = np.array([(idx >> (4 - j)) & 1 for j in range(5)], np.uint8)
            amps = ess_encode(bits, tr)
            assert (amps ** 2).sum() <= tr.emax
            assert np.array_equal(ess_decode(amps, tr), bits)

    def filter_backtoback():
        wdm = WdmConfig(n_channels=1, symbol_rate_gbd=46.5, spacing_ghz=50.0,
                        rolloff=0.05, sps=4)
        rng = substream(7, 0)
        syms = (rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64)))
        field = rrc_modulate(syms, wdm, 0.0)
        back = matched_filter_sample(field, RxChain(wdm=wdm))
        assert np.abs(back - syms).max() < 1e-9

    def air_noiseless():
        rng = substream(11, 0)
        levels = np.array([-7, -5, -3, -1, 1, 3, 5, 7], float)
        syms = (rng.choice(levels, size=(2, 1200))
                + 1j * rng.choice(levels, size=(2, 1200)))
        pri = constellation_priors(pas_constellation(), np.full(4, 0.25))
        res = air_bitwise(syms, syms.copy(), pri, sigma2=1e-12)
        assert abs(res.air_bits_per_4d - 12.0) < 1e-6

    def book_nesting():
        small = ScramblerBook.generate(3, 4, 40).masks
        large = ScramblerBook.generate(3, 16, 40).masks
        assert np.array_equal(small, large[:4])
        ps = PermutationBook.generate(3, 4, 32).perms
        pl = PermutationBook.generate(3, 16, 32).perms
        assert np.array_equal(ps, pl[:4])

    def bsss_roundtrip():
        shaper = PasShaper(trellis_for(4, 5), 8)
        cfg = SelectionConfig(scheme="bsss", n_t=4, metric="wk", block_len_4d=8)
        payload = shaper.bits_per_selection_block - cfg.pilot_bits
        book = ScramblerBook.generate(5, 4, payload)
        rng = substream(5, 1)
        bits = rng.integers(0, 2, payload, dtype=np.uint8)
        res = bsss_encode(bits, book, cfg, shaper.encode,
                          lambda s: wk_metric(s, window=8))
        back = bsss_decode(shaper.decode(res.symbols), book, cfg)
        assert np.array_equal(back, bits)

    def siss_roundtrip():
        shaper = PasShaper(trellis_for(4, 5), 8)
        cfg = SelectionConfig(scheme="siss", n_t=16, metric="wk", block_len_4d=8)
        book = PermutationBook.generate(9, 16, 8)
        pilots = PilotBook.build()
        rng = substream(9, 1)
        bits = rng.integers(0, 2, shaper.bits_per_selection_block, dtype=np.uint8)
        payload = shaper.encode(bits)
        res = siss_encode(payload, book, pilots, cfg,
                          lambda s: wk_metric(s, window=8,
                                              payload=slice(cfg.pilot_symbols, None)))
        got, idx = siss_decode(res.symbols, book, pilots, cfg)
        assert idx == res.index and np.allclose(got, payload)

    def dispersion_inverts():
        fiber = FiberParams(beta2_ps2_per_km=-21.7, gamma_per_w_km=0.0,
                            alpha_db_per_km=0.2, span_length_km=80.0, n_spans=2)
        from .channel import AmplifierParams, propagate_link
        from .receiver import cdc
        wdm = WdmConfig(n_channels=1, symbol_rate_gbd=46.5, spacing_ghz=50.0,
                        rolloff=0.05, sps=4)
        rng = substream(13, 0)
        syms = (rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64)))
        field = rrc_modulate(syms, wdm, 0.0)
        out = propagate_link(field, fiber,
                             AmplifierParams(noise_figure_db=5.0, noise_on=False))
        rx = RxChain.for_link(fiber, wdm)
        back = matched_filter_sample(cdc(out, rx), rx)
        assert np.abs(back - syms).max() < 1e-6

    return [("sphere shaping index roundtrip", ess_roundtrip),
            ("pulse filter back to back", filter_backtoback),
            ("noiseless rate ceiling", air_noiseless),
            ("candidate book nesting", book_nesting),
            ("bit selection roundtrip", bsss_roundtrip),
            ("symbol selection roundtrip", siss_roundtrip),
            ("dispersion compensation", dispersion_inverts)]


def _cmd_selftest(_args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:
            failures += 1
            print("FAIL %-34s %s: %s" % (name, type(exc).__name__, exc))
        else:
            print("PASS %s" % name)
    print("%d checks, %d failed" % (len(_selftest_checks()), failures))
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="passel",
        description="Shaped-and-selected transmission experiments on a "
                    "nonlinear WDM fiber link")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="sweep and write one CSV row per point")
    _add_common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_bound = sub.add_parser("bound", help="post-selection rate bound")
    _add_common(p_bound)
    p_bound.add_argument("--power", type=float, help="launch power, dBm")
    p_bound.add_argument("--eta", type=float, help="kept fraction in (0, 1]")
    p_bound.add_argument("--m-total", type=int, dest="m_total",
                         help="population size to score")
    p_bound.set_defaults(fn=_cmd_bound)

    p_self = sub.add_parser("selftest", help="fast built-in checks")
    p_self.set_defaults(fn=_cmd_selftest)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
