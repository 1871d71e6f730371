"""Batch experiment orchestration.

Turns a flat key=value configuration into sweeps over launch power,
candidate-family size, and shaping scheme; runs each point through the full
transmit/propagate/receive pipeline; and emits one CSV row per point plus a
best-power summary row per scheme. Every random draw comes from a tagged
substream of the master seed, keyed by what the draw is for (channel and
block for data, block and span for amplifier noise, candidate index for
books), so any subset of the work reproduces identically regardless of
batching or worker count.

Schemes:
  mb        amplitudes drawn i.i.d. from the fitted exponential-in-energy
            distribution (idealized matcher, zero rate loss)
  ess       sphere-shaped blocks, no selection
  ess+bsss  sphere shaping with bit-level selection; pilot bits are absorbed
            by raising the matcher rate, so net overhead is zero
  ess+siss  sphere shaping with symbol-level selection; pilot symbols cost
            time slots (n/(n+pilots) factor)

The bound estimator scores a large population of shaped blocks with the
channel-emulation cost, keeps the cheapest fraction eta, and reports the
achievable rate over the kept set plus the log2(eta)/n selection penalty.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Iterable

import numpy as np

from . import __version__
from .channel import (
    AmplifierParams,
    FiberParams,
    SsfmStepConfig,
    WdmConfig,
    propagate_link,
    rrc_modulate,
    standard_complex_noise,
    wdm_demux,
    wdm_mux,
)
from .receiver import (
    RxChain,
    SelectionOverhead,
    air_bitwise,
    cdc,
    constellation_priors,
    matched_filter_sample,
    mean_phase_comp,
    pas_constellation,
    se_from_air,
)
from .seeding import TAG_ASE, TAG_DATA, substream
from .selection import (
    NliMetric,
    PermutationBook,
    PilotBook,
    ScramblerBook,
    SelectionConfig,
    bsss_encode,
    bsss_pilot_bits,
    make_wk_metric,
    siss_encode,
    siss_pilot_symbols,
)
from .shaping import (
    AmplitudeAlphabet,
    PasShaper,
    mb_fit,
    mb_sample,
    pas_map,
    trellis_for,
)

__all__ = [
    "HarnessError",
    "ExperimentConfig",
    "ResultRow",
    "PointDetail",
    "parse_config",
    "config_text",
    "config_hash",
    "desk_preset",
    "paper_preset",
    "run_point",
    "run_point_detailed",
    "ss_bound_estimate",
    "sweep",
    "emit_csv",
    "parse_csv",
    "write_meta",
    "resolve_defaults",
    "CSV_HEADER",
    "KNOWN_SCHEMES",
    "SELECTION_SCHEMES",
]

CSV_HEADER = ("scheme,metric,power_dbm,n_t,air_bits_4d,se_bits_s_hz,"
              "ci95,sel_metric_mean,wall_s")
KNOWN_SCHEMES = ("mb", "ess", "ess+bsss", "ess+siss")
SELECTION_SCHEMES = ("ess+bsss", "ess+siss")


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; units live in the field names."""

    schemes: tuple = ("ess",)
    powers_dbm: tuple = (1.0,)
    n_t_values: tuple = (1,)
    selection_metric: str = "nli"
    n_blocks: int = 200
    seed: int = 1234
    max_workers: int = 1
    include_timing: bool = False
    block_len_4d: int = 256
    dm_blocklength: int = 256
    dm_rate_bits_per_amp: float = 1.3
    beta2_ps2_per_km: float = -21.7
    gamma_per_w_km: float = 1.27
    alpha_db_per_km: float = 0.2
    span_length_km: float = 100.0
    n_spans: int = 30
    n_channels: int = 5
    symbol_rate_gbd: float = 46.5
    spacing_ghz: float = 50.0
    rolloff: float = 0.05
    sps: int = 16
    pulse_shape: str = "exact"
    steps_per_span: int = 0
    noise_figure_db: float = 5.0
    noise_on: bool = True
    center_frequency_thz: float = 193.41
    metric_sps: int = 4
    metric_steps_per_span: int = 100
    wk_window: int = 0
    wk_stride: int = 0
    wk_aggregate: str = "mean"
    bound_eta: float = 1.0
    bound_m_total: int = 200

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "powers_dbm", tuple(float(p) for p in self.powers_dbm))
        object.__setattr__(self, "n_t_values", tuple(int(v) for v in self.n_t_values))
        for s in self.schemes:
            if s not in KNOWN_SCHEMES:
                raise HarnessError("unknown scheme %r" % (s,))
        if not self.schemes or not self.powers_dbm or not self.n_t_values:
            raise HarnessError("schemes, powers_dbm and n_t_values must be nonempty")
        if any(v < 1 for v in self.n_t_values):
            raise HarnessError("n_t values must be >= 1")
        if self.selection_metric not in ("nli", "wk"):
            raise HarnessError("selection_metric must be nli or wk")
        if self.n_blocks < 1:
            raise HarnessError("n_blocks must be >= 1")
        if not 0.0 < self.bound_eta <= 1.0:
            raise HarnessError("bound_eta must be in (0, 1]")


_LIST_ELEM = {"schemes": str, "powers_dbm": float, "n_t_values": int}


def _field_kinds():
    kinds = {}
    for f in fields(ExperimentConfig):
        if f.name in _LIST_ELEM:
            kinds[f.name] = ("list", _LIST_ELEM[f.name])
        else:
            kinds[f.name] = ("scalar", f.type)
    return kinds


def _parse_scalar(name: str, typ: str, raw: str):
    raw = raw.strip()
    if typ == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise HarnessError("bad boolean for %s: %r" % (name, raw))
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """key = value lines over a base config; '#' starts a comment."""
    cfg = base or ExperimentConfig()
    kinds = _field_kinds()
    updates = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HarnessError("line %d is not key = value" % ln)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise HarnessError("unknown config key %r (line %d)" % (key, ln))
        mode, typ = kinds[key]
        if mode == "list":
            items = [p.strip() for p in raw.split(",") if p.strip()]
            updates[key] = tuple(typ(p) for p in items)
        else:
            updates[key] = _parse_scalar(key, typ, raw)
    return replace(cfg, **updates)


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.12g" % value
    if isinstance(value, tuple):
        return ",".join(_fmt_value(v) for v in value)
    return str(value)


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical dump; parse_config(config_text(cfg)) == cfg."""
    lines = ["%s = %s" % (f.name, _fmt_value(getattr(cfg, f.name)))
             for f in fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()[:16]


def desk_preset() -> ExperimentConfig:
    """Scaled-down link that shows the selection gain in minutes, not days."""
    return ExperimentConfig(
        schemes=("mb", "ess", "ess+bsss", "ess+siss"),
        powers_dbm=(1.0, 2.0, 3.0, 4.0),
        n_t_values=(16,),
        selection_metric="nli",
        n_blocks=100,
        block_len_4d=64,
        dm_blocklength=64,
        n_spans=10,
        n_channels=3,
        sps=8,
        steps_per_span=200,
        metric_sps=4,
        metric_steps_per_span=100,
        bound_m_total=100,
    )


def paper_preset() -> ExperimentConfig:
    """Full-scale configuration; multi-day runtime, not exercised in CI."""
    return ExperimentConfig(
        schemes=("mb", "ess", "ess+bsss", "ess+siss"),
        powers_dbm=(-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0),
        n_t_values=(1, 2, 4, 16, 64, 256),
        selection_metric="nli",
        n_blocks=200,
        block_len_4d=256,
        n_spans=30,
        n_channels=5,
        sps=16,
        steps_per_span=0,
        metric_sps=4,
        metric_steps_per_span=100,
        bound_eta=1e-3,
        bound_m_total=30000,
    )


def link_wdm(cfg: ExperimentConfig) -> WdmConfig:
    return WdmConfig(n_channels=cfg.n_channels, symbol_rate_gbd=cfg.symbol_rate_gbd,
                     spacing_ghz=cfg.spacing_ghz, rolloff=cfg.rolloff, sps=cfg.sps,
                     pulse_shape=cfg.pulse_shape)


def metric_wdm(cfg: ExperimentConfig) -> WdmConfig:
    return WdmConfig(n_channels=1, symbol_rate_gbd=cfg.symbol_rate_gbd,
                     spacing_ghz=cfg.spacing_ghz, rolloff=cfg.rolloff,
                     sps=cfg.metric_sps, pulse_shape=cfg.pulse_shape)


def fiber_for(cfg: ExperimentConfig) -> FiberParams:
    return FiberParams(beta2_ps2_per_km=cfg.beta2_ps2_per_km,
                       gamma_per_w_km=cfg.gamma_per_w_km,
                       alpha_db_per_km=cfg.alpha_db_per_km,
                       span_length_km=cfg.span_length_km, n_spans=cfg.n_spans)


def amp_for(cfg: ExperimentConfig) -> AmplifierParams:
    return AmplifierParams(noise_figure_db=cfg.noise_figure_db, noise_on=cfg.noise_on,
                           center_frequency_thz=cfg.center_frequency_thz)


def link_steps(cfg: ExperimentConfig) -> SsfmStepConfig:
    return SsfmStepConfig(steps_per_span=cfg.steps_per_span or None)


def metric_steps(cfg: ExperimentConfig) -> SsfmStepConfig:
    return SsfmStepConfig(steps_per_span=cfg.metric_steps_per_span or None)


def dm_bits_per_block(cfg: ExperimentConfig) -> int:
    return math.ceil(cfg.dm_blocklength * cfg.dm_rate_bits_per_amp - 1e-9)


class _PointState:
    """Everything one (scheme, power, n_t) point needs to encode blocks."""

    def __init__(self, cfg: ExperimentConfig, scheme: str, power_dbm: float, n_t: int):
        if scheme not in KNOWN_SCHEMES:
            raise HarnessError("unknown scheme %r" % (scheme,))
        if scheme not in SELECTION_SCHEMES and n_t != 1:
            raise HarnessError("%s has no candidate family; use n_t=1" % scheme)
        self.cfg = cfg
        self.scheme = scheme
        self.power_dbm = float(power_dbm)
        self.n_t = int(n_t)
        self.n = cfg.block_len_4d
        self.alphabet = AmplitudeAlphabet()
        n_amp = 4 * self.n
        if n_amp % cfg.dm_blocklength:
            raise HarnessError("4*block_len_4d must be a multiple of dm_blocklength")
        self.n_dm = n_amp // cfg.dm_blocklength
        k = dm_bits_per_block(cfg)
        self.k_base = k
        self.k_adj = k
        self.pilot_bits = 0
        self.pilot_syms = 0
        self.book = None
        self.pilots = None
        self.metric_fn = None
        self.dist = None
        self.sel_cfg = None

        if scheme == "mb":
            self.dist = mb_fit(cfg.dm_rate_bits_per_amp, self.alphabet)
            self.shaper = None
            self.realized_bits_4d = None  # ideal matcher: no rate loss
        elif scheme == "ess":
            self.shaper = PasShaper(trellis_for(cfg.dm_blocklength, k, self.alphabet),
                                    self.n)
            self.realized_bits_4d = self.shaper.bits_per_selection_block / self.n
        elif scheme == "ess+bsss":
            self.pilot_bits = bsss_pilot_bits(n_t)
            self.k_adj = k + math.ceil(self.pilot_bits / self.n_dm)
            self.shaper = PasShaper(
                trellis_for(cfg.dm_blocklength, self.k_adj, self.alphabet), self.n)
            self.payload_bits = self.shaper.bits_per_selection_block - self.pilot_bits
            self.book = ScramblerBook.generate(cfg.seed, n_t, self.payload_bits)
            self.sel_cfg = SelectionConfig(scheme="bsss", n_t=n_t,
                                           metric=cfg.selection_metric,
                                           block_len_4d=self.n)
            self.metric_fn = self._build_metric(payload=None)
            self.realized_bits_4d = self.payload_bits / self.n
        else:  # ess+siss
            self.pilot_syms = siss_pilot_symbols(n_t)
            self.shaper = PasShaper(trellis_for(cfg.dm_blocklength, k, self.alphabet),
                                    self.n)
            self.book = PermutationBook.generate(cfg.seed, n_t, self.n)
            self.pilots = PilotBook.build(self.alphabet)
            self.sel_cfg = SelectionConfig(scheme="siss", n_t=n_t,
                                           metric=cfg.selection_metric,
                                           block_len_4d=self.n)
            self.metric_fn = self._build_metric(
                payload=slice(self.pilot_syms, None) if self.pilot_syms else None)
            self.realized_bits_4d = self.shaper.bits_per_selection_block / self.n

        self.block_len_tx = self.n + self.pilot_syms
        self.time_fraction = self.n / self.block_len_tx

    def _build_metric(self, payload):
        cfg = self.cfg
        if cfg.selection_metric == "wk":
            return make_wk_metric(window=cfg.wk_window or None,
                                  stride=cfg.wk_stride or None,
                                  aggregate=cfg.wk_aggregate, payload=payload)
        return NliMetric(fiber_for(cfg), metric_wdm(cfg), metric_steps(cfg),
                         launch_power_dbm=self.power_dbm, payload=payload)

    def encode_block(self, rng: np.random.Generator):
        """One transmit block: (symbols (2, block_len_tx), cost, index)."""
        if self.scheme == "mb":
            amps = mb_sample(self.dist, rng, 4 * self.n)
            signs = rng.integers(0, 2, size=4 * self.n, dtype=np.uint8)
            return pas_map(amps, signs), math.nan, 0
        if self.scheme == "ess":
            bits = rng.integers(0, 2, size=self.shaper.bits_per_selection_block,
                                dtype=np.uint8)
            return self.shaper.encode(bits), math.nan, 0
        if self.scheme == "ess+bsss":
            bits = rng.integers(0, 2, size=self.payload_bits, dtype=np.uint8)
            res = bsss_encode(bits, self.book, self.sel_cfg, self.shaper.encode,
                              self.metric_fn)
            return res.symbols, res.cost, res.index
        bits = rng.integers(0, 2, size=self.shaper.bits_per_selection_block,
                            dtype=np.uint8)
        payload = self.shaper.encode(bits)
        res = siss_encode(payload, self.book, self.pilots, self.sel_cfg,
                          self.metric_fn)
        return res.symbols, res.cost, res.index

    def decoder_amp_priors(self, tx_payload: np.ndarray) -> np.ndarray:
        if self.scheme == "mb":
            return self.dist.probs
        return empirical_amp_probs(tx_payload, self.alphabet)


def empirical_amp_probs(symbols: np.ndarray, alphabet: AmplitudeAlphabet | None = None
                        ) -> np.ndarray:
    """Relative frequency of each amplitude level over both rails."""
    alphabet = alphabet or AmplitudeAlphabet()
    s = np.asarray(symbols)
    vals = np.concatenate([np.abs(s.real).ravel(), np.abs(s.imag).ravel()])
    levels = alphabet.as_array()
    mids = (levels[1:] + levels[:-1]) / 2.0
    idx = np.searchsorted(mids, vals)
    counts = np.bincount(idx, minlength=levels.size).astype(float)
    if counts.sum() == 0:
        raise HarnessError("no symbols to estimate amplitude frequencies from")
    return counts / counts.sum()


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    metric: str
    power_dbm: float
    n_t: int
    air_bits_4d: float
    se_bits_s_hz: float
    ci95: float
    sel_metric_mean: float
    wall_s: float


@dataclass
class PointDetail:
    """Per-point diagnostics behind a ResultRow."""

    row: ResultRow
    prior_entropy_bits_4d: float
    realized_bits_4d: float | None
    rate_loss_bits_4d: float
    time_fraction: float
    noise_variance: float
    equivocation_per_block: np.ndarray  # (kept_blocks, n) bits
    sel_costs: np.ndarray               # (channels, blocks) nan where no selection
    kept_blocks: np.ndarray             # indices into the block axis
    n_discarded: int
    resolved: dict


def _ase_noise_source(seed: int, block_indices: np.ndarray, per_block_shape: tuple):
    idx = [int(b) for b in block_indices]

    def unit_noise(span: int) -> np.ndarray:
        return np.stack([
            standard_complex_noise(substream(seed, TAG_ASE, b, span), per_block_shape)
            for b in idx
        ])
    return unit_noise


def _propagate_and_receive(cfg: ExperimentConfig, tx_blocks: np.ndarray,
                           power_dbm: float, block_indices: np.ndarray):
    """WDM-propagate (channels, blocks, 2, T) symbols; receive center channel.

    Returns (rx_symbols (blocks, 2, T), tx_center (blocks, 2, T)).
    """
    wdm = link_wdm(cfg)
    fiber = fiber_for(cfg)
    amp = amp_for(cfg)
    channels = [rrc_modulate(tx_blocks[c], wdm, power_dbm)
                for c in range(cfg.n_channels)]
    composite = wdm_mux(channels, wdm)
    noise = None
    if cfg.noise_on:
        noise = _ase_noise_source(cfg.seed, block_indices,
                                  (2, composite.n_samples))
    out = propagate_link(composite, fiber, amp, link_steps(cfg),
                         unit_noise_for_span=noise)
    center = wdm.center_channel
    chan = wdm_demux(out, wdm, center)
    rx = RxChain.for_link(fiber, wdm)
    y = matched_filter_sample(cdc(chan, rx), rx)
    return y, tx_blocks[center]


def run_point_detailed(cfg: ExperimentConfig, scheme: str, power_dbm: float,
                       n_t: int = 1) -> PointDetail:
    t0 = time.perf_counter()
    st = _PointState(cfg, scheme, power_dbm, n_t)
    n_ch, n_blk = cfg.n_channels, cfg.n_blocks
    tx = np.empty((n_ch, n_blk, 2, st.block_len_tx), dtype=complex)
    costs = np.full((n_ch, n_blk), math.nan)
    indices = np.zeros((n_ch, n_blk), dtype=int)
    for c in range(n_ch):
        for b in range(n_blk):
            rng = substream(cfg.seed, TAG_DATA, c, b)
            tx[c, b], costs[c, b], indices[c, b] = st.encode_block(rng)

    y, tx_c = _propagate_and_receive(cfg, tx, power_dbm,
                                     np.arange(n_blk))
    pay = slice(st.pilot_syms, None)
    y_pay, theta = mean_phase_comp(y[..., pay], tx_c[..., pay])

    keep = np.ones(n_blk, dtype=bool)
    if st.pilot_syms:
        y_pil = y[..., :st.pilot_syms] * np.exp(-1j * theta)[..., None]
        center = link_wdm(cfg).center_channel
        for b in range(n_blk):
            if st.pilots.detect_index(y_pil[b]) != indices[center, b]:
                keep[b] = False
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise HarnessError("all blocks discarded by pilot detection")

    tx_kept = tx_c[kept][..., pay]
    y_kept = y_pay[kept]
    amp_probs = st.decoder_amp_priors(tx_kept)
    priors = constellation_priors(pas_constellation(st.alphabet), amp_probs,
                                  st.alphabet)
    air = air_bitwise(tx_kept, y_kept, priors)
    prior4 = air.prior_entropy_bits_per_4d
    if st.realized_bits_4d is None:
        rate_loss = 0.0
    else:
        rate_loss = max(0.0, prior4 - st.realized_bits_4d)
    overhead = SelectionOverhead(bits_per_4d=rate_loss,
                                 time_fraction=st.time_fraction)
    se = se_from_air(air.air_bits_per_4d, link_wdm(cfg), overhead)
    wall = time.perf_counter() - t0 if cfg.include_timing else 0.0
    sel_mean = float(np.nanmean(costs)) if scheme in SELECTION_SCHEMES else math.nan
    row = ResultRow(scheme=scheme,
                    metric=cfg.selection_metric if scheme in SELECTION_SCHEMES
                    else "none",
                    power_dbm=float(power_dbm), n_t=int(n_t),
                    air_bits_4d=air.air_bits_per_4d, se_bits_s_hz=se,
                    ci95=air.ci95_bits_per_4d, sel_metric_mean=sel_mean,
                    wall_s=wall)
    return PointDetail(row=row, prior_entropy_bits_4d=prior4,
                       realized_bits_4d=st.realized_bits_4d,
                       rate_loss_bits_4d=rate_loss,
                       time_fraction=st.time_fraction,
                       noise_variance=air.noise_variance,
                       equivocation_per_block=air.equivocation_per_4d.reshape(
                           kept.size, st.n),
                       sel_costs=costs, kept_blocks=kept,
                       n_discarded=int(n_blk - kept.size),
                       resolved=_resolved_point(st))


def run_point(cfg: ExperimentConfig, scheme: str, power_dbm: float,
              n_t: int = 1) -> ResultRow:
    return run_point_detailed(cfg, scheme, power_dbm, n_t).row


def _resolved_point(st: _PointState) -> dict:
    out = {
        "scheme": st.scheme,
        "n_t": st.n_t,
        "dm_bits_per_block": st.k_base,
        "dm_bits_per_block_adjusted": st.k_adj,
        "pilot_bits": st.pilot_bits,
        "pilot_symbols": st.pilot_syms,
        "realized_bits_per_4d": st.realized_bits_4d,
        "time_fraction": st.time_fraction,
    }
    if st.shaper is not None:
        out["ess_max_energy"] = st.shaper.trellis.emax
    if st.dist is not None:
        out["mb_lambda"] = st.dist.lam
        out["mb_probs"] = list(st.dist.probs)
    return out


def ss_bound_estimate(cfg: ExperimentConfig, power_dbm: float | None = None,
                      eta: float | None = None, m_total: int | None = None
                      ) -> PointDetail:
    """Post-selection rate bound from the best eta fraction of m_total blocks.

    Center-channel blocks are scored with the channel-emulation cost at the
    launch power under test; the cheapest ceil(eta*m_total) blocks are
    propagated through the full WDM link and the achievable rate over that
    subset is adjusted by log2(eta)/n before the spectral-efficiency
    conversion. eta=1 reproduces the plain sphere-shaping point exactly.
    """
    t0 = time.perf_counter()
    power = cfg.powers_dbm[0] if power_dbm is None else float(power_dbm)
    eta = cfg.bound_eta if eta is None else float(eta)
    m_total = cfg.bound_m_total if m_total is None else int(m_total)
    if not 0.0 < eta <= 1.0:
        raise HarnessError("eta must be in (0, 1]")
    if m_total * eta < 30.0 - 1e-12:
        raise HarnessError("need m_total*eta >= 30 kept blocks, got %g"
                           % (m_total * eta))
    st = _PointState(cfg, "ess", power, 1)
    n_ch = cfg.n_channels
    tx = np.empty((n_ch, m_total, 2, st.n), dtype=complex)
    for c in range(n_ch):
        for b in range(m_total):
            rng = substream(cfg.seed, TAG_DATA, c, b)
            tx[c, b], _, _ = st.encode_block(rng)

    center = link_wdm(cfg).center_channel
    scorer = NliMetric(fiber_for(cfg), metric_wdm(cfg), metric_steps(cfg),
                       launch_power_dbm=power)
    costs = np.empty(m_total)
    chunk = 64
    for lo in range(0, m_total, chunk):
        hi = min(lo + chunk, m_total)
        costs[lo:hi] = scorer(tx[center, lo:hi])

    n_keep = math.ceil(eta * m_total)
    order = np.argsort(costs, kind="stable")
    kept = np.sort(order[:n_keep])

    y, tx_c = _propagate_and_receive(cfg, tx[:, kept], power, kept)
    y_pay, _ = mean_phase_comp(y, tx_c)
    amp_probs = empirical_amp_probs(tx_c, st.alphabet)
    priors = constellation_priors(pas_constellation(st.alphabet), amp_probs,
                                  st.alphabet)
    air = air_bitwise(tx_c, y_pay, priors)
    penalty = math.log2(eta) / st.n
    air_adj = max(0.0, air.air_bits_per_4d + penalty)
    prior4 = air.prior_entropy_bits_per_4d
    rate_loss = max(0.0, prior4 - st.realized_bits_4d)
    se = se_from_air(air_adj, link_wdm(cfg), SelectionOverhead(bits_per_4d=rate_loss))
    wall = time.perf_counter() - t0 if cfg.include_timing else 0.0
    row = ResultRow(scheme="bound", metric="nli", power_dbm=power,
                    n_t=int(round(1.0 / eta)), air_bits_4d=air_adj,
                    se_bits_s_hz=se, ci95=air.ci95_bits_per_4d,
                    sel_metric_mean=float(costs[kept].mean()), wall_s=wall)
    resolved = _resolved_point(st)
    resolved.update({"scheme": "bound", "eta": eta, "m_total": m_total,
                     "rate_penalty_bits_per_4d": penalty,
                     "rate_penalty_formula": "log2(eta)/block_len_4d"})
    return PointDetail(row=row, prior_entropy_bits_4d=prior4,
                       realized_bits_4d=st.realized_bits_4d,
                       rate_loss_bits_4d=rate_loss, time_fraction=1.0,
                       noise_variance=air.noise_variance,
                       equivocation_per_block=air.equivocation_per_4d.reshape(
                           kept.size, st.n),
                       sel_costs=costs[None, :], kept_blocks=kept,
                       n_discarded=0, resolved=resolved)


def _point_worker(args):
    text, scheme, power, n_t = args
    cfg = parse_config(text)
    try:
        detail = run_point_detailed(cfg, scheme, power, n_t)
        return detail.row, None, detail.resolved
    except Exception as exc:  # propagate as a diagnostic row
        row = ResultRow(scheme=scheme,
                        metric=cfg.selection_metric
                        if scheme in SELECTION_SCHEMES else "none",
                        power_dbm=float(power), n_t=int(n_t),
                        air_bits_4d=math.nan, se_bits_s_hz=math.nan,
                        ci95=math.nan, sel_metric_mean=math.nan, wall_s=0.0)
        return row, "%s: %s" % (type(exc).__name__, exc), None


def sweep(cfg: ExperimentConfig):
    """All (scheme, power, n_t) points plus best-power summary rows.

    Returns (rows, errors, resolved) where errors maps a point label to the
    diagnostic message of a failed point. Schemes without a candidate family
    run once per power with n_t pinned to 1.
    """
    points = []
    for scheme in cfg.schemes:
        nts = cfg.n_t_values if scheme in SELECTION_SCHEMES else (1,)
        for power in cfg.powers_dbm:
            for n_t in nts:
                points.append((config_text(cfg), scheme, float(power), int(n_t)))

    if cfg.max_workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.max_workers) as pool:
            outcomes = list(pool.map(_point_worker, points))
    else:
        outcomes = [_point_worker(p) for p in points]

    rows, errors, resolved = [], {}, []
    for (text, scheme, power, n_t), (row, err, res) in zip(points, outcomes):
        rows.append(row)
        if err is not None:
            errors["%s p=%g n_t=%d" % (scheme, power, n_t)] = err
        elif res is not None:
            resolved.append(res)
    rows.sort(key=lambda r: (r.scheme, r.power_dbm, r.n_t))

    summaries = []
    for scheme in sorted(set(r.scheme for r in rows)):
        for n_t in sorted(set(r.n_t for r in rows if r.scheme == scheme)):
            group = [r for r in rows if r.scheme == scheme and r.n_t == n_t
                     and not math.isnan(r.se_bits_s_hz)]
            if not group:
                continue
            best = max(group, key=lambda r: r.se_bits_s_hz)
            summaries.append(replace(best, scheme="best:" + scheme))
    summaries.sort(key=lambda r: (r.scheme, r.power_dbm, r.n_t))
    return rows + summaries, errors, resolved


def _fmt_float(x: float) -> str:
    return "%.12g" % x


def _row_line(r: ResultRow) -> str:
    return ",".join([r.scheme, r.metric, _fmt_float(r.power_dbm), str(int(r.n_t)),
                     _fmt_float(r.air_bits_4d), _fmt_float(r.se_bits_s_hz),
                     _fmt_float(r.ci95), _fmt_float(r.sel_metric_mean),
                     _fmt_float(r.wall_s)])


def emit_csv(rows: Iterable[ResultRow], path: str) -> None:
    rows = list(rows)
    if not rows:
        raise HarnessError("no rows to write")
    text = "\n".join([CSV_HEADER] + [_row_line(r) for r in rows]) + "\n"
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def parse_csv(path: str) -> list[ResultRow]:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise HarnessError("missing or wrong CSV header")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise HarnessError("bad CSV row: %r" % line)
        out.append(ResultRow(scheme=parts[0], metric=parts[1],
                             power_dbm=float(parts[2]), n_t=int(parts[3]),
                             air_bits_4d=float(parts[4]),
                             se_bits_s_hz=float(parts[5]), ci95=float(parts[6]),
                             sel_metric_mean=float(parts[7]),
                             wall_s=float(parts[8])))
    return out


def resolve_defaults(cfg: ExperimentConfig) -> dict:
    """Values filled in for everything the config leaves implicit."""
    fiber = fiber_for(cfg)
    steps = link_steps(cfg).resolve(fiber, 0.0)
    msteps = metric_steps(cfg).resolve(fiber, 0.0)
    k = dm_bits_per_block(cfg)
    n = cfg.block_len_4d
    wk_w = cfg.wk_window or min(128, n)
    return {
        "dm_bits_per_block": k,
        "dm_realized_bits_per_4d": (4 * n // cfg.dm_blocklength * k + 4 * n) / n,
        "link_steps_per_span": steps,
        "metric_steps_per_span": msteps,
        "wk_window": wk_w,
        "wk_stride": cfg.wk_stride or max(1, wk_w // 2),
        "bound_rate_penalty_formula": "log2(eta)/block_len_4d",
        "ase_seed_scheme": "substream(seed, tag, indices) per data/noise/book draw",
    }


def write_meta(csv_path: str, cfg: ExperimentConfig, errors: dict,
               resolved_points: list) -> str:
    meta = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "version": __version__,
        "config": config_text(cfg).strip().splitlines(),
        "resolved_defaults": resolve_defaults(cfg),
        "points": resolved_points,
        "errors": errors,
    }
    path = csv_path + ".meta.json"
    with open(path, "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
