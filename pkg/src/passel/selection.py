"""Sequence selection for shaped transmission blocks.

Two schemes share one pattern: derive a small family of candidate blocks
from the same payload, score each candidate with a cost function, transmit
the cheapest, and mark the choice with pilots so the receiver can invert it.

Bit-level selection XORs the payload bits with fixed scrambling masks before
shaping and prepends the candidate index as pilot bits that are shaped along
with the data. Symbol-level selection permutes the shaped 4D symbols and
prepends pilot symbols drawn from the highest-energy constellation corners,
four index bits per pilot symbol.

Costs: a windowed kurtosis of the per-4D-symbol energies (cheap, local), or
the residual distortion after a noiseless single-channel emulation of the
fiber link (expensive, direct). Lower is better; ties go to the lowest
candidate index. Candidate families are nested by construction: the books
for a smaller family are a prefix of those for a larger one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import (
    AmplifierParams,
    FiberParams,
    SsfmStepConfig,
    WdmConfig,
    propagate_link,
    rrc_modulate,
)
from .receiver import RxChain, cdc, matched_filter_sample, mean_phase_comp
from .seeding import TAG_PERMUTATION, TAG_SCRAMBLER, substream
from .shaping import AmplitudeAlphabet

__all__ = [
    "SelectionError",
    "SelectionConfig",
    "SelectionResult",
    "ScramblerBook",
    "PermutationBook",
    "PilotBook",
    "generate_books",
    "bsss_pilot_bits",
    "siss_pilot_symbols",
    "index_to_pilot_bits",
    "pilot_bits_to_index",
    "bsss_encode",
    "bsss_decode",
    "siss_encode",
    "siss_decode",
    "wk_metric",
    "make_wk_metric",
    "NliMetric",
]

_MAX_REDRAWS = 100000


class SelectionError(ValueError):
    pass


def bsss_pilot_bits(n_t: int) -> int:
    """Index bits carried in-band for an n_t-way bit-level selection."""
    if n_t < 1:
        raise SelectionError("need at least one candidate")
    return 0 if n_t == 1 else math.ceil(math.log2(n_t))


def siss_pilot_symbols(n_t: int) -> int:
    """Pilot 4D symbols for an n_t-way symbol-level selection (4 bits each)."""
    if n_t < 1:
        raise SelectionError("need at least one candidate")
    return 0 if n_t == 1 else math.ceil(math.log2(n_t) / 4.0)


@dataclass(frozen=True)
class SelectionConfig:
    """What gets selected: scheme, family size, cost function, block length."""

    scheme: str = "bsss"
    n_t: int = 4
    metric: str = "nli"
    block_len_4d: int = 256

    def __post_init__(self):
        if self.scheme not in ("bsss", "siss"):
            raise SelectionError("unknown scheme %r" % (self.scheme,))
        if self.metric not in ("nli", "wk"):
            raise SelectionError("unknown metric %r" % (self.metric,))
        if self.n_t < 1:
            raise SelectionError("need at least one candidate")
        if self.block_len_4d < 1:
            raise SelectionError("empty block")

    @property
    def pilot_bits(self) -> int:
        return bsss_pilot_bits(self.n_t) if self.scheme == "bsss" else 0

    @property
    def pilot_symbols(self) -> int:
        return siss_pilot_symbols(self.n_t) if self.scheme == "siss" else 0


@dataclass(frozen=True)
class SelectionResult:
    """Chosen candidate plus the evidence behind the choice."""

    symbols: np.ndarray
    index: int
    cost: float
    costs: np.ndarray


def index_to_pilot_bits(index: int, n_bits: int) -> np.ndarray:
    if index < 0 or (n_bits < index.bit_length()):
        raise SelectionError("index %d does not fit %d pilot bits" % (index, n_bits))
    return np.array([(index >> (n_bits - 1 - j)) & 1 for j in range(n_bits)],
                    dtype=np.uint8)


def pilot_bits_to_index(bits: np.ndarray) -> int:
    out = 0
    for b in np.asarray(bits).astype(int):
        out = (out << 1) | (b & 1)
    return out


@dataclass(frozen=True)
class ScramblerBook:
    """Fixed XOR masks, index 0 the all-zeros identity.

    Masks are drawn one independent substream per index, so the first rows
    of a larger book equal a smaller book from the same seed.
    """

    seed: int
    masks: np.ndarray  # (n_t, n_bits) uint8

    @classmethod
    def generate(cls, seed: int, n_t: int, n_bits: int) -> "ScramblerBook":
        if n_t < 1 or n_bits < 1:
            raise SelectionError("book needs n_t >= 1 and a positive mask length")
        if n_t > 2 ** n_bits:
            raise SelectionError("not enough distinct masks of %d bits" % n_bits)
        masks = np.zeros((n_t, n_bits), dtype=np.uint8)
        seen = {masks[0].tobytes()}
        for i in range(1, n_t):
            rng = substream(seed, TAG_SCRAMBLER, i)
            for _ in range(_MAX_REDRAWS):
                cand = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
                key = cand.tobytes()
                if key not in seen:
                    break
            else:
                raise SelectionError("could not draw a fresh mask")
            seen.add(key)
            masks[i] = cand
        masks.setflags(write=False)
        return cls(seed=seed, masks=masks)

    @property
    def n_t(self) -> int:
        return self.masks.shape[0]


@dataclass(frozen=True)
class PermutationBook:
    """Fixed position permutations, index 0 the identity, with inverses."""

    seed: int
    perms: np.ndarray     # (n_t, n) int64
    inverses: np.ndarray  # (n_t, n) int64

    @classmethod
    def generate(cls, seed: int, n_t: int, n_positions: int) -> "PermutationBook":
        if n_t < 1 or n_positions < 1:
            raise SelectionError("book needs n_t >= 1 and a positive length")
        if n_t > 1 and n_positions < 2:
            raise SelectionError("cannot permute a single position")
        perms = np.empty((n_t, n_positions), dtype=np.int64)
        perms[0] = np.arange(n_positions)
        seen = {perms[0].tobytes()}
        for i in range(1, n_t):
            rng = substream(seed, TAG_PERMUTATION, i)
            for _ in range(_MAX_REDRAWS):
                cand = rng.permutation(n_positions).astype(np.int64)
                key = cand.tobytes()
                if key not in seen:
                    break
            else:
                raise SelectionError("could not draw a fresh permutation")
            seen.add(key)
            perms[i] = cand
        inv = np.argsort(perms, axis=1)
        perms.setflags(write=False)
        inv.setflags(write=False)
        return cls(seed=seed, perms=perms, inverses=inv)

    @property
    def n_t(self) -> int:
        return self.perms.shape[0]


@dataclass(frozen=True)
class PilotBook:
    """16 dual-polarization pilot symbols on the outermost QAM corners.

    Each polarization carries one of the four maximum-magnitude points
    (+-A +- iA); two corner index bits per polarization give a 4-bit label
    per pilot symbol, x polarization in the high bits.
    """

    points: np.ndarray  # (16, 2) complex

    @classmethod
    def build(cls, alphabet: AmplitudeAlphabet | None = None) -> "PilotBook":
        a = float((alphabet or AmplitudeAlphabet()).max_level)
        corners = np.array([a + 1j * a, a - 1j * a, -a + 1j * a, -a - 1j * a])
        pts = np.empty((16, 2), dtype=complex)
        for cx in range(4):
            for cy in range(4):
                pts[(cx << 2) | cy] = (corners[cx], corners[cy])
        pts.setflags(write=False)
        return cls(points=pts)

    def symbols_for_index(self, index: int, n_pilots: int) -> np.ndarray:
        """(2, n_pilots) pilot prefix spelling the index base-16, MSB first."""
        if index < 0 or index >= max(16 ** n_pilots, 1):
            raise SelectionError("index %d does not fit %d pilot symbols"
                                 % (index, n_pilots))
        if n_pilots == 0:
            return np.empty((2, 0), dtype=complex)
        digits = [(index >> (4 * (n_pilots - 1 - d))) & 15 for d in range(n_pilots)]
        return self.points[digits].T.copy()

    def detect_index(self, received: np.ndarray) -> int:
        """Minimum-distance detection of the pilot prefix, digit by digit."""
        rx = np.asarray(received, dtype=complex)
        if rx.ndim != 2 or rx.shape[0] != 2:
            raise SelectionError("expected a (2, n_pilots) pilot block")
        out = 0
        for d in range(rx.shape[1]):
            d2 = np.abs(rx[0, d] - self.points[:, 0]) ** 2 \
                + np.abs(rx[1, d] - self.points[:, 1]) ** 2
            out = (out << 4) | int(np.argmin(d2))
        return out


def generate_books(seed: int, cfg: SelectionConfig, payload_bits: int | None = None,
                   alphabet: AmplitudeAlphabet | None = None):
    """Book(s) for the configured scheme, reproducible from the seed."""
    if cfg.scheme == "bsss":
        if payload_bits is None:
            raise SelectionError("bit-level books need the payload bit count")
        return ScramblerBook.generate(seed, cfg.n_t, payload_bits)
    perm = PermutationBook.generate(seed, cfg.n_t, cfg.block_len_4d)
    return perm, PilotBook.build(alphabet)


def _score_candidates(metric_fn: Callable, stack: np.ndarray) -> np.ndarray:
    """Evaluate a metric over (n_t, 2, T) candidates, batched when possible."""
    n_t = stack.shape[0]
    try:
        costs = np.asarray(metric_fn(stack), dtype=float)
        if costs.shape == (n_t,):
            return costs
    except (TypeError, ValueError):
        pass
    return np.array([float(metric_fn(stack[i])) for i in range(n_t)])


def bsss_encode(info_bits: np.ndarray, book: ScramblerBook, cfg: SelectionConfig,
                dm_chain: Callable[[np.ndarray], np.ndarray],
                metric_fn: Callable) -> SelectionResult:
    """Score all scrambled variants of one payload and keep the cheapest.

    Candidate i shapes pilot_bits(i) followed by mask_i XOR payload through
    dm_chain (distribution matcher plus mapper for a whole block). Ties
    break to the lowest index.
    """
    if cfg.scheme != "bsss":
        raise SelectionError("config is not bit-level selection")
    bits = np.asarray(info_bits, dtype=np.uint8).ravel()
    if book.n_t < cfg.n_t:
        raise SelectionError("book smaller than the candidate family")
    if book.masks.shape[1] != bits.size:
        raise SelectionError("mask length %d != payload length %d"
                             % (book.masks.shape[1], bits.size))
    npil = cfg.pilot_bits
    cands = []
    for i in range(cfg.n_t):
        block = np.concatenate([index_to_pilot_bits(i, npil),
                                book.masks[i] ^ bits])
        cands.append(dm_chain(block))
    stack = np.stack(cands)
    costs = _score_candidates(metric_fn, stack)
    best = int(np.argmin(costs))
    return SelectionResult(symbols=stack[best], index=best,
                           cost=float(costs[best]), costs=costs)


def bsss_decode(received_bits: np.ndarray, book: ScramblerBook,
                cfg: SelectionConfig) -> np.ndarray:
    """Strip the pilot index bits and undo that candidate's mask."""
    if cfg.scheme != "bsss":
        raise SelectionError("config is not bit-level selection")
    bits = np.asarray(received_bits, dtype=np.uint8).ravel()
    npil = cfg.pilot_bits
    if bits.size < npil + book.masks.shape[1]:
        raise SelectionError("received block shorter than pilots plus payload")
    idx = pilot_bits_to_index(bits[:npil])
    if idx >= cfg.n_t:
        raise SelectionError("pilot index %d out of range" % idx)
    return bits[npil:] ^ book.masks[idx]


def siss_encode(symbols: np.ndarray, book: PermutationBook, pilots: PilotBook,
                cfg: SelectionConfig, metric_fn: Callable) -> SelectionResult:
    """Score all position-permuted variants of one shaped block.

    Candidate i is pilot prefix for i followed by the payload reordered by
    permutation i; permutation 0 is the identity. The pilot prefix rides
    along in each candidate so channel-emulation costs see it, but cost
    functions are expected to restrict themselves to the payload span.
    """
    if cfg.scheme != "siss":
        raise SelectionError("config is not symbol-level selection")
    s = np.asarray(symbols, dtype=complex)
    if s.ndim != 2 or s.shape[0] != 2:
        raise SelectionError("expected a (2, n) payload block")
    if book.n_t < cfg.n_t:
        raise SelectionError("book smaller than the candidate family")
    if book.perms.shape[1] != s.shape[1]:
        raise SelectionError("permutation length %d != block length %d"
                             % (book.perms.shape[1], s.shape[1]))
    npil = cfg.pilot_symbols
    cands = np.empty((cfg.n_t, 2, npil + s.shape[1]), dtype=complex)
    for i in range(cfg.n_t):
        cands[i, :, :npil] = pilots.symbols_for_index(i, npil)
        cands[i, :, npil:] = s[:, book.perms[i]]
    costs = _score_candidates(metric_fn, cands)
    best = int(np.argmin(costs))
    return SelectionResult(symbols=cands[best], index=best,
                           cost=float(costs[best]), costs=costs)


def siss_decode(received: np.ndarray, book: PermutationBook, pilots: PilotBook,
                cfg: SelectionConfig) -> tuple[np.ndarray, int]:
    """Detect the pilot prefix and un-permute the payload.

    Returns (payload symbols, detected index). A detected index outside the
    candidate family raises; callers drop such blocks from statistics.
    """
    if cfg.scheme != "siss":
        raise SelectionError("config is not symbol-level selection")
    rx = np.asarray(received, dtype=complex)
    npil = cfg.pilot_symbols
    if rx.ndim != 2 or rx.shape[0] != 2 or rx.shape[1] <= npil:
        raise SelectionError("received block too short for pilots plus payload")
    idx = pilots.detect_index(rx[:, :npil]) if npil else 0
    if idx >= cfg.n_t:
        raise SelectionError("detected pilot index %d out of range" % idx)
    payload = rx[:, npil:]
    return payload[:, book.inverses[idx]], idx


def wk_metric(symbols: np.ndarray, window: int | None = None,
              stride: int | None = None, aggregate: str = "mean",
              payload: slice | None = None) -> float | np.ndarray:
    """Windowed kurtosis of per-4D-symbol energies; lower is smoother.

    For each length-`window` span of consecutive 4D symbols (default
    min(128, n), stride half a window), the span's kurtosis is
    mean(e^2)/mean(e)^2 with e the dual-pol symbol energy. Aggregates the
    spans by mean (default) or max. Batched (..., 2, n) input returns one
    value per leading element.
    """
    s = np.asarray(symbols, dtype=complex)
    if s.ndim < 2 or s.shape[-2] != 2:
        raise SelectionError("expected (..., 2, n) symbols")
    if payload is not None:
        s = s[..., payload]
    n = s.shape[-1]
    if n < 1:
        raise SelectionError("empty block")
    w = min(128, n) if window is None else int(window)
    if not 1 <= w <= n:
        raise SelectionError("window must be in [1, %d]" % n)
    st = max(1, w // 2) if stride is None else int(stride)
    if not 1 <= st <= w:
        raise SelectionError("stride must be in [1, window]")
    if aggregate not in ("mean", "max"):
        raise SelectionError("aggregate must be mean or max")
    e = (np.abs(s) ** 2).sum(axis=-2)
    offsets = range(0, n - w + 1, st)
    kappas = np.empty(s.shape[:-2] + (len(offsets),))
    for j, off in enumerate(offsets):
        win = e[..., off:off + w]
        m1 = win.mean(axis=-1)
        if np.any(m1 == 0.0):
            raise SelectionError("all-zero energy window")
        kappas[..., j] = (win ** 2).mean(axis=-1) / (m1 * m1)
    out = kappas.mean(axis=-1) if aggregate == "mean" else kappas.max(axis=-1)
    return float(out) if out.ndim == 0 else out


def make_wk_metric(window: int | None = None, stride: int | None = None,
                   aggregate: str = "mean", payload: slice | None = None) -> Callable:
    """Windowed-kurtosis cost function with frozen settings."""
    def metric(symbols: np.ndarray):
        return wk_metric(symbols, window=window, stride=stride,
                         aggregate=aggregate, payload=payload)
    return metric


class NliMetric:
    """Residual distortion after a noiseless single-channel link emulation.

    Modulates the candidate block alone on the fiber under test (amplifiers
    transparent, no noise), runs the full receiver chain, and returns the
    Euclidean norm of the symbol error over the payload span. Captures the
    nonlinear interference the block generates for itself.
    """

    def __init__(self, fiber: FiberParams, wdm: WdmConfig,
                 step_cfg: SsfmStepConfig | None = None,
                 launch_power_dbm: float = 0.0,
                 payload: slice | None = None):
        if wdm.n_channels != 1:
            raise SelectionError("metric emulation is single-channel")
        self.fiber = fiber
        self.wdm = wdm
        self.step_cfg = step_cfg or SsfmStepConfig()
        self.launch_power_dbm = launch_power_dbm
        self.payload = payload if payload is not None else slice(None)
        self.amp = AmplifierParams(noise_on=False)
        self.rx = RxChain.for_link(fiber, wdm)

    def __call__(self, symbols: np.ndarray) -> float | np.ndarray:
        x = np.asarray(symbols, dtype=complex)
        if x.ndim < 2 or x.shape[-2] != 2:
            raise SelectionError("expected (..., 2, n) symbols")
        tx = rrc_modulate(x, self.wdm, self.launch_power_dbm)
        out = propagate_link(tx, self.fiber, self.amp, self.step_cfg)
        y = matched_filter_sample(cdc(out, self.rx), self.rx)
        xp = x[..., self.payload]
        yp, _ = mean_phase_comp(y[..., self.payload], xp)
        cost = np.sqrt((np.abs(yp - xp) ** 2).sum(axis=(-2, -1)))
        return float(cost) if cost.ndim == 0 else cost
