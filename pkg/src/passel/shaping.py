"""Amplitude shaping for probabilistic amplitude shaping (PAS) transmitters.

Three pieces live here:

* enumerative sphere shaping (ESS): a fixed-length distribution matcher that
  maps k-bit indices to minimum-lexicographic amplitude sequences inside an
  energy sphere, via an arbitrary-precision counting table;
* Maxwell-Boltzmann (MB) amplitude distributions: entropy-targeted fit and
  i.i.d. sampling, the classic linear-regime baseline;
* the PAS rail mapping between (amplitude, sign-bit) pairs and dual-pol
  QAM symbols.

Symbol blocks are complex ndarrays of shape (2, n): row 0 is the x
polarization, row 1 the y polarization. Amplitude vectors run over rails in
fixed order (xI, xQ, yI, yQ) per 4D symbol, so a block of n symbols consumes
4n amplitudes and 4n sign bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "AmplitudeAlphabet",
    "ShapingConfig",
    "EssTrellis",
    "MbDistribution",
    "ess_choose_emax",
    "ess_build_trellis",
    "ess_encode",
    "ess_decode",
    "ess_encode_index",
    "ess_decode_index",
    "mb_fit",
    "mb_sample",
    "pas_map",
    "pas_demap_hard",
    "bits_to_index",
    "index_to_bits",
    "PasShaper",
]

# guard against float fuzz in N*R before取 the ceiling
_RATE_EPS = 1e-9


class ShapingError(ValueError):
    """Raised for infeasible shaping configurations or inadmissible inputs."""


@dataclass(frozen=True)
class AmplitudeAlphabet:
    """Ordered amplitude levels used on every QAM rail.

    Levels must be positive, strictly increasing, and a power of two in
    count (each amplitude carries log2(len) bits under a dyadic labeling).
    The default {1, 3, 5, 7} spans 64QAM per polarization.
    """

    levels: tuple[float, ...] = (1.0, 3.0, 5.0, 7.0)

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        if len(lv) == 0 or len(lv) & (len(lv) - 1):
            raise ShapingError("alphabet size must be a power of two, got %d" % len(lv))
        if any(x <= 0 for x in lv):
            raise ShapingError("amplitude levels must be positive")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ShapingError("amplitude levels must be strictly increasing")
        object.__setattr__(self, "levels", lv)

    @property
    def size(self) -> int:
        return len(self.levels)

    @property
    def bits_per_amplitude(self) -> int:
        return self.size.bit_length() - 1

    @property
    def max_level(self) -> float:
        return self.levels[-1]

    def squared_int_levels(self) -> tuple[int, ...]:
        """Squared levels on the integer energy lattice.

        The sphere-shaping trellis indexes energy on the integer lattice of
        squared levels, so each level^2 must round cleanly to an integer
        (true for all odd-integer QAM rail alphabets).
        """
        sq = []
        for lv in self.levels:
            s = lv * lv
            r = round(s)
            if abs(s - r) > 1e-9:
                raise ShapingError(
                    "squared level %g is not on the integer energy lattice" % lv
                )
            sq.append(int(r))
        return tuple(sq)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


@dataclass(frozen=True)
class ShapingConfig:
    """Fixed-length distribution-matcher geometry: N amplitudes at R bits each."""

    blocklength: int = 256
    rate_bits_per_amplitude: float = 1.3
    alphabet: AmplitudeAlphabet = field(default_factory=AmplitudeAlphabet)

    def __post_init__(self):
        if self.blocklength < 1:
            raise ShapingError("blocklength must be >= 1")
        r = float(self.rate_bits_per_amplitude)
        if not 0 < r <= self.alphabet.bits_per_amplitude:
            raise ShapingError(
                "rate must be in (0, %d] bits/amplitude" % self.alphabet.bits_per_amplitude
            )

    @property
    def bits_per_block(self) -> int:
        """k = ceil(N * R), the input block size in bits."""
        return math.ceil(self.blocklength * self.rate_bits_per_amplitude - _RATE_EPS)


def _lattice(alphabet: AmplitudeAlphabet) -> tuple[int, int, tuple[int, ...]]:
    """Return (min squared level, lattice step g, per-level slack increments)."""
    sq = alphabet.squared_int_levels()
    s0 = sq[0]
    diffs = [s - s0 for s in sq[1:]]
    g = 0
    for d in diffs:
        g = math.gcd(g, d)
    if g == 0:
        g = 1  # single-level alphabet: degenerate lattice
    incr = tuple((s - s0) // g for s in sq)
    return s0, g, incr


def _sequence_counts_by_slack(cfg: ShapingConfig) -> np.ndarray:
    """Count length-N sequences by total energy slack.

    Entry t holds the number of sequences with total energy
    N*s0 + g*t, as a Python int (object array), t = 0 .. N*max_incr.
    """
    n = cfg.blocklength
    _, _, incr = _lattice(cfg.alphabet)
    width = n * incr[-1] + 1
    counts = np.zeros(width, dtype=object)
    counts[0] = 1
    for _ in range(n):
        nxt = np.zeros(width, dtype=object)
        for d in incr:
            if d == 0:
                nxt += counts
            else:
                nxt[d:] += counts[:-d]
        counts = nxt
    return counts


def ess_choose_emax(cfg: ShapingConfig) -> int:
    """Smallest energy bound admitting at least 2**k length-N sequences.

    Scans cumulative sequence counts over the reachable energy lattice and
    returns the first total energy whose sphere holds 2**ceil(N*R) or more
    sequences. Raises if even the full alphabet cube falls short.
    """
    need = 1 << cfg.bits_per_block
    s0, g, _ = _lattice(cfg.alphabet)
    counts = _sequence_counts_by_slack(cfg)
    cum = 0
    for t in range(len(counts)):
        cum += int(counts[t])
        if cum >= need:
            return cfg.blocklength * s0 + g * t
    raise ShapingError(
        "rate %.6g bits/amplitude infeasible at blocklength %d"
        % (cfg.rate_bits_per_amplitude, cfg.blocklength)
    )


@dataclass(frozen=True)
class EssTrellis:
    """Counting table for enumerative sphere shaping.

    ``counts[p][t]`` is the number of admissible suffixes of length N - p
    given an energy budget of (N - p) * s0 + g * t, i.e. t lattice steps of
    slack beyond the cheapest possible suffix. Counts are Python ints, so
    blocklength-256 tables (hundreds of bits per entry) are exact.
    """

    cfg: ShapingConfig
    emax: int
    counts: tuple  # tuple of object ndarrays, length N+1

    @property
    def blocklength(self) -> int:
        return self.cfg.blocklength

    @property
    def bits_per_block(self) -> int:
        return self.cfg.bits_per_block

    @property
    def slack_width(self) -> int:
        return len(self.counts[0])

    def total_count(self) -> int:
        """Number of admissible sequences, = count at full budget."""
        return int(self.counts[0][self.slack_width - 1])

    def suffix_count(self, position: int, energy_budget: float) -> int:
        """Admissible suffixes of length N - position within an energy budget.

        Defined for any real budget; off-lattice budgets floor to the next
        reachable lattice point below.
        """
        n = self.blocklength
        if not 0 <= position <= n:
            raise ShapingError("position out of range")
        s0, g, _ = _lattice(self.cfg.alphabet)
        slack = math.floor((energy_budget - (n - position) * s0) / g + 1e-12)
        if slack < 0:
            return 0
        slack = min(slack, self.slack_width - 1)
        return int(self.counts[position][slack])


def ess_build_trellis(cfg: ShapingConfig, emax: int | None = None) -> EssTrellis:
    """Build the suffix-counting table for the energy sphere ``emax``.

    With ``emax`` omitted, the tightest feasible sphere for cfg's rate is
    chosen. The table satisfies counts[N][t] = 1 (one empty suffix) and
    counts[0][last] >= 2**k.
    """
    if emax is None:
        emax = ess_choose_emax(cfg)
    n = cfg.blocklength
    s0, g, incr = _lattice(cfg.alphabet)
    width = (emax - n * s0) // g + 1
    if width < 1:
        raise ShapingError("emax %d below the minimum block energy %d" % (emax, n * s0))
    rows: list[np.ndarray] = [None] * (n + 1)  # type: ignore[list-item]
    row = np.ones(width, dtype=object)
    rows[n] = row
    for p in range(n - 1, -1, -1):
        nxt = np.zeros(width, dtype=object)
        for d in incr:
            if d == 0:
                nxt += row
            elif d < width:
                nxt[d:] += row[:-d]
        rows[p] = nxt
        row = nxt
    trellis = EssTrellis(cfg=cfg, emax=int(emax), counts=tuple(rows))
    if trellis.total_count() < (1 << cfg.bits_per_block):
        raise ShapingError(
            "sphere emax=%d holds %d sequences, need 2^%d"
            % (emax, trellis.total_count(), cfg.bits_per_block)
        )
    return trellis


def ess_encode_index(index: int, trellis: EssTrellis) -> np.ndarray:
    """Map an integer index to the index-th admissible sequence.

    Sequences are ordered lexicographically with ascending amplitude levels,
    so index 0 is the all-minimum-level block.
    """
    if not 0 <= index < (1 << trellis.bits_per_block):
        raise ShapingError("index out of range for %d-bit blocks" % trellis.bits_per_block)
    cfg = trellis.cfg
    levels = cfg.alphabet.levels
    _, _, incr = _lattice(cfg.alphabet)
    counts = trellis.counts
    slack = trellis.slack_width - 1
    out = np.empty(cfg.blocklength, dtype=float)
    rem = index
    for p in range(cfg.blocklength):
        nxt = counts[p + 1]
        for j, d in enumerate(incr):
            s = slack - d
            if s < 0:
                raise ShapingError("index walks outside the energy sphere")  # unreachable
            c = int(nxt[s])
            if rem < c:
                out[p] = levels[j]
                slack = s
                break
            rem -= c
        else:
            raise ShapingError("index walks outside the energy sphere")  # unreachable
    return out


def ess_decode_index(amplitudes: np.ndarray, trellis: EssTrellis) -> int:
    """Invert :func:`ess_encode_index`.

    Raises :class:`ShapingError` on amplitudes outside the alphabet, on
    blocks exceeding the energy sphere, and on indices at or above 2**k
    (sequences that are admissible but unused by the k-bit code).
    """
    cfg = trellis.cfg
    amps = np.asarray(amplitudes, dtype=float)
    if amps.shape != (cfg.blocklength,):
        raise ShapingError("expected %d amplitudes" % cfg.blocklength)
    levels = cfg.alphabet.levels
    level_of = {lv: j for j, lv in enumerate(levels)}
    _, _, incr = _lattice(cfg.alphabet)
    counts = trellis.counts
    slack = trellis.slack_width - 1
    index = 0
    for p in range(cfg.blocklength):
        j = level_of.get(float(amps[p]))
        if j is None:
            raise ShapingError("amplitude %g not in the alphabet" % amps[p])
        if slack - incr[j] < 0:
            raise ShapingError("sequence energy exceeds the sphere bound")
        nxt = counts[p + 1]
        for jj in range(j):
            s = slack - incr[jj]
            if s >= 0:
                index += int(nxt[s])
        slack -= incr[j]
    if index >= (1 << trellis.bits_per_block):
        raise ShapingError("sequence is admissible but outside the k-bit codebook")
    return index


def bits_to_index(bits: np.ndarray) -> int:
    """MSB-first bit vector -> integer."""
    value = 0
    for b in np.asarray(bits).ravel():
        value = (value << 1) | int(b)
    return value


def index_to_bits(value: int, width: int) -> np.ndarray:
    """Integer -> MSB-first bit vector of fixed width."""
    if value < 0 or value >> width:
        raise ShapingError("value does not fit in %d bits" % width)
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def ess_encode(bits: np.ndarray, trellis: EssTrellis) -> np.ndarray:
    """Encode one k-bit block (MSB first) to an amplitude sequence."""
    bits = np.asarray(bits)
    if bits.size != trellis.bits_per_block:
        raise ShapingError(
            "expected %d bits, got %d" % (trellis.bits_per_block, bits.size)
        )
    return ess_encode_index(bits_to_index(bits), trellis)


def ess_decode(amplitudes: np.ndarray, trellis: EssTrellis) -> np.ndarray:
    """Decode an amplitude sequence back to its k-bit block."""
    return index_to_bits(ess_decode_index(amplitudes, trellis), trellis.bits_per_block)


@dataclass(frozen=True)
class MbDistribution:
    """Maxwell-Boltzmann amplitude distribution p(a) ~ exp(-lambda a^2)."""

    alphabet: AmplitudeAlphabet
    lam: float
    probs: tuple[float, ...]

    @property
    def entropy_bits(self) -> float:
        p = np.asarray(self.probs)
        return float(-(p * np.log2(p)).sum())

    @property
    def mean_energy(self) -> float:
        p = np.asarray(self.probs)
        a = self.alphabet.as_array()
        return float((p * a * a).sum())


def _mb_probs(alphabet: AmplitudeAlphabet, lam: float) -> np.ndarray:
    w = np.exp(-lam * alphabet.as_array() ** 2)
    return w / w.sum()


def _mb_entropy(alphabet: AmplitudeAlphabet, lam: float) -> float:
    p = _mb_probs(alphabet, lam)
    return float(-(p * np.log2(p)).sum())


def mb_fit(target_entropy_bits: float, alphabet: AmplitudeAlphabet | None = None,
           tol_bits: float = 1e-9) -> MbDistribution:
    """Fit lambda so the MB entropy hits the target, by bisection.

    Entropy is strictly decreasing in lambda, from log2(M) at lambda=0
    towards 0, so plain bisection converges; tolerance is in bits.
    """
    alphabet = alphabet or AmplitudeAlphabet()
    hmax = math.log2(alphabet.size)
    if not 0 < target_entropy_bits <= hmax:
        raise ShapingError("target entropy must be in (0, %g] bits" % hmax)
    if abs(target_entropy_bits - hmax) <= tol_bits:
        probs = tuple(1.0 / alphabet.size for _ in alphabet.levels)
        return MbDistribution(alphabet=alphabet, lam=0.0, probs=probs)
    lo, hi = 0.0, 1.0
    while _mb_entropy(alphabet, hi) > target_entropy_bits:
        lo, hi = hi, hi * 2
        if hi > 1e6:
            raise ShapingError("entropy target unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _mb_entropy(alphabet, mid) > target_entropy_bits:
            lo = mid
        else:
            hi = mid
        if abs(_mb_entropy(alphabet, 0.5 * (lo + hi)) - target_entropy_bits) <= tol_bits:
            break
    lam = 0.5 * (lo + hi)
    return MbDistribution(alphabet=alphabet, lam=lam,
                          probs=tuple(_mb_probs(alphabet, lam).tolist()))


def mb_sample(dist: MbDistribution, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw i.i.d. amplitudes from an MB distribution."""
    if count < 0:
        raise ShapingError("count must be >= 0")
    return rng.choice(dist.alphabet.as_array(), size=count, p=np.asarray(dist.probs))


def pas_map(amplitudes: np.ndarray, sign_bits: np.ndarray) -> np.ndarray:
    """Combine amplitudes and sign bits into dual-pol QAM symbols.

    Rails are consumed in (xI, xQ, yI, yQ) order per 4D symbol; a sign bit of
    0 keeps the rail positive, 1 flips it. Returns shape (2, n) complex.
    """
    amps = np.asarray(amplitudes, dtype=float)
    signs = np.asarray(sign_bits)
    if amps.shape != signs.shape or amps.ndim != 1:
        raise ShapingError("amplitudes and sign bits must be 1-D of equal length")
    if amps.size % 4:
        raise ShapingError("rail count must be a multiple of 4")
    rails = ((1.0 - 2.0 * signs) * amps).reshape(-1, 4)
    out = np.empty((2, rails.shape[0]), dtype=complex)
    out[0] = rails[:, 0] + 1j * rails[:, 1]
    out[1] = rails[:, 2] + 1j * rails[:, 3]
    return out


def pas_demap_hard(symbols: np.ndarray,
                   alphabet: AmplitudeAlphabet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-rail minimum-distance decisions back to (amplitudes, sign bits).

    Decision thresholds sit halfway between adjacent levels, so 1.9 -> 1
    under the default alphabet and -2.1 -> (3, sign 1). Exact zeros take the
    smallest level with sign 0.
    """
    alphabet = alphabet or AmplitudeAlphabet()
    sym = np.asarray(symbols, dtype=complex)
    if sym.ndim != 2 or sym.shape[0] != 2:
        raise ShapingError("expected symbols of shape (2, n)")
    rails = np.empty((sym.shape[1], 4), dtype=float)
    rails[:, 0] = sym[0].real
    rails[:, 1] = sym[0].imag
    rails[:, 2] = sym[1].real
    rails[:, 3] = sym[1].imag
    flat = rails.reshape(-1)
    levels = alphabet.as_array()
    mids = 0.5 * (levels[1:] + levels[:-1])
    idx = np.searchsorted(mids, np.abs(flat))
    amps = levels[idx]
    signs = (flat < 0).astype(np.uint8)
    return amps, signs


@lru_cache(maxsize=32)
def _cached_trellis(blocklength: int, bits: int, levels: tuple[float, ...]) -> EssTrellis:
    # rate chosen so ceil(N*R) == bits exactly
    cfg = ShapingConfig(blocklength=blocklength,
                        rate_bits_per_amplitude=bits / blocklength,
                        alphabet=AmplitudeAlphabet(levels))
    return ess_build_trellis(cfg)


def trellis_for(blocklength: int, bits_per_block: int,
                alphabet: AmplitudeAlphabet | None = None) -> EssTrellis:
    """Cached trellis lookup keyed by exact (N, k, alphabet)."""
    alphabet = alphabet or AmplitudeAlphabet()
    return _cached_trellis(blocklength, bits_per_block, alphabet.levels)


@dataclass(frozen=True)
class PasShaper:
    """Bit block -> dual-pol symbol block chain used by the transmitters.

    A selection block of n 4D symbols consumes 4n amplitudes, split into
    consecutive sphere-shaping blocks, plus 4n sign bits. The bit layout is
    [DM block 0 bits | DM block 1 bits | ... | sign bits], MSB first inside
    each DM block.
    """

    trellis: EssTrellis
    block_len_4d: int

    def __post_init__(self):
        n_amp = 4 * self.block_len_4d
        if n_amp % self.trellis.blocklength:
            raise ShapingError(
                "4*%d rails not divisible into DM blocks of %d"
                % (self.block_len_4d, self.trellis.blocklength)
            )

    @property
    def n_dm_blocks(self) -> int:
        return 4 * self.block_len_4d // self.trellis.blocklength

    @property
    def bits_per_selection_block(self) -> int:
        return self.n_dm_blocks * self.trellis.bits_per_block + 4 * self.block_len_4d

    def encode(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits).ravel()
        if bits.size != self.bits_per_selection_block:
            raise ShapingError(
                "expected %d bits, got %d" % (self.bits_per_selection_block, bits.size)
            )
        k = self.trellis.bits_per_block
        n_amp = 4 * self.block_len_4d
        amps = np.empty(n_amp, dtype=float)
        pos = 0
        for j in range(self.n_dm_blocks):
            amps[j * self.trellis.blocklength:(j + 1) * self.trellis.blocklength] = \
                ess_encode(bits[pos:pos + k], self.trellis)
            pos += k
        signs = bits[pos:]
        return pas_map(amps, signs)

    def decode(self, symbols: np.ndarray) -> np.ndarray:
        amps, signs = pas_demap_hard(symbols, self.trellis.cfg.alphabet)
        if amps.size != 4 * self.block_len_4d:
            raise ShapingError("symbol block length mismatch")
        parts = []
        nb = self.trellis.blocklength
        for j in range(self.n_dm_blocks):
            parts.append(ess_decode(amps[j * nb:(j + 1) * nb], self.trellis))
        parts.append(signs.astype(np.uint8))
        return np.concatenate(parts)
