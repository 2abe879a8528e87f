"""Second-order statistics of time-tag streams.

All lags are integer picoseconds.  A histogram bin ``k`` holds the lags
``tau_min + k*w ... tau_min + (k+1)*w - 1`` (both ends inclusive), so
reflecting a histogram is exact: swapping the two channels and using
``tau_min' = -(tau_max - 1)`` gives the same counts in reverse order.

Sliding windows are done with two ``searchsorted`` passes, which makes the
pair enumeration O(N log M + pairs) instead of O(N*M).  Work is split into
chunks of the reference channel; the per-chunk integer histograms are summed,
so results are bit-identical for any worker count or chunk size.
"""
from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tagstream import TagStream

DEFAULT_BIN_PS = 100
DEFAULT_WINDOW_PS = 3500
PAIR_CHUNK = 4_000_000


class AnalysisUndefinedError(ValueError):
    """Raised when a normalization is undefined (e.g. an empty channel)."""


@dataclass(frozen=True)
class HeraldWindow:
    """Signal lags ``offset <= t_s - t_i < offset + width`` count as heralded."""

    offset: int = 0
    width: int = DEFAULT_WINDOW_PS

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("window width must be positive")

    @property
    def stop(self) -> int:
        return self.offset + self.width


@dataclass(frozen=True)
class CorrelationHistogram:
    bin_width: int
    tau_min: int
    counts: np.ndarray
    duration: int
    n_signal: int
    n_idler: int

    @property
    def nbins(self) -> int:
        return int(self.counts.size)

    @property
    def tau_max(self) -> int:
        return self.tau_min + self.nbins * self.bin_width

    @property
    def edges(self) -> np.ndarray:
        return self.tau_min + self.bin_width * np.arange(self.nbins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.tau_min + self.bin_width * np.arange(self.nbins) + 0.5 * (self.bin_width - 1)

    @property
    def accidentals(self) -> float:
        """Expected counts per bin for uncorrelated channels."""
        return self.n_signal * self.n_idler * self.bin_width / self.duration

    @property
    def g2(self) -> np.ndarray:
        return self.counts / self.accidentals

    @property
    def g2_sigma(self) -> np.ndarray:
        """Poisson error of each normalized bin (at least one count)."""
        return np.sqrt(np.maximum(self.counts, 1)) / self.accidentals

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tau_ps,counts,g2\n")
        for tau, c, g in zip(self.centers, self.counts, self.g2):
            buf.write(f"{tau:.9g},{int(c)},{g:.9g}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        peak = g2_peak(self)
        return {
            "bin_width_ps": self.bin_width,
            "tau_min_ps": self.tau_min,
            "tau_max_ps": self.tau_max,
            "duration_ps": self.duration,
            "n_idler": self.n_idler,
            "n_signal": self.n_signal,
            "total_counts": int(self.counts.sum()),
            "g2_max": peak.g2_max,
            "tau_at_max_ps": peak.tau,
        }


class Peak(NamedTuple):
    tau: float
    g2_max: float


def _duration(stream: TagStream, duration: int | None) -> int:
    d = stream.duration if duration is None else int(duration)
    if d <= 0:
        raise AnalysisUndefinedError("stream duration is zero")
    return d


def _window_bounds(ref: np.ndarray, other: np.ndarray, lo_lag: int, hi_lag: int):
    """Index range [lo, hi) of ``other`` with lags in [lo_lag, hi_lag) from each ref tag."""
    lo = np.searchsorted(other, ref + lo_lag, side="left")
    hi = np.searchsorted(other, ref + hi_lag, side="left")
    return lo, hi


def _chunks(counts: np.ndarray, budget: int):
    # contiguous ref ranges holding ~budget pairs each
    if counts.size == 0:
        return []
    cum = np.cumsum(counts)
    cuts = np.searchsorted(cum, np.arange(budget, int(cum[-1]), budget), side="left")
    bounds = np.unique(np.concatenate(([0], cuts, [counts.size])))
    return list(zip(bounds[:-1], bounds[1:]))


def _pair_lags(ref, other, lo, hi):
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        empty = np.empty(0, np.int64)
        return empty, empty, empty
    ref_idx = np.repeat(np.arange(ref.size), n)
    starts = np.repeat(lo - np.concatenate(([0], np.cumsum(n)[:-1])), n)
    other_idx = starts + np.arange(total)
    return other[other_idx] - ref[ref_idx], ref_idx, other_idx


def _run(fn, parts, workers):
    if workers <= 1 or len(parts) <= 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))


def cross_histogram(ref: np.ndarray, other: np.ndarray, tau_min: int, bin_width: int, nbins: int,
                    workers: int = 1, chunk_pairs: int = PAIR_CHUNK) -> np.ndarray:
    """Counts of lags ``other - ref`` in integer bins starting at ``tau_min``."""
    ref = np.asarray(ref, dtype=np.int64)
    other = np.asarray(other, dtype=np.int64)
    tau_max = tau_min + nbins * bin_width
    lo, hi = _window_bounds(ref, other, tau_min, tau_max)

    def part(bounds):
        a, b = bounds
        lags, _, _ = _pair_lags(ref[a:b], other, lo[a:b], hi[a:b])
        return np.bincount((lags - tau_min) // bin_width, minlength=nbins)

    out = np.zeros(nbins, dtype=np.int64)
    for h in _run(part, _chunks(hi - lo, chunk_pairs), workers):
        out += h
    return out


def g2_cross(stream: TagStream, idler_ch: int, signal_ch: int, bin_width: int = DEFAULT_BIN_PS,
             tau_range: tuple[int, int] = (-10_000, 20_000), duration: int | None = None,
             workers: int = 1, chunk_pairs: int = PAIR_CHUNK) -> CorrelationHistogram:
    """Normalized signal-idler cross-correlation with ``tau = t_signal - t_idler``."""
    tau_min, tau_max = (int(x) for x in tau_range)
    bin_width = int(bin_width)
    if bin_width <= 0 or tau_max <= tau_min:
        raise ValueError("need bin_width > 0 and tau_max > tau_min")
    if (tau_max - tau_min) % bin_width:
        raise ValueError("tau range must be a whole number of bins")
    idl = stream.channel(idler_ch)
    sig = stream.channel(signal_ch)
    if idl.size == 0 or sig.size == 0:
        raise AnalysisUndefinedError(f"no tags on channel {idler_ch if idl.size == 0 else signal_ch}")
    nbins = (tau_max - tau_min) // bin_width
    counts = cross_histogram(idl, sig, tau_min, bin_width, nbins, workers, chunk_pairs)
    return CorrelationHistogram(bin_width, tau_min, counts, _duration(stream, duration),
                                int(sig.size), int(idl.size))


def g2_peak(hist: CorrelationHistogram) -> Peak:
    """Raw maximum bin; ties go to the smaller lag."""
    if hist.nbins == 0:
        raise ValueError("empty histogram")
    k = int(np.argmax(hist.counts))
    return Peak(float(hist.centers[k]), float(hist.g2[k]))


def g2_peak_sigma(hist: CorrelationHistogram) -> float:
    k = int(np.argmax(hist.counts))
    return float(hist.g2_sigma[k])


def _has_signal(idl: np.ndarray, sig: np.ndarray, window: HeraldWindow) -> np.ndarray:
    lo, hi = _window_bounds(idl, sig, window.offset, window.stop)
    return hi > lo


@dataclass(frozen=True)
class HeraldStats:
    n_idler: int
    n_signal: int
    n_heralded: int
    accidentals: float
    duration: int

    @property
    def efficiency(self) -> float:
        return max(0.0, (self.n_heralded - self.accidentals) / self.n_idler)

    @property
    def pair_rate(self) -> float:
        """Accidental-corrected detected pair rate [1/s]."""
        return max(0.0, self.n_heralded - self.accidentals) / (self.duration * 1e-12)


def herald_stats(stream: TagStream, idler_ch: int, signal_ch: int,
                 window: HeraldWindow = HeraldWindow(), duration: int | None = None) -> HeraldStats:
    idl = stream.channel(idler_ch)
    sig = stream.channel(signal_ch)
    if idl.size == 0:
        raise AnalysisUndefinedError(f"no idler tags on channel {idler_ch}")
    dur = _duration(stream, duration)
    n_her = int(np.count_nonzero(_has_signal(idl, sig, window)))
    acc = idl.size * (sig.size / dur) * window.width
    return HeraldStats(int(idl.size), int(sig.size), n_her, acc, dur)


def heralding_efficiency(stream: TagStream, idler_ch: int, signal_ch: int,
                         window: HeraldWindow = HeraldWindow(), duration: int | None = None) -> float:
    """Fraction of idler detections followed by a signal in the window.

    Accidentals are removed as ``N_i * R_s * width``; a negative result is
    clamped to zero with a warning (usually a misplaced window).
    """
    st = herald_stats(stream, idler_ch, signal_ch, window, duration)
    raw = (st.n_heralded - st.accidentals) / st.n_idler
    if raw < 0:
        warnings.warn(f"accidental-corrected heralding efficiency {raw:.3g} < 0; check the window",
                      RuntimeWarning, stacklevel=2)
    return st.efficiency


def detected_pair_rate(stream: TagStream, idler_ch: int, signal_ch: int,
                       window: HeraldWindow = HeraldWindow(), duration: int | None = None) -> float:
    return herald_stats(stream, idler_ch, signal_ch, window, duration).pair_rate


@dataclass(frozen=True)
class AutocorrStats:
    n_idler: int
    n_it: int
    n_ir: int
    n_itr: int

    @property
    def g2c(self) -> float:
        if self.n_itr == 0:
            return 0.0
        return self.n_itr * self.n_idler / (self.n_it * self.n_ir)


def autocorr_stats(stream: TagStream, idler_ch: int, t_ch: int, r_ch: int,
                   window: HeraldWindow = HeraldWindow()) -> AutocorrStats:
    idl = stream.channel(idler_ch)
    if idl.size == 0:
        raise AnalysisUndefinedError(f"no idler tags on channel {idler_ch}")
    has_t = _has_signal(idl, stream.channel(t_ch), window)
    has_r = _has_signal(idl, stream.channel(r_ch), window)
    return AutocorrStats(int(idl.size), int(has_t.sum()), int(has_r.sum()), int((has_t & has_r).sum()))


def heralded_g2c(stream: TagStream, idler_ch: int, t_ch: int, r_ch: int,
                 window: HeraldWindow = HeraldWindow()) -> float:
    """Heralded auto-correlation N_itr * N_i / (N_it * N_ir)."""
    return autocorr_stats(stream, idler_ch, t_ch, r_ch, window).g2c


@dataclass(frozen=True)
class HomProfile:
    delays: np.ndarray      # bin centres of t_herald_B - t_herald_A [ps]
    counts: np.ndarray
    bin_width: int
    baseline: float
    visibility: float
    visibility_sigma: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta_t_ps,coincidences\n")
        for d, c in zip(self.delays, self.counts):
            buf.write(f"{int(d)},{int(c)}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "bin_width_ps": self.bin_width,
            "baseline": self.baseline,
            "center_counts": int(self.counts[self.counts.size // 2]),
            "visibility": self.visibility,
            "visibility_sigma": self.visibility_sigma,
            "total_coincidences": int(self.counts.sum()),
        }


def hom_bin_index(dt, bin_width: int):
    """Bin of a herald delay; bin 0 holds -w/2 <= dt < w/2."""
    return np.floor_divide(2 * np.asarray(dt, dtype=np.int64) + bin_width, 2 * bin_width)


def hom_counts(stream: TagStream, idler_a: int, idler_b: int, out1: int, out2: int,
               window: HeraldWindow = HeraldWindow(), bin_width: int = DEFAULT_BIN_PS,
               max_delay: int = 20_000, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Two-fold coincidences between splitter outputs vs herald time difference.

    A herald pair (a from source A, b from source B) counts as a coincidence
    when one herald has an in-window signal on output 1 and the other one
    on output 2.  Bins span ``|dt| <= max_delay`` in steps of ``bin_width``
    centred on zero.  Returns ``(delays, counts)``.
    """
    ta, tb = stream.channel(idler_a), stream.channel(idler_b)
    o1, o2 = stream.channel(out1), stream.channel(out2)
    if ta.size == 0 or tb.size == 0:
        raise AnalysisUndefinedError("both sources need heralds")
    a1, a2 = _has_signal(ta, o1, window), _has_signal(ta, o2, window)
    b1, b2 = _has_signal(tb, o1, window), _has_signal(tb, o2, window)
    keep_a = a1 | a2
    keep_b = b1 | b2
    ta, a1, a2 = ta[keep_a], a1[keep_a], a2[keep_a]
    tb, b1, b2 = tb[keep_b], b1[keep_b], b2[keep_b]

    half = int(max_delay) // bin_width
    nbins = 2 * half + 1
    lo_lag = -half * bin_width - bin_width // 2
    hi_lag = half * bin_width + (bin_width + 1) // 2
    lo, hi = _window_bounds(ta, tb, lo_lag, hi_lag)

    def part(bounds):
        s, e = bounds
        dt, ia, ib = _pair_lags(ta[s:e], tb, lo[s:e], hi[s:e])
        ia = ia + s
        coinc = (a1[ia] & b2[ib]) | (a2[ia] & b1[ib])
        idx = hom_bin_index(dt[coinc], bin_width) + half
        return np.bincount(idx, minlength=nbins)

    counts = np.zeros(nbins, dtype=np.int64)
    for h in _run(part, _chunks(hi - lo, PAIR_CHUNK), workers):
        counts += h
    return bin_width * np.arange(-half, half + 1), counts


def hom_visibility(delays: np.ndarray, counts: np.ndarray, bin_width: int,
                   baseline_min: int = 5_000) -> tuple[float, float, float]:
    """``(baseline, visibility, sigma)`` of a dip histogram centred on zero.

    The visibility is ``1 - C(0) / baseline`` with the baseline averaged over
    bins lying entirely beyond ``baseline_min``.
    """
    far = (np.abs(delays) - bin_width / 2) > baseline_min
    if not far.any():
        raise ValueError("max_delay leaves no baseline bins beyond baseline_min")
    base = float(counts[far].mean())
    if base <= 0:
        raise AnalysisUndefinedError("no baseline coincidences")
    c0 = counts[counts.size // 2]
    vis = 1.0 - c0 / base
    rel = math.sqrt(max(c0, 1)) / base
    sigma = math.hypot(rel, (c0 / base) / math.sqrt(base * far.sum()))
    return base, float(vis), float(sigma)


def hom_profile(stream: TagStream, idler_a: int, idler_b: int, out1: int, out2: int,
                window: HeraldWindow = HeraldWindow(), bin_width: int = DEFAULT_BIN_PS,
                max_delay: int = 20_000, baseline_min: int = 5_000, workers: int = 1) -> HomProfile:
    """HOM dip: :func:`hom_counts` plus :func:`hom_visibility`."""
    delays, counts = hom_counts(stream, idler_a, idler_b, out1, out2, window, bin_width, max_delay, workers)
    base, vis, sigma = hom_visibility(delays, counts, bin_width, baseline_min)
    return HomProfile(delays, counts, bin_width, base, vis, sigma)
