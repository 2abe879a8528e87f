"""Monte Carlo time-tag generation for heralded FWM photon-pair sources.

Pairs are created at homogeneous Poisson times.  The idler is tagged at the
creation time, the signal after a delay drawn from |psi|^2.  Each arm is
thinned by its end-to-end transmission (optics x fibre x detector
efficiency), Gaussian jitter is added per detector, white background counts
are added at the *detected* noise rates, and optionally a non-paralyzable
dead time is applied.

The run is cut into fixed 10 ms slices.  Every slice draws from its own
Philox stream keyed by ``(seed, source, slice)``, so the output does not
depend on how slices are spread over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np

from .tagstream import TagStream
from .temporal import TemporalMode, hom_coincidence_probability, sample_delay

PS = 1e12
SLICE_PS = 10_000_000_000  # 10 ms
MAX_EXPECTED_EVENTS = 1e9
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

SOURCE_A, SOURCE_B = 0, 1


class ResourceLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChannelMap:
    idler: int = 0
    signal: int = 1
    idler_b: int = 2
    signal_b: int = 3
    split_t: int = 4  # also beam-splitter output 1 in the HOM setup
    split_r: int = 5  # also beam-splitter output 2

    def __post_init__(self):
        ids = list(asdict(self).values())
        if len(set(ids)) != len(ids) or not all(0 <= i < 256 for i in ids):
            raise ValueError("channel ids must be unique u8 values")

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


CHANNELS = ChannelMap()


@dataclass(frozen=True)
class SourceConfig:
    """One spatial channel of the source plus its two detectors.

    Rates are per second, times in seconds.  Transmissions are end-to-end
    and include detector efficiency; noise rates are already-detected
    background counts and are not thinned.
    """

    pair_rate: float = 1e6
    mode: TemporalMode = field(default_factory=TemporalMode)
    signal_transmission: float = 1.0
    idler_transmission: float = 1.0
    signal_noise_rate: float = 0.0
    idler_noise_rate: float = 0.0
    jitter_fwhm: float = 55e-12
    dead_time: float = 0.0
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("pair_rate", "signal_noise_rate", "idler_noise_rate", "jitter_fwhm", "dead_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("signal_transmission", "idler_transmission"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / FWHM_PER_SIGMA

    @property
    def duration_ps(self) -> int:
        return int(round(self.duration * PS))

    def expected_events(self) -> float:
        return self.duration * (2.0 * self.pair_rate + self.signal_noise_rate + self.idler_noise_rate)

    def replace(self, **changes) -> "SourceConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = {"rise_time": self.mode.rise_time, "decay_time": self.mode.decay_time}
        return d


def _check_budget(*configs: SourceConfig) -> None:
    total = sum(c.expected_events() for c in configs)
    if total > MAX_EXPECTED_EVENTS:
        raise ResourceLimitError(f"run would generate ~{total:.3g} events (limit {MAX_EXPECTED_EVENTS:.0e})")


def slice_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one (seed, key...) cell of the run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _slices(duration_ps: int):
    n = -(-duration_ps // SLICE_PS)
    return [(k, k * SLICE_PS, min((k + 1) * SLICE_PS, duration_ps)) for k in range(n)]


@dataclass
class PairBatch:
    """Raw draws for one time slice of one source (times in ps)."""

    start: int
    creation: np.ndarray        # float, relative to start
    delay: np.ndarray           # float
    idler_kept: np.ndarray
    signal_kept: np.ndarray
    idler_z: np.ndarray         # unit normals, scaled by the detector's sigma
    signal_z: np.ndarray
    idler_noise: np.ndarray     # int64 absolute
    signal_noise: np.ndarray    # int64 absolute

    def idler_tags(self, sigma_ps: float) -> np.ndarray:
        keep = self.idler_kept
        return self.start + np.rint(self.creation[keep] + self.idler_z[keep] * sigma_ps).astype(np.int64)

    def signal_arrival(self) -> np.ndarray:
        """Jitter-free absolute signal arrival times of the kept signals."""
        return self.start + (self.creation + self.delay)[self.signal_kept]

    def signal_tags(self, sigma_ps: float) -> np.ndarray:
        return np.rint(self.signal_arrival() + self.signal_z[self.signal_kept] * sigma_ps).astype(np.int64)


def generate_slice(cfg: SourceConfig, source: int, k: int, start: int, stop: int,
                   creation: np.ndarray | None = None) -> PairBatch:
    """Draw one slice.  ``creation`` forces the pair-creation times (ps, relative)."""
    rng = slice_rng(cfg.seed, source, k)
    span = stop - start
    if creation is None:
        n = rng.poisson(cfg.pair_rate * span / PS)
        creation = np.sort(rng.random(n) * span)
    n = creation.size
    delay = sample_delay(cfg.mode, rng, n) * PS
    idler_kept = rng.random(n) < cfg.idler_transmission
    signal_kept = rng.random(n) < cfg.signal_transmission
    idler_z = rng.standard_normal(n)
    signal_z = rng.standard_normal(n)
    noise = []
    for rate in (cfg.idler_noise_rate, cfg.signal_noise_rate):
        m = rng.poisson(rate * span / PS)
        noise.append(start + np.floor(rng.random(m) * span).astype(np.int64))
    return PairBatch(start, creation, delay, idler_kept, signal_kept,
                     idler_z, signal_z, noise[0], noise[1])


def _map_slices(fn, slices, workers: int):
    if workers <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))


@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.ones(t.size, dtype=np.bool_)
    last = np.int64(0)
    have = False
    for i in range(t.size):
        if have and t[i] - last < dead:
            keep[i] = False
        else:
            last = t[i]
            have = True
    return keep


def apply_dead_time(times: np.ndarray, dead_time_ps: int) -> np.ndarray:
    """Drop tags within ``dead_time_ps`` of the previous *accepted* tag."""
    if dead_time_ps <= 0 or times.size == 0:
        return times
    return times[_dead_time_mask(times, np.int64(dead_time_ps))]


def _finish_channel(parts, duration_ps: int, dead_time: float) -> np.ndarray:
    t = np.concatenate(parts) if parts else np.empty(0, np.int64)
    t = t[(t >= 0) & (t < duration_ps)]
    t = np.sort(t, kind="stable")
    return apply_dead_time(t, int(round(dead_time * PS)))


def _assemble(channel_times: dict[int, np.ndarray], duration_ps: int, channel_map: dict) -> TagStream:
    chans = np.concatenate([np.full(t.size, ch, np.uint8) for ch, t in channel_times.items()])
    times = np.concatenate(list(channel_times.values())).astype(np.uint64)
    order = np.lexsort((chans, times))
    return TagStream(chans[order], times[order], duration_ps, channel_map)


def simulate_pairs(cfg: SourceConfig, workers: int = 1, channels: ChannelMap = CHANNELS) -> TagStream:
    """Idler and signal detections of a single source."""
    _check_budget(cfg)
    dur = cfg.duration_ps
    batches = _map_slices(lambda s: generate_slice(cfg, SOURCE_A, *s), _slices(dur), workers)
    sigma = cfg.jitter_sigma * PS
    sig = [b.signal_tags(sigma) for b in batches]
    idl = [b.idler_tags(sigma) for b in batches]
    out = {
        channels.idler: _finish_channel(idl + [b.idler_noise for b in batches], dur, cfg.dead_time),
        channels.signal: _finish_channel(sig + [b.signal_noise for b in batches], dur, cfg.dead_time),
    }
    return _assemble(out, dur, {"idler": channels.idler, "signal": channels.signal})


def simulate_heralded_autocorr(cfg: SourceConfig, splitter_seed: int, workers: int = 1,
                               channels: ChannelMap = CHANNELS) -> TagStream:
    """Idler plus the signal split 50:50 onto two detectors (T and R)."""
    _check_budget(cfg)
    dur = cfg.duration_ps
    batches = _map_slices(lambda s: generate_slice(cfg, SOURCE_A, *s), _slices(dur), workers)
    sigma = cfg.jitter_sigma * PS
    signal = np.concatenate([b.signal_tags(sigma) for b in batches])
    noise = np.concatenate([b.signal_noise for b in batches])
    photons = np.concatenate([signal, noise])
    to_t = slice_rng(splitter_seed, 0).random(photons.size) < 0.5
    out = {
        channels.idler: _finish_channel([b.idler_tags(sigma) for b in batches] + [b.idler_noise for b in batches],
                                        dur, cfg.dead_time),
        channels.split_t: _finish_channel([photons[to_t]], dur, cfg.dead_time),
        channels.split_r: _finish_channel([photons[~to_t]], dur, cfg.dead_time),
    }
    cmap = {"idler": channels.idler, "signal_t": channels.split_t, "signal_r": channels.split_r}
    return _assemble(out, dur, cmap)


@numba.njit(cache=True)
def _nearest_pairs(t, src, max_gap):
    # pair photons that are each other's nearest photon from the other source
    n = t.size
    nearest = np.full(n, -1, dtype=np.int64)
    last = np.array([-1, -1], dtype=np.int64)
    for i in range(n):
        j = last[1 - src[i]]
        if j >= 0:
            nearest[i] = j
        last[src[i]] = i
    last[:] = -1
    for i in range(n - 1, -1, -1):
        j = last[1 - src[i]]
        if j >= 0 and (nearest[i] < 0 or t[j] - t[i] < t[i] - t[nearest[i]]):
            nearest[i] = j
        last[src[i]] = i
    first = np.full(n // 2, -1, dtype=np.int64)
    second = np.full(n // 2, -1, dtype=np.int64)
    m = 0
    for i in range(n):
        j = nearest[i]
        if j > i and nearest[j] == i and t[j] - t[i] <= max_gap:
            first[m] = i
            second[m] = j
            m += 1
    return first[:m], second[:m]


def simulate_hom_experiment(cfg_a: SourceConfig, cfg_b: SourceConfig, beamsplitter_seed: int,
                            workers: int = 1, common_clock: bool = False,
                            indistinguishability: float = 1.0, pairing_range: float | None = None,
                            channels: ChannelMap = CHANNELS) -> TagStream:
    """Two heralded sources interfering on a balanced beam splitter.

    Transmitted signal photons that are each other's nearest photon from
    the other source (by creation time, within ``pairing_range``, default
    20 decay times) interfere.  A pair created ``dt`` apart exits on different ports
    with the HOM coincidence probability for that delay and bunches onto a
    random common port otherwise; unpaired photons and background counts
    pick a port at random.  Port 1 uses ``cfg_a``'s detector settings and
    port 2 ``cfg_b``'s.

    ``common_clock`` makes source B reuse source A's creation times (every
    pair has dt = 0); it requires equal pair rates and durations.
    """
    if common_clock and (cfg_a.pair_rate != cfg_b.pair_rate or cfg_a.duration != cfg_b.duration):
        raise ValueError("common_clock needs equal pair_rate and duration")
    _check_budget(cfg_a, cfg_b)
    dur = max(cfg_a.duration_ps, cfg_b.duration_ps)
    slices = _slices(dur)

    def gen(s):
        k, start, stop = s
        a = generate_slice(cfg_a, SOURCE_A, k, start, min(stop, cfg_a.duration_ps)) \
            if start < cfg_a.duration_ps else None
        b = generate_slice(cfg_b, SOURCE_B, k, start, min(stop, cfg_b.duration_ps),
                           creation=a.creation if common_clock else None) \
            if start < cfg_b.duration_ps else None
        return a, b

    pairs = _map_slices(gen, slices, workers)
    batches_a = [a for a, _ in pairs if a is not None]
    batches_b = [b for _, b in pairs if b is not None]

    def photons(batches):
        create = np.concatenate([b.start + b.creation[b.signal_kept] for b in batches])
        arrive = np.concatenate([b.signal_arrival() for b in batches])
        z = np.concatenate([b.signal_z[b.signal_kept] for b in batches])
        return create, arrive, z

    create_a, arrive_a, z_a = photons(batches_a)
    create_b, arrive_b, z_b = photons(batches_b)
    create = np.concatenate([create_a, create_b])
    arrive = np.concatenate([arrive_a, arrive_b])
    z = np.concatenate([z_a, z_b])
    src = np.concatenate([np.zeros(create_a.size, np.int8), np.ones(create_b.size, np.int8)])
    order = np.argsort(create, kind="stable")
    create, arrive, z, src = create[order], arrive[order], z[order], src[order]
    if pairing_range is None:
        pairing_range = 20.0 * max(cfg_a.mode.decay_time, cfg_b.mode.decay_time)
    i1, i2 = _nearest_pairs(create, src, pairing_range * PS)

    rng = slice_rng(beamsplitter_seed, 0)
    port = rng.random(create.size) < 0.5  # True -> port 1; kept for unpaired photons
    # orient each pair by source A so that dt = t_B - t_A
    a_idx = np.where(src[i1] == 0, i1, i2)
    b_idx = np.where(src[i1] == 0, i2, i1)
    dt = (create[b_idx] - create[a_idx]) / PS
    p_split = hom_coincidence_probability(cfg_a.mode, cfg_b.mode, dt, indistinguishability)
    split = rng.random(a_idx.size) < p_split
    port_a = rng.random(a_idx.size) < 0.5
    port[a_idx] = port_a
    port[b_idx] = np.where(split, ~port_a, port_a)

    sigma_port = np.where(port, cfg_a.jitter_sigma, cfg_b.jitter_sigma) * PS
    detected = np.rint(arrive + z * sigma_port).astype(np.int64)

    noise = np.concatenate([b.signal_noise for b in batches_a] + [b.signal_noise for b in batches_b])
    noise_port = slice_rng(beamsplitter_seed, 1).random(noise.size) < 0.5

    out = {
        channels.idler: _finish_channel([b.idler_tags(cfg_a.jitter_sigma * PS) for b in batches_a]
                                        + [b.idler_noise for b in batches_a], dur, cfg_a.dead_time),
        channels.idler_b: _finish_channel([b.idler_tags(cfg_b.jitter_sigma * PS) for b in batches_b]
                                          + [b.idler_noise for b in batches_b],
                                          dur, cfg_b.dead_time),
        channels.split_t: _finish_channel([detected[port], noise[noise_port]], dur, cfg_a.dead_time),
        channels.split_r: _finish_channel([detected[~port], noise[~noise_port]], dur, cfg_b.dead_time),
    }
    cmap = {"idler_a": channels.idler, "idler_b": channels.idler_b,
            "bs_out1": channels.split_t, "bs_out2": channels.split_r}
    return _assemble(out, dur, cmap)
