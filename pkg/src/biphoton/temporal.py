"""Cascade bi-photon temporal wavefunction.

The heralded signal amplitude, relative to the idler detection, is modelled
as a normalized double exponential

    psi(t) = N * (exp(-t / tau_d) - exp(-t / tau_r)),   t >= 0

which is zero at t = 0, peaks after a few rise times and decays with the
(OD-dependent) decay time.  Times are in seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

GRID_POINTS = 10_000
GRID_SPAN = 12.0  # in units of tau_d
# below this relative gap the closed forms lose too many digits
DEGENERATE_GAP = 1e-3


@dataclass(frozen=True)
class TemporalMode:
    rise_time: float = 0.15e-9
    decay_time: float = 1.0e-9

    def __post_init__(self):
        if not 0 < self.rise_time < self.decay_time:
            raise ValueError("need 0 < rise_time < decay_time")

    @property
    def norm_sq(self) -> float:
        tr, td = self.rise_time, self.decay_time
        return 2.0 * (td + tr) / (td - tr) ** 2

    @property
    def _gap(self) -> float:
        return (self.decay_time - self.rise_time) / self.decay_time

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        tr, td = self.rise_time, self.decay_time
        rate_gap = 1.0 / tr - 1.0 / td
        tp = np.maximum(t, 0.0)
        # N * (e^{-t/td} - e^{-t/tr}) written so it stays finite as tr -> td
        scaled_norm = math.sqrt(2.0 * (td + tr)) / (tr * td)
        out = -scaled_norm * np.exp(-tp / td) * np.expm1(-tp * rate_gap) / rate_gap
        return np.where(t >= 0, out, 0.0)

    def density(self, t):
        return self.amplitude(t) ** 2

    def cdf(self, t):
        """Energy in [0, t], closed form."""
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        tr, td = self.rise_time, self.decay_time
        tail = self.norm_sq * (
            0.5 * td * np.exp(-2.0 * t / td)
            - 2.0 * td * tr / (td + tr) * np.exp(-t * (1.0 / td + 1.0 / tr))
            + 0.5 * tr * np.exp(-2.0 * t / tr)
        )
        return np.clip(1.0 - tail, 0.0, 1.0)

    def mean_delay(self) -> float:
        tr, td = self.rise_time, self.decay_time
        a = 1.0 / td + 1.0 / tr
        return self.norm_sq * (0.25 * td**2 - 2.0 / a**2 + 0.25 * tr**2)

    def peak_time(self) -> float:
        tr, td = self.rise_time, self.decay_time
        return math.log(td / tr) * td * tr / (td - tr)


DEFAULT_MODE = TemporalMode()


def energy_fraction(mode: TemporalMode, window: float) -> float:
    """Fraction of |psi|^2 contained in [0, window]."""
    if window < 0:
        raise ValueError("window must be non-negative")
    if window == 0:
        return 0.0
    if mode._gap < DEGENERATE_GAP:
        val, _ = integrate.quad(mode.density, 0.0, window, limit=200)
        return float(min(max(val, 0.0), 1.0))
    return float(mode.cdf(window))


@lru_cache(maxsize=64)
def _inverse_cdf_grid(mode: TemporalMode):
    t = np.linspace(0.0, GRID_SPAN * mode.decay_time, GRID_POINTS)
    if mode._gap < DEGENERATE_GAP:
        dens = mode.density(t)
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))))
    else:
        cdf = mode.cdf(t)
    cdf = cdf / cdf[-1]
    # interp needs a non-decreasing abscissa; guard against round-off
    cdf = np.maximum.accumulate(cdf)
    return cdf, t


def sample_delay(mode: TemporalMode, rng: np.random.Generator, size=None):
    """Draw signal delays with density |psi|^2 (inverse CDF on a fixed grid)."""
    cdf, t = _inverse_cdf_grid(mode)
    u = rng.random(size)
    return np.interp(u, cdf, t)


def _overlap_nonneg(a: TemporalMode, b: TemporalMode, dt):
    # int psi_a(t) psi_b(t - dt) dt for dt >= 0, term by term
    na = math.sqrt(a.norm_sq)
    nb = math.sqrt(b.norm_sq)
    total = 0.0
    for sa, alpha in ((1.0, a.decay_time), (-1.0, a.rise_time)):
        for sb, beta in ((1.0, b.decay_time), (-1.0, b.rise_time)):
            total = total + sa * sb * np.exp(-dt / alpha) / (1.0 / alpha + 1.0 / beta)
    return na * nb * total


def _overlap_quad(a: TemporalMode, b: TemporalMode, dt: float) -> float:
    lo = max(0.0, dt)
    span = GRID_SPAN * max(a.decay_time, b.decay_time)
    val, _ = integrate.quad(lambda t: a.amplitude(t) * b.amplitude(t - dt), lo, lo + span, limit=400)
    return val


def mode_overlap(a: TemporalMode, b: TemporalMode, dt=0.0):
    """|<psi_a | psi_b shifted by dt>|, vectorized over dt (seconds)."""
    dt_arr = np.asarray(dt, dtype=float)
    if min(a._gap, b._gap) < DEGENERATE_GAP:
        out = np.abs(np.vectorize(lambda x: _overlap_quad(a, b, x))(dt_arr))
    else:
        pos = _overlap_nonneg(a, b, np.maximum(dt_arr, 0.0))
        neg = _overlap_nonneg(b, a, np.maximum(-dt_arr, 0.0))
        out = np.abs(np.where(dt_arr >= 0, pos, neg))
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out


def hom_coincidence_probability(a: TemporalMode, b: TemporalMode, dt=0.0, indistinguishability: float = 1.0):
    """Cross-output coincidence probability for two single photons on a 50:50 splitter.

    ``indistinguishability`` scales |overlap|^2 for degrees of freedom the
    temporal model does not carry (polarization, frequency mismatch).
    """
    if not 0.0 <= indistinguishability <= 1.0:
        raise ValueError("indistinguishability must be in [0, 1]")
    ov = mode_overlap(a, b, dt)
    out = 0.5 * (1.0 - indistinguishability * np.square(ov))
    return float(out) if np.ndim(out) == 0 else out


def hom_visibility(a: TemporalMode, b: TemporalMode, indistinguishability: float = 1.0) -> float:
    return 1.0 - hom_coincidence_probability(a, b, 0.0, indistinguishability) / 0.5
