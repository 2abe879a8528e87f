"""Phase matching of the ladder-scheme four-wave-mixing process.

The pump (|5S>->|5P>) and control (|5P>->|5D>) beams counter-propagate
along the optical axis; signal and idler are emitted at small angles on
opposite sides.  Everything here is plane-wave and lossless: the mismatch
is purely real and the efficiency is ``sinc^2(dk L / 2)``.

Angles are in radians and detunings in rad/s.  Use :func:`ghz` to convert
an ordinary-frequency detuning such as ``-1.1`` GHz.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

C = 299_792_458.0  # m/s, exact

SERIES_CUTOFF = 1e-4
ROOT_XTOL = 1e-12
BRACKET_MAX = 0.2


def ghz(value: float) -> float:
    """Convert an ordinary frequency in GHz to angular frequency in rad/s."""
    return 2.0 * math.pi * value * 1e9


def to_ghz(omega: float) -> float:
    return omega / (2.0 * math.pi * 1e9)


@dataclass(frozen=True)
class OpticalGeometry:
    lambda_sp: float = 780e-9
    lambda_pd: float = 776e-9
    cell_length: float = 25e-3
    pump_detuning: float = 0.0
    signal_angle: float = 0.0

    def __post_init__(self):
        if not self.lambda_sp > self.lambda_pd > 0:
            raise ValueError("need lambda_sp > lambda_pd > 0")
        if not self.cell_length > 0:
            raise ValueError("cell_length must be positive")
        if not 0 <= self.signal_angle < math.pi / 2:
            raise ValueError("signal_angle must lie in [0, pi/2)")

    @property
    def omega_sp(self) -> float:
        return 2.0 * math.pi * C / self.lambda_sp

    @property
    def omega_pd(self) -> float:
        return 2.0 * math.pi * C / self.lambda_pd

    def with_(self, **changes) -> "OpticalGeometry":
        return replace(self, **changes)


@dataclass(frozen=True)
class PhaseMatchResult:
    delta_k: float
    factor: float
    optimal_angle: float | None = None


def _one_minus_cos(x):
    # 1 - cos(x) without cancellation at small x
    return 2.0 * np.sin(0.5 * x) ** 2


def delta_k_exact(geom: OpticalGeometry, signal_angle=None):
    """Signed wavevector mismatch [rad/m] from the full cosine expression.

    The idler sits at ``theta_s * omega_sp / omega_pd`` (transverse momentum
    conservation).  The carrier terms cancel analytically, leaving
    ``2*dp + w_sp(1 - cos t) - w_pd(1 - cos(r t))``, which is what gets
    evaluated so no precision is lost against the ~1e15 rad/s carriers.

    ``signal_angle`` overrides ``geom.signal_angle`` and may be an array.
    """
    theta = geom.signal_angle if signal_angle is None else np.asarray(signal_angle, dtype=float)
    w_sp, w_pd = geom.omega_sp, geom.omega_pd
    ratio = w_sp / w_pd
    bracket = (2.0 * geom.pump_detuning
               + w_sp * _one_minus_cos(theta)
               - w_pd * _one_minus_cos(theta * ratio))
    out = bracket / C
    return float(out) if np.ndim(out) == 0 else out


def delta_k_small_angle(geom: OpticalGeometry, signal_angle=None):
    """Quadratic small-angle approximation of :func:`delta_k_exact`."""
    theta = geom.signal_angle if signal_angle is None else np.asarray(signal_angle, dtype=float)
    w_sp, w_pd = geom.omega_sp, geom.omega_pd
    out = (2.0 * geom.pump_detuning + 0.5 * theta**2 * w_sp * (1.0 - w_sp / w_pd)) / C
    return float(out) if np.ndim(out) == 0 else out


def sinc(x):
    """Unnormalized sinc, sin(x)/x, with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)
    return float(out) if out.ndim == 0 else out


def phase_match_factor(delta_k, cell_length: float):
    if not cell_length > 0:
        raise ValueError("cell_length must be positive")
    out = sinc(np.asarray(delta_k, dtype=float) * cell_length / 2.0) ** 2
    return float(out) if np.ndim(out) == 0 else out


def evaluate(geom: OpticalGeometry, small_angle: bool = False) -> PhaseMatchResult:
    dk = delta_k_small_angle(geom) if small_angle else delta_k_exact(geom)
    return PhaseMatchResult(delta_k=dk, factor=phase_match_factor(dk, geom.cell_length))


def small_angle_optimum(geom: OpticalGeometry) -> float:
    """Closed-form zero of the quadratic approximation (0 if none exists)."""
    if geom.pump_detuning >= 0:
        return 0.0
    w_sp, w_pd = geom.omega_sp, geom.omega_pd
    return math.sqrt(-4.0 * geom.pump_detuning / (w_sp * (1.0 - w_sp / w_pd)))


def optimal_signal_angle(geom: OpticalGeometry) -> float:
    """Signal angle maximizing the phase-matching factor.

    For non-negative detuning both terms of the mismatch are >= 0 and it
    only grows with angle, so the collinear geometry wins.  For negative
    detuning the mismatch crosses zero exactly once (it is monotone in the
    angle on [0, pi/2)) and the crossing is found by bisection.
    """
    if geom.pump_detuning >= 0:
        return 0.0

    def f(theta):
        return delta_k_exact(geom, theta)

    guess = small_angle_optimum(geom)
    lo, hi = 0.5 * guess, min(2.0 * guess, BRACKET_MAX)
    if not (f(lo) < 0 < f(hi)):
        lo, hi = 0.0, BRACKET_MAX
        if f(hi) < 0:
            hi = math.nextafter(math.pi / 2, 0.0)
            if f(hi) < 0:
                # detuning too large to compensate geometrically
                return hi
    return optimize.bisect(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def optimize_geometry(geom: OpticalGeometry) -> PhaseMatchResult:
    theta = optimal_signal_angle(geom)
    dk = delta_k_exact(geom, theta)
    return PhaseMatchResult(dk, phase_match_factor(dk, geom.cell_length), theta)


def idler_angle(signal_angle, geom: OpticalGeometry):
    """Idler angle theta_s * k_s / k_i for resonant signal and idler."""
    return signal_angle * geom.omega_sp / geom.omega_pd


@dataclass(frozen=True)
class PhaseMatchScan:
    theta: np.ndarray       # rad
    detuning: np.ndarray    # rad/s
    factor: np.ndarray

    def __len__(self):
        return len(self.factor)

    def rows(self):
        return zip(self.theta, self.detuning, self.factor)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("theta_deg,detuning_ghz,factor\n")
        for th, dp, f in self.rows():
            buf.write(f"{math.degrees(th):.9g},{to_ghz(dp):.9g},{f:.9g}\n")
        return buf.getvalue()


def scan_phase_matching(
    angles: Sequence[float] | np.ndarray,
    detunings: Iterable[float],
    geom: OpticalGeometry = OpticalGeometry(),
    small_angle: bool = False,
) -> PhaseMatchScan:
    """Factor on a (detuning, angle) grid, detuning-major row order."""
    angles = np.asarray(angles, dtype=float).ravel()
    detunings = np.asarray(list(detunings), dtype=float).ravel()
    if angles.size == 0 or detunings.size == 0:
        raise ValueError("scan grids must be non-empty")
    if np.any(angles < 0) or np.any(angles >= math.pi / 2):
        raise ValueError("angles must lie in [0, pi/2)")
    fn = delta_k_small_angle if small_angle else delta_k_exact
    blocks = []
    for dp in detunings:
        dk = fn(replace(geom, pump_detuning=float(dp)), angles)
        blocks.append(np.atleast_1d(phase_match_factor(dk, geom.cell_length)))
    return PhaseMatchScan(
        theta=np.tile(angles, detunings.size),
        detuning=np.repeat(detunings, angles.size),
        factor=np.concatenate(blocks),
    )
