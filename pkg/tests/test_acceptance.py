"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL ...`` line (visible in
``pytest -v`` output) and then asserts.  Tolerances are fixed here and are
not tuned to the outcome.  Run directly with ``python tests/test_acceptance.py``
for just the summary lines.
"""
import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, os.path.dirname(__file__))
import oracles  # noqa: E402
from biphoton import correlate, phasematch, presets  # noqa: E402
from biphoton.correlate import HeraldWindow  # noqa: E402
from biphoton.phasematch import OpticalGeometry, ghz  # noqa: E402
from biphoton.sim import (SourceConfig, simulate_heralded_autocorr, simulate_hom_experiment,  # noqa: E402
                          simulate_pairs)
from biphoton.tagstream import TagStream, read_stream, write_stream  # noqa: E402
from biphoton.temporal import DEFAULT_MODE, energy_fraction  # noqa: E402

pytestmark = pytest.mark.slow


def report(n, ok, detail, capsys=None):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def factor_at(dp_ghz, theta_deg=1.4):
    g = OpticalGeometry(pump_detuning=ghz(dp_ghz), signal_angle=math.radians(theta_deg))
    return phasematch.phase_match_factor(phasematch.delta_k_exact(g), g.cell_length)


def test_c1_phase_matching_ratios(capsys):
    r11 = factor_at(-1.1) / factor_at(1.0)
    r14 = factor_at(-1.1) / factor_at(1.1)
    ok = abs(r11 - 1.11) <= 0.02 and abs(r14 - 1.14) <= 0.02
    report(1, ok, f"F(-1.1)/F(+1.0)={r11:.4f} (1.11+-0.02), F(-1.1)/F(+1.1)={r14:.4f} (1.14+-0.02)", capsys)
    assert ok


def test_c2_sign_theorem(capsys):
    t0 = time.perf_counter()
    theta = np.radians(np.arange(0, 5000 + 1) * 1e-3)
    worst_pos, worst_root = 0.0, 1.0
    ok = True
    for dp in (0.1, 0.5, 1.0, 2.0):
        g = OpticalGeometry(pump_detuning=ghz(dp))
        f = phasematch.phase_match_factor(phasematch.delta_k_exact(g, theta), g.cell_length)
        worst_pos = max(worst_pos, float(f.max()))
        ok &= bool(np.all(f < 1))
    for dp in (-0.1, -0.5, -1.1, -2.0):
        g = OpticalGeometry(pump_detuning=ghz(dp))
        dk = phasematch.delta_k_exact(g, theta)
        ok &= bool(np.any(np.sign(dk[:-1]) != np.sign(dk[1:])))  # root bracketed on the grid
        res = phasematch.optimize_geometry(g)
        ok &= res.optimal_angle <= theta[-1]
        worst_root = min(worst_root, res.factor)
    ok &= worst_root > 1 - 1e-9
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    report(2, ok, f"max F(dp>0)={worst_pos:.6f} (<1), min F at root(dp<0)={worst_root:.15f} (>1-1e-9), "
                  f"{elapsed * 1e3:.0f} ms (<1 s)", capsys)
    assert ok


def test_c3_idler_angle_ratio(capsys):
    g = OpticalGeometry()
    th = math.radians(1.4)
    dev = abs(phasematch.idler_angle(th, g) / th - 1)
    ok = abs(dev - 0.005) <= 0.0005
    report(3, ok, f"|theta_i/theta_s - 1| = {dev * 100:.4f}% (0.5+-0.05%)", capsys)
    assert ok


def test_c4_baseline_normalization(capsys):
    cfg = SourceConfig(pair_rate=0.0, signal_noise_rate=1e5, idler_noise_rate=1e5, duration=10.0, seed=404)
    s = simulate_pairs(cfg)
    # every bin of the default 100 ps histogram within 1 +- 5 sigma
    h = correlate.g2_cross(s, 0, 1, bin_width=100)
    sigma = 1 / math.sqrt(h.accidentals)
    per_bin = float(np.max(np.abs(h.g2 - 1)) / sigma)
    # mean over a wide lag range, where +-0.005 is statistically resolvable
    wide = correlate.g2_cross(s, 0, 1, bin_width=100, tau_range=(-5_000_000, 5_000_000))
    mean = float(wide.g2.mean())
    mean_se = 1 / math.sqrt(wide.accidentals * wide.nbins)
    # same per-bin rule on the wide range with exact Poisson tails (two-sided 5-sigma probability)
    p5 = 2 * stats.norm.sf(5)
    lo, hi = stats.poisson.ppf(p5 / 2, wide.accidentals), stats.poisson.isf(p5 / 2, wide.accidentals)
    outside = int(np.count_nonzero((wide.counts < lo) | (wide.counts > hi)))
    ok = per_bin <= 5 and abs(mean - 1) <= 0.005 and outside == 0
    report(4, ok, f"max |g2-1|/sigma={per_bin:.2f} over {h.nbins} bins (<=5); mean={mean:.5f} "
                  f"(se {mean_se:.5f}) over {wide.nbins} bins (1+-0.005); Poisson-5sigma outliers={outside}",
           capsys)
    assert ok


def random_fixture(rng):
    """Five-channel stream (idlers 0/2, signals 1, outputs 4/5) with <= 1e4 tags."""
    n_total = int(np.exp(rng.uniform(np.log(20), np.log(10_000))))
    span = n_total * int(rng.integers(300, 5000))
    base = rng.integers(0, span, n_total // 3 + 1)
    parts = {}
    for ch, frac in ((0, 0.2), (1, 0.2), (2, 0.2), (4, 0.2), (5, 0.2)):
        k = max(1, int(frac * n_total))
        own = rng.integers(0, span, k)
        m = int(rng.integers(0, k + 1))
        own[:m] = base[rng.integers(0, base.size, m)] + rng.integers(0, 4000, m)
        parts[ch] = np.sort(own)
    if parts[0].size > 3:
        parts[0][1] = parts[0][0]  # a duplicated stamp
    ch = np.concatenate([np.full(v.size, c, np.uint8) for c, v in parts.items()])
    ts = np.concatenate(list(parts.values())).astype(np.uint64)
    order = np.lexsort((ch, ts))
    return TagStream(ch[order], ts[order], span + 10_000), parts


def test_c5_oracle_equivalence(capsys):
    rng = np.random.default_rng(505)
    n_streams, mismatches, sizes = 100, [], []
    win = HeraldWindow(0, 3500)
    for i in range(n_streams):
        s, p = random_fixture(rng)
        sizes.append(len(s))
        got = correlate.cross_histogram(p[0], p[1], -10_000, 100, 300, chunk_pairs=997)
        if not np.array_equal(got, oracles.pair_histogram(p[0], p[1], -10_000, 100, 300)):
            mismatches.append((i, "g2"))
        st_ = correlate.herald_stats(s, 0, 1, win)
        if st_.n_heralded != oracles.heralded_count(p[0], p[1], 0, 3500):
            mismatches.append((i, "herald"))
        ac = correlate.autocorr_stats(s, 0, 4, 5, win)
        if (ac.n_idler, ac.n_it, ac.n_ir, ac.n_itr) != oracles.threefold(p[0], p[4], p[5], 0, 3500):
            mismatches.append((i, "g2c"))
        _, hom = correlate.hom_counts(s, 0, 2, 4, 5, win, bin_width=100)
        if not np.array_equal(hom, oracles.hom_counts(p[0], p[2], p[4], p[5], 0, 3500, 100, 20_000)):
            mismatches.append((i, "hom"))
    ok = not mismatches and len(sizes) >= 100 and max(sizes) <= 10_000
    report(5, ok, f"{n_streams} streams ({min(sizes)}..{max(sizes)} tags): {len(mismatches)} mismatches "
                  f"across g2/herald/g2c/hom", capsys)
    assert ok, mismatches[:5]


def test_c6_detection_efficiency_laws(capsys):
    p = presets.get("paper-2023")
    pair_rate = p.pair_rate_for(200e3) * 0.5  # fixed generated rate for both runs
    t0 = time.perf_counter()
    out = {}
    for eta_d, seed in ((1.0, 61), (0.5, 62)):
        # detector efficiency scales everything a detector sees, background included
        cfg = SourceConfig(pair_rate=pair_rate, mode=p.mode, jitter_fwhm=p.jitter_fwhm,
                           signal_transmission=p.signal_optics * eta_d, idler_transmission=p.idler_optics * eta_d,
                           signal_noise_rate=p.signal_noise_rate / p.detector_efficiency * eta_d,
                           idler_noise_rate=p.idler_noise_rate / p.detector_efficiency * eta_d,
                           duration=4.0, seed=seed)
        s = simulate_pairs(cfg)
        h = correlate.g2_cross(s, 0, 1)
        out[eta_d] = (correlate.g2_peak(h).g2_max, correlate.g2_peak_sigma(h), correlate.detected_pair_rate(s, 0, 1))
    elapsed = time.perf_counter() - t0
    (g1, s1, r1), (g2, s2, r2) = out[1.0], out[0.5]
    z = abs(g1 - g2) / math.hypot(s1, s2)
    drop = r1 / r2
    ok = z <= 3 and abs(drop - 4.0) <= 0.2 and elapsed < 60
    report(6, ok, f"g2max {g1:.1f} vs {g2:.1f} ({z:.2f} sigma, <=3); R {r1 / 1e3:.1f} -> {r2 / 1e3:.1f} kcps, "
                  f"ratio {drop:.3f} (4.0+-0.2); {elapsed:.0f} s", capsys)
    assert ok


def test_c7_window_energy(capsys):
    e = energy_fraction(DEFAULT_MODE, 3.5e-9)
    ok = e >= 0.95
    report(7, ok, f"energy_fraction(3.5 ns) = {e:.6f} (>=0.95)", capsys)
    assert ok


def hom_visibility(jitter, indistinguishability, bin_width, runs=1, duration=10.0):
    """Visibility from the summed histograms of ``runs`` independent 10 s experiments."""
    ideal = presets.get("ideal")
    total = None
    for k in range(runs):
        a = ideal.source(pair_rate=1e6, duration=duration, seed=81 + 3 * k, jitter_fwhm=jitter)
        b = ideal.source(pair_rate=1e6, duration=duration, seed=82 + 3 * k, jitter_fwhm=jitter)
        s = simulate_hom_experiment(a, b, 83 + 3 * k, indistinguishability=indistinguishability)
        delays, counts = correlate.hom_counts(s, 0, 2, 4, 5, bin_width=bin_width)
        total = counts if total is None else total + counts
        del s
    _, vis, sigma = correlate.hom_visibility(delays, total, bin_width)
    return vis, sigma


def test_c8_hom_limits(capsys):
    # three runs for the two limits held to +-0.02; one run suffices for the ordering
    v_ideal, e_ideal = hom_visibility(0.0, 1.0, 50, runs=3)
    v_zero, e_zero = hom_visibility(0.0, 0.0, 2000, runs=3)
    v55, e55 = hom_visibility(55e-12, 1.0, 100)
    v350, e350 = hom_visibility(350e-12, 1.0, 100)
    ok = (abs(v_ideal - 1) <= 0.02 and abs(v_zero) <= 0.02 and v55 > v350
          and 0 < v350 < 1 and 0 < v55 < 1)
    report(8, ok, f"V ideal={v_ideal:.4f}+-{e_ideal:.4f} (1+-0.02); V zero-overlap={v_zero:.4f}+-{e_zero:.4f} "
                  f"(0+-0.02); V(55 ps)={v55:.4f}+-{e55:.4f} > V(350 ps)={v350:.4f}+-{e350:.4f}", capsys)
    assert ok


def test_c9_preset_headlines(capsys):
    p = presets.get("paper-2023")
    s = simulate_pairs(p.source(detected_rate=200e3, duration=4.0, seed=91))
    eta = correlate.heralding_efficiency(s, 0, 1)
    g2max = correlate.g2_peak(correlate.g2_cross(s, 0, 1)).g2_max
    rate = correlate.detected_pair_rate(s, 0, 1)
    a = simulate_heralded_autocorr(p.source(detected_rate=37e3, duration=20.0, seed=92), splitter_seed=93)
    g2c = correlate.heralded_g2c(a, 0, 4, 5)
    # SNR vs detected rate
    snr = []
    rates = (25e3, 50e3, 100e3, 200e3, 400e3)
    for k, r in enumerate(rates):
        sk = simulate_pairs(p.source(detected_rate=r, duration=2.0, seed=100 + k))
        snr.append(correlate.g2_peak(correlate.g2_cross(sk, 0, 1)).g2_max)
    monotone = all(x > y for x, y in zip(snr, snr[1:]))
    within = {
        "eta_h": abs(eta / 0.24 - 1) <= 0.15,
        "g2max": abs(g2max / 202 - 1) <= 0.15,
        "g2c": abs(g2c / 0.0112 - 1) <= 0.15,
    }
    ok = all(within.values()) and monotone
    report(9, ok, f"eta_h={eta:.4f} (0.24+-15%), g2max={g2max:.1f} @ R={rate / 1e3:.1f} kcps (202+-15%), "
                  f"g2c={g2c:.4f} (0.0112+-15%); SNR vs R {[round(x) for x in snr]} monotone={monotone}",
           capsys)
    assert ok


def test_c10_engineering(capsys):
    cfg = SourceConfig(pair_rate=4e6, signal_noise_rate=1.1e6, idler_noise_rate=1.1e6, duration=1.0, seed=10)
    s = simulate_pairs(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "big.bpl")
        write_stream(s, path)
        t0 = time.perf_counter()
        loaded = read_stream(path, duration_ps=cfg.duration_ps)
        ref = correlate.g2_cross(loaded, 0, 1, workers=1)
        elapsed = time.perf_counter() - t0
    n = len(loaded)
    rate = n / elapsed
    same = all(np.array_equal(correlate.g2_cross(loaded, 0, 1, workers=w, chunk_pairs=1_000_000).counts,
                              ref.counts) for w in (1, 4, 8))
    ok = n >= 10_000_000 and rate >= 1e6 and same
    report(10, ok, f"{n} tags read+g2 in {elapsed:.2f} s = {rate / 1e6:.1f} Mtags/s (>=1); "
                   f"workers 1/4/8 identical={same}", capsys)
    assert ok


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            fn(None)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
