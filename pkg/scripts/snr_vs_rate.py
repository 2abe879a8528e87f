"""Cross-correlation peak g2_max vs detected pair rate for a preset.

    python scripts/snr_vs_rate.py --preset paper-2023 --rates 25,50,100,200,400
"""
import argparse

from biphoton import correlate, presets
from biphoton.sim import simulate_pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="paper-2023", choices=sorted(presets.PRESETS))
    ap.add_argument("--rates", default="25,50,100,200,400", help="detected pair rates [kcps]")
    ap.add_argument("--duration", type=float, default=2.0, help="s per point")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = presets.get(args.preset)
    print("target_kcps,measured_kcps,g2_max,g2_max_sigma,eta_h")
    for k, r in enumerate(float(x) * 1e3 for x in args.rates.split(",")):
        s = simulate_pairs(p.source(detected_rate=r, duration=args.duration, seed=args.seed + k))
        h = correlate.g2_cross(s, 0, 1)
        peak = correlate.g2_peak(h)
        rate = correlate.detected_pair_rate(s, 0, 1)
        eta = correlate.heralding_efficiency(s, 0, 1)
        print(f"{r / 1e3:.0f},{rate / 1e3:.1f},{peak.g2_max:.1f},{correlate.g2_peak_sigma(h):.1f},{eta:.4f}")


if __name__ == "__main__":
    main()
