"""HOM visibility of two identical sources vs detector jitter.

    python scripts/hom_vs_jitter.py --jitter 0,55,150,350 --duration 2
"""
import argparse

from biphoton import correlate, presets
from biphoton.sim import simulate_hom_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--jitter", default="0,55,150,350", help="detector jitter FWHM values [ps]")
    ap.add_argument("--pair-rate", type=float, default=1e6, help="pairs/s per source")
    ap.add_argument("--duration", type=float, default=2.0, help="s")
    ap.add_argument("--bin-ps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    ideal = presets.get("ideal")
    print("jitter_ps,visibility,sigma")
    for j in (float(x) for x in args.jitter.split(",")):
        # same seeds at every jitter value
        a = ideal.source(pair_rate=args.pair_rate, duration=args.duration, seed=args.seed, jitter_fwhm=j * 1e-12)
        b = ideal.source(pair_rate=args.pair_rate, duration=args.duration, seed=args.seed + 1,
                         jitter_fwhm=j * 1e-12)
        s = simulate_hom_experiment(a, b, beamsplitter_seed=args.seed + 2)
        prof = correlate.hom_profile(s, 0, 2, 4, 5, bin_width=args.bin_ps)
        print(f"{j:g},{prof.visibility:.4f},{prof.visibility_sigma:.4f}")


if __name__ == "__main__":
    main()
