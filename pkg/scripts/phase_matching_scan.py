"""Phase-matching factor vs signal angle for several pump detunings.

Writes a CSV (theta_deg, detuning_ghz, factor) and prints the optimum
angle and the factor at the collection angle for each detuning.

    python scripts/phase_matching_scan.py --detuning -1.1,1.0,1.1 -o scan.csv
"""
import argparse
import math

import numpy as np

from biphoton.phasematch import OpticalGeometry, ghz, optimize_geometry, scan_phase_matching


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--detuning", default="-1.1,1.0,1.1", help="comma-separated pump detunings [GHz]")
    ap.add_argument("--max-angle", type=float, default=3.0, help="deg")
    ap.add_argument("--step", type=float, default=0.01, help="deg")
    ap.add_argument("--collection-angle", type=float, default=1.4, help="deg")
    ap.add_argument("-o", "--output", default="phase_matching_scan.csv")
    args = ap.parse_args()

    detunings = [float(x) for x in args.detuning.split(",")]
    theta = np.radians(np.arange(0.0, args.max_angle + args.step / 2, args.step))
    scan = scan_phase_matching(theta, [ghz(d) for d in detunings])
    with open(args.output, "w") as fh:
        fh.write(scan.to_csv())

    coll = math.radians(args.collection_angle)
    print(f"collection angle {args.collection_angle:.2f} deg")
    for d in detunings:
        g = OpticalGeometry(pump_detuning=ghz(d))
        at_coll = scan_phase_matching([coll], [ghz(d)]).factor[0]
        if d < 0:
            res = optimize_geometry(g)
            opt = f"optimum {math.degrees(res.optimal_angle):.3f} deg"
        else:
            opt = "no phase-matched angle"
        print(f"{d:+.2f} GHz  factor {at_coll:.4f}  {opt}")
    print(f"wrote {len(scan)} rows to {args.output}")


if __name__ == "__main__":
    main()
