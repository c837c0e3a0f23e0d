"""Lower density profile of the ring packing and the upper-density curve.

Writes a CSV of density ratios at r = 2^k and prints the subsequence
estimate over a grid of c values next to the closed-form curve.
"""

import argparse
import math
from fractions import Fraction

from cylpack import density as D
from cylpack.cli import ring_density_summary
from cylpack.numerics import as_fraction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=as_fraction, default=Fraction(1, 10))
    ap.add_argument("--k-max", type=int, default=13)
    ap.add_argument("--c-points", type=int, default=17)
    ap.add_argument("--out", default="ring_density.csv")
    ap.add_argument("--svg")
    args = ap.parse_args()

    low, fams = ring_density_summary(args.epsilon, args.k_max, args.c_points)
    low.to_csv(args.out, {"epsilon": str(args.epsilon)})
    lo_t = math.pi / (6 * (1 + float(args.epsilon)))
    print(f"lower: {float(low.values[-1].mid()):.6f} at 2^{args.k_max} (target {lo_t:.6f})")
    print(f"{'c':>8} {'tail value':>12} {'curve':>10}")
    for c, prof in fams.items():
        curve = float(D.upper_density_curve(c, args.epsilon).mid())
        print(f"{float(c):8.4f} {float(prof.values[-1].mid()):12.6f} {curve:10.6f}")
    est = D.subsequence_max_estimate(fams)
    c_star, val, _ = D.curve_argmax(args.epsilon)
    print(f"estimate {float(est.value.mid()):.6f} at c = {est.argmax_c}; curve max "
          f"{float(val.mid()):.6f} at c* = {c_star}")
    if args.svg:
        low.to_svg(args.svg, {"lower": lo_t, "upper": float(val.mid())})


if __name__ == "__main__":
    main()
