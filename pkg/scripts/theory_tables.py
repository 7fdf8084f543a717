"""Print closed-form predictions: typical F^(1) curves, the rescaled collapse and resource counts.

Usage: python scripts/theory_tables.py [--n-data 2] [--steps 10]
"""

import argparse
import math

from hdtlab import theory


def typical_fp_table(n_data, n_ancillas, steps):
    d_A = 2**n_data
    print(f"F^(1)(t) for N_A={n_data} (Haar value {1 / d_A:.6f})")
    print("t    " + "".join(f"N_B={nb:<10d}" for nb in n_ancillas))
    for t in range(1, steps + 1):
        print(f"{t:<5d}" + "".join(f"{float(theory.f1_hdt(d_A, 2**nb, t)):<14.6f}" for nb in n_ancillas))
    print("inf  " + "".join(f"{float(theory.f1_hdt(d_A, 2**nb, math.inf)):<14.6f}" for nb in n_ancillas))


def collapse_table(n_data, n_ancillas, steps):
    d_A = 2**n_data
    print(f"\nrescaled F(t)/F(inf) against tau = t N_B, N_A={n_data}")
    print("tau  N_B  f1_hdt      collapse law")
    rows = []
    for nb in n_ancillas:
        f_inf = float(theory.f1_hdt(d_A, 2**nb, math.inf))
        for t in range(1, steps + 1):
            rows.append((t * nb, nb, float(theory.f1_hdt(d_A, 2**nb, t)) / f_inf))
    for tau, nb, r in sorted(rows):
        print(f"{tau:<5d}{nb:<5d}{r:<12.5f}{theory.collapse_law(tau, d_A, 1):.5f}")


def resource_table():
    print("\ncritical system size N_A*(K, eps)")
    for eps in (1e-2, 1e-3, 1e-6):
        print(f"eps={eps:g}: " + ", ".join(f"K={K}: {theory.critical_na(K, eps):.1f}" for K in (1, 2, 3, 4, 8)))
    print("\nminimum ancilla for an eps-approximate K-design (eps = 1e-3, N_A = 10)")
    for K in (1, 2, 3, 4):
        q = theory.ResourceQuery(10, K, 1e-3)
        print(f"K={K}: HDT {theory.min_ancilla_hdt(q):.2f}, DT {theory.min_ancilla_dt(q):.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-data", type=int, default=2)
    ap.add_argument("--steps", type=int, default=10)
    args = ap.parse_args()
    typical_fp_table(args.n_data, [1, 2, 3], args.steps)
    collapse_table(args.n_data, [1, 2, 3], args.steps)
    resource_table()


if __name__ == "__main__":
    main()
