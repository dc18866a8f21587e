"""Does optimizing on a truncated expansion give the same orbitals as a longer one?"""

import argparse

from orbopt.core import matrix_exponential, overlap
from orbopt.oracle import build_hubbard
from orbopt.optimizer import select_reference_determinant, truncation_consistency_check
from orbopt.workflows import model_ground_state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sites", type=int, default=6)
    ap.add_argument("--u", type=float, default=4.0)
    ap.add_argument("--fractions", type=lambda s: [float(x) for x in s.split(",")], default=[0.05, 0.1, 0.2, 0.5, 1.0])
    a = ap.parse_args()
    n_up = (a.sites + 1) // 2
    _, res = model_ground_state(build_hubbard(a.sites, 1.0, a.u), n_up, a.sites - n_up)
    psi = res.statevector
    j = select_reference_determinant(psi)
    rep = truncation_consistency_check(psi, j, a.fractions)
    print(f"{'fraction':>8} {'n_sd_opt':>8} {'p0(full)':>10} {'|kappa|max':>10} {'iters':>6}")
    for fr, tr in zip(rep.fractions, rep.traces):
        p0 = overlap(j, psi, matrix_exponential(tr.kappa)).p0
        print(f"{fr:8g} {tr.n_sd_opt:8d} {p0:10.6f} {abs(tr.kappa.kappa).max():10.4f} {len(tr.records):6d}")
    for (fa, fb), d in rep.kappa_diff.items():
        print(f"max|kappa({fa:g}) - kappa({fb:g})| = {d:.3e}")


if __name__ == "__main__":
    main()
