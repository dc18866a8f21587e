"""How far the natural and the optimized orbitals sit from the starting orbitals, and their p0."""

import argparse
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from orbopt.core import KappaGenerator, matrix_exponential, overlap
from orbopt.natorb import natural_orbitals, one_rdm
from orbopt.oracle import build_hubbard
from orbopt.optimizer import select_reference_determinant
from orbopt.workflows import model_ground_state, natorb_analysis, optimize_state


@dataclass
class Config:
    sites: int = 6
    u: float = 4.0
    protocols: tuple[float, ...] = (0.1, 1.0)


def no_kappa(psi):
    """Generator whose rotation maps the starting orbitals onto the natural orbitals."""
    _, u = natural_orbitals(one_rdm(psi))
    if np.linalg.det(u) < 0:
        u[:, -1] *= -1
    k = -scipy.linalg.logm(u.T).real
    return KappaGenerator.from_matrix(0.5 * (k - k.T), tol=1e-8)


def run(cfg: Config):
    n_up = (cfg.sites + 1) // 2
    _, res = model_ground_state(build_hubbard(cfg.sites, 1.0, cfg.u), n_up, cfg.sites - n_up)
    psi = res.statevector
    j = select_reference_determinant(psi)
    print(f"occupations: {np.array2string(natorb_analysis(psi).occupations, precision=5)}")
    print(f"p0(MO) = {overlap(j, psi, np.eye(cfg.sites)).p0:.6f}")
    print(f"p0(NO) = {overlap(j, psi, matrix_exponential(no_kappa(psi))).p0:.6f}")
    for frac in cfg.protocols:
        tr = optimize_state(psi, frac)
        s = natorb_analysis(psi, tr.kappa).summary()
        p0 = overlap(j, psi, matrix_exponential(tr.kappa)).p0
        print(f"OPT on {frac:.0%}: p0 = {p0:.6f}  ||MO-NO|| = {s['dist_mo_no']:.5f}  ||MO-OPT|| = {s['dist_mo_opt']:.5f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sites", type=int, default=Config.sites)
    ap.add_argument("--u", type=float, default=Config.u)
    a = ap.parse_args()
    run(Config(a.sites, a.u))


if __name__ == "__main__":
    main()
