"""Optimize orbitals on amplitude-truncated references and score them against the exact state.

Truncating the exact ground state stands in for an approximate reference of
varying quality.

    python scripts/reference_sweep.py --sites 6 --u 4 --fractions 0.01,0.05,0.2,1.0
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from orbopt.formats import write_report
from orbopt.oracle import build_hubbard
from orbopt.workflows import model_ground_state, sweep_reference


@dataclass
class Config:
    sites: int = 6
    u: float = 4.0
    t: float = 1.0
    basis: str = "mo"
    frac_opt: float = 1.0
    fractions: list[float] = field(default_factory=lambda: [0.01, 0.05, 0.2, 0.5, 1.0])
    out: str = "results/reference_sweep.csv"


def run(cfg: Config):
    n_up = (cfg.sites + 1) // 2
    h, res = model_ground_state(build_hubbard(cfg.sites, cfg.t, cfg.u), n_up, cfg.sites - n_up, cfg.basis)
    rows = sweep_reference(h, res, cfg.fractions, cfg.frac_opt)
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.out).write_text(write_report(rows))
    print(f"p0(MO) = {float(res.statevector.amps[0]) ** 2:.6f}")
    print(f"{'fraction':>8} {'n_sd':>6} {'p0(full)':>10} {'eps_r2':>9} {'dE':>10}")
    for r in rows:
        print(f"{r.label:>8} {r.n_sd:6d} {r.p0:10.6f} {r.eps_r2:9.2e} {r.extras['delta_e']:10.2e}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=Config.sites)
    ap.add_argument("--u", type=float, default=Config.u)
    ap.add_argument("--t", type=float, default=Config.t)
    ap.add_argument("--basis", choices=("mo", "site"), default=Config.basis)
    ap.add_argument("--frac-opt", type=float, default=Config.frac_opt)
    ap.add_argument("--fractions", type=lambda s: [float(x) for x in s.split(",")], default=None)
    ap.add_argument("--out", default=Config.out)
    args = vars(ap.parse_args())
    if args["fractions"] is None:
        del args["fractions"]
    run(Config(**args))


if __name__ == "__main__":
    main()
