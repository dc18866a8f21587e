"""Acceptance criteria 1-9. Each test records one PASS/FAIL line at the stated tolerance and time limit.

Run as ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
import scipy.optimize

from conftest import hubbard_state, random_orthogonal, random_statevector
from generators import (
    mutate_csf,
    mutate_kappa,
    mutate_statevector,
    random_csf_file,
    random_kappa,
    random_report,
)
from generators import random_statevector as random_sdvec
from orbopt import cli
from orbopt.bounds import bound_eps_r1, bound_eps_r2
from orbopt.core import Determinant, KappaGenerator, matrix_exponential, overlap
from orbopt.csf import CsfEntry, count_csf, count_sd, d_matrix, expand_state, genealogical_paths, spin_patterns
from orbopt.formats import (
    FormatError,
    parse_csf_file,
    parse_kappa,
    parse_report,
    parse_statevector,
    serialize_csf_file,
    serialize_kappa,
    serialize_statevector,
    write_report,
)
from orbopt.natorb import natural_orbitals, one_rdm
from orbopt.optimizer import OptimizerConfig, objective, optimize, select_reference_determinant, value_and_gradient
from orbopt.oracle import apply_s2, build_hubbard, fci_ground_state, rotate_hamiltonian
from orbopt.workflows import optimize_state, sweep_nsd


class Criterion:
    """Collects failures for one criterion and records a single verdict line."""

    def __init__(self, number, limit, record):
        self.number, self.limit, self.record = number, limit, record
        self.failures = []
        self.t0 = time.perf_counter()

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)

    def finish(self, detail):
        elapsed = time.perf_counter() - self.t0
        self.check(elapsed < self.limit, f"runtime {elapsed:.1f}s >= {self.limit}s")
        verdict = "PASS" if not self.failures else "FAIL"
        extra = "" if not self.failures else " | " + "; ".join(self.failures[:3])
        self.record(f"ACCEPTANCE {self.number}: {verdict} ({elapsed:.2f}s) {detail}{extra}")
        assert not self.failures, "; ".join(self.failures)


def test_1_oracle_closure(record_acceptance):
    c = Criterion(1, 60, record_acceptance)
    rng = np.random.default_rng(2024)
    worst, done = 0.0, 0
    while done < 20:
        L = int(rng.choice([4, 5, 6]))
        na, nb = (L + 1) // 2, L // 2
        h = build_hubbard(L, 1.0, float(rng.uniform(1, 8)), pbc=bool(rng.integers(2)))
        res = fci_ground_state(h, na, nb)
        u = random_orthogonal(L, rng)
        rot = fci_ground_state(rotate_hamiltonian(h, u), na, nb)
        if min(res.gap, rot.gap) < 1e-6:
            continue
        j = rot.statevector.dets[0]
        p0 = overlap(j, res.statevector, u.T).p0
        worst = max(worst, abs(p0 - rot.statevector.amplitude(j) ** 2))
        done += 1
    c.check(worst < 1e-9, f"max |dp0| {worst:.2e}")
    c.finish(f"20 rotated Hubbard instances, max |p0 - a_J'^2| = {worst:.2e} (< 1e-9)")


def test_2_gradient(record_acceptance):
    c = Criterion(2, 30, record_acceptance)
    rng = np.random.default_rng(7)
    worst, checked = 0.0, 0
    for _ in range(20):
        L = int(rng.integers(2, 7))
        na, nb = int(rng.integers(1, L)), int(rng.integers(1, L))
        psi = random_statevector(rng, L, na, nb)
        j = psi.dets[0]
        k = KappaGenerator.from_params(L, 0.4 * rng.standard_normal(L * (L - 1) // 2))
        _, g = value_and_gradient(k, j, psi, len(psi))
        an = g[np.tril_indices(L, -1)]
        for i, x in enumerate(k.params):
            e = np.zeros_like(k.params)
            e[i] = 1e-5
            fp = objective(KappaGenerator.from_params(L, k.params + e), j, psi, len(psi))
            fm = objective(KappaGenerator.from_params(L, k.params - e), j, psi, len(psi))
            fd = (fp - fm) / 2e-5
            if abs(fd) > 1e-8:
                worst = max(worst, abs(an[i] - fd) / abs(fd))
                checked += 1
    c.check(worst < 1e-6, f"max relative error {worst:.2e}")
    c.finish(f"20 instances, {checked} entries, max rel. error {worst:.2e} (< 1e-6)")


def _s2_residual(psi, s):
    t = apply_s2(psi).as_dict()
    for det, a in psi:
        t[det] = t.get(det, 0.0) - s * (s + 1) * a
    return math.sqrt(math.fsum(x * x for x in t.values()))


def test_3_spin_purity(record_acceptance):
    c = Criterion(3, 30, record_acceptance)
    worst_s2 = worst_d = 0.0
    n_csf = 0
    for z in range(7):
        for s2 in range(z % 2, z + 1, 2):
            for m2 in range(-s2, s2 + 1, 2):
                d = d_matrix(z, s2 / 2, m2 / 2)
                worst_d = max(worst_d, float(np.max(np.abs(d.T @ d - np.eye(d.shape[1])))) if d.size else 0.0)
                for path in genealogical_paths(z, s2):
                    coupling = path if z else "0"
                    psi = expand_state([CsfEntry(coupling, 1.0, m2)])
                    worst_s2 = max(worst_s2, _s2_residual(psi, s2 / 2))
                    n_csf += 1
    for z in range(11):
        for s2 in range(z % 2, z + 1, 2):
            c.check(count_csf(z, s2 / 2) == len(genealogical_paths(z, s2)), f"N_CSF z={z} 2S={s2}")
        for m2 in range(-z, z + 1, 2):
            c.check(count_sd(z, m2 / 2) == len(spin_patterns(z, m2)), f"N_SD z={z} 2M={m2}")
    c.check(worst_s2 < 1e-10, f"S^2 residual {worst_s2:.1e}")
    c.check(worst_d < 1e-12, f"D^T D defect {worst_d:.1e}")
    c.finish(f"{n_csf} CSFs z<=6: max S^2 residual {worst_s2:.1e}, D^T D defect {worst_d:.1e}; counts z<=10 match")


def test_4_truncation_bound(record_acceptance):
    c = Criterion(4, 30, record_acceptance)
    _, res = hubbard_state(6, 4.0, 3, 3)
    psi = res.statevector
    trace = optimize_state(psi, 1.0)
    rows = sweep_nsd(psi, trace.kappa)
    for r in rows:
        c.check(r.extras["p0_error"] <= r.extras["p0_bound"], f"p0 bound N_SD={r.n_sd}")
        c.check(r.extras["eta_error"] <= r.eps_r2, f"eta bound N_SD={r.n_sd}")
    slack = min(r.eps_r2 - r.extras["eta_error"] for r in rows)
    c.finish(f"{len(rows)} grid points, both bounds hold row-wise (min eta slack {slack:.2e})")


def test_5_two_site_optimizer(record_acceptance):
    c = Criterion(5, 10, record_acceptance)
    parts = []
    for u in (4.0, 8.0, 16.0):
        _, res = hubbard_state(2, u, 1, 1)
        psi = res.statevector
        j = select_reference_determinant(psi)
        tr = optimize(psi, j, OptimizerConfig(n_sd_opt=len(psi)))

        def p0(t):
            return overlap(j, psi, matrix_exponential(KappaGenerator(np.array([[0.0, -t], [t, 0.0]])))).p0

        grid = np.linspace(-math.pi / 2, math.pi / 2, 4001)
        best = grid[int(np.argmax([p0(t) for t in grid]))]
        ref = scipy.optimize.minimize_scalar(lambda t: -p0(t), bounds=(best - 1e-3, best + 1e-3), method="bounded",
                                             options={"xatol": 1e-12})
        scan_max = max(-ref.fun, p0(best))
        c.check(abs(tr.p0_final - scan_max) < 1e-6, f"U={u:g}: {tr.p0_final} vs scan {scan_max}")
        if u == 16.0:
            c.check(tr.p0_final > 0.45, f"U=16 p0 {tr.p0_final:.4f} <= 0.45")
        parts.append(f"U={u:g} p0={tr.p0_final:.6f}")
    c.finish(", ".join(parts) + " (scan within 1e-6; U=16 > 0.45)")


def test_6_improvement_inequality(record_acceptance):
    c = Criterion(6, 120, record_acceptance)
    _, res = hubbard_state(6, 4.0, 3, 3)
    psi = res.statevector
    j = select_reference_determinant(psi)
    p0_mo = float(psi.amps[0]) ** 2
    full = optimize_state(psi, 1.0)
    c.check(full.converged and full.records[-1].grad_inf < 1e-6, "full-state optimization not converged")
    c.check(full.p0_final > p0_mo, f"p0(OPT) {full.p0_final} <= p0(MO) {p0_mo}")
    scored = {}
    for frac in (0.1, 0.5):
        tr = optimize_state(psi, frac)
        c.check(tr.converged, f"{frac:.0%} run not converged")
        scored[frac] = overlap(j, psi, matrix_exponential(tr.kappa)).p0
    gap = abs(scored[0.1] - scored[0.5])
    c.check(gap < 1e-4, f"|p0(10%) - p0(50%)| = {gap:.2e} >= 1e-4")
    c.finish(
        f"p0(MO)={p0_mo:.6f} p0(OPT)={full.p0_final:.6f} grad={full.records[-1].grad_inf:.1e}; "
        f"p0(10%)={scored[0.1]:.6f} p0(50%)={scored[0.5]:.6f}"
    )


def test_7_rdm_and_natural_orbitals(record_acceptance):
    c = Criterion(7, 10, record_acceptance)
    rng = np.random.default_rng(5)
    for _ in range(20):
        na, nb = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        g = one_rdm(random_statevector(rng, 5, na, nb))
        occ, _ = natural_orbitals(g)
        c.check(abs(g.trace - (na + nb)) < 1e-8, f"trace {g.trace} vs {na + nb}")
        c.check(occ.min() >= -1e-10 and occ.max() <= 2 + 1e-10, f"occupations {occ}")
    worst = 0.0
    for u in (0.5, 2.0, 4.0, 8.0, 16.0):
        for basis in ("mo", "site"):
            _, res = hubbard_state(2, u, 1, 1, basis=basis)
            occ, _ = natural_orbitals(one_rdm(res.statevector))
            x = 4 / math.sqrt(u * u + 16)
            worst = max(worst, float(np.max(np.abs(occ - [1 + x, 1 - x]))))
    c.check(worst < 1e-8, f"2-site occupation error {worst:.1e}")
    c.finish(f"trace/range on 20 random states; 2-site occupations max error {worst:.1e} (< 1e-8)")


def test_8_bound_evaluators(record_acceptance):
    c = Criterion(8, 1, record_acceptance)
    c.check(bound_eps_r1(1.0) == 0.0, "eps_r1(1) != 0")
    c.check(bound_eps_r2(1.0) == 0.0, "eps_r2(1) != 0")
    hexacene = bound_eps_r2(0.99207)
    c.check(abs(hexacene - 0.08905) <= 1e-5, f"eps_r2(0.99207) = {hexacene}")
    c.finish(f"eps_r1(1)=eps_r2(1)=0; eps_r2(0.99207)={hexacene:.6f} (0.08905 +- 1e-5)")


def _fuzz(n_cases: int) -> tuple[int, int]:
    rng = np.random.default_rng(99)
    mismatches = accepted = 0
    for i in range(n_cases):
        kind = i % 4
        if kind == 0:
            obj = random_sdvec(rng)
            text = serialize_statevector(obj)
            mismatches += parse_statevector(text) != obj or serialize_statevector(parse_statevector(text)) != text
            bad, parse = mutate_statevector(rng, text), parse_statevector
        elif kind == 1:
            obj = random_csf_file(rng)
            text = serialize_csf_file(obj)
            mismatches += parse_csf_file(text) != obj or serialize_csf_file(parse_csf_file(text)) != text
            bad, parse = mutate_csf(rng, text), parse_csf_file
        elif kind == 2:
            obj = random_kappa(rng)
            text = serialize_kappa(obj)
            mismatches += not np.array_equal(parse_kappa(text).kappa, obj.kappa)
            bad, parse = mutate_kappa(rng, text), parse_kappa
        else:
            rows = random_report(rng)
            mismatches += parse_report(write_report(rows)) != rows
            continue
        try:
            parse(bad)
            accepted += 1
        except FormatError:
            pass
    return mismatches, accepted


def test_9_formats_and_cli(record_acceptance, tmp_path):
    c = Criterion(9, 60, record_acceptance)
    n_cases = 1200
    mismatches, accepted = _fuzz(n_cases)
    c.check(mismatches == 0, f"{mismatches} round-trip mismatches")
    c.check(accepted == 0, f"{accepted} mutated files accepted")

    _, res = hubbard_state(4, 4.0, 2, 2)
    src = tmp_path / "psi.sdvec"
    src.write_text(serialize_statevector(res.statevector))
    psi = parse_statevector(src.read_text())
    kp = tmp_path / "k.txt"
    c.check(cli.main(["--workers", "1", "optimize", str(src), "--out-kappa", str(kp), "--frac", "1.0"]) == 0,
            "optimize failed")
    lib = optimize_state(psi, 1.0)
    c.check(kp.read_text() == serialize_kappa(lib.kappa), "optimize: kappa differs")
    out = tmp_path / "sweep.csv"
    c.check(cli.main(["sweep-nsd", str(src), "--kappa", str(kp), "--out", str(out)]) == 0, "sweep failed")
    c.check(out.read_text() == write_report(sweep_nsd(psi, lib.kappa)), "sweep-nsd: report differs")
    csf_text = "#CSFVEC L=4 NE=4 S2=0 M2=0\n++-- 0.8\n+-+- 0.6\n"
    (tmp_path / "in.csf").write_text(csf_text)
    sd = tmp_path / "out.sdvec"
    c.check(cli.main(["expand", str(tmp_path / "in.csf"), "--out", str(sd), "--t-sd", "0"]) == 0, "expand failed")
    lib_sd = expand_state(list(parse_csf_file(csf_text)), 0.0)
    c.check(sd.read_text() == serialize_statevector(lib_sd), "expand: statevector differs")
    c.finish(f"{n_cases} fuzz cases: {mismatches} mismatches, {accepted} mutants accepted; CLI == library bitwise")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
