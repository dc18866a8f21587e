"""End-to-end pipelines shared by the command line and the experiment scripts."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from orbopt.bounds import bound_eps_r2
from orbopt.core import KappaGenerator, Statevector, matrix_exponential, overlap
from orbopt.csf import expand_state, filter_csfs, singlet_embed_and_trace
from orbopt.formats import CsfFile, ReportRow
from orbopt.natorb import basis_overlap_matrix, natural_orbitals, one_rdm
from orbopt.optimizer import (
    OptimizationTrace,
    OptimizerConfig,
    n_sd_for_fraction,
    optimize,
    select_reference_determinant,
)
from orbopt.oracle import (
    FciResult,
    ModelHamiltonian,
    energy_expectation,
    fci_ground_state,
    rotate_hamiltonian,
    site_to_mo_coefficients,
    truncated_reference,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpandResult:
    statevector: Statevector
    n_csf_in: int
    n_csf_kept: int
    dropped_mass: float

    def summary(self) -> dict:
        return {
            "n_csf_in": self.n_csf_in,
            "n_csf_kept": self.n_csf_kept,
            "n_sd": len(self.statevector),
            "norm_sq": self.statevector.norm_sq,
            "dropped_sd_mass": self.dropped_mass,
        }


def expand_csfs(
    csfs: CsfFile,
    t_csf: float = 1e-4,
    t_sd: float = 1e-4,
    *,
    singlet_embedding: bool = False,
    normalize: bool = False,
) -> ExpandResult:
    """CSF pre-filter at ``t_csf``, expansion with the ``t_sd`` determinant threshold."""
    if bool(csfs.aux) != singlet_embedding:
        raise ValueError(
            "file holds singlet-embedded CSFs; enable singlet embedding"
            if csfs.aux
            else "singlet embedding requested but the file has no auxiliary orbitals"
        )
    kept = filter_csfs(csfs.entries, t_csf)
    na = (csfs.n_electrons + csfs.m2) // 2
    nb = (csfs.n_electrons - csfs.m2) // 2
    dropped = 0.0
    if not kept:
        log.warning("t_csf=%g removes every CSF; writing an empty statevector", t_csf)
        psi = Statevector.from_entries(csfs.n_orbitals, na, nb, [])
    elif singlet_embedding:
        psi = singlet_embed_and_trace(kept, csfs.spin, t_sd)
    else:
        psi, dropped = expand_state(kept, t_sd, return_dropped=True)
    if normalize and len(psi):
        psi = psi.normalized()
    return ExpandResult(psi, len(csfs), len(kept), dropped)


def optimize_state(psi: Statevector, frac: float = 0.1, **config_kw) -> OptimizationTrace:
    """Largest-amplitude ``J'``, optimization on the top ``ceil(frac * N)`` terms."""
    j = select_reference_determinant(psi)
    config = OptimizerConfig(n_sd_opt=n_sd_for_fraction(psi, frac), **config_kw)
    return optimize(psi, j, config)


def optimize_summary(psi: Statevector, trace: OptimizationTrace) -> dict:
    return {
        "reference": [psi.dets[0].alpha, psi.dets[0].beta],
        "n_sd": len(psi),
        "n_sd_opt": trace.n_sd_opt,
        "p0_mo": float(psi.amps[0]) ** 2,
        "p0_opt": trace.p0_final,
        "iterations": len(trace.records),
        "converged": trace.converged,
        "grad_inf": trace.records[-1].grad_inf if trace.records else math.nan,
    }


def default_grid(n: int) -> list[int]:
    grid = {n}
    k = 1
    while k < n:
        grid.update(x for x in (k, 2 * k, 5 * k) if x < n)
        k *= 10
    return sorted(grid)


def sweep_nsd(psi: Statevector, kappa: KappaGenerator, grid: Sequence[int] | None = None, *, workers: int = 1):
    """p0 against the number of leading determinants, with the truncation bounds."""
    j = select_reference_determinant(psi)
    m = matrix_exponential(kappa)
    grid = default_grid(len(psi)) if grid is None else sorted(set(grid))
    if any(not 1 <= g <= len(psi) for g in grid):
        raise ValueError(f"grid points must lie in [1, {len(psi)}]")
    full = overlap(j, psi, m, len(psi), workers=workers)
    rows = []
    for g in grid:
        r = overlap(j, psi, m, g, workers=workers)
        rows.append(
            ReportRow(
                "nsd",
                g,
                r.p0,
                r.eps_r2,
                {
                    "eta": r.eta,
                    "p0_error": abs(r.p0 - full.p0),
                    "eta_error": abs(r.eta - full.eta),
                    "p0_bound": (abs(full.eta) + abs(r.eta)) * r.eps_r2,
                },
            )
        )
    return rows


@dataclass(frozen=True)
class NatorbResult:
    occupations: np.ndarray
    no_orbitals: np.ndarray
    mo_no: np.ndarray
    mo_opt: np.ndarray | None

    def summary(self) -> dict:
        eye = np.eye(len(self.occupations))
        out = {
            "occupations": self.occupations.tolist(),
            "trace": float(np.sum(self.occupations)),
            "dist_mo_no": float(np.linalg.norm(self.mo_no - eye)),
        }
        if self.mo_opt is not None:
            out["dist_mo_opt"] = float(np.linalg.norm(self.mo_opt - eye))
        return out


def opt_orbital_coefficients(kappa: KappaGenerator) -> np.ndarray:
    """Optimized orbitals as columns over the current basis (``M^T``)."""
    return matrix_exponential(kappa).T


def natorb_analysis(psi: Statevector, kappa: KappaGenerator | None = None) -> NatorbResult:
    occ, u = natural_orbitals(one_rdm(psi))
    eye = np.eye(psi.n_orbitals)
    mo_no = basis_overlap_matrix(eye, u).u
    mo_opt = None if kappa is None else basis_overlap_matrix(eye, opt_orbital_coefficients(kappa)).u
    return NatorbResult(occ, u, mo_no, mo_opt)


def model_ground_state(h: ModelHamiltonian, n_alpha: int, n_beta: int, basis: str = "mo", *, seed: int = 0):
    """FCI ground state in the site basis or in the eigenbasis of ``h1``.

    Returns ``(hamiltonian_in_that_basis, FciResult)``.
    """
    if basis == "mo":
        h = rotate_hamiltonian(h, site_to_mo_coefficients(h))
    elif basis != "site":
        raise ValueError(f"unknown basis {basis!r}")
    return h, fci_ground_state(h, n_alpha, n_beta, seed=seed)


def sweep_reference(
    h: ModelHamiltonian,
    result: FciResult,
    fractions: Sequence[float],
    frac_opt: float = 1.0,
    **config_kw,
) -> list[ReportRow]:
    """Optimize on truncated references; score each optimized basis against the full state."""
    full = result.statevector
    rows = []
    for fr in fractions:
        trunc = truncated_reference(result, fr)
        trace = optimize_state(trunc, frac_opt, **config_kw)
        j = select_reference_determinant(trunc)
        p0 = overlap(j, full, matrix_exponential(trace.kappa)).p0
        norm = trunc.norm_sq
        rows.append(
            ReportRow(
                f"{fr:g}",
                len(trunc),
                p0,
                bound_eps_r2(norm),
                {
                    "fraction": fr,
                    "norm_sq": norm,
                    "delta_e": energy_expectation(h, trunc) - result.energy,
                    "dominant_weight": float(trunc.amps[0]) ** 2 / norm,
                    "p0_mo": float(full.amps[0]) ** 2,
                    "converged": float(trace.converged),
                },
            )
        )
    return rows
