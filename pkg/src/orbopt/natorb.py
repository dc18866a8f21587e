"""Spin-summed one-particle density matrices, natural orbitals and basis comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from orbopt.core import Statevector, excite

DEGENERACY_TOL = 1e-9
ORTHONORMAL_TOL = 1e-10


@dataclass(frozen=True)
class OneRdm:
    gamma: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.gamma))


@dataclass(frozen=True)
class BasisComparison:
    u: np.ndarray

    def distance_to_identity(self) -> float:
        """Frobenius distance ``||u - I||``."""
        return float(np.linalg.norm(self.u - np.eye(self.u.shape[0])))

    def to_csv(self) -> str:
        from orbopt.formats import write_matrix_csv

        return write_matrix_csv(self.u)


def one_rdm(psi: Statevector) -> OneRdm:
    """``gamma_pq = sum_sigma <psi|a+_p a_q|psi> / <psi|psi>``."""
    if len(psi) == 0:
        raise ValueError("empty statevector")
    n = psi.n_orbitals
    amps = psi.as_dict()
    gamma = np.zeros((n, n))
    for det, c in psi:
        for spin in (0, 1):
            s = det.alpha if spin == 0 else det.beta
            for q in det.alpha_occ if spin == 0 else det.beta_occ:
                for p in range(n):
                    res = excite(s, p, q)
                    if res is None:
                        continue
                    new, sign = res
                    target = type(det)(new, det.beta) if spin == 0 else type(det)(det.alpha, new)
                    c_bra = amps.get(target)
                    if c_bra is not None:
                        gamma[p, q] += sign * c_bra * c
    gamma = 0.5 * (gamma + gamma.T) / psi.norm_sq
    return OneRdm(gamma)


def _align_block(vecs: np.ndarray) -> np.ndarray:
    """Rotate a degenerate eigenvector block towards the parent basis vectors.

    The parent vectors best represented in the subspace are selected and the
    block is rotated (orthogonal Procrustes) so that its restriction to those
    rows is symmetric positive definite, i.e. as close to the identity as the
    subspace allows. Columns end up ordered by their parent index.
    """
    k = vecs.shape[1]
    weight = np.sum(vecs**2, axis=1)
    rows = np.sort(np.argsort(-weight, kind="stable")[:k])
    a, _, bt = np.linalg.svd(vecs[rows])
    return vecs @ (bt.T @ a.T)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    u = u.copy()
    for k in range(u.shape[1]):
        col = np.abs(u[:, k])
        j = int(np.argmax(col > col.max() - 1e-12))
        if u[j, k] < 0:
            u[:, k] = -u[:, k]
    return u


def natural_orbitals(gamma: OneRdm | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Occupations (descending) and natural orbitals as the columns of ``u``.

    Degenerate occupations are resolved by maximal alignment with the parent
    basis; then each column's largest-magnitude component is made positive.
    """
    g = gamma.gamma if isinstance(gamma, OneRdm) else np.asarray(gamma, dtype=float)
    evals, evecs = np.linalg.eigh(g)
    order = np.argsort(-evals, kind="stable")
    occ, u = evals[order], evecs[:, order]
    start = 0
    n = len(occ)
    while start < n:
        stop = start + 1
        while stop < n and abs(occ[stop] - occ[start]) < DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            u[:, start:stop] = _align_block(u[:, start:stop])
        start = stop
    return occ, _fix_signs(u)


def basis_overlap_matrix(u_a: np.ndarray, u_b: np.ndarray) -> BasisComparison:
    """Mutual overlaps ``u_a^T u_b`` of two orthonormal bases given as columns."""
    for name, u in (("u_a", u_a), ("u_b", u_b)):
        u = np.asarray(u, dtype=float)
        defect = np.max(np.abs(u.T @ u - np.eye(u.shape[1])), initial=0.0)
        if defect > ORTHONORMAL_TOL:
            raise ValueError(f"{name} is not orthogonal (defect {defect:.2e})")
    return BasisComparison(np.asarray(u_a).T @ np.asarray(u_b))
