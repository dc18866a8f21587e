"""Exact-diagonalization oracle for small model Hamiltonians.

The determinant basis and sign convention are those of :mod:`orbopt.core`,
so every state produced here can be fed straight into the overlap engine.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from orbopt.core import Determinant, Statevector, excite, occ_string

log = logging.getLogger(__name__)

SYM_TOL = 1e-12
MAX_FCI_DIM = 10**6
DENSE_MAX_DIM = 2500
ZERO_AMPLITUDE = 1e-14


@dataclass
class ModelHamiltonian:
    """One-body matrix plus either an on-site Hubbard U or a dense (ij|kl) tensor.

    ``eri`` is in chemists' notation. ``meta`` carries whatever the source
    provided (e.g. FCIDUMP ``NELEC``/``MS2``); it never affects the physics.
    """

    h1: np.ndarray
    hubbard_u: float | np.ndarray | None = None
    eri: np.ndarray | None = None
    core_energy: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=float)
        n = self.h1.shape[0]
        if self.h1.shape != (n, n):
            raise ValueError("h1 must be square")
        if np.max(np.abs(self.h1 - self.h1.T), initial=0.0) > SYM_TOL:
            raise ValueError("h1 is not symmetric")
        if self.hubbard_u is not None and self.eri is not None:
            raise ValueError("give either hubbard_u or eri, not both")
        if self.eri is not None:
            self.eri = np.asarray(self.eri, dtype=float)
            if self.eri.shape != (n,) * 4:
                raise ValueError(f"eri must have shape {(n,) * 4}")
            for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
                if np.max(np.abs(self.eri - self.eri.transpose(perm)), initial=0.0) > SYM_TOL:
                    raise ValueError("eri lacks 8-fold permutational symmetry")

    @property
    def n_orbitals(self) -> int:
        return self.h1.shape[0]

    def dense_eri(self) -> np.ndarray:
        """The two-body tensor, promoting an on-site U to ``U_i delta_ijkl``."""
        n = self.n_orbitals
        if self.eri is not None:
            return self.eri
        eri = np.zeros((n,) * 4)
        if self.hubbard_u is not None:
            u = np.broadcast_to(np.asarray(self.hubbard_u, dtype=float), (n,))
            for i in range(n):
                eri[i, i, i, i] = u[i]
        return eri


def build_hubbard(sites: int, t: float, u: float, pbc: bool = False) -> ModelHamiltonian:
    """Nearest-neighbour Hubbard chain; ring closure only when ``pbc``."""
    if sites < 2:
        raise ValueError("need at least 2 sites")
    h1 = np.zeros((sites, sites))
    for i in range(sites - 1):
        h1[i, i + 1] = h1[i + 1, i] = -t
    if pbc and sites > 2:
        h1[0, -1] = h1[-1, 0] = -t
    return ModelHamiltonian(h1, hubbard_u=float(u))


def site_to_mo_coefficients(h: ModelHamiltonian) -> np.ndarray:
    """Eigenvectors of ``h1`` (columns, ascending energy) with a fixed sign convention."""
    _, vecs = np.linalg.eigh(h.h1)
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        j = int(np.argmax(np.abs(col) > np.max(np.abs(col)) - 1e-12))
        if col[j] < 0:
            vecs[:, k] = -col
    return vecs


def rotate_hamiltonian(h: ModelHamiltonian, c: np.ndarray) -> ModelHamiltonian:
    """Express ``h`` in the orbitals given by the columns of ``c``.

    ``h1' = c^T h1 c`` and the two-body tensor is transformed on all four
    indices. The determinant-overlap matrix for these orbitals is ``c^T``.
    """
    c = np.asarray(c, dtype=float)
    n = h.n_orbitals
    if c.shape != (n, n):
        raise ValueError("rotation has the wrong shape")
    h1 = c.T @ h.h1 @ c
    h1 = 0.5 * (h1 + h1.T)
    eri = None
    if h.hubbard_u is not None or h.eri is not None:
        eri = np.einsum("ip,jq,kr,ls,ijkl->pqrs", c, c, c, c, h.dense_eri(), optimize=True)
        eri = _symmetrize_eri(eri)
    return ModelHamiltonian(h1, eri=eri, core_energy=h.core_energy, meta=dict(h.meta))


def _symmetrize_eri(eri):
    perms = [
        (0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2),
        (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0),
    ]
    return sum(eri.transpose(p) for p in perms) / 8.0


def spin_strings(n_orbitals: int, n_electrons: int) -> list[str]:
    return [occ_string(c, n_orbitals) for c in itertools.combinations(range(n_orbitals), n_electrons)]


class FciSpace:
    """Product basis of alpha and beta strings; index = ia * n_beta_strings + ib."""

    def __init__(self, n_orbitals: int, n_alpha: int, n_beta: int):
        self.n_orbitals = n_orbitals
        self.n_alpha = n_alpha
        self.n_beta = n_beta
        self.alpha_strings = spin_strings(n_orbitals, n_alpha)
        self.beta_strings = spin_strings(n_orbitals, n_beta)
        self.alpha_index = {s: i for i, s in enumerate(self.alpha_strings)}
        self.beta_index = {s: i for i, s in enumerate(self.beta_strings)}

    @property
    def dim(self) -> int:
        return len(self.alpha_strings) * len(self.beta_strings)

    def index(self, det: Determinant) -> int:
        return self.alpha_index[det.alpha] * len(self.beta_strings) + self.beta_index[det.beta]

    def determinant(self, k: int) -> Determinant:
        ia, ib = divmod(k, len(self.beta_strings))
        return Determinant(self.alpha_strings[ia], self.beta_strings[ib])

    def to_vector(self, psi: Statevector) -> np.ndarray:
        v = np.zeros(self.dim)
        for det, amp in psi:
            v[self.index(det)] = amp
        return v

    def to_statevector(self, v: np.ndarray, *, drop_zeros: bool = True, check_norm: bool = True) -> Statevector:
        entries = [(self.determinant(k), float(x)) for k, x in enumerate(v) if not (drop_zeros and x == 0.0)]
        return Statevector.from_entries(
            self.n_orbitals, self.n_alpha, self.n_beta, entries, check_norm=check_norm
        )

    @cached_property
    def _excitations(self):
        return (
            _string_excitations(self.alpha_strings, self.alpha_index, self.n_orbitals),
            _string_excitations(self.beta_strings, self.beta_index, self.n_orbitals),
        )

    def excitation_operators(self) -> list[list[sp.csr_matrix]]:
        """Spin-summed ``E_pq`` on the product space as sparse matrices."""
        ea, eb = self._excitations
        ia = sp.identity(len(self.alpha_strings), format="csr")
        ib = sp.identity(len(self.beta_strings), format="csr")
        n = self.n_orbitals
        return [
            [(sp.kron(ea[p][q], ib) + sp.kron(ia, eb[p][q])).tocsr() for q in range(n)]
            for p in range(n)
        ]


def _string_excitations(strings, index, n):
    out = []
    for p in range(n):
        row = []
        for q in range(n):
            rows, cols, vals = [], [], []
            for k, s in enumerate(strings):
                res = excite(s, p, q)
                if res is not None:
                    rows.append(index[res[0]])
                    cols.append(k)
                    vals.append(res[1])
            row.append(sp.csr_matrix((vals, (rows, cols)), shape=(len(strings),) * 2))
        out.append(row)
    return out


def hamiltonian_matrix(h: ModelHamiltonian, space: FciSpace) -> sp.csr_matrix:
    """Sparse FCI matrix, core energy included on the diagonal."""
    n = h.n_orbitals
    e = space.excitation_operators()
    mat = sp.csr_matrix((space.dim, space.dim))
    if h.eri is None:
        for p in range(n):
            for q in range(n):
                if h.h1[p, q] != 0.0:
                    mat = mat + h.h1[p, q] * e[p][q]
        if h.hubbard_u is not None:
            u = np.broadcast_to(np.asarray(h.hubbard_u, dtype=float), (n,))
            na = np.array([[ch == "1" for ch in s] for s in space.alpha_strings], dtype=float)
            nb = np.array([[ch == "1" for ch in s] for s in space.beta_strings], dtype=float)
            diag = np.einsum("ai,bi,i->ab", na.reshape(-1, n), nb.reshape(-1, n), u).ravel()
            mat = mat + sp.diags(diag)
    else:
        eri = h.eri
        # E_pq E_rs - delta_qr E_ps rewritten with a contracted one-body part
        k = h.h1 - 0.5 * np.einsum("prrs->ps", eri)
        for p in range(n):
            for q in range(n):
                w = sp.csr_matrix((space.dim, space.dim))
                for r in range(n):
                    for s in range(n):
                        if eri[p, q, r, s] != 0.0:
                            w = w + eri[p, q, r, s] * e[r][s]
                term = 0.5 * (e[p][q] @ w)
                if k[p, q] != 0.0:
                    term = term + k[p, q] * e[p][q]
                mat = mat + term
    if h.core_energy:
        mat = mat + h.core_energy * sp.identity(space.dim)
    mat = 0.5 * (mat + mat.T)
    return mat.tocsr()


def lanczos_lowest(
    matvec, dim: int, *, n_eig: int = 2, tol: float = 1e-11, max_krylov: int = 200, seed: int = 0
):
    """Lowest eigenpairs by restarted Lanczos with full reorthogonalization."""
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim)
    max_krylov = min(max_krylov, dim)
    for _restart in range(50):
        basis = np.zeros((max_krylov, dim))
        alpha = np.zeros(max_krylov)
        beta = np.zeros(max_krylov)
        basis[0] = v0 / np.linalg.norm(v0)
        m = max_krylov
        for j in range(max_krylov):
            w = matvec(basis[j])
            alpha[j] = basis[j] @ w
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            b = np.linalg.norm(w)
            if j + 1 == max_krylov or b < 1e-13:
                m = j + 1
                break
            beta[j] = b
            basis[j + 1] = w / b
        tri = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
        evals, evecs = np.linalg.eigh(tri)
        vecs = basis[:m].T @ evecs[:, : min(n_eig, m)]
        ground = vecs[:, 0]
        resid = np.linalg.norm(matvec(ground) - evals[0] * ground)
        if resid < tol or m == dim:
            return evals[: min(n_eig, m)], vecs
        v0 = ground
    raise RuntimeError(f"Lanczos did not converge (residual {resid:.2e})")


@dataclass(frozen=True)
class FciResult:
    energy: float
    statevector: Statevector
    vector: np.ndarray
    gap: float
    residual: float


def fci_ground_state(h: ModelHamiltonian, n_alpha: int, n_beta: int, *, seed: int = 0) -> FciResult:
    """Lowest eigenpair; the largest-|amplitude| coefficient is made positive.

    ``seed`` only drives the Lanczos start vector used above the dense cutoff.
    """
    n = h.n_orbitals
    dim = math.comb(n, n_alpha) * math.comb(n, n_beta)
    if dim > MAX_FCI_DIM:
        raise ValueError(f"FCI dimension {dim} exceeds cap {MAX_FCI_DIM}")
    space = FciSpace(n, n_alpha, n_beta)
    mat = hamiltonian_matrix(h, space)
    if dim <= DENSE_MAX_DIM:
        evals, evecs = np.linalg.eigh(mat.toarray())
    else:
        evals, evecs = lanczos_lowest(mat.dot, dim, seed=seed)
    vec = evecs[:, 0].copy()
    vec[np.abs(vec) < ZERO_AMPLITUDE] = 0.0
    vec /= np.linalg.norm(vec)
    gap = float(evals[1] - evals[0]) if len(evals) > 1 else math.inf
    sv = space.to_statevector(vec)
    if sv.amps[0] < 0:
        vec = -vec
        sv = space.to_statevector(vec)
    energy = float(evals[0])
    residual = float(np.linalg.norm(mat @ vec - energy * vec))
    return FciResult(energy=energy, statevector=sv, vector=vec, gap=gap, residual=residual)


def energy_expectation(h: ModelHamiltonian, psi: Statevector) -> float:
    """``<psi|H|psi> / <psi|psi>`` for an arbitrary (e.g. truncated) state."""
    space = FciSpace(psi.n_orbitals, psi.n_alpha, psi.n_beta)
    v = space.to_vector(psi)
    mat = hamiltonian_matrix(h, space)
    return float(v @ (mat @ v) / (v @ v))


def truncated_reference(result: FciResult, keep_fraction: float) -> Statevector:
    """Top ``ceil(fraction * N)`` amplitudes, not renormalized.

    The discarded mass is ``result.statevector.norm_sq - returned.norm_sq``.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    psi = result.statevector
    n_keep = max(1, math.ceil(keep_fraction * len(psi) - 1e-9))
    out = psi.truncated(n_keep)
    log.debug("kept %d of %d determinants, discarded mass %.3e", n_keep, len(psi), psi.norm_sq - out.norm_sq)
    return out


def _spin_raise(det_amps: dict, n_orbitals: int) -> dict:
    out: dict[Determinant, float] = {}
    for det, amp in det_amps.items():
        a, b = det.alpha, det.beta
        n_a = a.count("1")
        for p in range(n_orbitals):
            if b[p] == "1" and a[p] == "0":
                sign = -1 if (n_a + a.count("1", 0, p) + b.count("1", 0, p)) % 2 else 1
                new = Determinant(a[:p] + "1" + a[p + 1:], b[:p] + "0" + b[p + 1:])
                out[new] = out.get(new, 0.0) + sign * amp
    return out


def _spin_lower(det_amps: dict, n_orbitals: int) -> dict:
    out: dict[Determinant, float] = {}
    for det, amp in det_amps.items():
        a, b = det.alpha, det.beta
        n_a = a.count("1")
        for p in range(n_orbitals):
            if a[p] == "1" and b[p] == "0":
                sign = -1 if (n_a - 1 + a.count("1", 0, p) + b.count("1", 0, p)) % 2 else 1
                new = Determinant(a[:p] + "0" + a[p + 1:], b[:p] + "1" + b[p + 1:])
                out[new] = out.get(new, 0.0) + sign * amp
    return out


def apply_s2(psi: Statevector) -> Statevector:
    """``S^2|psi>`` via ``S- S+ + Sz(Sz + 1)``."""
    sz = 0.5 * (psi.n_alpha - psi.n_beta)
    src = psi.as_dict()
    out = _spin_lower(_spin_raise(src, psi.n_orbitals), psi.n_orbitals)
    for det, amp in src.items():
        out[det] = out.get(det, 0.0) + sz * (sz + 1) * amp
    return Statevector.from_dict(psi.n_orbitals, psi.n_alpha, psi.n_beta, out, check_norm=False)


def inner(a: Statevector, b: Statevector) -> float:
    bd = b.as_dict()
    return math.fsum(amp * bd.get(det, 0.0) for det, amp in a)


def read_fcidump(path) -> ModelHamiltonian:
    """Load an FCIDUMP file (parser lives in :mod:`orbopt.formats`)."""
    from orbopt.formats import read_fcidump as _read

    return _read(path)
