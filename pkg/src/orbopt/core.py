"""Determinants, statevectors and the rotated-basis overlap engine.

Conventions used throughout the package:

* Occupation strings are ``str`` over ``{'0', '1'}``; character ``i`` is
  spatial orbital ``i`` (leftmost = orbital 0).
* A determinant is ``a+_{i1 a} ... a+_{iNa a} a+_{j1 b} ... a+_{jNb b}|0>``
  with occupied indices ascending inside each spin block, alpha block first.
* ``M = exp(-kappa)`` and ``M[j, i] = <psi'_j|psi_i>``: row ``j`` is the new
  orbital ``j`` expanded over the old ones.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from orbopt.bounds import bound_eps_r2

ORTHO_TOL = 1e-12
NORM_TOL = 1e-10


class SectorError(ValueError):
    """Determinants or states living in different particle-number sectors."""


@lru_cache(maxsize=None)
def occupied(occ: str) -> tuple[int, ...]:
    """Ascending occupied orbital indices of an occupation string."""
    return tuple(i for i, ch in enumerate(occ) if ch == "1")


def occ_string(indices: Iterable[int], n_orbitals: int) -> str:
    chars = ["0"] * n_orbitals
    for i in indices:
        chars[i] = "1"
    return "".join(chars)


def excite(occ: str, p: int, q: int) -> tuple[str, int] | None:
    """Apply ``a+_p a_q`` to one spin string.

    Returns the new string and the fermionic sign, or ``None`` when the
    result vanishes. The opposite spin block never contributes a sign because
    the operator pair is even.
    """
    if occ[q] != "1":
        return None
    if p == q:
        return occ, 1
    if occ[p] == "1":
        return None
    lo, hi = (p, q) if p < q else (q, p)
    n_between = occ.count("1", lo + 1, hi)
    chars = list(occ)
    chars[q] = "0"
    chars[p] = "1"
    return "".join(chars), -1 if n_between % 2 else 1


@dataclass(frozen=True, order=True)
class Determinant:
    """A Slater determinant as a pair of occupation strings."""

    alpha: str
    beta: str

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta strings must have the same length")
        if set(self.alpha) - {"0", "1"} or set(self.beta) - {"0", "1"}:
            raise ValueError(f"occupation strings must be binary: {self.alpha} {self.beta}")

    @property
    def n_orbitals(self) -> int:
        return len(self.alpha)

    @property
    def n_alpha(self) -> int:
        return self.alpha.count("1")

    @property
    def n_beta(self) -> int:
        return self.beta.count("1")

    @property
    def alpha_occ(self) -> tuple[int, ...]:
        return occupied(self.alpha)

    @property
    def beta_occ(self) -> tuple[int, ...]:
        return occupied(self.beta)

    @classmethod
    def from_indices(cls, n_orbitals: int, alpha: Iterable[int], beta: Iterable[int]):
        return cls(occ_string(alpha, n_orbitals), occ_string(beta, n_orbitals))

    @classmethod
    def aufbau(cls, n_orbitals: int, n_alpha: int, n_beta: int):
        return cls.from_indices(n_orbitals, range(n_alpha), range(n_beta))

    def __str__(self):
        return f"|{self.alpha};{self.beta}>"


def _sort_key(item: tuple[Determinant, float]):
    det, amp = item
    return (-abs(amp), det.alpha, det.beta)


@dataclass(frozen=True, eq=False)
class Statevector:
    """Sparse real statevector over determinants, sorted by descending |amplitude|.

    Build instances with :meth:`from_entries`, which sorts, validates and
    rejects duplicates. Ties in |amplitude| are ordered by ``(alpha, beta)``
    string comparison.
    """

    n_orbitals: int
    n_alpha: int
    n_beta: int
    dets: tuple[Determinant, ...]
    amps: np.ndarray = field(repr=False)

    @classmethod
    def from_entries(
        cls,
        n_orbitals: int,
        n_alpha: int,
        n_beta: int,
        entries: Iterable[tuple[Determinant, float]],
        *,
        check_norm: bool = True,
    ) -> "Statevector":
        items = [(det, float(amp)) for det, amp in entries]
        seen = set()
        for det, amp in items:
            if det.n_orbitals != n_orbitals:
                raise ValueError(f"{det} has {det.n_orbitals} orbitals, expected {n_orbitals}")
            if det.n_alpha != n_alpha or det.n_beta != n_beta:
                raise SectorError(f"{det} is not in the ({n_alpha}, {n_beta}) sector")
            if det in seen:
                raise ValueError(f"duplicate determinant {det}")
            if not math.isfinite(amp):
                raise ValueError(f"non-finite amplitude for {det}")
            seen.add(det)
        items.sort(key=_sort_key)
        amps = np.array([a for _, a in items], dtype=float)
        amps.setflags(write=False)
        sv = cls(n_orbitals, n_alpha, n_beta, tuple(d for d, _ in items), amps)
        if check_norm and sv.norm_sq > 1 + NORM_TOL:
            raise ValueError(f"norm_sq = {sv.norm_sq!r} exceeds 1")
        return sv

    @classmethod
    def from_dict(cls, n_orbitals, n_alpha, n_beta, amplitudes: dict, **kw):
        return cls.from_entries(n_orbitals, n_alpha, n_beta, amplitudes.items(), **kw)

    def __len__(self):
        return len(self.dets)

    def __eq__(self, other):
        if not isinstance(other, Statevector):
            return NotImplemented
        return (
            (self.n_orbitals, self.n_alpha, self.n_beta, self.dets)
            == (other.n_orbitals, other.n_alpha, other.n_beta, other.dets)
            and np.array_equal(self.amps, other.amps)
        )

    __hash__ = None

    def __iter__(self):
        return iter(zip(self.dets, self.amps.tolist()))

    @property
    def entries(self) -> list[tuple[Determinant, float]]:
        return list(self)

    @property
    def norm_sq(self) -> float:
        return math.fsum(a * a for a in self.amps.tolist())

    def norm_sq_head(self, n: int) -> float:
        return math.fsum(a * a for a in self.amps[:n].tolist())

    def amplitude(self, det: Determinant) -> float:
        return self.as_dict().get(det, 0.0)

    def as_dict(self) -> dict[Determinant, float]:
        return dict(zip(self.dets, self.amps.tolist()))

    def truncated(self, n: int) -> "Statevector":
        """The first ``n`` (largest-amplitude) entries, not renormalized."""
        amps = self.amps[:n].copy()
        amps.setflags(write=False)
        return Statevector(self.n_orbitals, self.n_alpha, self.n_beta, self.dets[:n], amps)

    def normalized(self) -> "Statevector":
        scale = 1.0 / math.sqrt(self.norm_sq)
        amps = self.amps * scale
        amps.setflags(write=False)
        return Statevector(self.n_orbitals, self.n_alpha, self.n_beta, self.dets, amps)


@dataclass(frozen=True)
class KappaGenerator:
    """Real antisymmetric generator; free parameters are the strictly-lower entries."""

    kappa: np.ndarray

    def __post_init__(self):
        k = np.array(self.kappa, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("kappa must be a square matrix")
        if not np.all(k == -k.T):
            raise ValueError("kappa must be exactly antisymmetric")
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)

    @property
    def n_orbitals(self) -> int:
        return self.kappa.shape[0]

    @classmethod
    def zeros(cls, n_orbitals: int) -> "KappaGenerator":
        return cls(np.zeros((n_orbitals, n_orbitals)))

    @classmethod
    def from_params(cls, n_orbitals: int, params) -> "KappaGenerator":
        params = np.asarray(params, dtype=float)
        rows, cols = np.tril_indices(n_orbitals, -1)
        if params.shape != rows.shape:
            raise ValueError(f"expected {rows.size} parameters, got {params.shape}")
        k = np.zeros((n_orbitals, n_orbitals))
        k[rows, cols] = params
        k[cols, rows] = -params
        return cls(k)

    @classmethod
    def from_matrix(cls, matrix, tol: float = ORTHO_TOL) -> "KappaGenerator":
        """Validate a nearly antisymmetric matrix and rebuild it from its lower triangle."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kappa must be a square matrix")
        defect = np.max(np.abs(m + m.T)) if m.size else 0.0
        if defect > tol:
            raise ValueError(f"kappa is not antisymmetric (defect {defect:.3e} > {tol:g})")
        n = m.shape[0]
        return cls.from_params(n, m[np.tril_indices(n, -1)])

    @property
    def params(self) -> np.ndarray:
        return self.kappa[np.tril_indices(self.n_orbitals, -1)].copy()


@dataclass(frozen=True)
class OverlapReport:
    eta: float
    p0: float
    n_sd_used: int
    norm_sq_used: float
    eps_r2: float
    eps_r1: float | None = None


def matrix_exponential(kappa: KappaGenerator) -> np.ndarray:
    """Orthogonal rotation ``M = exp(-kappa)`` (scaling-and-squaring Pade)."""
    return scipy.linalg.expm(-kappa.kappa)


def orthogonality_defect(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m.T @ m - np.eye(m.shape[0])))) if m.size else 0.0


def mo_overlap_from_coefficients(c: np.ndarray) -> np.ndarray:
    """Overlap matrix ``M`` for new orbitals given as the columns of ``c``."""
    return np.asarray(c).T.copy()


def _check_sector(a: Determinant, b: Determinant):
    if a.n_orbitals != b.n_orbitals or a.n_alpha != b.n_alpha or a.n_beta != b.n_beta:
        raise SectorError(f"incompatible sectors: {a} vs {b}")


def _subdet(m: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> float:
    if not rows:
        return 1.0
    return float(np.linalg.det(m[np.ix_(rows, cols)]))


def det_overlap(j_prime: Determinant, i: Determinant, m: np.ndarray) -> float:
    """``<J'|I> = det(M[J'a, Ia]) * det(M[J'b, Ib])``."""
    _check_sector(j_prime, i)
    m = np.asarray(m, dtype=float)
    da = _subdet(m, j_prime.alpha_occ, i.alpha_occ)
    db = _subdet(m, j_prime.beta_occ, i.beta_occ)
    return da * db


def _spin_block_dets(m, rows, strings):
    """Determinants of ``M[rows, occ(s)]`` for each unique string ``s``.

    Returns ``(values, inverse)`` with ``values[inverse[k]]`` the determinant
    belonging to ``strings[k]``.
    """
    uniq, inverse = np.unique(np.asarray(strings), return_inverse=True)
    if not rows:
        return np.ones(len(uniq)), inverse
    cols = np.array([occupied(s) for s in uniq.tolist()], dtype=int)
    sub = m[np.asarray(rows)][:, cols].transpose(1, 0, 2)
    return np.linalg.det(sub), inverse


def overlap_terms(j_prime: Determinant, psi: Statevector, m: np.ndarray, n_sd: int) -> np.ndarray:
    """Per-determinant contributions ``c_I <J'|I>`` for the first ``n_sd`` entries."""
    if len(psi) == 0:
        raise ValueError("empty statevector")
    if not 1 <= n_sd <= len(psi):
        raise ValueError(f"n_sd must be in [1, {len(psi)}], got {n_sd}")
    if (j_prime.n_orbitals, j_prime.n_alpha, j_prime.n_beta) != (psi.n_orbitals, psi.n_alpha, psi.n_beta):
        raise SectorError(f"incompatible sectors: {j_prime} vs statevector")
    m = np.asarray(m, dtype=float)
    dets = psi.dets[:n_sd]
    da, ia = _spin_block_dets(m, j_prime.alpha_occ, [d.alpha for d in dets])
    db, ib = _spin_block_dets(m, j_prime.beta_occ, [d.beta for d in dets])
    return psi.amps[:n_sd] * da[ia] * db[ib]


def reduce_sum(values: np.ndarray, workers: int = 1) -> float:
    """Deterministic sum: exactly rounded per chunk, chunks combined in order."""
    values = np.asarray(values, dtype=float)
    if workers <= 1 or values.size < 2 * workers:
        return math.fsum(values.tolist())
    chunks = np.array_split(values, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(lambda c: math.fsum(c.tolist()), chunks))
    return math.fsum(partials)


def overlap(
    j_prime: Determinant,
    psi: Statevector,
    m: np.ndarray,
    n_sd: int | None = None,
    *,
    workers: int = 1,
) -> OverlapReport:
    """Overlap of ``J'`` (rotated basis) with the leading ``n_sd`` terms of ``psi``."""
    if n_sd is None:
        n_sd = len(psi)
    eta = reduce_sum(overlap_terms(j_prime, psi, m, n_sd), workers)
    norm_used = psi.norm_sq_head(n_sd)
    return OverlapReport(
        eta=eta,
        p0=eta * eta,
        n_sd_used=n_sd,
        norm_sq_used=norm_used,
        eps_r2=bound_eps_r2(norm_used),
    )
