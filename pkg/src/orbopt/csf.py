"""Genealogical CSFs and their expansion into Slater determinants.

A coupling string has one character per spatial orbital: ``0`` empty,
``2`` doubly occupied, ``+``/``-`` singly occupied with the running spin
raised/lowered by one half. The open-shell electrons are coupled in
ascending orbital order; each determinant coefficient is the product of the
step-wise Clebsch-Gordan factors along that path.

Half-integer spins are passed either as numbers (``0.5``) or, internally,
as doubled integers (``s2 = 2 * S``).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from orbopt.core import Determinant, Statevector

OPEN = "+-"
VALID_CHARS = set("02+-")


class CouplingError(ValueError):
    """Malformed or unphysical genealogical coupling string."""


def _twice(x) -> int:
    t = round(2 * x)
    if abs(2 * x - t) > 1e-9:
        raise ValueError(f"{x!r} is not a half-integer")
    return int(t)


def normalize_coupling(text: str) -> str:
    return "".join(text.split()).replace("−", "-")


def running_spins(path: str) -> list[int]:
    """Doubled intermediate spins after each open-shell character."""
    s2, out = 0, []
    for ch in path:
        if ch == "+":
            s2 += 1
        elif ch == "-":
            s2 -= 1
        else:
            continue
        out.append(s2)
    return out


def validate_path(coupling: str) -> int:
    """Check the running spin never goes negative; return the final doubled spin."""
    if set(coupling) - VALID_CHARS:
        raise CouplingError(f"invalid characters in coupling {coupling!r}")
    s2 = 0
    for k, ch in enumerate(coupling):
        if ch == "+":
            s2 += 1
        elif ch == "-":
            s2 -= 1
            if s2 < 0:
                raise CouplingError(f"intermediate spin drops below 0 at prefix {coupling[: k + 1]!r}")
    return s2


@dataclass(frozen=True)
class CsfEntry:
    """A CSF with amplitude; ``m2`` is twice the spin projection (default: ``2S``)."""

    coupling: str
    amplitude: float
    m2: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coupling", normalize_coupling(self.coupling))
        s2 = validate_path(self.coupling)
        m2 = s2 if self.m2 is None else self.m2
        if abs(m2) > s2 or (s2 - m2) % 2:
            raise CouplingError(f"projection 2M={m2} incompatible with 2S={s2}")

    @property
    def n_orbitals(self) -> int:
        return len(self.coupling)

    @property
    def n_electrons(self) -> int:
        c = self.coupling
        return 2 * c.count("2") + c.count("+") + c.count("-")

    @property
    def seniority(self) -> int:
        return self.coupling.count("+") + self.coupling.count("-")

    @property
    def s2(self) -> int:
        return validate_path(self.coupling)

    @property
    def projection2(self) -> int:
        return self.s2 if self.m2 is None else self.m2

    @property
    def path(self) -> str:
        return "".join(ch for ch in self.coupling if ch in OPEN)

    @property
    def open_orbitals(self) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(self.coupling) if ch in OPEN)

    @property
    def double_orbitals(self) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(self.coupling) if ch == "2")


# -- counting ---------------------------------------------------------------


def count_sd(z: int, m) -> int:
    """Determinants of seniority ``z`` with projection ``m``: ``C(z, z/2 + m)``."""
    twice_up = z + _twice(m)
    if twice_up % 2:
        raise ValueError(f"z/2 + m must be an integer (z={z}, m={m})")
    k = twice_up // 2
    if not 0 <= k <= z:
        return 0
    return math.comb(z, k)


def count_csf(z: int, s) -> int:
    """CSFs of seniority ``z`` and spin ``s``: ``(2S+1)/(z/2+S+1) C(z, z/2-S)``."""
    s2 = _twice(s)
    if s2 < 0 or s2 > z:
        return 0
    if (z - s2) % 2:
        raise ValueError(f"z/2 - s must be an integer (z={z}, s={s})")
    num = (s2 + 1) * math.comb(z, (z - s2) // 2)
    den = (z + s2) // 2 + 1
    q, r = divmod(num, den)
    assert r == 0
    return q


@lru_cache(maxsize=None)
def genealogical_paths(z: int, s2: int) -> tuple[str, ...]:
    """All ``+``/``-`` strings of length ``z`` ending at doubled spin ``s2``, sorted."""
    out = []

    def walk(prefix, cur):
        remaining = z - len(prefix)
        if remaining == 0:
            if cur == s2:
                out.append(prefix)
            return
        if cur + 1 - remaining <= s2:
            walk(prefix + "+", cur + 1)
        if cur > 0 and cur - 1 + remaining >= s2:
            walk(prefix + "-", cur - 1)

    walk("", 0)
    return tuple(out)


@lru_cache(maxsize=None)
def spin_patterns(z: int, m2: int) -> tuple[str, ...]:
    """Open-shell spin assignments (``a``/``b``) with doubled projection ``m2``, sorted."""
    if (z + m2) % 2 or abs(m2) > z:
        return ()
    n_up = (z + m2) // 2
    return tuple(
        "".join(p) for p in itertools.product("ab", repeat=z) if p.count("a") == n_up
    )


# -- Clebsch-Gordan expansion ----------------------------------------------


def _step_factor(s2_prev: int, m2_step: int, m2_new: int, up: bool) -> float:
    # <S, M-m; 1/2, m | S +- 1/2, M> in doubled quantities
    denom = 2.0 * (s2_prev + 1)
    if up:
        return math.sqrt(max(0.0, (s2_prev + m2_step * m2_new + 1) / denom))
    return -m2_step * math.sqrt(max(0.0, (s2_prev - m2_step * m2_new + 1) / denom))


def coupling_coefficient(path: str, pattern: str) -> float:
    """Product of the step-wise CG factors for one path and one spin pattern."""
    if len(path) != len(pattern):
        raise ValueError("path and pattern lengths differ")
    s2, m2, coef = 0, 0, 1.0
    for ch, sp in zip(path, pattern):
        step = 1 if sp == "a" else -1
        m2 += step
        up = ch == "+"
        coef *= _step_factor(s2, step, m2, up)
        s2 += 1 if up else -1
        if s2 < 0:
            raise CouplingError(f"invalid genealogical path {path!r}")
        if coef == 0.0:
            return 0.0
    return coef


@lru_cache(maxsize=None)
def _d_matrix(z: int, s2: int, m2: int) -> np.ndarray:
    rows = spin_patterns(z, m2)
    cols = genealogical_paths(z, s2)
    d = np.array([[coupling_coefficient(p, q) for p in cols] for q in rows]).reshape(len(rows), len(cols))
    d.setflags(write=False)
    return d


def d_matrix(z: int, s, m) -> np.ndarray:
    """Rows: spin patterns of :func:`spin_patterns`; columns: paths of :func:`genealogical_paths`."""
    s2, m2 = _twice(s), _twice(m)
    if s2 < 0 or s2 > z or (z - s2) % 2 or abs(m2) > s2 or (s2 - m2) % 2:
        raise CouplingError(f"invalid sector z={z}, S={s}, M={m}")
    return _d_matrix(z, s2, m2)


def _determinant(n_orbitals: int, opens: Sequence[int], doubles: Sequence[int], pattern: str):
    """Determinant and reordering sign for an orbital-ordered electron string.

    Electrons are created orbital by orbital (``a`` before ``b`` inside a
    doubly occupied orbital); moving every alpha creator in front of every
    beta creator costs one sign per (earlier beta, later alpha) pair.
    """
    alpha = ["0"] * n_orbitals
    beta = ["0"] * n_orbitals
    spins = dict(zip(opens, pattern))
    for d in doubles:
        spins[d] = "2"
    n_beta_before = 0
    parity = 0
    for p in sorted(spins):
        sp = spins[p]
        if sp in ("a", "2"):
            alpha[p] = "1"
            parity += n_beta_before
        if sp in ("b", "2"):
            beta[p] = "1"
            n_beta_before += 1
    return Determinant("".join(alpha), "".join(beta)), -1.0 if parity % 2 else 1.0


def expand_csf(csf: CsfEntry, t_sd: float = 0.0) -> list[tuple[Determinant, float]]:
    """Determinant amplitudes of one CSF; entries with ``|A| <= t_sd`` are dropped."""
    z = csf.seniority
    s2, m2 = csf.s2, csf.projection2
    path = csf.path
    col = genealogical_paths(z, s2).index(path)
    d = _d_matrix(z, s2, m2)[:, col]
    out = []
    for pattern, coef in zip(spin_patterns(z, m2), d):
        if coef == 0.0:
            continue
        det, sign = _determinant(csf.n_orbitals, csf.open_orbitals, csf.double_orbitals, pattern)
        amp = csf.amplitude * sign * float(coef)
        if abs(amp) > t_sd:
            out.append((det, amp))
    return out


def _sector(csfs: Sequence[CsfEntry]):
    keys = {(c.n_orbitals, c.n_electrons, c.s2, c.projection2) for c in csfs}
    if len(keys) != 1:
        raise ValueError(f"inconsistent sectors among CSFs: {sorted(keys)}")
    return keys.pop()


def filter_csfs(csfs: Iterable[CsfEntry], t_csf: float) -> list[CsfEntry]:
    """Keep CSFs with ``|amplitude| > t_csf``."""
    return [c for c in csfs if abs(c.amplitude) > t_csf]


def expand_state(csfs: Sequence[CsfEntry], t_sd: float = 0.0, *, return_dropped: bool = False):
    """Superpose CSF expansions block by block, then threshold the merged amplitudes.

    CSFs are grouped by spatial configuration (same empty/double/open
    orbitals); within a group ``A = D @ A_csf`` and only ``|A_i| > t_sd`` is
    kept. With ``return_dropped`` a ``(Statevector, dropped_mass)`` pair is
    returned, ``dropped_mass`` being the sum of squares of discarded ``A_i``.
    """
    if not csfs:
        raise ValueError("no CSFs to expand")
    n_orb, n_e, s2, m2 = _sector(csfs)
    if len({c.coupling for c in csfs}) != len(csfs):
        raise ValueError("duplicate coupling strings")
    groups: dict[tuple, list[CsfEntry]] = defaultdict(list)
    for c in csfs:
        groups[(c.open_orbitals, c.double_orbitals)].append(c)
    kept: list[tuple[Determinant, float]] = []
    dropped: list[float] = []
    for (opens, doubles), members in sorted(groups.items()):
        z = len(opens)
        paths = genealogical_paths(z, s2)
        coeffs = np.zeros(len(paths))
        for c in members:
            coeffs[paths.index(c.path)] += c.amplitude
        amps = _d_matrix(z, s2, m2) @ coeffs
        for pattern, a in zip(spin_patterns(z, m2), amps.tolist()):
            if a == 0.0:
                continue
            det, sign = _determinant(n_orb, opens, doubles, pattern)
            if abs(a) > t_sd:
                kept.append((det, sign * a))
            else:
                dropped.append(a * a)
    n_alpha = (n_e + m2) // 2
    n_beta = (n_e - m2) // 2
    psi = Statevector.from_entries(n_orb, n_alpha, n_beta, kept)
    if return_dropped:
        return psi, math.fsum(dropped)
    return psi


def singlet_embed_and_trace(csfs: Sequence[CsfEntry], s, t_sd: float = 0.0) -> Statevector:
    """Physical ``M = S`` state from singlet-embedded CSFs with ``2S`` trailing auxiliary orbitals.

    Expansion and thresholding happen in the enlarged space. The component
    whose auxiliary orbitals are all beta carries the factor
    ``1/sqrt(2S+1)``, which is undone after the auxiliary columns are removed.
    """
    s2 = _twice(s)
    if s2 == 0:
        return expand_state(csfs, t_sd)
    n_aux = s2
    fixed = []
    for c in csfs:
        aux = c.coupling[-n_aux:]
        if len(c.coupling) <= n_aux or any(ch not in OPEN for ch in aux):
            raise ValueError(f"auxiliary block of {c.coupling!r} must hold {n_aux} singly occupied orbitals")
        phys = c.coupling[:-n_aux]
        if validate_path(phys) != s2 or validate_path(c.coupling) != 0:
            raise ValueError(f"{c.coupling!r} is not a singlet embedding of spin {s}")
        fixed.append(CsfEntry(c.coupling, c.amplitude, m2=0))
    big = expand_state(fixed, t_sd)
    n_phys = big.n_orbitals - n_aux
    scale = math.sqrt(s2 + 1)
    entries = []
    for det, amp in big:
        if det.alpha[n_phys:] == "0" * n_aux and det.beta[n_phys:] == "1" * n_aux:
            entries.append((Determinant(det.alpha[:n_phys], det.beta[:n_phys]), amp * scale))
    return Statevector.from_entries(n_phys, big.n_alpha, big.n_beta - n_aux, entries)


# -- seniority indexing -----------------------------------------------------


@dataclass(frozen=True)
class SeniorityIndex:
    z: int
    k_z: int
    s_z: int
    d_z: int


def colex_rank(subset: Sequence[int]) -> int:
    return sum(math.comb(c, i + 1) for i, c in enumerate(sorted(subset)))


def colex_unrank(rank: int, k: int) -> tuple[int, ...]:
    out = []
    for i in range(k, 0, -1):
        c = i - 1
        while math.comb(c + 1, i) <= rank:
            c += 1
        out.append(c)
        rank -= math.comb(c, i)
    return tuple(sorted(out))


def seniority_index(csf: CsfEntry) -> SeniorityIndex:
    """``(k_z, s_z, d_z)``: path index, open-orbital placement, paired placement."""
    z = csf.seniority
    k_z = genealogical_paths(z, csf.s2).index(csf.path)
    opens = csf.open_orbitals
    rest = [i for i in range(csf.n_orbitals) if i not in opens]
    relabel = {orb: k for k, orb in enumerate(rest)}
    d_z = colex_rank([relabel[d] for d in csf.double_orbitals])
    return SeniorityIndex(z, k_z, colex_rank(opens), d_z)


def coupling_from_index(n_orbitals: int, n_electrons: int, s, idx: SeniorityIndex) -> str:
    s2 = _twice(s)
    z = idx.z
    path = genealogical_paths(z, s2)[idx.k_z]
    opens = colex_unrank(idx.s_z, z)
    rest = [i for i in range(n_orbitals) if i not in opens]
    doubles = [rest[k] for k in colex_unrank(idx.d_z, (n_electrons - z) // 2)]
    chars = ["0"] * n_orbitals
    for o, ch in zip(opens, path):
        chars[o] = ch
    for d in doubles:
        chars[d] = "2"
    return "".join(chars)
