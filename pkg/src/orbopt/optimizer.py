"""Gradient-based maximization of a single-determinant overlap over orbital rotations."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from orbopt.core import (
    Determinant,
    KappaGenerator,
    Statevector,
    matrix_exponential,
    occupied,
    overlap,
    overlap_terms,
)

log = logging.getLogger(__name__)

SINGULAR_RCOND = 1e-10


class OptimizationError(RuntimeError):
    """The objective became non-finite; ``trace`` holds the records so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class FixedStep:
    step: float = 0.1


@dataclass(frozen=True)
class Backtracking:
    c1: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_halvings: int = 60


@dataclass
class OptimizerConfig:
    n_sd_opt: int
    max_iters: int = 5000
    grad_tol: float = 1e-6
    step_rule: FixedStep | Backtracking = field(default_factory=Backtracking)
    seed_kappa: KappaGenerator | None = None

    def __post_init__(self):
        if self.n_sd_opt < 1:
            raise ValueError("n_sd_opt must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    f: float
    grad_inf: float
    step: float

    def to_json(self) -> str:
        return json.dumps(
            {"iter": self.iter, "f": self.f, "grad_inf": self.grad_inf, "step": self.step}
        )


@dataclass
class OptimizationTrace:
    records: list[IterationRecord]
    kappa: KappaGenerator
    p0_final: float
    p0_initial: float
    converged: bool
    n_sd_opt: int

    @property
    def f_values(self) -> list[float]:
        return [r.f for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def select_reference_determinant(psi: Statevector) -> Determinant:
    """Largest-amplitude determinant (ties already resolved by the sort order)."""
    if len(psi) == 0:
        raise ValueError("empty statevector")
    return psi.dets[0]


def objective(kappa: KappaGenerator, j_prime: Determinant, psi: Statevector, n_sd: int) -> float:
    """``f = 1 - <J'|psi>^2`` with ``J'`` in the basis rotated by ``exp(-kappa)``."""
    eta = overlap(j_prime, psi, matrix_exponential(kappa), n_sd).eta
    return 1.0 - eta * eta


def _cofactors(sub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched determinants and cofactor matrices ``d det(A) / dA``.

    Well-conditioned blocks use ``det(A) A^{-T}``; near-singular ones use the
    SVD form, which stays finite when ``A`` loses rank.
    """
    dets = np.linalg.det(sub)
    cof = np.empty_like(sub)
    n = sub.shape[-1]
    if sub.shape[0] == 0:
        return dets, cof
    s = np.linalg.svd(sub, compute_uv=False)
    rcond = s[:, -1] / np.maximum(s[:, 0], np.finfo(float).tiny)
    good = rcond > SINGULAR_RCOND
    if np.any(good):
        cof[good] = dets[good, None, None] * np.linalg.inv(sub[good]).transpose(0, 2, 1)
    bad = ~good
    if np.any(bad):
        u, sv, vh = np.linalg.svd(sub[bad])
        # product of all singular values but the k-th, without dividing
        others = np.ones_like(sv)
        for k in range(n):
            others[:, k] = np.prod(np.delete(sv, k, axis=1), axis=1)
        sign = np.linalg.det(u) * np.linalg.det(vh)
        cof[bad] = sign[:, None, None] * (u * others[:, None, :]) @ vh
    return dets, cof


def overlap_gradient_wrt_m(j_prime: Determinant, psi: Statevector, m: np.ndarray, n_sd: int):
    """``eta`` and ``d eta / d M`` for the truncated sum."""
    n = m.shape[0]
    dets = psi.dets[:n_sd]
    c = psi.amps[:n_sd]
    ua, ia = np.unique(np.array([d.alpha for d in dets]), return_inverse=True)
    ub, ib = np.unique(np.array([d.beta for d in dets]), return_inverse=True)
    ra, rb = j_prime.alpha_occ, j_prime.beta_occ

    def block(rows, uniq):
        if not rows:
            return np.ones(len(uniq)), None, None
        cols = np.array([occupied(s) for s in uniq.tolist()], dtype=int)
        sub = m[np.asarray(rows)][:, cols].transpose(1, 0, 2)
        d, cof = _cofactors(sub)
        return d, cols, cof

    da, cols_a, cof_a = block(ra, ua)
    db, cols_b, cof_b = block(rb, ub)
    eta = math.fsum((c * da[ia] * db[ib]).tolist())

    g = np.zeros((n, n))
    for rows, cols, cof, inv, other in (
        (ra, cols_a, cof_a, ia, db[ib]),
        (rb, cols_b, cof_b, ib, da[ia]),
    ):
        if cof is None:
            continue
        w = np.bincount(inv, weights=c * other, minlength=cof.shape[0])
        r = np.asarray(rows)
        for k in range(cof.shape[0]):
            if w[k] != 0.0:
                g[np.ix_(r, cols[k])] += w[k] * cof[k]
    return eta, g


def expm_frechet_adjoint(kappa: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``L(kappa, g)``: Frechet derivative of exp at ``kappa`` in direction ``g``.

    Taken from the upper-right block of ``exp([[kappa, g], [0, kappa]])``.
    Because ``<G, L(A, E)> = <L(A^T, G), E>``, evaluating it at ``kappa = (-kappa)^T``
    contracts ``d eta / dM`` against every generator direction at once.
    """
    n = kappa.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = kappa
    big[n:, n:] = kappa
    big[:n, n:] = g
    return scipy.linalg.expm(big)[:n, n:]


def value_and_gradient(kappa: KappaGenerator, j_prime: Determinant, psi: Statevector, n_sd: int):
    """``f`` and ``df/dkappa`` as an antisymmetric matrix (entry ``[i, j]``, ``i > j``, is the
    derivative with respect to the free parameter ``kappa[i, j]``)."""
    # validates sector / n_sd
    overlap_terms(j_prime, psi, np.eye(psi.n_orbitals), n_sd)
    m = matrix_exponential(kappa)
    eta, g_m = overlap_gradient_wrt_m(j_prime, psi, m, n_sd)
    z = expm_frechet_adjoint(kappa.kappa, g_m)
    d_eta = -(z - z.T)
    grad = -2.0 * eta * d_eta
    grad = np.tril(grad, -1)
    grad = grad - grad.T
    return 1.0 - eta * eta, grad


def gradient(kappa: KappaGenerator, j_prime: Determinant, psi: Statevector, n_sd: int) -> np.ndarray:
    return value_and_gradient(kappa, j_prime, psi, n_sd)[1]


def _params_grad(grad: np.ndarray) -> np.ndarray:
    return grad[np.tril_indices(grad.shape[0], -1)]


def optimize(psi: Statevector, j_prime: Determinant, config: OptimizerConfig) -> OptimizationTrace:
    """Minimize ``1 - <J'|psi>^2`` over the free entries of kappa.

    The objective uses the leading ``config.n_sd_opt`` terms; the reported
    ``p0_final`` / ``p0_initial`` always use the full statevector.
    """
    n = psi.n_orbitals
    n_sd = min(config.n_sd_opt, len(psi))
    kappa = config.seed_kappa or KappaGenerator.zeros(n)
    x = kappa.params
    rule = config.step_rule
    records: list[IterationRecord] = []

    def evaluate(params):
        k = KappaGenerator.from_params(n, params)
        f, g = value_and_gradient(k, j_prime, psi, n_sd)
        return f, _params_grad(g)

    f, g = evaluate(x)
    converged = False
    for it in itertools.count():
        g_inf = float(np.max(np.abs(g))) if g.size else 0.0
        if not (math.isfinite(f) and math.isfinite(g_inf)):
            trace = OptimizationTrace(records, KappaGenerator.from_params(n, x), math.nan, math.nan, False, n_sd)
            raise OptimizationError(f"non-finite objective at iteration {it}", trace)
        if g_inf < config.grad_tol:
            records.append(IterationRecord(it, f, g_inf, 0.0))
            converged = True
            break
        if it >= config.max_iters:
            records.append(IterationRecord(it, f, g_inf, 0.0))
            break
        if isinstance(rule, FixedStep):
            step = rule.step
            x_new = x - step * g
            f_new, g_new = evaluate(x_new)
        else:
            step = rule.initial_step
            g_sq = float(g @ g)
            for _ in range(rule.max_halvings):
                x_new = x - step * g
                f_new = objective(KappaGenerator.from_params(n, x_new), j_prime, psi, n_sd)
                if f_new <= f - rule.c1 * step * g_sq:
                    break
                step *= rule.shrink
            else:
                # no representable decrease left along -g
                records.append(IterationRecord(it, f, g_inf, 0.0))
                break
            f_new, g_new = evaluate(x_new)
        records.append(IterationRecord(it, f, g_inf, step))
        x, f, g = x_new, f_new, g_new

    kappa = KappaGenerator.from_params(n, x)
    full = len(psi)
    p0_final = overlap(j_prime, psi, matrix_exponential(kappa), full).p0
    p0_initial = overlap(j_prime, psi, matrix_exponential(config.seed_kappa or KappaGenerator.zeros(n)), full).p0
    log.info("optimize: %d iterations, f=%.12g, converged=%s", len(records), f, converged)
    return OptimizationTrace(records, kappa, p0_final, p0_initial, converged, n_sd)


def n_sd_for_fraction(psi: Statevector, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return max(1, math.ceil(fraction * len(psi) - 1e-9))


@dataclass
class ConsistencyReport:
    fractions: list[float]
    traces: list[OptimizationTrace]
    kappa_diff: dict[tuple[float, float], float]
    p0_diff: dict[tuple[float, float], float]


def truncation_consistency_check(
    psi: Statevector,
    j_prime: Determinant,
    fractions: list[float],
    **config_kw,
) -> ConsistencyReport:
    """Optimize at several truncation fractions and compare the results pairwise."""
    traces = [
        optimize(psi, j_prime, OptimizerConfig(n_sd_opt=n_sd_for_fraction(psi, fr), **config_kw))
        for fr in fractions
    ]
    kd, pd = {}, {}
    for (fa, ta), (fb, tb) in itertools.combinations(zip(fractions, traces), 2):
        kd[(fa, fb)] = float(np.max(np.abs(ta.kappa.kappa - tb.kappa.kappa)))
        pd[(fa, fb)] = abs(ta.p0_final - tb.p0_final)
    return ConsistencyReport(list(fractions), traces, kd, pd)
