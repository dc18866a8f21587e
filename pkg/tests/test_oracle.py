import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthogonal, random_statevector
from orbopt.core import Determinant, Statevector, overlap
from orbopt.formats import parse_fcidump, serialize_fcidump
from orbopt.oracle import (
    FciSpace,
    ModelHamiltonian,
    apply_s2,
    build_hubbard,
    energy_expectation,
    fci_ground_state,
    hamiltonian_matrix,
    inner,
    lanczos_lowest,
    rotate_hamiltonian,
    truncated_reference,
)


def test_build_hubbard():
    np.testing.assert_array_equal(build_hubbard(2, 1, 4).h1, [[0, -1], [-1, 0]])
    ring = build_hubbard(3, 1, 0, pbc=True).h1
    np.testing.assert_array_equal(ring, -(np.ones((3, 3)) - np.eye(3)))
    chain = build_hubbard(6, 1, 4).h1
    assert np.count_nonzero(np.triu(chain)) == 5
    with pytest.raises(ValueError):
        build_hubbard(1, 1, 4)


def test_model_validation():
    with pytest.raises(ValueError):
        ModelHamiltonian(np.array([[0, 1], [0, 0]]))
    eri = np.zeros((2,) * 4)
    eri[0, 1, 0, 0] = 1.0
    with pytest.raises(ValueError):
        ModelHamiltonian(np.zeros((2, 2)), eri=eri)


def test_two_site_energy():
    res = fci_ground_state(build_hubbard(2, 1, 4), 1, 1)
    assert res.energy == pytest.approx(2 - 2 * math.sqrt(2), abs=1e-12)
    assert res.residual < 1e-8
    assert res.statevector.amps[0] > 0


@pytest.mark.parametrize("sites, na, nb", [(4, 2, 2), (5, 3, 2), (6, 1, 0)])
def test_free_fermions(sites, na, nb):
    h = build_hubbard(sites, 1, 0)
    eps = np.linalg.eigvalsh(h.h1)
    res = fci_ground_state(h, na, nb)
    assert res.energy == pytest.approx(eps[:na].sum() + eps[:nb].sum(), abs=1e-10)


def test_six_site_against_power_iteration(hubbard6):
    h, res = hubbard6
    mat = hamiltonian_matrix(h, FciSpace(6, 3, 3)).toarray()
    shift = np.abs(mat).sum(axis=1).max()
    v = np.ones(mat.shape[0])
    v /= np.linalg.norm(v)
    e = 0.0
    for _ in range(20000):
        w = shift * v - mat @ v
        v = w / np.linalg.norm(w)
        e_new = v @ mat @ v
        if abs(e_new - e) < 1e-14:
            break
        e = e_new
    assert res.energy == pytest.approx(e_new, abs=1e-8)
    assert res.residual < 1e-8


def test_lanczos_matches_scipy():
    h = build_hubbard(6, 1, 4)
    mat = hamiltonian_matrix(h, FciSpace(6, 3, 3))
    evals, _ = lanczos_lowest(mat.dot, mat.shape[0], seed=3)
    ref = spla.eigsh(mat, k=1, which="SA")[0][0]
    assert evals[0] == pytest.approx(ref, abs=1e-10)


def test_dimension_cap():
    with pytest.raises(ValueError, match="cap"):
        fci_ground_state(build_hubbard(14, 1, 4), 7, 7)


def test_dense_eri_path_matches_hubbard():
    h = build_hubbard(4, 1, 3.5)
    e_u = fci_ground_state(h, 2, 2).energy
    h_eri = ModelHamiltonian(h.h1, eri=h.dense_eri())
    assert fci_ground_state(h_eri, 2, 2).energy == pytest.approx(e_u, abs=1e-12)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    h = build_hubbard(4, 1, rng.uniform(0, 8), pbc=bool(rng.integers(2)))
    e0 = fci_ground_state(h, 2, 2).energy
    e1 = fci_ground_state(rotate_hamiltonian(h, random_orthogonal(4, rng)), 2, 2).energy
    assert e1 == pytest.approx(e0, abs=1e-8)


def test_rotation_identity_and_two_site():
    h = build_hubbard(3, 1, 2)
    r = rotate_hamiltonian(h, np.eye(3))
    np.testing.assert_allclose(r.h1, h.h1)
    np.testing.assert_allclose(r.dense_eri(), h.dense_eri())
    c = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    np.testing.assert_allclose(rotate_hamiltonian(build_hubbard(2, 1, 4), c).h1, np.diag([-1, 1]), atol=1e-15)


def test_core_energy_passes_through():
    h = ModelHamiltonian(build_hubbard(2, 1, 1).h1, hubbard_u=1.0, core_energy=1.5)
    assert rotate_hamiltonian(h, np.eye(2)).core_energy == 1.5


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_oracle_closure(seed):
    rng = np.random.default_rng(seed)
    h = build_hubbard(4, 1, rng.uniform(1, 6))
    res = fci_ground_state(h, 2, 2)
    c = random_orthogonal(4, rng)
    rot = fci_ground_state(rotate_hamiltonian(h, c), 2, 2)
    if min(res.gap, rot.gap) < 1e-6:
        return
    j = rot.statevector.dets[0]
    eta = overlap(j, res.statevector, c.T).eta
    assert abs(eta) == pytest.approx(abs(rot.statevector.amplitude(j)), abs=1e-9)


def test_s2_examples():
    closed = Statevector.from_entries(2, 1, 1, [(Determinant("10", "10"), 1.0)])
    assert inner(apply_s2(closed), apply_s2(closed)) == pytest.approx(0.0, abs=1e-15)
    single = Statevector.from_entries(2, 1, 0, [(Determinant("10", "00"), 1.0)])
    assert inner(single, apply_s2(single)) == pytest.approx(0.75)
    # alpha-block-first ordering: the M=0 triplet is |10;01> - |01;10>
    r = 1 / math.sqrt(2)
    trip = Statevector.from_entries(2, 1, 1, [(Determinant("10", "01"), r), (Determinant("01", "10"), -r)])
    s2v = apply_s2(trip)
    assert inner(trip, s2v) == pytest.approx(2.0)
    assert inner(s2v, s2v) == pytest.approx(4.0)


@given(st.integers(0, 2**32 - 1))
def test_s2_hermitian(seed):
    rng = np.random.default_rng(seed)
    a = random_statevector(rng, 4, 2, 1)
    b = random_statevector(rng, 4, 2, 1)
    assert inner(a, apply_s2(b)) == pytest.approx(inner(b, apply_s2(a)), abs=1e-12)


def test_fci_ground_state_is_singlet(hubbard6):
    psi = hubbard6[1].statevector
    assert inner(psi, apply_s2(psi)) == pytest.approx(0.0, abs=1e-10)


def test_truncated_reference(hubbard6):
    h, res = hubbard6
    assert truncated_reference(res, 1.0) == res.statevector
    one = truncated_reference(res, 1e-6)
    assert len(one) == 1 and one.dets[0] == res.statevector.dets[0]
    half = truncated_reference(res, 0.5)
    assert len(half) == 100
    assert half.norm_sq < res.statevector.norm_sq
    assert energy_expectation(h, half) > res.energy
    with pytest.raises(ValueError):
        truncated_reference(res, 0.0)


def test_fcidump_examples():
    text = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n-1.0 1 2 0 0\n"
    h = parse_fcidump(text)
    np.testing.assert_array_equal(h.h1, build_hubbard(2, 1, 0).h1)
    assert h.eri is None and h.core_energy == 0.0
    ref = fci_ground_state(build_hubbard(2, 1, 0), 1, 1).energy
    assert fci_ground_state(h, 1, 1).energy == pytest.approx(ref, abs=1e-14)
    h = parse_fcidump(text + "1.5 0 0 0 0\n")
    assert h.core_energy == 1.5


def test_fcidump_round_trip():
    h = build_hubbard(5, 1, 4, pbc=True)
    back = parse_fcidump(serialize_fcidump(h, 5, 1))
    np.testing.assert_allclose(back.h1, h.h1, atol=1e-12)
    np.testing.assert_allclose(back.dense_eri(), h.dense_eri(), atol=1e-12)
    assert back.meta["NELEC"] == 5 and back.meta["MS2"] == 1
