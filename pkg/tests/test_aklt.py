import numpy as np
import pytest

from spin1_nqs.aklt import aklt_amplitude, aklt_amplitudes, aklt_mps, aklt_sector_vector
from spin1_nqs.eigensolver import ground_states
from spin1_nqs.hamiltonian import build_hamiltonian
from spin1_nqs.observables import string_order

from conftest import AKLT


def test_site_tensor_normalisation():
    mps = aklt_mps()
    s = sum(mps.matrix(x).T @ mps.matrix(x) for x in (-1, 0, 1))
    assert np.allclose(s, np.eye(2))


def test_vectorised_amplitudes(basis6):
    mps = aklt_mps((2, 2))
    vec = aklt_amplitudes(mps, basis6.configs)
    assert np.allclose(vec[:25], [aklt_amplitude(mps, c) for c in basis6.configs[:25]])


@pytest.mark.parametrize("boundary", [(1, 1), (2, 2)])
def test_sector_vectors_are_ground_states(basis8, boundary):
    ham = build_hamiltonian(basis8, AKLT)
    v = aklt_sector_vector(basis8, boundary)
    assert np.isclose(v @ (ham @ v), -14 / 3, atol=1e-10)
    pairs = ground_states(ham, k=2)
    overlap = np.linalg.norm(pairs.vectors.T @ v) ** 2
    assert overlap >= 1 - 1e-10


def test_off_diagonal_boundary_has_no_sz0_weight(basis6):
    with pytest.raises(ValueError):
        aklt_sector_vector(basis6, (1, 2))


def test_string_order(basis8):
    v = aklt_sector_vector(basis8, (1, 1))
    assert abs(string_order(v, basis8, 1, 6)) >= 0.35
