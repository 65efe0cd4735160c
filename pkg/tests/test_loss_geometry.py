import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spin1_nqs.eigensolver import ground_states, select_target
from spin1_nqs.hamiltonian import build_hamiltonian
from spin1_nqs.loss_geometry import (QgtReport, energy_and_gradient, infidelity,
                                     infidelity_gradient, qgt, qgt_dense_reference,
                                     qgt_spectrum_and_rank, snapshot)
from spin1_nqs.nqs import RbmShape, init_params, log_amplitudes

from conftest import AKLT


def _target(basis, theta, parity):
    ham = build_hamiltonian(basis, theta)
    return ham, select_target(ground_states(ham, k=4), basis, parity)


def _fd(fun, params, h=1e-6, idx=None):
    """Central differences of a real function, returned as dL/dtheta*."""
    idx = range(params.size) if idx is None else idx
    out = np.zeros(params.size, dtype=complex)
    for mu in idx:
        e = np.zeros(params.size, dtype=complex)
        e[mu] = h
        d_re = (fun(params + e) - fun(params - e)) / (2 * h)
        d_im = (fun(params + 1j * e) - fun(params - 1j * e)) / (2 * h)
        out[mu] = 0.5 * (d_re + 1j * d_im)
    return out


@given(st.integers(0, 10_000), st.sampled_from(["even", "none"]))
@settings(max_examples=6, deadline=None)
def test_infidelity_gradient_fd(basis4, seed, parity):
    shape = RbmShape(4, 2)
    _, t = _target(basis4, 0.0, "even")
    params = init_params(shape, seed, 0.3)
    grad = infidelity_gradient(shape, params, parity, basis4, t.vector)
    loss = lambda p: infidelity(snapshot(shape, p, parity, basis4, t.vector))
    fd = _fd(loss, params)
    assert np.linalg.norm(grad - fd) <= 1e-6 * np.linalg.norm(fd)


@given(st.integers(0, 10_000))
@settings(max_examples=4, deadline=None)
def test_energy_gradient_fd(basis4, seed):
    shape = RbmShape(4, 2)
    ham = build_hamiltonian(basis4, 0.4)
    params = init_params(shape, seed, 0.3)
    _, grad = energy_and_gradient(shape, params, "even", basis4, ham)
    fd = _fd(lambda p: energy_and_gradient(shape, p, "even", basis4, ham)[0], params)
    assert np.linalg.norm(grad - fd) <= 1e-6 * np.linalg.norm(fd)


def test_energy_is_rayleigh_quotient(basis4):
    shape = RbmShape(4, 1)
    ham = build_hamiltonian(basis4, 0.2)
    params = init_params(shape, 1, 0.3)
    psi = snapshot(shape, params, "none", basis4, np.ones(basis4.dimension)).amplitudes
    e, _ = energy_and_gradient(shape, params, "none", basis4, ham)
    assert np.isclose(e, np.vdot(psi, ham @ psi).real / np.vdot(psi, psi).real)


def test_wrong_parity_target_gives_unit_infidelity(basis4):
    _, t = _target(basis4, AKLT, "odd")
    shape = RbmShape(4, 2)
    params = init_params(shape, 0, 0.3)
    assert np.isclose(infidelity(snapshot(shape, params, "even", basis4, t.vector)), 1.0)
    assert np.allclose(infidelity_gradient(shape, params, "even", basis4, t.vector), 0, atol=1e-14)


@pytest.mark.parametrize("parity", ["even", "odd", "none"])
def test_qgt_matches_reference(basis4, parity):
    shape = RbmShape(4, 2)
    params = init_params(shape, 4, 0.3)
    g = qgt(shape, params, parity, basis4)
    assert np.abs(g - qgt_dense_reference(shape, params, parity, basis4)).max() <= 1e-10
    assert np.abs(g - qgt(shape, params, parity, basis4, block_size=3)).max() <= 1e-12
    assert np.linalg.eigvalsh(g).min() >= -1e-10


def test_qgt_is_quarter_fisher_for_real_amplitudes(basis4):
    shape = RbmShape(4, 2)
    params = init_params(shape, 9, 0.3).real.astype(complex)
    g = qgt(shape, params, "none", basis4)
    # Fisher information of p = psi^2 / N in the real parameters
    logs = log_amplitudes(shape, params, basis4.configs).real
    p = np.exp(2 * (logs - logs.max()))
    p /= p.sum()
    h = 1e-5
    dlogp = np.empty((basis4.dimension, shape.n_params))
    for mu in range(shape.n_params):
        e = np.zeros(shape.n_params)
        e[mu] = h
        lp = lambda q: 2 * log_amplitudes(shape, q, basis4.configs).real
        raw = (lp(params + e) - lp(params - e)) / (2 * h)
        dlogp[:, mu] = raw - p @ raw
    fim = (dlogp * p[:, None]).T @ dlogp
    assert np.abs(g.real - fim / 4).max() <= 1e-8
    assert np.abs(g.imag).max() <= 1e-12


def test_qgt_report_rank(basis4):
    shape = RbmShape(4, 2)
    g = qgt(shape, init_params(shape, 0, 0.5), "even", basis4)
    d_q = basis4.parity_dimensions()[1]
    rep = qgt_spectrum_and_rank(g, d_q)
    assert rep.d_r <= min(shape.n_params, d_q - 1)
    assert np.all(np.diff(rep.eigenvalues) <= 0)
    assert rep.summary()["ratio"] == rep.d_r / d_q


def test_qgt_report_rejects_rank_above_bound():
    with pytest.raises(AssertionError):
        QgtReport(np.ones(5), 5, 1e-5, 4, 10)
