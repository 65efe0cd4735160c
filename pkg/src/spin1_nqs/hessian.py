"""Complex Hessian of the infidelity and its relation to the QGT at a minimum.

With S = <Omega|psi>, N = <psi|psi>, T = <Omega|Omega>, n_i = <psi|d_i psi>,
r_i = <Omega_perp|d_i psi> (Omega_perp the part of Omega orthogonal to psi)
and psi holomorphic in theta:

    d2L/dth_i* dth_j  = |S|^2/(NT) G_ij - r_i* r_j/(NT)
    d2L/dth_i* dth_j* = <u|d_i d_j psi>* + S (n_i* r_j* + r_i* n_j*)/(N^2 T)

where u = -S Omega_perp/(NT) and G is the QGT.  Expanding
s_i = <Omega|d_i psi> = S n_i/N + r_i in the direct second derivatives gives
this form, in which every correction to diag(G, G*) carries a factor that
vanishes at the minimum, so no O(1) terms cancel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .hilbert import SectorBasis
from .loss_geometry import ZeroNormError, exact_state
from .nqs import RbmShape, hidden_fields, log_amplitudes, log_derivatives

MAX_PARAMS = 2000


@dataclass
class ComplexHessian:
    block_cr: np.ndarray  # d2L / dtheta* dtheta
    block_cc: np.ndarray  # d2L / dtheta* dtheta*

    def assembled(self) -> np.ndarray:
        cr, cc = self.block_cr, self.block_cc
        return np.block([[cr, cc], [cc.conj(), cr.conj()]])

    def directional(self, delta: np.ndarray) -> np.ndarray:
        """Change of the conjugate gradient along ``delta``: cr delta + cc delta*."""
        return self.block_cr @ delta + self.block_cc @ delta.conj()


def _second_derivative_sum(shape: RbmShape, params, basis: SectorBasis, configs, coeff) -> np.ndarray:
    """sum_x coeff(x) psi(x)^-1 d_i d_j psi(x) weighted, i.e. sum_x coeff(x) (O_i O_j + d_i d_j log psi)."""
    o = log_derivatives(shape, params, configs)
    out = (o.T * coeff) @ o
    x = np.asarray(configs, dtype=float)
    curv = 1.0 - np.tanh(hidden_fields(shape, params, x)) ** 2
    L, M = shape.length, shape.n_hidden
    feats = np.concatenate([np.ones((x.shape[0], 1)), x, x * x], axis=1)  # (n, 2L+1)
    blocks = np.einsum("nk,np,nq->kpq", coeff[:, None] * curv, feats, feats)
    s = shape.slices()
    for k in range(M):
        idx = np.concatenate([[s["b"].start + k],
                              s["w"].start + k * L + np.arange(L),
                              s["W"].start + k * L + np.arange(L)])
        out[np.ix_(idx, idx)] += blocks[k]
    return out


def infidelity_hessian(shape: RbmShape, params: np.ndarray, parity: str, basis: SectorBasis,
                       target: np.ndarray) -> ComplexHessian:
    if shape.n_params > MAX_PARAMS:
        raise ValueError(f"dense Hessian limited to N_p <= {MAX_PARAMS}, got {shape.n_params}")
    state = exact_state(shape, params, parity, basis)
    red = state.reduction
    target = np.asarray(target)
    t2 = float(np.vdot(target, target).real)
    omega = red.project(target)
    psi, jac, n = state.psi, state.jac, state.norm2
    if not n > 0:
        raise ZeroNormError("zero-norm state")
    S = complex(np.vdot(omega, psi))
    n_vec = psi.conj() @ jac
    a2 = abs(S) ** 2
    # r = <Omega_perp|d psi>, Omega_perp the part of Omega orthogonal to psi
    omega_perp = omega - (np.vdot(psi, omega) / n) * psi
    r_vec = omega_perp.conj() @ jac
    m = state.centered_jacobian()
    cr = (a2 / (n * t2)) * (m.conj().T @ m) - np.outer(r_vec.conj(), r_vec) / (n * t2)

    u = -(S / (n * t2)) * omega_perp
    # d_i d_j psi on reduced rows = sqrt(w)/2 [psi(s) X(s) +- psi(-s) X(-s)]
    logs = log_amplitudes(shape, params, basis.configs)
    e = np.exp(logs - state.shift)
    reps = red.reps
    coeff_rep = u.conj() * e[reps]
    if red.parity == "none":
        configs, coeff = basis.configs[reps], coeff_rep
    else:
        half = 0.5 * red.weights
        configs = np.concatenate([basis.configs[reps], basis.configs[red.partners]])
        coeff = np.concatenate([half * coeff_rep, red.sign() * half * u.conj() * e[red.partners]])
    k = _second_derivative_sum(shape, params, basis, configs, coeff)

    cc = k.conj() + S * (np.outer(n_vec.conj(), r_vec.conj()) + np.outer(r_vec.conj(), n_vec.conj())) / (n**2 * t2)
    cr = 0.5 * (cr + cr.conj().T)
    cc = 0.5 * (cc + cc.T)
    return ComplexHessian(cr, cc)


@dataclass
class HessianSpectrum:
    eigenvalues: np.ndarray  # descending
    n_positive: int
    n_negative: int
    lambda_max: float

    @property
    def normalized(self) -> np.ndarray:
        return self.eigenvalues / self.lambda_max

    @property
    def most_negative(self) -> float:
        return float(min(self.eigenvalues.min(), 0.0))


def hessian_spectrum(h: ComplexHessian, zero_tol: float = 1e-12) -> HessianSpectrum:
    full = h.assembled()
    dev = np.abs(full - full.conj().T).max()
    if dev > 1e-10 * max(1.0, np.abs(full).max()):
        raise ValueError(f"assembled Hessian not Hermitian (deviation {dev:.2e})")
    vals = eigh(0.5 * (full + full.conj().T), eigvals_only=True, driver="evd")[::-1].copy()
    return HessianSpectrum(vals, int(np.sum(vals > zero_tol)), int(np.sum(vals < -zero_tol)),
                           float(vals[0]))


@dataclass
class PairingResult:
    passed: bool
    n_hessian: int
    n_qgt_doubled: int
    max_relative_error: float
    negative_ratio: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"Hessian/QGT pairing: {status} (pairs {self.n_hessian} vs {self.n_qgt_doubled}, "
                f"max rel err {self.max_relative_error:.2e}, |lambda_min|/lambda_max {self.negative_ratio:.2e})")


def pairing_check(hessian_eigs, qgt_eigs, floor: float = 1e-10, rtol: float = 1e-4,
                  negative_ratio_max: float = 1e-6, normalized: bool = True) -> PairingResult:
    """Hessian spectrum against the QGT spectrum taken twice, above ``floor``.

    With ``normalized`` the floor applies to eigenvalues divided by the
    largest one, as in normalised Hessian spectra; otherwise it is absolute.
    The top k Hessian eigenvalues are paired with the k doubled QGT
    eigenvalues above the floor, and the next Hessian eigenvalue must not
    exceed the floor.
    """
    h = np.sort(np.asarray(hessian_eigs, dtype=float))[::-1]
    q = np.sort(np.asarray(qgt_eigs, dtype=float))[::-1]
    neg = float(max(-h.min(), 0.0) / h.max()) if h.size and h.max() > 0 else 0.0
    h_cut = floor * (h[0] if normalized and h.size else 1.0)
    q_cut = floor * (q[0] if normalized and q.size else 1.0)
    q_top = np.repeat(q[q > q_cut], 2)
    k = q_top.size
    n_h = int(np.sum(h > h_cut))
    if k == 0 or h.size < k:
        return PairingResult(False, n_h, k, float("inf"), neg)
    err = float(np.max(np.abs(h[:k] - q_top) / q_top))
    spill = h.size > k and h[k] > h_cut * (1 + rtol)
    passed = err <= rtol and not spill and neg <= negative_ratio_max
    return PairingResult(bool(passed), n_h, k, err, neg)
