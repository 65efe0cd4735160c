"""Exact full-summation losses, gradients and the quantum geometric tensor.

Everything is evaluated on the spin-flip sector the ansatz lives in, through
:class:`~spin1_nqs.hilbert.ParityReduction`: rows are orbit representatives
scaled by sqrt(2) (1 for the flip-invariant configuration), which preserves
every inner product between vectors of definite parity.

Gradients are conjugate gradients ``F = dL/d theta*``.  For both losses they
take the form ``F = J^H v`` with ``J[n, mu] = d psi(n) / d theta_mu`` and a
residual vector ``v`` orthogonal to ``psi``; the optimizer relies on that.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, svdvals

from .hamiltonian import SparseHamiltonian
from .hilbert import ParityReduction, SectorBasis, parity_reduction
from .nqs import RbmShape, log_amplitudes, log_derivatives

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 1e-5


class ZeroNormError(FloatingPointError):
    pass


@dataclass
class ExactState:
    """psi and d psi on the reduced sector rows, after the global log-shift."""

    reduction: ParityReduction
    psi: np.ndarray
    jac: np.ndarray | None
    shift: float
    norm2: float

    @property
    def n_rows(self) -> int:
        return self.psi.size

    def centered_jacobian(self) -> np.ndarray:
        """M[n, mu] = (psi(n)/|psi|) (O_mu(n) - <O_mu>)."""
        mean = self.psi.conj() @ self.jac / self.norm2
        return (self.jac - np.outer(self.psi, mean)) / np.sqrt(self.norm2)


def _rows(shape, params, basis, red, logs, shift, sl, jacobian):
    reps = red.reps[sl]
    e1 = np.exp(logs[reps] - shift)
    if red.parity == "none":
        psi = e1
        jac = e1[:, None] * log_derivatives(shape, params, basis.configs[reps]) if jacobian else None
        return psi, jac
    sign = red.sign()
    partners = red.partners[sl]
    e2 = np.exp(logs[partners] - shift)
    wt = red.weights[sl]
    psi = wt * 0.5 * (e1 + sign * e2)
    jac = None
    if jacobian:
        o1 = log_derivatives(shape, params, basis.configs[reps])
        o2 = log_derivatives(shape, params, basis.configs[partners])
        jac = (0.5 * wt)[:, None] * (e1[:, None] * o1 + sign * e2[:, None] * o2)
    return psi, jac


def exact_state(shape: RbmShape, params: np.ndarray, parity: str, basis: SectorBasis,
                jacobian: bool = True, reduction: ParityReduction | None = None) -> ExactState:
    if basis.length != shape.length:
        raise ValueError("basis and RBM disagree on the chain length")
    red = reduction or parity_reduction(basis, parity)
    logs = log_amplitudes(shape, params, basis.configs)
    shift = float(logs.real.max())
    psi, jac = _rows(shape, params, basis, red, logs, shift, slice(None), jacobian)
    norm2 = float(np.sum(np.abs(psi) ** 2))
    if not norm2 > 0.0:
        raise ZeroNormError("variational state has zero norm on the sector")
    return ExactState(red, psi, jac, shift, norm2)


# --- snapshots and infidelity ---------------------------------------------

@dataclass
class StateSnapshot:
    amplitudes: np.ndarray  # full-basis psi (after shift)
    shift: float
    norm2: float
    overlap: complex  # <Omega|psi>
    target_norm2: float
    orthogonal_norm2: float | None = None  # |psi - (S/T) Omega|^2

    def __post_init__(self):
        if not self.norm2 > 0:
            raise ZeroNormError("zero-norm state")


def snapshot(shape, params, parity, basis, target) -> StateSnapshot:
    state = exact_state(shape, params, parity, basis, jacobian=False)
    full = state.reduction.expand(state.psi)
    target = np.asarray(target)
    if target.shape[0] != basis.dimension:
        raise ValueError("target length does not match the basis")
    overlap = complex(np.vdot(target, full))
    t2 = float(np.vdot(target, target).real)
    snap = StateSnapshot(full, state.shift, state.norm2, overlap, t2)
    snap.orthogonal_norm2 = _orthogonal_norm2(full, target, overlap, t2)
    return snap


def _orthogonal_norm2(psi, target, overlap, target_norm2) -> float:
    return float(np.sum(np.abs(psi - (overlap / target_norm2) * target) ** 2))


def _infidelity_value(overlap: complex, norm2: float, target_norm2: float,
                      orthogonal_norm2: float | None = None) -> float:
    """1 - |S|^2/(N T), evaluated as |psi_perp|^2 / N when the orthogonal part is known.

    The second form has no cancellation, so infidelities far below machine
    epsilon stay resolved.
    """
    if orthogonal_norm2 is not None:
        return min(1.0, orthogonal_norm2 / norm2)
    raw = 1.0 - abs(overlap) ** 2 / (norm2 * target_norm2)
    if raw < 0.0:
        log.debug("infidelity rounded below zero: %.3e", raw)
    return max(0.0, raw)


def infidelity(s: StateSnapshot) -> float:
    return _infidelity_value(s.overlap, s.norm2, s.target_norm2, s.orthogonal_norm2)


@dataclass
class InfidelityTerms:
    loss: float
    residual: np.ndarray  # v with F = J^H v
    overlap: complex
    norm2: float


def infidelity_terms(state: ExactState, target_red: np.ndarray, target_norm2: float) -> InfidelityTerms:
    """Infidelity and its residual vector against a target already projected to the sector."""
    overlap = complex(np.vdot(target_red, state.psi))
    n, t2 = state.norm2, target_norm2
    # v = -S Omega/(NT) + |S|^2 psi/(N^2 T) = -(S/(NT)) Omega_perp
    omega_perp = target_red - (overlap.conjugate() / n) * state.psi
    v = -(overlap / (n * t2)) * omega_perp
    perp = _orthogonal_norm2(state.psi, target_red, overlap, t2)
    return InfidelityTerms(_infidelity_value(overlap, n, t2, perp), v, overlap, n)


def infidelity_gradient(shape, params, parity, basis, target) -> np.ndarray:
    state = exact_state(shape, params, parity, basis)
    target = np.asarray(target)
    terms = infidelity_terms(state, state.reduction.project(target), float(np.vdot(target, target).real))
    return state.jac.conj().T @ terms.residual


# --- quantum geometric tensor ---------------------------------------------

def qgt(shape, params, parity, basis, block_size: int | None = None) -> np.ndarray:
    """G = M^H M from the centred Jacobian.

    With ``block_size`` the Jacobian is streamed over row blocks in two passes
    (mean log-derivative, then ordered accumulation of block Gram matrices).
    """
    if block_size is None:
        state = exact_state(shape, params, parity, basis)
        m = state.centered_jacobian()
        return _hermitize(m.conj().T @ m)
    red = parity_reduction(basis, parity)
    logs = log_amplitudes(shape, params, basis.configs)
    shift = float(logs.real.max())
    blocks = [slice(i, min(i + block_size, red.size)) for i in range(0, red.size, block_size)]
    norm2 = 0.0
    weighted = np.zeros(shape.n_params, dtype=complex)
    for sl in blocks:
        psi, jac = _rows(shape, params, basis, red, logs, shift, sl, True)
        norm2 += float(np.sum(np.abs(psi) ** 2))
        weighted += psi.conj() @ jac
    if not norm2 > 0:
        raise ZeroNormError("zero-norm state")
    mean = weighted / norm2
    g = np.zeros((shape.n_params,) * 2, dtype=complex)
    for sl in blocks:
        psi, jac = _rows(shape, params, basis, red, logs, shift, sl, True)
        m = (jac - np.outer(psi, mean)) / np.sqrt(norm2)
        g += m.conj().T @ m
    return _hermitize(g)


def _hermitize(g: np.ndarray) -> np.ndarray:
    g = 0.5 * (g + g.conj().T)
    return g


def effective_quantum_dimension(basis: SectorBasis, parity: str) -> int:
    dim, even, odd = basis.parity_dimensions()
    return {"even": even, "odd": odd, "none": dim}[parity]


@dataclass
class QgtReport:
    eigenvalues: np.ndarray  # descending
    d_r: int
    cutoff: float
    d_q: int
    n_params: int
    d_q_uniform: int | None = None
    ratio: float = field(init=False)
    normalized_rank: float = field(init=False)

    def __post_init__(self):
        self.ratio = self.d_r / self.d_q
        self.normalized_rank = self.d_r / self.n_params
        scale = max(1.0, float(self.eigenvalues[0])) if self.eigenvalues.size else 1.0
        if self.eigenvalues.size and self.eigenvalues.min() < -1e-10 * scale:
            raise AssertionError(f"QGT not PSD: min eigenvalue {self.eigenvalues.min():.3e}")
        if self.d_r > min(self.n_params, self.d_q):
            raise AssertionError(f"rank {self.d_r} exceeds min(N_p, d_q) = {min(self.n_params, self.d_q)}")

    def summary(self) -> dict:
        return {"d_r": self.d_r, "d_q": self.d_q, "d_q_uniform": self.d_q_uniform,
                "ratio": self.ratio, "n_params": self.n_params,
                "normalized_rank": self.normalized_rank, "cutoff": self.cutoff,
                "lambda_max": float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0}


def rank_at_cutoff(eigenvalues: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> int:
    return int(np.sum(np.asarray(eigenvalues) > cutoff))


def qgt_spectrum_and_rank(G: np.ndarray, d_q: int, cutoff: float = DEFAULT_CUTOFF,
                          d_q_uniform: int | None = None) -> QgtReport:
    if np.max(np.abs(G - G.conj().T), initial=0.0) > 1e-10 * max(1.0, np.abs(G).max(initial=0.0)):
        raise ValueError("QGT is not Hermitian")
    vals = eigh(G, eigvals_only=True, driver="evd")[::-1].copy()
    return QgtReport(vals, rank_at_cutoff(vals, cutoff), cutoff, d_q, G.shape[0], d_q_uniform)


def qgt_report_from_jacobian(m: np.ndarray, d_q: int, cutoff: float = DEFAULT_CUTOFF,
                             d_q_uniform: int | None = None) -> QgtReport:
    """Spectrum of G = M^H M as squared singular values of the centred Jacobian.

    Avoids forming G, so small eigenvalues keep their accuracy relative to
    lambda_max and the spectrum is non-negative by construction.
    """
    n_params = m.shape[1]
    vals = np.zeros(n_params)
    sv = svdvals(m)
    vals[: sv.size] = sv**2
    return QgtReport(vals, rank_at_cutoff(vals, cutoff), cutoff, d_q, n_params, d_q_uniform)


def qgt_dense_reference(shape, params, parity, basis) -> np.ndarray:
    """G from <d psi|d psi>/<psi|psi> - <d psi|psi><psi|d psi>/<psi|psi>^2 on full-basis vectors."""
    logs = log_amplitudes(shape, params, basis.configs)
    psi_raw = np.exp(logs)
    dpsi_raw = psi_raw[:, None] * log_derivatives(shape, params, basis.configs)
    if parity == "none":
        psi, dpsi = psi_raw, dpsi_raw
    else:
        s = -1.0 if parity == "odd" else 1.0
        flip = basis.flip_partner
        psi = 0.5 * (psi_raw + s * psi_raw[flip])
        dpsi = 0.5 * (dpsi_raw + s * dpsi_raw[flip])
    n = np.vdot(psi, psi).real
    dd = dpsi.conj().T @ dpsi
    dp = dpsi.conj().T @ psi
    return dd / n - np.outer(dp, dp.conj()) / n**2


# --- energy ---------------------------------------------------------------

@dataclass
class EnergyTerms:
    energy: float
    residual: np.ndarray


def energy_terms(state: ExactState, ham: SparseHamiltonian) -> EnergyTerms:
    red = state.reduction
    hpsi = red.project(ham.matrix @ red.expand(state.psi))
    energy = float(np.vdot(state.psi, hpsi).real / state.norm2)
    return EnergyTerms(energy, (hpsi - energy * state.psi) / state.norm2)


def energy_and_gradient(shape, params, parity, basis, ham: SparseHamiltonian):
    """E = sum_n p(n) E_loc(n) and F_E = <O^* (E_loc - E)>, both by exact summation.

    Evaluated as <psi|H|psi>/<psi|psi> and J^H (H psi - E psi)/<psi|psi>, the
    same sums with the 1/psi(n) factors cancelled.
    """
    state = exact_state(shape, params, parity, basis)
    terms = energy_terms(state, ham)
    return terms.energy, state.jac.conj().T @ terms.residual
