"""Lowest eigenpairs of the sector Hamiltonian and parity-resolved target states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hamiltonian import SparseHamiltonian
from .hilbert import SectorBasis

DENSE_THRESHOLD = 2000


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(f"{message}; best residuals {np.array2string(residuals, precision=3)}")
        self.residuals = residuals


class ParityError(ValueError):
    pass


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray  # (D, k)
    residuals: np.ndarray
    method: str = "dense"


@dataclass
class TargetState:
    vector: np.ndarray
    energy: float
    parity: str
    degeneracy: int


def parity_label(vec: np.ndarray, flip: np.ndarray, tol: float = 1e-8) -> str:
    scale = np.linalg.norm(vec)
    if np.linalg.norm(vec - vec[flip]) <= tol * scale:
        return "even"
    if np.linalg.norm(vec + vec[flip]) <= tol * scale:
        return "odd"
    return "mixed"


def _norm_estimate(ham: SparseHamiltonian) -> float:
    return float(abs(ham.matrix).sum(axis=1).max())


def _residuals(ham: SparseHamiltonian, values, vectors) -> np.ndarray:
    return np.linalg.norm(ham.matrix @ vectors - vectors * values, axis=0)


def _ritz(alphas, betas):
    if len(alphas) == 1:
        return np.array(alphas), np.ones((1, 1))
    return eigh_tridiagonal(np.array(alphas), np.array(betas[: len(alphas) - 1]))


def lanczos(
    ham: SparseHamiltonian,
    k: int,
    tol: float = 1e-10,
    start: np.ndarray | None = None,
    project=None,
    maxiter: int = 400,
    seed: int = 1234,
) -> EigenPairs:
    """Lanczos with full reorthogonalisation.

    ``project`` optionally maps vectors back into an invariant subspace of H
    (used to keep iterates inside one spin-flip sector).
    """
    dim = ham.dimension
    if start is None:
        start = np.random.default_rng(seed).standard_normal(dim)
    proj = project if project is not None else (lambda x: x)
    v = proj(np.asarray(start, dtype=float))
    hnorm = _norm_estimate(ham)
    nmax = min(maxiter, dim)
    krylov = np.zeros((dim, nmax))
    krylov[:, 0] = v / np.linalg.norm(v)
    alphas, betas = [], []
    estimates = np.full(k, np.inf)
    converged = False
    for j in range(nmax):
        w = proj(ham.matrix @ krylov[:, j])
        alphas.append(krylov[:, j] @ w)
        for _ in range(2):
            w -= krylov[:, : j + 1] @ (krylov[:, : j + 1].T @ w)
        beta = np.linalg.norm(w)
        betas.append(beta)
        n = j + 1
        invariant = beta <= 1e-12 * hnorm
        if invariant or (n >= k and (n % 5 == 0 or n == nmax)):
            _, y = _ritz(alphas, betas)
            estimates = np.abs(beta * y[-1, :k])
            converged = invariant or (n >= k and np.all(estimates <= tol * hnorm))
        if converged or n == nmax:
            break
        krylov[:, j + 1] = w / beta
    if not converged:
        raise ConvergenceError(f"Lanczos did not converge in {len(alphas)} iterations", estimates)
    n = len(alphas)
    theta, y = _ritz(alphas, betas)
    kk = min(k, n)
    vecs = krylov[:, :n] @ y[:, :kk]
    vecs /= np.linalg.norm(vecs, axis=0)
    vals = theta[:kk]
    res = _residuals(ham, vals, vecs)
    if np.any(res > 10 * tol * hnorm):
        raise ConvergenceError("Lanczos Ritz vectors failed the explicit residual check", res)
    return EigenPairs(vals, vecs, res, "lanczos")


def _sector_projector(flip: np.ndarray, sign: float):
    return lambda x: 0.5 * (x + sign * x[flip])


def ground_states(
    ham: SparseHamiltonian,
    k: int = 2,
    tol: float = 1e-10,
    method: str = "auto",
) -> EigenPairs:
    """The ``k`` lowest eigenpairs.

    Dense diagonalisation for D <= 2000 unless ``method='lanczos'``.  Lanczos
    runs separately in the even and odd spin-flip sectors, so eigenvalues
    degenerate across sectors are both found.
    """
    dim = ham.dimension
    if k > 6 or k < 1:
        raise ValueError("k must be in [1, 6]")
    if dim < k:
        raise ValueError(f"k={k} exceeds sector dimension {dim}")
    if method == "auto":
        method = "dense" if dim <= DENSE_THRESHOLD else "lanczos"
    if method == "dense":
        vals, vecs = np.linalg.eigh(ham.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
        return EigenPairs(vals, vecs, _residuals(ham, vals, vecs), "dense")
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")

    flip = ham.flip_partner
    if flip is None:
        return lanczos(ham, k, tol)
    pieces = []
    for sign in (1.0, -1.0):
        proj = _sector_projector(flip, sign)
        n_fixed = int(np.sum(flip == np.arange(dim)))
        sector_dim = (dim + n_fixed) // 2 if sign > 0 else (dim - n_fixed) // 2
        if sector_dim == 0:
            continue
        pieces.append(lanczos(ham, min(k, sector_dim), tol, project=proj, seed=1234 + int(sign > 0)))
    vals = np.concatenate([p.values for p in pieces])
    vecs = np.hstack([p.vectors for p in pieces])
    order = np.argsort(vals, kind="stable")[:k]
    vals, vecs = vals[order], vecs[:, order]
    return EigenPairs(vals, vecs, _residuals(ham, vals, vecs), "lanczos")


def select_target(
    pairs: EigenPairs,
    basis: SectorBasis,
    parity: str = "even",
    degeneracy_tol: float | None = None,
) -> TargetState:
    """Lowest state of the requested parity inside the ground-level cluster."""
    if len(pairs.values) == 0:
        raise ValueError("no eigenpairs supplied")
    e0 = pairs.values[0]
    if degeneracy_tol is None:
        degeneracy_tol = max(1e-8 * abs(e0), 1e-12)
    in_cluster = np.abs(pairs.values - e0) <= degeneracy_tol
    energies = pairs.values[in_cluster]
    vecs = pairs.vectors[:, in_cluster]
    flip = basis.flip_partner
    available = sorted(_projected_parities(vecs, flip))
    if parity == "none":
        vec, energy = vecs[:, 0], energies[0]
    else:
        sign = 1.0 if parity == "even" else -1.0
        proj = 0.5 * (vecs + sign * vecs[flip])
        u, s, vt = np.linalg.svd(proj, full_matrices=False)
        keep = s > 1e-6
        if not keep.any():
            raise ParityError(
                f"parity {parity!r} absent from the ground cluster "
                f"(degeneracy {vecs.shape[1]}, available: {', '.join(available)})")
        q = u[:, keep]
        # H on span(vecs) is diag(energies); carry it through the projection
        coeffs = vt[keep].T / s[keep]
        hq = proj @ (energies[:, None] * coeffs)
        hsub = q.T @ hq
        w, y = np.linalg.eigh(0.5 * (hsub + hsub.T))
        vec, energy = q @ y[:, 0], w[0]
    vec = vec / np.linalg.norm(vec)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    label = parity_label(vec, flip, tol=1e-10)
    if parity != "none" and label != parity:
        raise ParityError(f"projected target has parity {label!r}, expected {parity!r}")
    return TargetState(vec, float(energy), label, int(in_cluster.sum()))


def _projected_parities(vecs: np.ndarray, flip: np.ndarray) -> set[str]:
    found = set()
    for name, sign in (("even", 1.0), ("odd", -1.0)):
        if np.linalg.svd(0.5 * (vecs + sign * vecs[flip]), compute_uv=False).max() > 1e-6:
            found.add(name)
    return found
