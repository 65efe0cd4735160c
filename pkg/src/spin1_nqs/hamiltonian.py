"""Open-boundary bilinear-biquadratic spin-1 Hamiltonian on the Sz=0 sector.

    H = J sum_{i=0}^{L-2} [ S_i.S_{i+1} + tan(theta) (S_i.S_{i+1})^2 ]
"""
from __future__ import annotations

from dataclasses import dataclass
from math import isclose, pi, tan
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .hilbert import SectorBasis

# local basis order: sigma = -1, 0, +1
SZ = np.diag([-1.0, 0.0, 1.0])
SPLUS = np.zeros((3, 3))
SPLUS[1, 0] = SPLUS[2, 1] = np.sqrt(2.0)
SMINUS = SPLUS.T.copy()


@dataclass(frozen=True)
class BondMatrices:
    ss: np.ndarray
    ss2: np.ndarray


def bond_matrices() -> BondMatrices:
    ss = np.kron(SZ, SZ) + 0.5 * (np.kron(SPLUS, SMINUS) + np.kron(SMINUS, SPLUS))
    return BondMatrices(ss=ss, ss2=ss @ ss)


@dataclass(frozen=True)
class SparseHamiltonian:
    matrix: sp.csr_matrix
    theta: float
    coupling: float
    length: int
    flip_partner: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return apply_hamiltonian(self, v)


def _check_theta(theta: float) -> float:
    if not -pi / 2 < theta < pi / 2 or isclose(abs(theta), pi / 2, abs_tol=1e-12):
        raise ValueError(
            f"theta={theta!r} outside (-pi/2, pi/2): tan(theta) diverges; "
            "this parametrisation cannot represent the ferromagnetic boundary"
        )
    return tan(theta)


def build_hamiltonian(basis: SectorBasis, theta: float, coupling: float = 1.0) -> SparseHamiltonian:
    tan_theta = _check_theta(theta)
    bonds = bond_matrices()
    bond = bonds.ss + tan_theta * bonds.ss2
    length = basis.length
    digits = (basis.configs + 1).astype(np.int64)
    powers = basis._powers
    out_idx, in_idx = np.nonzero(np.abs(bond) > 0)
    values = bond[out_idx, in_idx]

    rows, cols, vals = [], [], []
    ordinals = np.arange(basis.dimension)
    for site in range(length - 1):
        local = 3 * digits[:, site] + digits[:, site + 1]
        for o, i, val in zip(out_idx, in_idx, values):
            hit = local == i
            if not hit.any():
                continue
            shift = (o // 3 - i // 3) * powers[site] + (o % 3 - i % 3) * powers[site + 1]
            target = basis.codes[hit] + shift
            # bond matrix conserves Sz, so every target lies in the sector
            cols.append(ordinals[hit])
            rows.append(np.searchsorted(basis.codes, target))
            vals.append(np.full(target.size, coupling * val))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(basis.dimension,) * 2).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    asym = abs(mat - mat.T)
    if asym.nnz and asym.max() != 0.0:
        raise AssertionError("assembled Hamiltonian is not symmetric")
    return SparseHamiltonian(mat, float(theta), float(coupling), length, basis.flip_partner)


def apply_hamiltonian(ham: SparseHamiltonian, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != ham.dimension:
        raise ValueError(f"vector length {v.shape[0]} != sector dimension {ham.dimension}")
    return ham.matrix @ v


def full_space_hamiltonian(length: int, theta: float, coupling: float = 1.0) -> np.ndarray:
    """Dense 3^L x 3^L operator by Kronecker products (small L cross-checks only)."""
    bonds = bond_matrices()
    bond = bonds.ss + tan(theta) * bonds.ss2
    dim = 3**length
    ham = np.zeros((dim, dim))
    for site in range(length - 1):
        ham += np.kron(np.kron(np.eye(3**site), bond), np.eye(3 ** (length - site - 2)))
    return coupling * ham


def dump_coo(ham: SparseHamiltonian, path: str | Path) -> Path:
    """Write ``row col value`` lines, one per stored entry."""
    path = Path(path)
    coo = ham.matrix.tocoo()
    with path.open("w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
    return path
