"""Bond-dimension-2 MPS of the AKLT valence-bond state, used as an exact oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import SectorBasis

_R23 = np.sqrt(2.0 / 3.0)
_R13 = 1.0 / np.sqrt(3.0)


@dataclass(frozen=True)
class AkltMps:
    """Site matrices keyed by sigma, boundary indices 1-based as (alpha, beta)."""

    plus: np.ndarray
    zero: np.ndarray
    minus: np.ndarray
    boundary: tuple[int, int] = (1, 1)

    def matrix(self, sigma: int) -> np.ndarray:
        return {1: self.plus, 0: self.zero, -1: self.minus}[int(sigma)]


def aklt_mps(boundary: tuple[int, int] = (1, 1)) -> AkltMps:
    if any(b not in (1, 2) for b in boundary):
        raise ValueError("boundary indices must be 1 or 2")
    plus = np.array([[0.0, _R23], [0.0, 0.0]])
    zero = np.array([[-_R13, 0.0], [0.0, _R13]])
    minus = np.array([[0.0, 0.0], [-_R23, 0.0]])
    return AkltMps(plus, zero, minus, tuple(boundary))


def aklt_amplitude(mps: AkltMps, config) -> float:
    prod = np.eye(2)
    for s in config:
        prod = prod @ mps.matrix(s)
    a, b = mps.boundary
    return float(prod[a - 1, b - 1])


def aklt_amplitudes(mps: AkltMps, configs: np.ndarray) -> np.ndarray:
    """Vectorised amplitudes for a (n, L) array of configurations."""
    stack = np.stack([mps.minus, mps.zero, mps.plus])  # indexed by sigma + 1
    configs = np.asarray(configs)
    a, b = mps.boundary
    row = np.zeros((configs.shape[0], 2))
    row[:, a - 1] = 1.0
    for site in range(configs.shape[1]):
        row = np.einsum("ni,nij->nj", row, stack[configs[:, site] + 1])
    return row[:, b - 1]


def aklt_sector_vector(basis: SectorBasis, boundary: tuple[int, int] = (1, 1)) -> np.ndarray:
    """Unit-norm AKLT state restricted to the Sz=0 basis.

    Only alpha == beta boundaries carry an Sz=0 component; the others raise.
    """
    vec = aklt_amplitudes(aklt_mps(boundary), basis.configs)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError(f"boundary {boundary} has no component in the Sz=0 sector")
    return vec / norm
