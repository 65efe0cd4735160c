"""Diagonal observables by exact |v(n)|^2 summation over the sector basis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import SectorBasis


@dataclass
class CorrelationProfile:
    reference: int
    sites: np.ndarray
    values: np.ndarray
    source: str

    def rows(self):
        return [(int(j), float(v), self.source) for j, v in zip(self.sites, self.values)]


def _weights(v: np.ndarray, basis: SectorBasis) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != basis.dimension:
        raise ValueError("vector length does not match the basis")
    prob = np.abs(v) ** 2
    norm = prob.sum()
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"vector not normalised: <v|v> = {norm!r}")
    return prob


def szsz_correlation(v: np.ndarray, basis: SectorBasis, i0: int, j: int) -> float:
    if not 0 <= i0 <= j < basis.length:
        raise ValueError("need 0 <= i0 <= j < L")
    prob = _weights(v, basis)
    s = basis.configs
    return float(prob @ (s[:, i0] * s[:, j]).astype(float))


def correlation_profile(v, basis: SectorBasis, i0: int = 0, source: str = "ED") -> CorrelationProfile:
    prob = _weights(v, basis)
    s = basis.configs.astype(float)
    sites = np.arange(i0, basis.length)
    values = (prob * s[:, i0]) @ s[:, i0:]
    return CorrelationProfile(i0, sites, values, source)


def string_order(v: np.ndarray, basis: SectorBasis, i: int, j: int) -> float:
    """<S_i^z exp(i pi sum_{i<k<j} S_k^z) S_j^z>; the phase is +-1 for integer spins."""
    if not 0 <= i < j < basis.length:
        raise ValueError("need 0 <= i < j < L")
    prob = _weights(v, basis)
    s = basis.configs.astype(np.int64)
    inner = s[:, i + 1 : j].sum(axis=1)
    phase = np.where(inner % 2 == 0, 1.0, -1.0)
    return float(prob @ (s[:, i] * phase * s[:, j]))
