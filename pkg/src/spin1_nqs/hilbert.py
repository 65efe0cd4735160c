"""Total-Sz=0 sector of the open spin-1 chain.

Configurations are encoded as base-3 integers, site 0 most significant,
digit ``sigma + 1``.  Sorting the codes therefore sorts the configurations
lexicographically with -1 < 0 < +1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

MIN_SITES = 2
MAX_SITES = 14


@dataclass(frozen=True)
class SectorBasis:
    """Ordered Sz=0 configurations with index lookup and the spin-flip map."""

    length: int
    configs: np.ndarray  # (D, L) int8, values in {-1, 0, 1}
    codes: np.ndarray  # (D,) int64, sorted
    flip_partner: np.ndarray  # (D,) int64
    _powers: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return int(self.codes.shape[0])

    def encode(self, configs: np.ndarray) -> np.ndarray:
        configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
        return (configs + 1) @ self._powers

    def index_of(self, configs) -> np.ndarray | int:
        """Ordinal(s) of the given configuration(s); raises KeyError if absent."""
        arr = np.asarray(configs)
        single = arr.ndim == 1
        codes = self.encode(arr)
        idx = np.searchsorted(self.codes, codes)
        idx = np.minimum(idx, self.dimension - 1)
        if np.any(self.codes[idx] != codes):
            raise KeyError("configuration not in the Sz=0 sector")
        return int(idx[0]) if single else idx

    def fixed_points(self) -> np.ndarray:
        return np.flatnonzero(self.flip_partner == np.arange(self.dimension))

    def parity_dimensions(self) -> tuple[int, int, int]:
        return sector_parity_dimensions(self)


def _all_codes(length: int) -> tuple[np.ndarray, np.ndarray]:
    codes = np.arange(3**length, dtype=np.int64)
    digits = np.empty((codes.size, length), dtype=np.int8)
    rest = codes.copy()
    for site in range(length - 1, -1, -1):
        digits[:, site] = rest % 3
        rest //= 3
    return codes, digits


def enumerate_sz0_basis(length: int) -> SectorBasis:
    if not MIN_SITES <= length <= MAX_SITES:
        raise ValueError(f"chain length must be in [{MIN_SITES}, {MAX_SITES}], got {length}")
    codes, digits = _all_codes(length)
    spins = digits - 1
    keep = spins.sum(axis=1, dtype=np.int64) == 0
    codes = codes[keep]
    spins = np.ascontiguousarray(spins[keep])
    powers = 3 ** np.arange(length - 1, -1, -1, dtype=np.int64)
    # digit d -> 2 - d under sigma -> -sigma
    flipped = (3**length - 1) - codes
    partner = np.searchsorted(codes, flipped).astype(np.int64)
    return SectorBasis(length, spins, codes, partner, powers)


def central_trinomial(length: int) -> int:
    """Number of Sz=0 configurations: sum over k of C(L, 2k) C(2k, k)."""
    return sum(comb(length, 2 * k) * comb(2 * k, k) for k in range(length // 2 + 1))


def count_sz0_dp(length: int) -> int:
    """Independent count by dynamic programming over partial magnetisations."""
    counts = {0: 1}
    for _ in range(length):
        nxt: dict[int, int] = {}
        for m, c in counts.items():
            for s in (-1, 0, 1):
                nxt[m + s] = nxt.get(m + s, 0) + c
        counts = nxt
    return counts.get(0, 0)


def sector_parity_dimensions(basis: SectorBasis) -> tuple[int, int, int]:
    """(D, d_even, d_odd) of the spin-flip decomposition of the sector."""
    dim = basis.dimension
    n_fixed = basis.fixed_points().size
    pairs = (dim - n_fixed) // 2
    return dim, pairs + n_fixed, pairs


@dataclass(frozen=True)
class ParityReduction:
    """Isometry from a spin-flip parity subspace onto its orbit representatives.

    A vector ``u`` of definite parity is stored as ``sqrt(w_r) * u[rep_r]``
    with ``w_r = 2`` for flip pairs and ``1`` for the fixed point, so inner
    products are preserved.  For ``parity='none'`` this is the identity.
    """

    parity: str
    dimension: int
    reps: np.ndarray
    partners: np.ndarray
    weights: np.ndarray  # sqrt(w_r)

    @property
    def size(self) -> int:
        return int(self.reps.size)

    def sign(self) -> float:
        return -1.0 if self.parity == "odd" else 1.0

    def project(self, vec: np.ndarray) -> np.ndarray:
        """Parity projection of a full-basis vector, in reduced coordinates."""
        vec = np.asarray(vec)
        if self.parity == "none":
            return vec.copy()
        proj = 0.5 * (vec[self.reps] + self.sign() * vec[self.partners])
        return self.weights * proj

    def expand(self, red: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`project` on the parity subspace."""
        if self.parity == "none":
            return np.asarray(red).copy()
        out = np.zeros(self.dimension, dtype=np.result_type(red, float))
        vals = red / self.weights
        out[self.reps] = vals
        out[self.partners] = self.sign() * vals
        return out


def parity_reduction(basis: SectorBasis, parity: str) -> ParityReduction:
    if parity not in ("even", "odd", "none"):
        raise ValueError(f"unknown parity {parity!r}")
    ordinals = np.arange(basis.dimension)
    if parity == "none":
        return ParityReduction(parity, basis.dimension, ordinals, ordinals, np.ones(basis.dimension))
    partner = basis.flip_partner
    is_rep = ordinals < partner
    is_fixed = ordinals == partner
    if parity == "even":
        is_rep = is_rep | is_fixed
    reps = ordinals[is_rep]
    weights = np.where(partner[reps] == reps, 1.0, np.sqrt(2.0))
    return ParityReduction(parity, basis.dimension, reps, partner[reps], weights)
