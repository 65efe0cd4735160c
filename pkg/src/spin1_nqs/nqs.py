"""Spin-1 RBM with hidden units summed out.

    log psi(s) = sum_i a_i s_i + A_i s_i^2 + sum_k log(2 cosh z_k)
    z_k = b_k + sum_j w_kj s_j + W_kj s_j^2

Parameters are one packed complex vector, layout ``a | A | b | w | W`` with
the two weight matrices stored (M, L) row-major.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hilbert import SectorBasis

LOG2 = np.log(2.0)
PARITIES = ("even", "odd", "none")


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class RbmShape:
    length: int
    alpha: int

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("hidden density alpha must be >= 1")
        if self.length < 1:
            raise ValueError("need at least one visible unit")

    @property
    def n_hidden(self) -> int:
        return self.alpha * self.length

    @property
    def n_params(self) -> int:
        L, M = self.length, self.n_hidden
        return 2 * L + M + 2 * M * L

    def slices(self) -> dict[str, slice]:
        L, M = self.length, self.n_hidden
        edges = np.cumsum([0, L, L, M, M * L, M * L])
        names = ("a", "A", "b", "w", "W")
        return {n: slice(int(edges[i]), int(edges[i + 1])) for i, n in enumerate(names)}


def unpack(shape: RbmShape, params: np.ndarray):
    params = np.asarray(params)
    if params.shape != (shape.n_params,):
        raise ValueError(f"expected {shape.n_params} parameters, got {params.shape}")
    s = shape.slices()
    M, L = shape.n_hidden, shape.length
    return (params[s["a"]], params[s["A"]], params[s["b"]],
            params[s["w"]].reshape(M, L), params[s["W"]].reshape(M, L))


def init_params(shape: RbmShape, seed: int = 0, scale: float = 1e-2) -> np.ndarray:
    if scale < 0:
        raise ValueError("scale must be non-negative")
    rng = np.random.default_rng(seed)
    n = shape.n_params
    re = rng.normal(0.0, 1.0, n)
    im = rng.normal(0.0, 1.0, n)
    return scale * (re + 1j * im)


def log_cosh2(z: np.ndarray) -> np.ndarray:
    """log(2 cosh z) on the branch s*z + log(1 + exp(-2 s z)), s = sign(Re z), s(0)=+1."""
    z = np.asarray(z, dtype=complex)
    s = np.where(z.real >= 0, 1.0, -1.0)
    return s * z + np.log1p(np.exp(-2.0 * s * z))


def hidden_fields(shape: RbmShape, params: np.ndarray, configs: np.ndarray) -> np.ndarray:
    _, _, b, w, W = unpack(shape, params)
    x = np.atleast_2d(np.asarray(configs, dtype=float))
    return b + x @ w.T + (x * x) @ W.T


def log_amplitudes(shape: RbmShape, params: np.ndarray, configs: np.ndarray) -> np.ndarray:
    """Batched log psi for an (n, L) array of configurations."""
    a, A, _, _, _ = unpack(shape, params)
    x = np.atleast_2d(np.asarray(configs, dtype=float))
    if x.shape[1] != shape.length:
        raise ValueError("configuration length does not match the RBM")
    z = hidden_fields(shape, params, x)
    hidden = log_cosh2(z)
    bad = ~np.isfinite(hidden)
    if bad.any():
        row, unit = np.argwhere(bad)[0]
        raise NonFiniteError(f"hidden unit {unit} non-finite (z={z[row, unit]!r}) for config {row}")
    return x @ a + (x * x) @ A + hidden.sum(axis=1)


def log_amplitude(shape: RbmShape, params: np.ndarray, config) -> complex:
    return complex(log_amplitudes(shape, params, np.asarray(config)[None, :])[0])


def log_derivatives(shape: RbmShape, params: np.ndarray, configs: np.ndarray) -> np.ndarray:
    """d log psi / d theta, (n, N_p), in packed layout order."""
    x = np.atleast_2d(np.asarray(configs, dtype=float))
    x2 = x * x
    t = np.tanh(hidden_fields(shape, params, x))
    n = x.shape[0]
    M, L = shape.n_hidden, shape.length
    out = np.empty((n, shape.n_params), dtype=complex)
    s = shape.slices()
    out[:, s["a"]] = x
    out[:, s["A"]] = x2
    out[:, s["b"]] = t
    out[:, s["w"]] = (t[:, :, None] * x[:, None, :]).reshape(n, M * L)
    out[:, s["W"]] = (t[:, :, None] * x2[:, None, :]).reshape(n, M * L)
    return out


def symmetrized_amplitude(shape: RbmShape, params: np.ndarray, parity: str, config) -> complex:
    """[psi(s) +- psi(-s)] / 2 for one configuration (plain psi for parity 'none')."""
    config = np.asarray(config)
    if parity == "none":
        return complex(np.exp(log_amplitude(shape, params, config)))
    sign = _sign(parity)
    l1, l2 = log_amplitudes(shape, params, np.stack([config, -config]))
    ref = max(l1.real, l2.real)
    val = 0.5 * (np.exp(l1 - ref) + sign * np.exp(l2 - ref))
    if val == 0 and not np.array_equal(config, -config):
        raise FloatingPointError("both symmetrisation branches vanish after the exponent shift")
    return complex(val * np.exp(ref))


def _sign(parity: str) -> float:
    if parity not in PARITIES:
        raise ValueError(f"parity must be one of {PARITIES}, got {parity!r}")
    return -1.0 if parity == "odd" else 1.0


def amplitudes_over_basis(shape: RbmShape, params: np.ndarray, parity: str, basis: SectorBasis):
    """Unnormalised psi over the basis and the log-shift subtracted from every exponent."""
    if basis.length != shape.length:
        raise ValueError("basis and RBM disagree on the chain length")
    sign = _sign(parity)
    logs = log_amplitudes(shape, params, basis.configs)
    shift = float(logs.real.max())
    psi = np.exp(logs - shift)
    if parity != "none":
        psi = 0.5 * (psi + sign * psi[basis.flip_partner])
    assert np.all(np.isfinite(psi)), "overflow after log-shift"
    return psi, shift


def log_second_derivative_blocks(shape: RbmShape, params: np.ndarray, configs: np.ndarray):
    """Per-hidden-unit curvature 1 - tanh(z_k)^2, shape (n, M).

    The only nonzero second derivatives of log psi pair parameters attached to
    the same hidden unit k: d^2/dp dq = (1 - tanh^2 z_k) x_p x_q with
    x = 1 for b_k, s_j for w_kj and s_j^2 for W_kj.
    """
    t = np.tanh(hidden_fields(shape, params, configs))
    return 1.0 - t * t


# --- checkpoints -----------------------------------------------------------

MAGIC = b"S1RBMCK\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIIBxxxq")
_PARITY_CODE = {"none": 0, "even": 1, "odd": 2}


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, shape: RbmShape, params: np.ndarray, parity: str, seed: int,
                    extra: dict | None = None) -> Path:
    """Binary header + little-endian complex128 payload, plus a JSON sidecar."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, shape.length, shape.alpha, _PARITY_CODE[parity], int(seed))
    payload = np.asarray(params, dtype="<c16").tobytes()
    _atomic_write(path, header + payload)
    meta = {"magic": MAGIC.rstrip(b"\x00").decode(), "version": VERSION, "L": shape.length,
            "alpha": shape.alpha, "parity": parity, "seed": int(seed), "n_params": shape.n_params,
            "layout": ["a", "A", "b", "w", "W"]}
    meta.update(extra or {})
    _atomic_write(path.with_suffix(".json"), json.dumps(meta, indent=2).encode())
    return path


def load_checkpoint(path):
    """Returns (shape, params, parity, seed, sidecar dict)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, length, alpha, pcode, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    shape = RbmShape(length, alpha)
    params = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(complex)
    if params.size != shape.n_params:
        raise ValueError(f"{path}: expected {shape.n_params} parameters, found {params.size}")
    parity = {v: k for k, v in _PARITY_CODE.items()}[pcode]
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return shape, params, parity, seed, meta
