"""Polar code construction, encoding and frozen-set bookkeeping.

Bit indices use natural (non bit-reversed) order.  Stage 1 of the factor
graph is the u-side and PE layer ``s`` combines rows at distance
``2**(s-1)``, so the first ``log2(Np)`` layers never leave an aligned block
of ``Np`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class CodeSpec:
    """Polar code of length ``N = 2**n`` with ``k`` information bits.

    Parameters
    ----------
    N : int
        Block length, a power of two.
    frozen : sequence of int
        Frozen u-indices.  Stored sorted as a tuple.
    """

    N: int
    frozen: tuple = field(default=())

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise ValueError(f"N must be a power of two, got {self.N}")
        frozen = tuple(sorted(int(i) for i in self.frozen))
        if len(set(frozen)) != len(frozen):
            raise ValueError("frozen indices must be unique")
        if frozen and (frozen[0] < 0 or frozen[-1] >= self.N):
            raise ValueError(f"frozen indices must lie in [0, {self.N})")
        object.__setattr__(self, "frozen", frozen)

    @property
    def n(self) -> int:
        return self.N.bit_length() - 1

    @property
    def k(self) -> int:
        return self.N - len(self.frozen)

    @property
    def rate(self) -> float:
        return self.k / self.N

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[list(self.frozen)] = True
        return mask

    @property
    def info(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen_mask)

    def sub_spec(self, offset: int, size: int) -> "CodeSpec":
        """Return the code seen by rows ``offset .. offset+size-1``."""
        local = [i - offset for i in self.frozen if offset <= i < offset + size]
        return CodeSpec(size, local)


def _check_length(bits: np.ndarray, expected: int, what: str) -> None:
    if bits.shape[-1] != expected:
        raise ValueError(f"{what} has length {bits.shape[-1]}, expected {expected}")


def polar_transform(bits: np.ndarray) -> np.ndarray:
    """Multiply by ``F^{⊗n}`` over GF(2) with the in-place butterfly.

    Works on the last axis, so a ``(batch, N)`` array is transformed row-wise.
    The transform is its own inverse.
    """
    x = np.array(bits, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    if not is_power_of_two(N):
        raise ValueError(f"length must be a power of two, got {N}")
    lead = x.shape[:-1]
    d = 1
    while d < N:
        v = x.reshape(*lead, N // (2 * d), 2, d)
        v[..., 0, :] ^= v[..., 1, :]
        d *= 2
    return x


def encode(u, spec: CodeSpec) -> np.ndarray:
    """Encode ``x = u · G_N``.  ``u`` may be a single block or a batch."""
    u = np.asarray(u)
    _check_length(u, spec.N, "u")
    if np.any((u != 0) & (u != 1)):
        raise ValueError("u must contain only 0/1")
    if spec.frozen and np.any(u[..., list(spec.frozen)] != 0):
        raise ValueError("nonzero value at a frozen position")
    return polar_transform(u)


def expand_info(info, spec: CodeSpec) -> np.ndarray:
    info = np.asarray(info, dtype=np.uint8)
    _check_length(info, spec.k, "info")
    u = np.zeros(info.shape[:-1] + (spec.N,), dtype=np.uint8)
    u[..., spec.info] = info
    return u


def extract_info(u, spec: CodeSpec) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint8)
    _check_length(u, spec.N, "u")
    return u[..., spec.info]


def kronecker_generator(N: int) -> np.ndarray:
    """Explicit ``F^{⊗n}`` built by repeated Kronecker products."""
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    F = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    G = np.ones((1, 1), dtype=np.uint8)
    while G.shape[0] < N:
        G = np.kron(G, F)
    return G


@dataclass(frozen=True)
class ConstructionParams:
    """Design channel for the Bhattacharyya recursion, a BEC(eps)."""

    eps: float = 0.5


def bhattacharyya(N: int, eps: float = 0.5) -> np.ndarray:
    """Bhattacharyya parameters of the ``N`` synthetic channels of BEC(eps)."""
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    z = np.array([eps])
    while z.size < N:
        z = np.stack([2 * z - z * z, z * z], axis=1).ravel()
    return z


def construct_frozen_set(N: int, k: int, design: ConstructionParams | None = None) -> CodeSpec:
    """Freeze the ``N - k`` least reliable channels (largest Z).

    Ties freeze the smaller index.
    """
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    if not 0 <= k <= N:
        raise ValueError(f"k must lie in [0, {N}], got {k}")
    design = design or ConstructionParams()
    z = bhattacharyya(N, design.eps)
    # lexsort: last key is primary -> descending Z, then ascending index
    order = np.lexsort((np.arange(N), -z))
    return CodeSpec(N, order[: N - k].tolist())


def save_spec(spec: CodeSpec, path) -> None:
    """Write ``N k`` on line 1 and the ascending frozen indices on line 2."""
    text = f"{spec.N} {spec.k}\n{' '.join(str(i) for i in spec.frozen)}\n"
    Path(path).write_text(text)


def load_spec(path) -> CodeSpec:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty frozen-set file")
    try:
        N, k = (int(t) for t in lines[0].split())
        frozen = [int(t) for t in lines[1].split()] if len(lines) > 1 else []
    except ValueError as exc:
        raise ValueError(f"{path}: malformed frozen-set file") from exc
    if frozen != sorted(frozen):
        raise ValueError(f"{path}: frozen indices must be ascending")
    spec = CodeSpec(N, frozen)
    if spec.k != k:
        raise ValueError(f"{path}: header says k={k} but {len(frozen)} indices are frozen")
    return spec
