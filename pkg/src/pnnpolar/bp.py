"""Belief propagation on the polar factor graph.

Messages live in arrays of shape ``(..., n+1, N)``; column ``c`` holds stage
``c+1``, so column 0 is the u-side and column ``n`` the channel side.  PE
layer ``s`` (1-based) joins columns ``s-1`` and ``s`` and pairs row ``i``
(bit ``s-1`` clear, port 1) with row ``i + 2**(s-1)`` (port 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polar import CodeSpec, polar_transform

DEFAULT_LMAX = 20.0


def box_f(a, b):
    """``ln((1 + e^(a+b)) / (e^a + e^b))`` without overflow."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (
        np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
        + np.log1p(np.exp(-np.abs(a + b)))
        - np.log1p(np.exp(-np.abs(a - b)))
    )


def minsum_f(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


@dataclass(frozen=True)
class PeInputs:
    l_in1: float
    l_in2: float
    r_in1: float
    r_in2: float


def pe_update(inp: PeInputs, l_max: float = DEFAULT_LMAX):
    """One processing element; returns ``(l_out1, l_out2, r_out1, r_out2)``."""
    shared = box_f(inp.r_in1, inp.l_in1)
    outs = (
        box_f(inp.l_in1, inp.l_in2 + inp.r_in2),
        shared + inp.l_in2,
        box_f(inp.r_in1, inp.l_in2 + inp.r_in2),
        shared + inp.r_in2,
    )
    return tuple(float(np.clip(v, -l_max, l_max)) for v in outs)


class StageMessages:
    """L- and R-messages of one graph, optionally for a batch of frames."""

    def __init__(self, L: np.ndarray, R: np.ndarray, l_max: float = DEFAULT_LMAX):
        if L.shape != R.shape or L.ndim < 2:
            raise ValueError("L and R must share a (..., n+1, N) shape")
        N = L.shape[-1]
        if L.shape[-2] != N.bit_length():
            raise ValueError(f"expected {N.bit_length()} stages for N={N}, got {L.shape[-2]}")
        self.L = L
        self.R = R
        self.l_max = float(l_max)

    @classmethod
    def zeros(cls, N: int, batch: tuple = (), l_max: float = DEFAULT_LMAX) -> "StageMessages":
        shape = tuple(batch) + (N.bit_length(), N)
        return cls(np.zeros(shape), np.zeros(shape), l_max)

    @classmethod
    def initial(cls, llr, spec: CodeSpec, l_max: float = DEFAULT_LMAX) -> "StageMessages":
        """Channel LLRs at the last stage, ``l_max`` on frozen rows of the first."""
        llr = np.asarray(llr, dtype=np.float64)
        if llr.shape[-1] != spec.N:
            raise ValueError(f"llr has length {llr.shape[-1]}, expected {spec.N}")
        msgs = cls.zeros(spec.N, llr.shape[:-1], l_max)
        msgs.L[..., spec.n, :] = np.clip(llr, -l_max, l_max)
        msgs.R[..., 0, :] = np.where(spec.frozen_mask, l_max, 0.0)
        return msgs

    @property
    def n(self) -> int:
        return self.L.shape[-2] - 1

    @property
    def N(self) -> int:
        return self.L.shape[-1]

    def copy(self) -> "StageMessages":
        return StageMessages(self.L.copy(), self.R.copy(), self.l_max)


def _ports(col: np.ndarray, d: int):
    """Views of the port-1 and port-2 rows of a column for distance ``d``."""
    N = col.shape[-1]
    v = col.reshape(col.shape[:-1] + (N // (2 * d), 2, d))
    return v[..., 0, :], v[..., 1, :]


def _assign(dst: np.ndarray, value: np.ndarray, mask) -> None:
    if mask is None:
        dst[...] = value
    else:
        np.copyto(dst, value, where=mask)


def update_layer_l(msgs: StageMessages, s: int, mask=None) -> None:
    """Right-to-left update of PE layer ``s``: writes L at stage ``s``.

    ``mask``, when given, selects which PEs of the layer are updated; it has
    the shape of the port-1 view ``(N/(2d), d)``.
    """
    d = 1 << (s - 1)
    lo = msgs.l_max
    l1, l2 = _ports(msgs.L[..., s, :], d)
    r1, r2 = _ports(msgs.R[..., s - 1, :], d)
    o1, o2 = _ports(msgs.L[..., s - 1, :], d)
    new1 = np.clip(box_f(l1, l2 + r2), -lo, lo)
    new2 = np.clip(box_f(r1, l1) + l2, -lo, lo)
    _assign(o1, new1, mask)
    _assign(o2, new2, mask)


def update_layer_r(msgs: StageMessages, s: int, mask=None) -> None:
    """Left-to-right update of PE layer ``s``: writes R at stage ``s+1``."""
    d = 1 << (s - 1)
    lo = msgs.l_max
    l1, l2 = _ports(msgs.L[..., s, :], d)
    r1, r2 = _ports(msgs.R[..., s - 1, :], d)
    o1, o2 = _ports(msgs.R[..., s, :], d)
    new1 = np.clip(box_f(r1, l2 + r2), -lo, lo)
    new2 = np.clip(box_f(r1, l1) + r2, -lo, lo)
    _assign(o1, new1, mask)
    _assign(o2, new2, mask)


def _check_range(msgs: StageMessages, lo_stage: int, hi_stage: int) -> None:
    if not 1 <= lo_stage < hi_stage <= msgs.n + 1:
        raise ValueError(f"invalid stage range {lo_stage}..{hi_stage} for n={msgs.n}")


def propagate_right_to_left(msgs: StageMessages, from_stage: int, to_stage: int) -> StageMessages:
    """Refresh L-messages from stage ``from_stage`` down to ``to_stage``."""
    _check_range(msgs, to_stage, from_stage)
    out = msgs.copy()
    for s in range(from_stage - 1, to_stage - 1, -1):
        update_layer_l(out, s)
    return out


def propagate_left_to_right(msgs: StageMessages, from_stage: int, to_stage: int) -> StageMessages:
    """Refresh R-messages from stage ``from_stage`` up to ``to_stage``."""
    _check_range(msgs, from_stage, to_stage)
    out = msgs.copy()
    for s in range(from_stage, to_stage):
        update_layer_r(out, s)
    return out


def bp_decode(llr, spec: CodeSpec, iters: int = 50, l_max: float = DEFAULT_LMAX, early_stop: bool = False):
    """Flooding BP with ``iters`` iterations (an L2R sweep then an R2L sweep).

    Returns ``(u_hat, x_hat, soft_u)``; accepts one frame or a batch.
    With ``early_stop`` a frame's decision is frozen at the first iteration
    where re-encoding ``u_hat`` reproduces the hard decisions at the channel
    stage.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    msgs = StageMessages.initial(llr, spec, l_max)
    n = spec.n
    frozen = spec.frozen_mask
    soft = None
    done = None
    for _ in range(iters):
        for s in range(1, n + 1):
            update_layer_r(msgs, s)
        for s in range(n, 0, -1):
            update_layer_l(msgs, s)
        current = msgs.L[..., 0, :] + msgs.R[..., 0, :]
        if not early_stop:
            soft = current
            continue
        u = np.where(frozen, 0, current < 0).astype(np.uint8)
        x = (msgs.L[..., n, :] + msgs.R[..., n, :] < 0).astype(np.uint8)
        ok = np.all(polar_transform(u) == x, axis=-1)
        if soft is None:
            soft = current.copy()
            done = np.zeros(ok.shape, dtype=bool)
        keep = ~done
        soft[keep] = current[keep]
        done |= ok
        if np.all(done):
            break
    u_hat = np.where(frozen, 0, soft < 0).astype(np.uint8)
    return u_hat, polar_transform(u_hat), soft
