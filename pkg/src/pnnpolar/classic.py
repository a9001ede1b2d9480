"""SC, SCL and brute-force MAP/ML decoders.

SC and SCL use the min-sum check-node rule together with the hard path
metric penalty (``|llr|`` when a decision disagrees with the LLR sign).  With
that pairing the metric of a complete path equals the correlation
discrepancy of its codeword, so an SCL list that never prunes is exactly ML.
"""

from __future__ import annotations

import numba
import numpy as np

from .polar import CodeSpec, polar_transform

MAP_K_LIMIT = 24


def _as_batch(llr, spec: CodeSpec):
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape[-1] != spec.N:
        raise ValueError(f"llr has length {llr.shape[-1]}, expected {spec.N}")
    single = llr.ndim == 1
    return np.atleast_2d(llr), single


def _sc_node(alpha: np.ndarray, frozen: np.ndarray):
    """Decode one subtree; returns (u, beta) for the batch."""
    m = alpha.shape[1]
    if m == 1:
        if frozen[0]:
            u = np.zeros((alpha.shape[0], 1), dtype=np.uint8)
        else:
            u = (alpha < 0).astype(np.uint8)
        return u, u
    h = m // 2
    a, b = alpha[:, :h], alpha[:, h:]
    left = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    u_l, beta_l = _sc_node(left, frozen[:h])
    right = b + (1.0 - 2.0 * beta_l) * a
    u_r, beta_r = _sc_node(right, frozen[h:])
    return np.concatenate([u_l, u_r], axis=1), np.concatenate([beta_l ^ beta_r, beta_r], axis=1)


def sc_decode(llr, spec: CodeSpec) -> np.ndarray:
    """Successive cancellation; returns ``u_hat`` (batch-aware)."""
    batch, single = _as_batch(llr, spec)
    u, _ = _sc_node(batch, spec.frozen_mask)
    return u[0] if single else u


@numba.njit(cache=True, nogil=True)
def _select(buf, kth):
    """Value of rank ``kth`` (0-based); reorders ``buf`` in place."""
    lo = 0
    hi = buf.shape[0] - 1
    while lo < hi:
        pivot = buf[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while buf[i] < pivot:
                i += 1
            while buf[j] > pivot:
                j -= 1
            if i <= j:
                t = buf[i]
                buf[i] = buf[j]
                buf[j] = t
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            break
    return buf[kth]


@numba.njit(cache=True, nogil=True)
def _scl_frame(ch, frozen, list_size, u_out):
    N = ch.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    if n == 0:
        if not frozen[0] and ch[0] < 0:
            u_out[0] = 1
        else:
            u_out[0] = 0
        return
    alpha = np.zeros((list_size, N))
    beta = np.zeros((list_size, N), dtype=np.uint8)
    cur = np.zeros(N, dtype=np.uint8)
    tmp = np.zeros(N, dtype=np.uint8)
    # decision and parent slot of every path at every bit, for traceback
    dec = np.zeros((N, list_size), dtype=np.uint8)
    parent = np.zeros((N, list_size), dtype=np.int64)
    pm = np.zeros(list_size)
    active = np.zeros(list_size, dtype=np.bool_)
    active[0] = True
    n_active = 1
    cand = np.empty(2 * list_size)
    keep0 = np.zeros(list_size, dtype=np.bool_)
    keep1 = np.zeros(list_size, dtype=np.bool_)
    free = np.empty(list_size, dtype=np.int64)
    buf = np.empty(2 * list_size)

    for phi in range(N):
        if phi == 0:
            top = n - 1
        else:
            top = 0
            while ((phi >> top) & 1) == 0:
                top += 1
        for p in range(list_size):
            if not active[p]:
                continue
            for lam in range(top, -1, -1):
                size = 1 << lam
                off = size - 1
                upper_off = 2 * size - 1
                right = (phi >> lam) & 1
                for j in range(size):
                    if lam == n - 1:
                        a = ch[j]
                        b = ch[j + size]
                    else:
                        a = alpha[p, upper_off + j]
                        b = alpha[p, upper_off + j + size]
                    if right == 0:
                        mag = min(abs(a), abs(b))
                        if (a < 0) != (b < 0):
                            mag = -mag
                        if a == 0.0 or b == 0.0:
                            mag = 0.0
                        alpha[p, off + j] = mag
                    else:
                        if beta[p, off + j] == 1:
                            alpha[p, off + j] = b - a
                        else:
                            alpha[p, off + j] = b + a

        if frozen[phi]:
            for p in range(list_size):
                if active[p]:
                    lv = alpha[p, 0]
                    if lv < 0:
                        pm[p] -= lv
                    dec[phi, p] = 0
                    parent[phi, p] = p
        else:
            # candidate 2p+b extends path p with bit b
            for p in range(list_size):
                if active[p]:
                    lv = alpha[p, 0]
                    cand[2 * p] = pm[p] + (-lv if lv < 0 else 0.0)
                    cand[2 * p + 1] = pm[p] + (lv if lv > 0 else 0.0)
                else:
                    cand[2 * p] = np.inf
                    cand[2 * p + 1] = np.inf
            n_keep = min(2 * n_active, list_size)
            for p in range(list_size):
                keep0[p] = active[p]
                keep1[p] = active[p]
            if 2 * n_active > list_size:
                # keep the list_size smallest candidates, ties to the lower index
                for c in range(2 * list_size):
                    buf[c] = cand[c]
                thr = _select(buf, list_size - 1)
                n_less = 0
                for c in range(2 * list_size):
                    if cand[c] < thr:
                        n_less += 1
                quota = list_size - n_less
                for c in range(2 * list_size):
                    v = cand[c]
                    ok = v < thr
                    if v == thr and quota > 0:
                        ok = True
                        quota -= 1
                    if not ok:
                        if c % 2 == 0:
                            keep0[c // 2] = False
                        else:
                            keep1[c // 2] = False
            n_free = 0
            for p in range(list_size):
                if not (active[p] and (keep0[p] or keep1[p])):
                    active[p] = False
                    free[n_free] = p
                    n_free += 1
            fi = 0
            for p in range(list_size):
                if not active[p]:
                    continue
                if keep0[p] and keep1[p]:
                    q = free[fi]
                    fi += 1
                    # levels at or below the next bit's trailing-zero count
                    # are recomputed anyway
                    t = 0
                    while t < n - 1 and ((phi + 1) >> t) & 1 == 0:
                        t += 1
                    for j in range((2 << t) - 1, N - 1):
                        alpha[q, j] = alpha[p, j]
                    # partial sums read by this climb or by later siblings
                    nxt = phi | (phi + 1)
                    for lam in range(n):
                        if (nxt >> lam) & 1:
                            for j in range((1 << lam) - 1, (2 << lam) - 1):
                                beta[q, j] = beta[p, j]
                    dec[phi, q] = 1
                    parent[phi, q] = p
                    pm[q] = cand[2 * p + 1]
                    dec[phi, p] = 0
                    pm[p] = cand[2 * p]
                elif keep0[p]:
                    dec[phi, p] = 0
                    pm[p] = cand[2 * p]
                else:
                    dec[phi, p] = 1
                    pm[p] = cand[2 * p + 1]
                parent[phi, p] = p
            for r in range(fi):
                active[free[r]] = True
            n_active = n_keep

        # climb: fold the new decision into the partial sums of the path
        if phi == N - 1:
            break
        for p in range(list_size):
            if not active[p]:
                continue
            cur[0] = dec[phi, p]
            lam = 0
            while (phi >> lam) & 1:
                size = 1 << lam
                off = size - 1
                for j in range(size):
                    tmp[j] = beta[p, off + j] ^ cur[j]
                    tmp[j + size] = cur[j]
                for j in range(2 * size):
                    cur[j] = tmp[j]
                lam += 1
            size = 1 << lam
            off = size - 1
            for j in range(size):
                beta[p, off + j] = cur[j]

    best = -1
    for p in range(list_size):
        if active[p] and (best < 0 or pm[p] < pm[best]):
            best = p
    slot = best
    for i in range(N - 1, -1, -1):
        u_out[i] = dec[i, slot]
        slot = parent[i, slot]


@numba.njit(cache=True, nogil=True)
def _scl_batch(llr, frozen, list_size, out):
    for b in range(llr.shape[0]):
        _scl_frame(llr[b], frozen, list_size, out[b])


def scl_decode(llr, spec: CodeSpec, list_size: int) -> np.ndarray:
    """LLR-based SCL without CRC; returns the ``u_hat`` of the best metric."""
    if list_size < 1:
        raise ValueError("list_size must be >= 1")
    batch, single = _as_batch(llr, spec)
    out = np.zeros(batch.shape, dtype=np.uint8)
    _scl_batch(np.ascontiguousarray(batch), spec.frozen_mask, int(list_size), out)
    return out[0] if single else out


def codebook(spec: CodeSpec):
    """All ``2**k`` (u, x) pairs; u enumerated lexicographically."""
    k = spec.k
    if k > MAP_K_LIMIT:
        raise ValueError(f"k={k} exceeds the brute-force limit {MAP_K_LIMIT}")
    idx = np.arange(1 << k, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    info = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
    u = np.zeros((1 << k, spec.N), dtype=np.uint8)
    u[:, spec.info] = info
    return u, polar_transform(u)


class MapDecoder:
    """Brute-force block-ML and bitwise-MAP decoding for one code.

    The codebook is built once; decoding a batch is a matrix product with the
    ``±1`` codeword matrix.
    """

    def __init__(self, spec: CodeSpec, chunk: int = 1 << 14):
        self.spec = spec
        self.u, self.x = codebook(spec)
        self.signs = 1.0 - 2.0 * self.x.astype(np.float64)
        self.chunk = chunk

    def _scores(self, llr, lo, hi):
        return llr @ self.signs[lo:hi].T

    def _frame_chunks(self, batch):
        rows = max(1, (1 << 22) // min(self.signs.shape[0], self.chunk))
        for lo in range(0, batch.shape[0], rows):
            yield lo, batch[lo : lo + rows]

    def block(self, llr) -> np.ndarray:
        """Codeword maximising ``sum (1-2x_i) llr_i``; ties go to the smaller u."""
        batch, single = _as_batch(llr, self.spec)
        M = self.signs.shape[0]
        arg = np.zeros(batch.shape[0], dtype=np.int64)
        for f0, frames in self._frame_chunks(batch):
            best = np.full(frames.shape[0], -np.inf)
            sel = np.zeros(frames.shape[0], dtype=np.int64)
            for lo in range(0, M, self.chunk):
                sc = self._scores(frames, lo, min(M, lo + self.chunk))
                local = np.argmax(sc, axis=1)
                val = sc[np.arange(sc.shape[0]), local]
                better = val > best
                best = np.where(better, val, best)
                sel = np.where(better, local + lo, sel)
            arg[f0 : f0 + frames.shape[0]] = sel
        out = self.u[arg]
        return out[0] if single else out

    def bitwise_llr(self, llr) -> np.ndarray:
        """Exact posterior LLR of every u-bit under BPSK/AWGN."""
        batch, single = _as_batch(llr, self.spec)
        M = self.signs.shape[0]
        out = np.empty(batch.shape)
        for f0, frames in self._frame_chunks(batch):
            num = np.full(frames.shape, -np.inf)  # log-mass of u_i = 0
            den = np.full(frames.shape, -np.inf)  # log-mass of u_i = 1
            for lo in range(0, M, self.chunk):
                hi = min(M, lo + self.chunk)
                logp = 0.5 * self._scores(frames, lo, hi)
                shift = logp.max(axis=1, keepdims=True)
                w = np.exp(logp - shift)
                ones = self.u[lo:hi].astype(np.float64)
                with np.errstate(divide="ignore"):
                    num = np.logaddexp(num, np.log(w @ (1.0 - ones)) + shift)
                    den = np.logaddexp(den, np.log(w @ ones) + shift)
            out[f0 : f0 + frames.shape[0]] = num - den
        return out[0] if single else out

    def bitwise(self, llr) -> np.ndarray:
        soft = self.bitwise_llr(llr)
        u = (soft < 0).astype(np.uint8)
        u[..., self.spec.frozen_mask] = 0
        return u


def map_decode(llr, spec: CodeSpec, bitwise: bool = False) -> np.ndarray:
    """Brute-force decoder over all ``2**k`` codewords (block-ML by default)."""
    dec = MapDecoder(spec)
    return dec.bitwise(llr) if bitwise else dec.block(llr)
