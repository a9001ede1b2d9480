"""Monte-Carlo BER sweeps, normalized error, latency model, gap to MAP.

Frames are generated in fixed-size chunks.  Chunk ``c`` draws its info bits
and unit-variance noise from a stream keyed by ``(seed, c)`` only, so every
decoder and every SNR point sees the same realizations (common random
numbers) and results do not depend on how chunks are spread over workers.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ebn0_to_sigma, modulate_bpsk
from .classic import MapDecoder
from .polar import CodeSpec, expand_info, polar_transform

CSV_FIELDS = ["decoder", "ebn0_db", "frames", "bit_errors", "block_errors", "ber", "bler", "ci_halfwidth", "seed"]
WORKERS_ENV = "PNNPOLAR_WORKERS"
Z95 = 1.959963984540054


class DecoderFailure(RuntimeError):
    pass


@dataclass
class BerRecord:
    decoder: str
    ebn0_db: float
    frames: int
    bit_errors: int
    block_errors: int
    k: int
    seed: int
    # sum over frames of (bit errors in the frame)^2, for the interval
    sq_errors: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.k) if self.frames and self.k else 0.0

    @property
    def bler(self) -> float:
        return self.block_errors / self.frames if self.frames else 0.0

    @property
    def ci_halfwidth(self) -> float:
        """95% normal half-width of the BER from per-frame error counts.

        Bit errors cluster inside erroneous frames, so the variance is taken
        over frames rather than over individual bits.
        """
        F = self.frames
        if F < 2 or not self.k:
            return 0.0
        mean = self.bit_errors / F
        var = max(self.sq_errors / F - mean * mean, 0.0) * F / (F - 1)
        return Z95 * math.sqrt(var / F) / self.k

    @property
    def ci(self):
        hw = self.ci_halfwidth
        return max(self.ber - hw, 0.0), self.ber + hw

    def row(self) -> dict:
        return {
            "decoder": self.decoder,
            "ebn0_db": f"{self.ebn0_db:g}",
            "frames": self.frames,
            "bit_errors": self.bit_errors,
            "block_errors": self.block_errors,
            "ber": f"{self.ber:.6e}",
            "bler": f"{self.bler:.6e}",
            "ci_halfwidth": f"{self.ci_halfwidth:.6e}",
            "seed": self.seed,
        }


@dataclass
class SweepConfig:
    snr_grid: list
    min_frames: int = 1000
    max_frames: int = 10**6
    target_block_errors: int = 100
    seed: int = 0
    chunk: int = 1000
    workers: int | None = None

    def __post_init__(self):
        grid = [float(v) for v in self.snr_grid]
        if not grid:
            raise ValueError("snr_grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr_grid must be strictly increasing")
        if self.chunk < 1 or self.max_frames < 1:
            raise ValueError("chunk and max_frames must be >= 1")
        self.snr_grid = grid


@dataclass
class DecoderHandle:
    """A named batch decoder: ``fn(llr[(B, N)]) -> u_hat[(B, N)]``."""

    name: str
    fn: object
    spec: CodeSpec | None = None

    def __call__(self, llr):
        out = self.fn(llr)
        return out[0] if isinstance(out, tuple) else out


def worker_count(cfg: SweepConfig) -> int:
    if cfg.workers:
        return int(cfg.workers)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def chunk_frames(spec: CodeSpec, seed: int, index: int, frames: int):
    """Info bits, codewords and unit-variance noise of chunk ``index``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    info = rng.integers(0, 2, size=(frames, spec.k), dtype=np.uint8)
    noise = rng.standard_normal((frames, spec.N))
    return info, polar_transform(expand_info(info, spec)), noise


def _run_chunk(decoder, spec, cfg, sigma, index, frames):
    info, x, noise = chunk_frames(spec, cfg.seed, index, frames)
    llr = 2.0 * (modulate_bpsk(x) + sigma * noise) / sigma**2
    try:
        u_hat = np.asarray(decoder(llr))
    except Exception as exc:
        start = index * cfg.chunk
        raise DecoderFailure(f"{getattr(decoder, 'name', decoder)} failed on frames {start}..{start + frames - 1}: {exc}") from exc
    errs = np.count_nonzero(u_hat[:, spec.info] != info, axis=1).astype(np.int64)
    return int(errs.sum()), int(np.count_nonzero(errs)), int((errs * errs).sum())


def ber_point(decoder, spec: CodeSpec, ebn0_db: float, cfg: SweepConfig, rate: float | None = None) -> BerRecord:
    sigma = ebn0_to_sigma(ebn0_db, rate if rate is not None else (spec.rate or 1.0 / spec.N))
    rec = BerRecord(getattr(decoder, "name", "decoder"), ebn0_db, 0, 0, 0, spec.k, cfg.seed)
    workers = worker_count(cfg)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    index = 0
    try:
        while True:
            wave = []
            for _ in range(workers):
                planned = rec.frames + sum(f for _, f in wave)
                if planned >= cfg.max_frames:
                    break
                wave.append((index, min(cfg.chunk, cfg.max_frames - planned)))
                index += 1
            if pool is None:
                results = [_run_chunk(decoder, spec, cfg, sigma, i, f) for i, f in wave]
            else:
                results = list(pool.map(lambda a: _run_chunk(decoder, spec, cfg, sigma, *a), wave))
            # reduce in chunk order and stop where a serial run would
            for (i, f), (bits, blocks, sq) in zip(wave, results):
                rec.frames += f
                rec.bit_errors += bits
                rec.block_errors += blocks
                rec.sq_errors += sq
                if _done(rec, cfg):
                    return rec
    finally:
        if pool is not None:
            pool.shutdown()


def _done(rec: BerRecord, cfg: SweepConfig) -> bool:
    if rec.frames >= cfg.max_frames:
        return True
    return rec.frames >= cfg.min_frames and rec.block_errors >= cfg.target_block_errors


def ber_sweep(decoder, spec: CodeSpec, cfg: SweepConfig, rate: float | None = None, log=None) -> list:
    """One record per SNR point of ``cfg.snr_grid``."""
    out = []
    for snr in cfg.snr_grid:
        rec = ber_point(decoder, spec, snr, cfg, rate)
        if log is not None:
            log(f"{rec.decoder} {snr:g} dB: {rec.frames} frames, BER {rec.ber:.3e}, BLER {rec.bler:.3e}")
        out.append(rec)
    return out


def write_csv(records, path=None, extra: dict | None = None) -> str:
    """CSV text of ``records``; also written to ``path`` when given.

    ``extra`` maps additional column names to per-record values.
    """
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS + list(extra), lineterminator="\n")
    writer.writeheader()
    for i, rec in enumerate(records):
        row = rec.row()
        for name, values in extra.items():
            row[name] = values[i]
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path) -> list:
    """Records back from a sweep CSV (``sq_errors`` is not stored)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            frames = int(row["frames"])
            bits = int(row["bit_errors"])
            ber = float(row["ber"])
            k = round(bits / (ber * frames)) if ber > 0 else 0
            out.append(BerRecord(row["decoder"], float(row["ebn0_db"]), frames, bits, int(row["block_errors"]), k, int(row["seed"])))
    return out


def write_plot_data(curves: dict, path) -> None:
    """gnuplot data file: one index block per decoder, columns dB BER BLER hw."""
    lines = []
    for name, records in curves.items():
        lines.append(f"# {name}")
        lines.append("# ebn0_db ber bler ci_halfwidth")
        for r in records:
            lines.append(f"{r.ebn0_db:g} {r.ber:.6e} {r.bler:.6e} {r.ci_halfwidth:.6e}")
        lines += ["", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def _check_grids(records, baseline):
    a = [r.ebn0_db for r in records]
    b = [r.ebn0_db for r in baseline]
    if a != b:
        raise ValueError(f"SNR grids differ: {a} vs {b}")


def normalized_error(records, baseline, exclude_zero: bool = False) -> float:
    """Mean over the grid of ``BER / BER_baseline``."""
    _check_grids(records, baseline)
    ratios = []
    for r, b in zip(records, baseline):
        if b.ber == 0:
            if exclude_zero:
                continue
            raise ValueError(f"baseline BER is zero at {b.ebn0_db:g} dB")
        ratios.append(r.ber / b.ber)
    if not ratios:
        raise ValueError("no grid point with a nonzero baseline BER")
    return float(np.mean(ratios))


def ne_interval(records, baseline, exclude_zero: bool = False):
    """``(NE, lo, hi)`` propagating each record's interval, baseline held fixed.

    Holding the baseline fixed is what comparisons between decoders that
    share the baseline need: its own noise moves all of them together.
    """
    _check_grids(records, baseline)
    ne, lo, hi = [], [], []
    for r, b in zip(records, baseline):
        if b.ber == 0:
            if exclude_zero:
                continue
            raise ValueError(f"baseline BER is zero at {b.ebn0_db:g} dB")
        # a record measured against itself has no spread relative to the baseline
        r_lo, r_hi = (r.ber, r.ber) if r == b else r.ci
        ne.append(r.ber / b.ber)
        lo.append(r_lo / b.ber)
        hi.append(r_hi / b.ber)
    return float(np.mean(ne)), float(np.mean(lo)), float(np.mean(hi))


@dataclass(frozen=True)
class LatencyParams:
    N: int
    iters: int = 1
    partition_size: int = 16
    hidden_layers: int = 3


def _log2_exact(value: int, what: str) -> int:
    if value < 1 or value & (value - 1):
        raise ValueError(f"{what}={value} must be a power of two")
    return value.bit_length() - 1


def latency_syncs(kind: str, params: LatencyParams) -> int:
    """Synchronization steps of an SCL, BP or PNN decoder."""
    n = _log2_exact(params.N, "N")
    if kind == "scl":
        return params.N * n
    if kind == "bp":
        if params.iters < 1:
            raise ValueError("iters must be >= 1")
        return 2 * params.iters * n
    if kind == "pnn":
        if params.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if params.N % params.partition_size:
            raise ValueError("partition_size must divide N")
        M = params.N // params.partition_size
        _log2_exact(params.partition_size, "partition_size")
        return M * params.hidden_layers + M * 2 * _log2_exact(M, "N/partition_size")
    raise ValueError(f"unknown decoder kind {kind!r}")


def latency_table(Ns, iters: int = 5, partition_size: int = 16, hidden_layers: int = 3) -> list:
    rows = []
    for N in Ns:
        p = LatencyParams(N, iters, partition_size, hidden_layers)
        rows.append({"N": N, "scl": latency_syncs("scl", p), "bp": latency_syncs("bp", p), "pnn": latency_syncs("pnn", p)})
    return rows


def snr_at_ber(records, target: float) -> float:
    """Eb/N0 where the curve crosses ``target``, linear in (dB, log10 BER)."""
    pts = [(r.ebn0_db, r.ber) for r in records]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if y0 >= target > y1:
            if y1 <= 0:
                raise ValueError(
                    f"curve drops to zero BER between {x0:g} and {x1:g} dB; refine the grid or add frames"
                )
            t = (math.log10(target) - math.log10(y0)) / (math.log10(y1) - math.log10(y0))
            return x0 + t * (x1 - x0)
    lo = pts[0][1]
    hi = pts[-1][1]
    raise ValueError(f"BER {target:g} is outside the measured range [{hi:.3g}, {lo:.3g}]; widen the grid")


def map_handle(spec: CodeSpec, bitwise: bool = True) -> DecoderHandle:
    dec = MapDecoder(spec)
    fn = dec.bitwise if bitwise else dec.block
    return DecoderHandle("map" if bitwise else "ml", fn, spec)


def gap_to_map(spec: CodeSpec, decoder, target_ber: float, cfg: SweepConfig, log=None):
    """``(gap_db, decoder_records, map_records)`` at ``target_ber``."""
    if spec.k > 24:
        raise ValueError(f"k={spec.k} is too large for the MAP reference")
    mine = ber_sweep(decoder, spec, cfg, log=log)
    ref = ber_sweep(map_handle(spec), spec, cfg, log=log)
    return snr_at_ber(mine, target_ber) - snr_at_ber(ref, target_ber), mine, ref
