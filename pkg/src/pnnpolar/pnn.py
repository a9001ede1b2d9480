"""Partitioned decoding: sub-block decoders coupled by BP stages.

A plan tiles the u-indices into aligned power-of-two sub-blocks.  A block of
size ``Ni`` owns PE layers ``1 .. log2(Ni)`` of its rows; every other PE is a
coupling PE.  Decoding is one-shot: blocks are visited top to bottom, each
after one refresh of the coupling stages, and its re-encoded decision is
frozen into the graph as ``±l_max`` before moving on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bp
from .bp import DEFAULT_LMAX, StageMessages
from .classic import MapDecoder, sc_decode, scl_decode
from .nn import MlpModel, load_model
from .polar import CodeSpec, expand_info, is_power_of_two, load_spec, polar_transform

KINDS = ("nn", "scl", "hard_decision", "rate_zero")
PLAN_FORMAT = "pnnpolar-plan"
PLAN_VERSION = 1


@dataclass(frozen=True)
class SubBlockSpec:
    index: int
    offset: int
    size: int
    frozen: tuple
    decoder_kind: str = "nn"

    def __post_init__(self):
        if not is_power_of_two(self.size):
            raise ValueError(f"block size {self.size} is not a power of two")
        if self.offset % self.size:
            raise ValueError(f"block at {self.offset} is not aligned to its size {self.size}")
        if self.decoder_kind not in KINDS:
            raise ValueError(f"unknown decoder kind {self.decoder_kind!r}")
        k = self.k
        if (self.decoder_kind == "hard_decision") != (k == self.size):
            raise ValueError(f"block {self.index}: hard_decision is reserved for rate-1 blocks")
        if (self.decoder_kind == "rate_zero") != (k == 0):
            raise ValueError(f"block {self.index}: rate_zero is reserved for rate-0 blocks")

    @property
    def k(self) -> int:
        return self.size - len(self.frozen)

    @property
    def code(self) -> CodeSpec:
        return CodeSpec(self.size, self.frozen)

    @property
    def depth(self) -> int:
        """Number of PE layers internal to the block, ``log2(Ni)``."""
        return self.size.bit_length() - 1

    @property
    def interface_stage(self) -> int:
        return self.depth + 1

    @property
    def rows(self) -> slice:
        return slice(self.offset, self.offset + self.size)


def _kind_for(k: int, size: int, kind: str) -> str:
    if k == 0:
        return "rate_zero"
    if k == size:
        return "hard_decision"
    return kind


def make_block(spec: CodeSpec, index: int, offset: int, size: int, kind: str = "nn") -> SubBlockSpec:
    local = spec.sub_spec(offset, size)
    return SubBlockSpec(index, offset, size, local.frozen, _kind_for(local.k, size, kind))


@dataclass(frozen=True)
class PartitionPlan:
    spec: CodeSpec
    blocks: tuple
    k_max: int

    def __post_init__(self):
        pos = 0
        for i, b in enumerate(self.blocks):
            if b.offset != pos:
                raise ValueError(f"block {i} starts at {b.offset}, expected {pos}")
            if b.frozen != self.spec.sub_spec(b.offset, b.size).frozen:
                raise ValueError(f"block {i} frozen set disagrees with the code")
            pos += b.size
        if pos != self.spec.N:
            raise ValueError(f"blocks cover {pos} of {self.spec.N} rows")

    @property
    def M(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> list:
        return [b.size for b in self.blocks]

    @property
    def ks(self) -> list:
        return [b.k for b in self.blocks]

    def with_kind(self, kind: str) -> "PartitionPlan":
        """Same tiling with every decodable block switched to ``kind``."""
        blocks = tuple(
            SubBlockSpec(b.index, b.offset, b.size, b.frozen, _kind_for(b.k, b.size, kind))
            for b in self.blocks
        )
        return PartitionPlan(self.spec, blocks, self.k_max)


def plan_partitions(spec: CodeSpec, base_size: int, k_max: int, kind: str = "nn") -> PartitionPlan:
    """Equal tiles of ``base_size``, then greedy pairwise merging.

    Sizes are visited smallest first and pairs left to right.  Two aligned
    neighbours of equal size merge when their joint info count stays below
    ``k_max``, or when both are rate-1 (hard decisions need no training).
    """
    if not is_power_of_two(base_size) or spec.N % base_size:
        raise ValueError(f"base_size {base_size} must be a power of two dividing N={spec.N}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    frozen = spec.frozen_mask
    blocks = [(off, base_size) for off in range(0, spec.N, base_size)]

    def k_of(off, size):
        return int(size - frozen[off : off + size].sum())

    size = base_size
    while size < spec.N:
        merged = []
        i = 0
        while i < len(blocks):
            off, sz = blocks[i]
            if (
                sz == size
                and off % (2 * size) == 0
                and i + 1 < len(blocks)
                and blocks[i + 1] == (off + size, size)
            ):
                ka, kb = k_of(off, size), k_of(off + size, size)
                if ka + kb < k_max or (ka == size and kb == size):
                    merged.append((off, 2 * size))
                    i += 2
                    continue
            merged.append((off, sz))
            i += 1
        blocks = merged
        size *= 2
    return PartitionPlan(
        spec, tuple(make_block(spec, i, off, sz, kind) for i, (off, sz) in enumerate(blocks)), k_max
    )


def equal_plan(spec: CodeSpec, M: int, kind: str = "nn", k_max: int | None = None) -> PartitionPlan:
    """``M`` equally sized blocks, no merging."""
    if not is_power_of_two(M) or M > spec.N:
        raise ValueError(f"M={M} must be a power of two not exceeding N")
    size = spec.N // M
    blocks = tuple(make_block(spec, i, i * size, size, kind) for i in range(M))
    return PartitionPlan(spec, blocks, k_max if k_max is not None else spec.N + 1)


def explicit_plan(spec: CodeSpec, sizes, k_max: int, kind: str = "nn") -> PartitionPlan:
    blocks, off = [], 0
    for i, size in enumerate(sizes):
        blocks.append(make_block(spec, i, off, int(size), kind))
        off += int(size)
    return PartitionPlan(spec, tuple(blocks), k_max)


def coupling_masks(plan: PartitionPlan) -> list:
    """Per PE layer ``s`` (index ``s-1``), which port-1 PEs are coupling PEs.

    Masks have the shape of the port-1 view ``(N/(2d), d)``; ``None`` marks a
    layer with no coupling PE at all.
    """
    N = plan.spec.N
    row_size = np.empty(N, dtype=np.int64)
    for b in plan.blocks:
        row_size[b.rows] = b.size
    masks = []
    for s in range(1, plan.spec.n + 1):
        d = 1 << (s - 1)
        top = row_size.reshape(N // (2 * d), 2, d)[:, 0, :]
        mask = top <= d
        masks.append(mask if mask.any() else None)
    return masks


class HybridDecoder:
    """One-shot partitioned decoder with pluggable sub-block decoders.

    ``sub_decoders`` maps block index to a callable taking a ``(batch, Ni)``
    array of interface LLRs and returning ``(batch, Ni)`` u-decisions.
    Blocks of kind ``hard_decision`` and ``rate_zero`` need no entry.
    """

    def __init__(self, plan: PartitionPlan, sub_decoders: dict, l_max: float = DEFAULT_LMAX, coupling_sweeps: int = 1):
        if coupling_sweeps < 1:
            raise ValueError("coupling_sweeps must be >= 1")
        for b in plan.blocks:
            if b.decoder_kind in ("nn", "scl") and b.index not in sub_decoders:
                raise ValueError(f"no sub-decoder for block {b.index}")
        self.plan = plan
        self.sub_decoders = sub_decoders
        self.l_max = float(l_max)
        self.coupling_sweeps = coupling_sweeps
        self.masks = coupling_masks(plan)
        self.trace = None

    def _refresh(self, msgs: StageMessages, block: SubBlockSpec) -> None:
        n = self.plan.spec.n
        for _ in range(self.coupling_sweeps):
            for s in range(1, n + 1):
                if self.masks[s - 1] is not None:
                    bp.update_layer_r(msgs, s, self.masks[s - 1])
            for s in range(n, block.depth, -1):
                bp.update_layer_l(msgs, s, self.masks[s - 1])

    def _freeze(self, msgs: StageMessages, block: SubBlockSpec, x_hat: np.ndarray) -> None:
        msgs.R[:, block.depth, block.rows] = self.l_max * (1.0 - 2.0 * x_hat)

    def decode(self, llr, keep_messages: bool = False):
        """Returns ``(u_hat, x_hat)`` for one frame or a batch."""
        spec = self.plan.spec
        llr = np.asarray(llr, dtype=np.float64)
        if llr.shape[-1] != spec.N:
            raise ValueError(f"llr has length {llr.shape[-1]}, expected {spec.N}")
        single = llr.ndim == 1
        batch = np.atleast_2d(llr)
        B = batch.shape[0]
        msgs = StageMessages.initial(batch, spec, self.l_max)
        u_hat = np.zeros((B, spec.N), dtype=np.uint8)
        # rate-0 blocks are known before decoding starts
        for b in self.plan.blocks:
            if b.decoder_kind == "rate_zero":
                self._freeze(msgs, b, np.zeros((B, b.size), dtype=np.uint8))
        for b in self.plan.blocks:
            if b.decoder_kind == "rate_zero":
                continue
            self._refresh(msgs, b)
            iface = msgs.L[:, b.depth, b.rows]
            if b.decoder_kind == "hard_decision":
                x_b = (iface < 0).astype(np.uint8)
                u_b = polar_transform(x_b)
            else:
                u_b = np.asarray(self.sub_decoders[b.index](iface), dtype=np.uint8)
                if u_b.shape != (B, b.size):
                    raise ValueError(f"block {b.index}: sub-decoder returned shape {u_b.shape}")
                x_b = polar_transform(u_b)
            u_hat[:, b.rows] = u_b
            self._freeze(msgs, b, x_b)
        if keep_messages:
            self.trace = msgs
        x_hat = polar_transform(u_hat)
        if single:
            return u_hat[0], x_hat[0]
        return u_hat, x_hat

    __call__ = decode


def nn_sub_decoder(block: SubBlockSpec, model: MlpModel):
    if model.d_in != block.size or model.d_out != block.k:
        raise ValueError(
            f"block {block.index}: model is {model.d_in}->{model.d_out}, block needs {block.size}->{block.k}"
        )
    code = block.code

    def run(iface):
        return expand_info(model.decode_llr(iface), code)

    return run


def scl_sub_decoder(block: SubBlockSpec, list_size: int):
    code = block.code
    return lambda iface: scl_decode(iface, code, list_size)


def sc_sub_decoder(block: SubBlockSpec):
    code = block.code
    return lambda iface: sc_decode(iface, code)


def map_sub_decoder(block: SubBlockSpec):
    dec = MapDecoder(block.code)
    return dec.block


def pnn_decoder(plan: PartitionPlan, models: dict, l_max: float = DEFAULT_LMAX, coupling_sweeps: int = 1) -> HybridDecoder:
    subs = {}
    for b in plan.blocks:
        if b.decoder_kind in ("nn", "scl"):
            if b.index not in models:
                raise ValueError(f"missing model for block {b.index}")
            subs[b.index] = nn_sub_decoder(b, models[b.index])
    return HybridDecoder(plan, subs, l_max, coupling_sweeps)


def pscl_decoder(plan: PartitionPlan, list_size: int, l_max: float = DEFAULT_LMAX, coupling_sweeps: int = 1) -> HybridDecoder:
    plan = plan.with_kind("scl")
    subs = {b.index: scl_sub_decoder(b, list_size) for b in plan.blocks if b.decoder_kind == "scl"}
    return HybridDecoder(plan, subs, l_max, coupling_sweeps)


def oracle_decoder(plan: PartitionPlan, mode: str = "map", l_max: float = DEFAULT_LMAX) -> HybridDecoder:
    """Partitioned decoder with brute-force ML (``map``) or SC sub-decoders."""
    make = {"map": map_sub_decoder, "sc": sc_sub_decoder}[mode]
    subs = {b.index: make(b) for b in plan.blocks if b.decoder_kind in ("nn", "scl")}
    return HybridDecoder(plan, subs, l_max)


def pnn_decode(llr, plan: PartitionPlan, models: dict, l_max: float = DEFAULT_LMAX):
    return pnn_decoder(plan, models, l_max).decode(llr)


def pscl_decode(llr, plan: PartitionPlan, list_size: int, l_max: float = DEFAULT_LMAX):
    return pscl_decoder(plan, list_size, l_max).decode(llr)


def save_plan(plan: PartitionPlan, path, model_paths: dict | None = None, spec_file: str | None = None) -> None:
    model_paths = model_paths or {}
    doc = {
        "format": PLAN_FORMAT,
        "version": PLAN_VERSION,
        "spec_file": spec_file,
        "N": plan.spec.N,
        "frozen": list(plan.spec.frozen),
        "k_max": plan.k_max,
        "blocks": [
            {
                "offset": b.offset,
                "size": b.size,
                "k": b.k,
                "decoder_kind": b.decoder_kind,
                "model": model_paths.get(b.index),
            }
            for b in plan.blocks
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_plan(path):
    """Returns ``(plan, model_paths)``; relative model paths resolve next to the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed plan file ({exc})") from exc
    if doc.get("format") != PLAN_FORMAT or doc.get("version") != PLAN_VERSION:
        raise ValueError(f"{path}: not a {PLAN_FORMAT} v{PLAN_VERSION} file")
    if doc.get("frozen") is not None:
        spec = CodeSpec(int(doc["N"]), doc["frozen"])
    else:
        spec = load_spec(path.parent / doc["spec_file"])
    blocks, paths = [], {}
    for i, entry in enumerate(doc["blocks"]):
        b = make_block(spec, i, int(entry["offset"]), int(entry["size"]), "nn")
        kind = entry.get("decoder_kind", b.decoder_kind)
        blocks.append(SubBlockSpec(i, b.offset, b.size, b.frozen, kind))
        if entry.get("model"):
            paths[i] = path.parent / entry["model"]
    return PartitionPlan(spec, tuple(blocks), int(doc["k_max"])), paths


def load_models(model_paths: dict) -> dict:
    return {i: load_model(p) for i, p in model_paths.items()}
