"""Decoder tokens used by the CLI and the experiment scripts.

=============  ===========================================================
token          decoder
=============  ===========================================================
``sc``         successive cancellation
``scl<L>``     SC list with list size L
``bp<I>``      flooding BP with I iterations
``map``        bitwise MAP (brute force)
``ml``         block ML (brute force)
``pscl<M>``    partitioned SCL on M equal-size blocks
``pscl``       partitioned SCL on the given plan
``pnn``        partitioned NN decoder on the given plan (needs models)
=============  ===========================================================
"""

from __future__ import annotations

import re

from .bp import bp_decode
from .classic import MapDecoder, sc_decode, scl_decode
from .harness import DecoderHandle
from .pnn import equal_plan, pnn_decoder, pscl_decoder
from .polar import CodeSpec

_TOKEN = re.compile(r"^(sc|scl|bp|map|ml|pscl|pnn)(\d*)$")


def parse_token(token: str):
    m = _TOKEN.match(token.strip().lower())
    if not m:
        raise ValueError(f"unknown decoder {token!r}")
    kind, num = m.group(1), m.group(2)
    value = int(num) if num else None
    needs = {"scl": True, "bp": True, "sc": False, "map": False, "ml": False, "pnn": False}
    if kind in needs and needs[kind] and value is None:
        raise ValueError(f"{kind} needs a number, e.g. {kind}32")
    if kind in needs and not needs[kind] and value is not None:
        raise ValueError(f"{kind} takes no number")
    if value is not None and value < 1:
        raise ValueError(f"{token}: number must be >= 1")
    return kind, value


def build_decoder(token: str, spec: CodeSpec, plan=None, models=None, list_size: int = 32) -> DecoderHandle:
    kind, value = parse_token(token)
    name = token.strip().lower()
    if kind == "sc":
        return DecoderHandle(name, lambda llr: sc_decode(llr, spec), spec)
    if kind == "scl":
        return DecoderHandle(name, lambda llr: scl_decode(llr, spec, value), spec)
    if kind == "bp":
        return DecoderHandle(name, lambda llr: bp_decode(llr, spec, iters=value)[0], spec)
    if kind in ("map", "ml"):
        dec = MapDecoder(spec)
        return DecoderHandle(name, dec.bitwise if kind == "map" else dec.block, spec)
    if kind == "pscl":
        if value is not None:
            p = equal_plan(spec, value)
        elif plan is not None:
            p = plan
        else:
            raise ValueError("pscl without a block count needs a plan")
        return DecoderHandle(name, pscl_decoder(p, list_size).decode, spec)
    if plan is None:
        raise ValueError("pnn needs a plan")
    if not models:
        raise ValueError("pnn needs trained models; run the train command first")
    return DecoderHandle(name, pnn_decoder(plan, models).decode, spec)
