"""Command-line front end: ``pnnpolar <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .channel import ebn0_to_sigma, modulate_bpsk, to_llr
from .harness import SweepConfig
from .nn import TrainConfig, TrainingError, save_model, train_subblock
from .plots import plot_ber, plot_latency, plot_ne
from .pnn import equal_plan, explicit_plan, load_models, load_plan, plan_partitions, save_plan
from .polar import ConstructionParams, construct_frozen_set, expand_info, load_spec, polar_transform, save_spec
from .roster import build_decoder, parse_token


class CliError(Exception):
    pass


def _spec_from_args(args):
    if getattr(args, "spec", None):
        return load_spec(args.spec)
    if getattr(args, "plan", None):
        return load_plan(args.plan)[0].spec
    if args.n is None or args.k is None:
        raise CliError("give --spec, --plan or both --n and --k")
    return construct_frozen_set(args.n, args.k, ConstructionParams(args.eps))


def _add_code_args(p):
    p.add_argument("--spec", help="frozen-set file")
    p.add_argument("--n", type=int, help="block length N")
    p.add_argument("--k", type=int, help="information bits")
    p.add_argument("--eps", type=float, default=0.5, help="BEC design erasure probability")


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**31))
    print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def _grid(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------- construct


def cmd_construct(args) -> int:
    spec = construct_frozen_set(args.n, args.k, ConstructionParams(args.eps))
    if args.out:
        save_spec(spec, args.out)
    print(f"N={spec.N} k={spec.k} frozen={len(spec.frozen)}")
    print("info " + " ".join(map(str, spec.info)))
    if args.base_size:
        plan = plan_partitions(spec, args.base_size, args.k_max)
        print("sizes " + " ".join(map(str, plan.sizes)))
        print("k_i " + " ".join(map(str, plan.ks)))
    return 0


# ---------------------------------------------------------------- plan


def cmd_plan(args) -> int:
    spec = _spec_from_args(args)
    if args.sizes:
        plan = explicit_plan(spec, [int(s) for s in args.sizes.split(",")], args.k_max, args.kind)
    elif args.equal:
        plan = equal_plan(spec, args.equal, args.kind, args.k_max)
    else:
        plan = plan_partitions(spec, args.base_size, args.k_max, args.kind)
    save_plan(plan, args.out)
    print("block,offset,size,k,decoder_kind")
    for b in plan.blocks:
        print(f"{b.index},{b.offset},{b.size},{b.k},{b.decoder_kind}")
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    plan, paths = load_plan(args.plan)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _seed(args)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        train_snr_db=tuple(args.train_snr),
        seed=seed,
        val_frames=args.val_frames,
        val_snr_db=args.val_snr,
        hidden=tuple(args.hidden) if args.hidden else None,
    )
    failed = 0
    model_paths = {}
    print("block,N_i,k_i,val_snr_db,val_ber,map_ber,ne_vs_map")
    for b in plan.blocks:
        if b.decoder_kind != "nn":
            print(f"# block {b.index}: {b.decoder_kind}, no model needed", file=sys.stderr)
            continue
        # one independent stream per block
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b.index,)))
        log = (lambda msg, i=b.index: print(f"# block {i}: {msg}", file=sys.stderr)) if args.verbose else None
        try:
            model = train_subblock(b, cfg, rng=rng, log=log)
        except (TrainingError, ValueError) as exc:
            print(f"# block {b.index}: training failed: {exc}", file=sys.stderr)
            failed += 1
            continue
        name = f"block{b.index:02d}.json"
        save_model(model, out_dir / name)
        model_paths[b.index] = name
        m = model.meta
        ne = m["val_ber"] / m["val_ber_map"] if m["val_ber_map"] > 0 else float("nan")
        print(f"{b.index},{b.size},{b.k},{m['val_snr_db']:g},{m['val_ber']:.6e},{m['val_ber_map']:.6e},{ne:.4f}")
    save_plan(plan, out_dir / "plan.json", model_paths)
    print(f"# wrote {len(model_paths)} models and {out_dir / 'plan.json'}", file=sys.stderr)
    return 1 if failed else 0


# ---------------------------------------------------------------- sweep


SWEEP_KEYS = {
    "spec", "n", "k", "eps", "plan", "decoders", "baseline", "list_size", "snr_grid",
    "min_frames", "max_frames", "target_block_errors", "seed", "chunk", "out",
}


def _apply_config(args, path) -> None:
    """Values from a JSON experiment file override command-line flags."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    unknown = set(doc) - SWEEP_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = Path(path).parent
    for key in ("spec", "plan"):
        if key in doc:
            doc[key] = str(base / doc[key])
            if not Path(doc[key]).exists():
                raise CliError(f"config references missing file {doc[key]}")
    if isinstance(doc.get("decoders"), list):
        doc["decoders"] = ",".join(doc["decoders"])
    if isinstance(doc.get("snr_grid"), list):
        doc["snr_grid"] = ",".join(str(v) for v in doc["snr_grid"])
    for key, value in doc.items():
        setattr(args, key, value)


def cmd_sweep(args) -> int:
    if args.config:
        _apply_config(args, args.config)
    spec = _spec_from_args(args)
    plan, models = None, None
    if args.plan:
        plan, paths = load_plan(args.plan)
        if plan.spec != spec:
            raise CliError("plan and code spec disagree")
        models = load_models(paths) if paths else None
    tokens = [t.strip().lower() for t in args.decoders.split(",") if t.strip()]
    baseline = args.baseline.strip().lower()
    for t in tokens + [baseline]:
        parse_token(t)
    seed = _seed(args)
    cfg = SweepConfig(
        _grid(args.snr_grid), args.min_frames, args.max_frames, args.target_block_errors, seed, args.chunk
    )
    log = (lambda msg: print(f"# {msg}", file=sys.stderr)) if args.verbose else None
    curves = {}
    for t in dict.fromkeys(tokens + [baseline]):
        dec = build_decoder(t, spec, plan, models, args.list_size)
        curves[t] = harness.ber_sweep(dec, spec, cfg, log=log)
    base = curves[baseline]
    records, ne_col, ne_by = [], [], {}
    for t in tokens:
        try:
            ne = harness.normalized_error(curves[t], base)
        except ValueError:
            ne = float("nan")
        ne_by[curves[t][0].decoder] = ne
        for r in curves[t]:
            records.append(r)
            ne_col.append(f"{ne:.6g}")
    text = harness.write_csv(records, args.out, {f"ne_vs_{baseline}": ne_col})
    named = {curves[t][0].decoder: curves[t] for t in tokens}
    if args.out:
        stem = Path(args.out).with_suffix("")
        harness.write_plot_data(named, f"{stem}.dat")
        plot_ber(named, f"{stem}_ber.png", title=f"N={spec.N}, k={spec.k}")
        plot_ber(named, f"{stem}_bler.png", title=f"N={spec.N}, k={spec.k}", block=True)
        plot_ne(ne_by, f"{stem}_ne.png", baseline)
        print(f"seed={seed} wrote {args.out}, {stem}.dat and figures")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- ne


def cmd_ne(args) -> int:
    records = harness.read_csv(args.csv)
    curves = {}
    for r in records:
        curves.setdefault(r.decoder, []).append(r)
    if args.baseline not in curves:
        raise CliError(f"baseline {args.baseline!r} not in {args.csv}")
    print(f"decoder,ne_vs_{args.baseline}")
    values = {}
    for name, recs in curves.items():
        values[name] = harness.normalized_error(recs, curves[args.baseline], exclude_zero=args.exclude_zero)
        print(f"{name},{values[name]:.6g}")
    if args.plot:
        plot_ne(values, args.plot, args.baseline)
    return 0


# ---------------------------------------------------------------- latency


def cmd_latency(args) -> int:
    Ns = []
    N = args.n_min
    while N <= args.n_max:
        Ns.append(N)
        N *= 2
    rows = harness.latency_table(Ns, args.iters, args.partition_size, args.hidden_layers)
    lines = ["N,scl,bp,pnn"] + [f"{r['N']},{r['scl']},{r['bp']},{r['pnn']}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        plot_latency(rows, Path(args.out).with_suffix(".png"))
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- decode


def cmd_decode(args) -> int:
    spec = _spec_from_args(args)
    plan, models = None, None
    if args.plan:
        plan, paths = load_plan(args.plan)
        models = load_models(paths) if paths else None
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    info = rng.integers(0, 2, size=spec.k, dtype=np.uint8)
    u = expand_info(info, spec)
    x = polar_transform(u)
    sigma = ebn0_to_sigma(args.ebn0, spec.rate)
    llr = to_llr(modulate_bpsk(x) + sigma * rng.standard_normal(spec.N), sigma)
    dec = build_decoder(args.decoder, spec, plan, models, args.list_size)
    u_hat = np.asarray(dec(llr[None, :]))[0]
    fmt = lambda v: "".join(str(int(b)) for b in v)  # noqa: E731
    print(f"u     {fmt(u)}")
    print(f"u_hat {fmt(u_hat)}")
    print(f"info bit errors {int(np.count_nonzero(u_hat[spec.info] != info))}")
    if args.dump:
        inner = getattr(dec.fn, "__self__", None)
        if inner is None or not hasattr(inner, "trace"):
            raise CliError(f"{args.decoder} keeps no stage messages; use pscl or pnn")
        inner.decode(llr, keep_messages=True)
        np.set_printoptions(precision=3, suppress=True, linewidth=160)
        for c in range(spec.n + 1):
            print(f"stage {c + 1} L {inner.trace.L[0, c]}")
            print(f"stage {c + 1} R {inner.trace.R[0, c]}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnnpolar", description="Polar codes with partitioned neural decoding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build a frozen set")
    p.add_argument("--n", type=int, required=True, help="block length N (power of two)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--out", help="write the frozen-set file here")
    p.add_argument("--base-size", type=int, help="also print the partition profile")
    p.add_argument("--k-max", type=int, default=14)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("plan", help="partition a code into sub-blocks")
    _add_code_args(p)
    p.add_argument("--base-size", type=int, default=8)
    p.add_argument("--k-max", type=int, default=14)
    p.add_argument("--equal", type=int, help="M equal-size blocks instead of merging")
    p.add_argument("--sizes", help="explicit comma-separated block sizes")
    p.add_argument("--kind", default="nn", choices=["nn", "scl"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train the NN sub-decoders of a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, help="training steps (default depends on k)")
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--train-snr", type=float, nargs=2, default=list(TrainConfig.train_snr_db), metavar=("LO", "HI"))
    p.add_argument("--hidden", type=int, nargs="+", help="hidden widths (default depends on k)")
    p.add_argument("--val-frames", type=int, default=TrainConfig.val_frames)
    p.add_argument("--val-snr", type=float, default=TrainConfig.val_snr_db)
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="Monte-Carlo BER sweep over a decoder roster")
    _add_code_args(p)
    p.add_argument("--plan", help="plan file for pscl/pnn entries")
    p.add_argument("--config", help="JSON experiment file; its values override flags")
    p.add_argument("--decoders", default="scl32")
    p.add_argument("--baseline", default="scl32")
    p.add_argument("--list-size", type=int, default=32, help="list size inside pscl")
    p.add_argument("--snr-grid", default="1,2,3,4,5")
    p.add_argument("--min-frames", type=int, default=1000)
    p.add_argument("--max-frames", type=int, default=10**6)
    p.add_argument("--target-block-errors", type=int, default=100)
    p.add_argument("--chunk", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV path; figures and gnuplot data go next to it")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ne", help="normalized error from a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--baseline", default="scl32")
    p.add_argument("--exclude-zero", action="store_true", help="skip grid points where the baseline saw no errors")
    p.add_argument("--plot", help="write a bar chart here")
    p.set_defaults(func=cmd_ne)

    p = sub.add_parser("latency", help="synchronization-step table")
    p.add_argument("--n-min", type=int, default=16)
    p.add_argument("--n-max", type=int, default=1024)
    p.add_argument("--iters", type=int, default=5, help="BP iterations")
    p.add_argument("--partition-size", type=int, default=16)
    p.add_argument("--hidden-layers", type=int, default=3)
    p.add_argument("--out", help="CSV path; a figure goes next to it")
    p.set_defaults(func=cmd_latency)

    p = sub.add_parser("decode", help="decode one random frame")
    _add_code_args(p)
    p.add_argument("--plan")
    p.add_argument("--decoder", default="sc")
    p.add_argument("--list-size", type=int, default=32)
    p.add_argument("--ebn0", type=float, default=3.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump", action="store_true", help="print stage messages (pscl/pnn)")
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, harness.DecoderFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
