"""``sfwmark`` command line.

Every subcommand prints a JSON document on stdout. Failures print
``{"error": ..., "message": ...}`` on stderr and exit with status 2 (bad
usage or input) or 1 (anything else).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .channel import AttackSpec, ChannelConfig, channel_roundtrip
from .detection import (
    KeyPool,
    batch_std,
    bit_accuracy,
    decode_hsqr,
    identify,
    ks_failure_rate,
    ks_test,
    verify_batch,
)
from .experiment import (
    CAPACITY_POOLS,
    CROP_SCALES,
    ExperimentConfig,
    default_attacks,
    run_ablation,
    run_capacity_sweep,
    run_crop_sweep,
    run_experiment,
    stream_seed,
)
from .latentio import read_latent, write_latent
from .qrcode import QrDecodeError
from .watermark import LATENT_SHAPE, WatermarkKey, embed_keys, extract_spectrum, make_key


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)


def _load_key(path: str) -> WatermarkKey:
    with open(path) as f:
        return WatermarkKey.from_json(f.read())


def _load_pool(path: str, components: str) -> KeyPool:
    with open(path) as f:
        doc = json.load(f)
    keys = [WatermarkKey.from_json(json.dumps(k)) for k in doc["keys"]]
    noise = doc.get("noise_key")
    noise = WatermarkKey.from_json(json.dumps(noise)) if noise else None
    return KeyPool(keys, noise, components)


def _load_scores(path: str) -> list[float]:
    with open(path) as f:
        text = f.read().strip()
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(v) for v in text.split()]


def roc_svg(curves, size: int = 320) -> str:
    """Minimal SVG with one polyline per ROC curve (FPR on x, TPR on y)."""
    pad = 30
    span = size - 2 * pad
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="#bbb" stroke-dasharray="4"/>',
    ]
    for i, (label, roc) in enumerate(curves):
        fpr = np.append(roc.fpr, 1.0)
        tpr = np.append(roc.tpr, 1.0)
        pts = " ".join(f"{pad + f * span:.2f},{pad + (1 - t) * span:.2f}" for f, t in zip(fpr, tpr))
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"><title>{label}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- subcommands ---------------------------------------------------------------------

def cmd_keygen(args):
    payload = bytes.fromhex(args.payload) if args.payload else None
    center = None if args.region is None else args.region == "center"

    def build(seed):
        return make_key(args.kind, seed, channel=args.channel, center_aware=center, radius=args.radius,
                        payload=payload, cell_px=args.cell_px, amplitude=args.amplitude, mask_id=args.mask_id)

    if args.pool_size:
        keys = [build(stream_seed(args.seed, "pool", i)) for i in range(args.pool_size)]
        doc = {"keys": [json.loads(k.to_json()) for k in keys]}
        if args.kind != "tree_ring" and not args.no_noise_key:
            doc["noise_key"] = json.loads(make_key("noise", stream_seed(args.seed, "noise_key"),
                                                   center_aware=keys[0].center_aware).to_json())
    else:
        doc = json.loads(build(args.seed).to_json())
    if args.out:
        _write_text(args.out, json.dumps(doc, sort_keys=True) + "\n")
        _emit({"written": args.out})
    else:
        _emit(doc)


def cmd_embed(args):
    if args.latent:
        z = read_latent(args.latent)
    else:
        z = np.random.default_rng(args.seed).normal(size=LATENT_SHAPE)
    keys = [_load_key(p) for p in args.key]
    out = embed_keys(z, keys)
    write_latent(args.out, out)
    _emit({"written": args.out, "keys": len(keys)})


def cmd_extract(args):
    z = read_latent(args.latent)
    spec = extract_spectrum(z, args.channel, args.region)
    if args.out:
        np.save(args.out, spec)
        _emit({"written": args.out, "shape": list(spec.shape)})
    else:
        _emit({"shape": list(spec.shape), "real": spec.real.tolist(), "imag": spec.imag.tolist()})


def cmd_attack(args):
    z = read_latent(args.latent)
    spec = AttackSpec.from_json(args.attack) if args.attack.strip().startswith("{") else AttackSpec(args.attack)
    out = channel_roundtrip(z, spec, ChannelConfig(args.sigma_inv, args.seed))
    write_latent(args.out, out)
    _emit({"written": args.out, "attack": spec.label})


def cmd_detect(args):
    z = read_latent(args.latent)
    key = _load_key(args.key)
    noise = _load_key(args.noise_key) if args.noise_key else None
    pool = KeyPool([key], noise, args.components)
    doc = {"distance": pool.distance(z, 0), "kind": key.kind}
    if args.threshold is not None:
        doc["watermarked"] = doc["distance"] <= args.threshold
    if key.kind == "hsqr":
        try:
            payload, corrected = decode_hsqr(extract_spectrum(z, key.channel, key.region), key)
            doc.update(payload=payload.hex(), corrected=corrected,
                       bit_accuracy=bit_accuracy(payload, key.payload), decoded=True)
        except QrDecodeError as exc:
            doc.update(decoded=False, decode_error=str(exc))
    _emit(doc)


def cmd_verify(args):
    roc = verify_batch(_load_scores(args.pos), _load_scores(args.neg))
    if args.roc_svg:
        _write_text(args.roc_svg, roc_svg([("roc", roc)]))
    _emit(roc.to_dict(include_curve=args.curve))


def cmd_identify(args):
    pool = _load_pool(args.pool, args.components)
    results = []
    for path in args.latent:
        idx, score = identify(read_latent(path), pool)
        results.append({"latent": path, "index": idx, "distance": score})
    _emit({"pool_size": len(pool), "results": results})


def cmd_gaussianity(args):
    latents = [read_latent(p) for p in args.latent]
    tests = [ks_test(z) for z in latents]
    _emit({
        "alpha": args.alpha,
        "failure_rate": ks_failure_rate(latents, args.alpha),
        "std": batch_std(latents),
        "tests": [{"latent": p, "D": t.statistic, "p_value": t.p_value, "n": t.n} for p, t in zip(args.latent, tests)],
    })


def _rows_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c)
            cells.append("" if v is None else f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}") from None


def cmd_bench(args):
    out = args.out or "bench_out"
    os.makedirs(out, exist_ok=True)
    common = dict(seed=args.seed, n_samples=args.n_samples, threads=args.threads,
                  inversion_noise_sigma=args.sigma_inv)
    ablation = run_ablation(pool_size=args.pool_size, **common)
    _write_text(os.path.join(out, "ablation.csv"),
                _rows_csv(ablation, ("case", "method", "attack", "tpr_at_1pct_fpr", "ident_acc", "n")))
    crop = run_crop_sweep(pool_size=args.pool_size, scales=_float_list(args.crop_scales), **common)
    _write_text(os.path.join(out, "crop_sweep.csv"),
                _rows_csv(crop, ("method", "scale", "tpr_at_1pct_fpr", "ident_acc", "n")))
    pools = [int(v) for v in _float_list(args.capacity_pools)]
    if not pools:
        raise UsageError("--capacity-pools is empty")
    capacity = run_capacity_sweep(pool_sizes=pools, embed_index_limit=min(64, min(pools)), **common)
    _write_text(os.path.join(out, "capacity_sweep.csv"),
                _rows_csv(capacity, ("method", "pool_size", "attack", "ident_acc", "n")))
    averages = {r["case"]: r["ident_acc"] for r in ablation if r["attack"] == "average"}
    _emit({"out": out, "ablation_average_ident_acc": averages})


def cmd_run(args):
    doc = {}
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
    if args.seed is not None:
        doc["seed"] = args.seed
    doc["threads"] = args.threads
    doc["out_dir"] = args.out or doc.get("out_dir") or "results"
    if "attacks" in doc and doc["attacks"] == "default":
        doc["attacks"] = [a.to_dict() for a in default_attacks()]
    cfg = ExperimentConfig.from_dict(doc)
    result = run_experiment(cfg)
    if args.roc_svg:
        _write_text(args.roc_svg, roc_svg([(f"{m} / {a}", roc) for (m, a), roc in result.curves]))
    _emit({"out": cfg.out_dir, "rows": result.rows})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sfwmark", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sfwmark {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out")

    s = sub.add_parser("keygen", help="create a key or a key pool")
    common(s)
    s.add_argument("--kind", choices=("tree_ring", "hstr", "hsqr", "noise"), default="hsqr")
    s.add_argument("--channel", type=int)
    s.add_argument("--region", choices=("full", "center"))
    s.add_argument("--radius", type=int, default=14)
    s.add_argument("--payload", help="9 octets as hex (HSQR)")
    s.add_argument("--cell-px", type=int, default=2)
    s.add_argument("--amplitude", type=float, default=45.0)
    s.add_argument("--mask-id", type=int, default=0)
    s.add_argument("--pool-size", type=int, default=0, help="emit a pool of this many keys")
    s.add_argument("--no-noise-key", action="store_true")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("embed", help="watermark a latent file (or a seeded N(0,1) latent)")
    common(s)
    s.add_argument("--latent")
    s.add_argument("--key", action="append", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("extract", help="centered spectrum of one channel")
    common(s)
    s.add_argument("--latent", required=True)
    s.add_argument("--channel", type=int, default=3)
    s.add_argument("--region", choices=("full", "center"), default="center")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("attack", help="pass a latent through the surrogate channel")
    common(s)
    s.add_argument("--latent", required=True)
    s.add_argument("--attack", default="identity", help="attack name or AttackSpec JSON")
    s.add_argument("--sigma-inv", type=float, default=0.1)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("detect", help="key-region distance (and HSQR payload) of one latent")
    common(s)
    s.add_argument("--latent", required=True)
    s.add_argument("--key", required=True)
    s.add_argument("--noise-key")
    s.add_argument("--components", choices=("both", "real"), default="both")
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("verify", help="ROC summary from positive / negative distance lists")
    common(s)
    s.add_argument("--pos", required=True)
    s.add_argument("--neg", required=True)
    s.add_argument("--curve", action="store_true", help="include the full curve")
    s.add_argument("--roc-svg")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("identify", help="nearest key of a pool for each latent")
    common(s)
    s.add_argument("--pool", required=True)
    s.add_argument("--components", choices=("both", "real"), default="both")
    s.add_argument("latent", nargs="+")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("gaussianity", help="KS normality test per latent")
    common(s)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("latent", nargs="+")
    s.set_defaults(func=cmd_gaussianity)

    s = sub.add_parser("bench", help="ablation, crop-scale and capacity sweeps")
    common(s)
    s.add_argument("--n-samples", type=int, default=200)
    s.add_argument("--pool-size", type=int, default=2048)
    s.add_argument("--sigma-inv", type=float, default=0.1)
    s.add_argument("--crop-scales", default=",".join(str(v) for v in CROP_SCALES))
    s.add_argument("--capacity-pools", default=",".join(str(v) for v in CAPACITY_POOLS))
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("run", help="run one experiment config")
    common(s, seed_default=None)
    s.add_argument("--config")
    s.add_argument("--roc-svg")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args)
        return 0
    except (UsageError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        kind = "usage" if isinstance(exc, UsageError) else type(exc).__name__
        sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, (UsageError, ValueError, KeyError, json.JSONDecodeError)) else 1
    except Exception as exc:  # pragma: no cover - last-resort reporting
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
