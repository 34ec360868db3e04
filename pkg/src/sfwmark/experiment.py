"""Seeded experiment runner and the ablation, crop and capacity sweeps.

Every random quantity is drawn from its own stream,
``SeedSequence(master, spawn_key=(purpose, *indices))``, so any sample can be
reproduced in isolation and results do not depend on the thread count.
"""
from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from ._kernels import l1_argmin
from .channel import AttackSpec, ChannelConfig, channel_roundtrip
from .detection import (
    KeyPool,
    bit_accuracy,
    decode_hsqr,
    hsqr_raw_payload,
    identify_batch,
    results_to_csv,
    roc_points_to_csv,
    verify_batch,
)
from .qrcode import QrDecodeError
from .watermark import LATENT_SHAPE, embed_keys, extract_spectrum, make_key

# method -> (key kind, compared components)
METHODS = {
    "tree_ring": ("tree_ring", "both"),
    "tree_ring_real_only": ("tree_ring", "real"),
    "hstr": ("hstr", "both"),
    "hstr_real_only": ("hstr", "real"),
    "hsqr": ("hsqr", "both"),
}

# ablation cases: full-frame baseline with both / real components, then HSTR real / both
ABLATION_CASES = {
    "A": {"method": "tree_ring"},
    "B": {"method": "tree_ring_real_only"},
    "C": {"method": "hstr_real_only"},
    "D": {"method": "hstr"},
}

CROP_SCALES = (0.8, 0.6, 0.5, 0.4, 0.3)
CAPACITY_POOLS = (64, 512, 2048, 8192)

_PURPOSE = {"pool": 1, "noise_key": 2, "index": 3, "latent": 4, "null": 5, "channel": 6}


def stream_seed(master: int, purpose: str, *indices: int) -> int:
    """64-bit seed for one named stream; counter-based, order independent."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=(_PURPOSE[purpose],) + tuple(int(i) for i in indices))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def attack_tag(spec: AttackSpec) -> int:
    return zlib.crc32(spec.label.encode())


def default_attacks() -> list[AttackSpec]:
    """The attack suite implementable on the surrogate channel."""
    return [AttackSpec(k) for k in ("identity", "brightness", "contrast", "jpeg", "blur", "noise",
                                     "regen", "crop_center", "crop_random")]


@dataclass
class ExperimentConfig:
    method: str = "hsqr"
    center_aware: bool | None = None
    attacks: list = field(default_factory=lambda: [AttackSpec("identity")])
    n_samples: int = 200
    pool_size: int = 2048
    inversion_noise_sigma: float = 0.1
    seed: int = 0
    noise_key: bool | None = None
    radius: int = 14
    cell_px: int = 2
    amplitude: float = 45.0
    # embedded indices are drawn from [0, min(pool_size, embed_index_limit))
    embed_index_limit: int | None = None
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {sorted(METHODS)}")
        kind = METHODS[self.method][0]
        if self.center_aware is None:
            self.center_aware = kind != "tree_ring"
        if self.noise_key is None:
            self.noise_key = kind != "tree_ring"
        self.attacks = [a if isinstance(a, AttackSpec) else AttackSpec.from_dict(a) for a in self.attacks]
        if not self.attacks:
            raise ValueError("attack list is empty")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.embed_index_limit is not None and self.embed_index_limit < 1:
            raise ValueError("embed_index_limit must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not np.isfinite(self.inversion_noise_sigma) or self.inversion_noise_sigma < 0:
            raise ValueError("inversion_noise_sigma must be finite and >= 0")
        # validates radius / cell size / region combination before any work
        self.pattern_key(0)

    @property
    def kind(self) -> str:
        return METHODS[self.method][0]

    @property
    def components(self) -> str:
        return METHODS[self.method][1]

    def pattern_key(self, index: int):
        seed = stream_seed(self.seed, "pool", index)
        return make_key(self.kind, seed, center_aware=self.center_aware, radius=self.radius,
                        cell_px=self.cell_px, amplitude=self.amplitude)

    def build_noise_key(self):
        if not self.noise_key:
            return None
        return make_key("noise", stream_seed(self.seed, "noise_key"), center_aware=self.center_aware)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["attacks"] = [a.to_dict() for a in self.attacks]
        doc.pop("threads")
        doc.pop("out_dir")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


def _latent(seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=LATENT_SHAPE)


class _Prepared:
    """Pool, embedded indices and clean watermarked / null latents of one config."""

    def __init__(self, cfg: ExperimentConfig, pool: KeyPool | None = None):
        self.cfg = cfg
        self.pool = pool or KeyPool([cfg.pattern_key(i) for i in range(cfg.pool_size)],
                                    cfg.build_noise_key(), cfg.components)
        limit = min(cfg.pool_size, cfg.embed_index_limit or cfg.pool_size)
        self.indices = np.array([
            np.random.default_rng(stream_seed(cfg.seed, "index", j)).integers(limit)
            for j in range(cfg.n_samples)
        ], dtype=np.int64)
        keys = [self.pool.noise_key] if self.pool.noise_key is not None else []
        with ThreadPoolExecutor(cfg.threads) as ex:
            self.marked = list(ex.map(
                lambda j: embed_keys(_latent(stream_seed(cfg.seed, "latent", j)), [self.pool[int(self.indices[j])]] + keys),
                range(cfg.n_samples)))
            self.nulls = [_latent(stream_seed(cfg.seed, "null", j)) for j in range(cfg.n_samples)]

    def attacked(self, spec: AttackSpec):
        """Channel outputs for watermarked and null latents under ``spec``."""
        cfg, tag = self.cfg, attack_tag(spec)

        def run(j):
            pos = channel_roundtrip(self.marked[j], spec,
                                    ChannelConfig(cfg.inversion_noise_sigma, stream_seed(cfg.seed, "channel", tag, j, 0)))
            neg = channel_roundtrip(self.nulls[j], spec,
                                    ChannelConfig(cfg.inversion_noise_sigma, stream_seed(cfg.seed, "channel", tag, j, 1)))
            return pos, neg

        with ThreadPoolExecutor(cfg.threads) as ex:
            out = list(ex.map(run, range(cfg.n_samples)))
        return [o[0] for o in out], [o[1] for o in out]


def _evaluate(prep: _Prepared, spec: AttackSpec) -> tuple[dict, object]:
    cfg, pool = prep.cfg, prep.pool
    pos, neg = prep.attacked(spec)
    with ThreadPoolExecutor(cfg.threads) as ex:
        pos_d = list(ex.map(lambda j: pool.distance(pos[j], int(prep.indices[j])), range(cfg.n_samples)))
        neg_d = list(ex.map(lambda j: pool.distance(neg[j], int(prep.indices[j])), range(cfg.n_samples)))
    roc = verify_batch(pos_d, neg_d)
    found, _ = identify_batch(pos, pool)
    label = cfg.method
    if cfg.center_aware != (cfg.kind != "tree_ring"):
        # flag runs whose region differs from the method's default
        label += "[center]" if cfg.center_aware else "[full]"
    row = {
        "method": label,
        "attack": spec.label,
        "tpr_at_1pct_fpr": roc.tpr_at_1pct_fpr,
        "auc": roc.auc,
        "max_acc": roc.max_accuracy,
        "ident_acc": float(np.mean(found == prep.indices)),
        "bit_acc": None,
        "n": cfg.n_samples,
    }
    if cfg.kind == "hsqr":
        accs = []
        for j in range(cfg.n_samples):
            key = pool[int(prep.indices[j])]
            spectrum = extract_spectrum(pos[j], key.channel, key.region)
            try:
                payload, _ = decode_hsqr(spectrum, key)
            except QrDecodeError:
                payload = hsqr_raw_payload(spectrum, key)
            accs.append(bit_accuracy(payload, key.payload))
        row["bit_acc"] = float(np.mean(accs))
    return row, roc


@dataclass
class ExperimentResult:
    rows: list
    curves: list
    config: ExperimentConfig

    @property
    def results_csv(self) -> str:
        return results_to_csv(self.rows)

    @property
    def roc_csv(self) -> str:
        return roc_points_to_csv(self.curves)

    def manifest(self) -> dict:
        return {"tool": "sfwmark", "version": __version__, "config": self.config.to_dict(),
                "seed": self.config.seed, "outputs": ["results.csv", "roc_points.csv"]}

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "w", newline="") as f:
            f.write(self.results_csv)
        with open(os.path.join(out_dir, "roc_points.csv"), "w", newline="") as f:
            f.write(self.roc_csv)
        with open(os.path.join(out_dir, "manifest.json"), "w") as f:
            json.dump(self.manifest(), f, indent=2, sort_keys=True)
            f.write("\n")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Evaluate verification and identification for every attack in ``cfg``."""
    prep = _Prepared(cfg)
    rows, curves = [], []
    for spec in cfg.attacks:
        row, roc = _evaluate(prep, spec)
        rows.append(row)
        curves.append(((row["method"], row["attack"]), roc))
    result = ExperimentResult(rows, curves, cfg)
    if cfg.out_dir:
        result.write(cfg.out_dir)
    return result


# --- sweeps ------------------------------------------------------------------------

def run_ablation(seed: int = 0, n_samples: int = 200, pool_size: int = 2048, attacks=None,
                 inversion_noise_sigma: float = 0.1, threads: int = 1) -> list[dict]:
    """Cases A-D over an attack suite; one row per case and attack plus an average row."""
    attacks = attacks or default_attacks()
    rows = []
    for case, params in ABLATION_CASES.items():
        cfg = ExperimentConfig(attacks=attacks, n_samples=n_samples, pool_size=pool_size, seed=seed,
                               inversion_noise_sigma=inversion_noise_sigma, threads=threads, **params)
        result = run_experiment(cfg)
        for r in result.rows:
            rows.append({"case": case, **r})
        rows.append({"case": case, "method": cfg.method, "attack": "average",
                     "ident_acc": float(np.mean([r["ident_acc"] for r in result.rows])),
                     "tpr_at_1pct_fpr": float(np.mean([r["tpr_at_1pct_fpr"] for r in result.rows])),
                     "n": n_samples})
    return rows


def run_crop_sweep(methods=("hstr", "hsqr"), scales=CROP_SCALES, seed: int = 0, n_samples: int = 200,
                   pool_size: int = 2048, inversion_noise_sigma: float = 0.1, threads: int = 1,
                   center_aware: bool | None = None) -> list[dict]:
    rows = []
    attacks = [AttackSpec("crop_center", {"scale": s}) for s in scales]
    for method in methods:
        cfg = ExperimentConfig(method=method, center_aware=center_aware, attacks=attacks, n_samples=n_samples,
                               pool_size=pool_size, seed=seed, inversion_noise_sigma=inversion_noise_sigma,
                               threads=threads)
        for s, r in zip(scales, run_experiment(cfg).rows):
            rows.append({"scale": s, **r})
    return rows


def run_capacity_sweep(methods=("hsqr", "tree_ring"), pool_sizes=CAPACITY_POOLS, seed: int = 0,
                       n_samples: int = 200, attack: AttackSpec | None = None,
                       inversion_noise_sigma: float = 0.1, threads: int = 1,
                       embed_index_limit: int = 64) -> list[dict]:
    """Identification accuracy against nested pools (the first N keys of the largest).

    Embedded indices stay below ``embed_index_limit`` so every sample's true key
    belongs to every pool and accuracy cannot increase with pool size.
    """
    attack = attack or AttackSpec("noise", {"sigma": 0.05})
    largest = max(pool_sizes)
    if embed_index_limit > min(pool_sizes):
        raise ValueError("embed_index_limit must not exceed the smallest pool")
    rows = []
    for method in methods:
        cfg = ExperimentConfig(method=method, attacks=[attack], n_samples=n_samples, pool_size=largest,
                               seed=seed, inversion_noise_sigma=inversion_noise_sigma, threads=threads,
                               embed_index_limit=embed_index_limit)
        prep = _Prepared(cfg)
        pos, _ = prep.attacked(attack)
        queries = np.ascontiguousarray(np.array([prep.pool.query_vector(z) for z in pos]))
        refs = prep.pool.reference_matrix
        for size in sorted(pool_sizes):
            found, _ = l1_argmin(queries, np.ascontiguousarray(refs[:size]))
            rows.append({"method": method, "attack": attack.label, "pool_size": size,
                         "ident_acc": float(np.mean(np.asarray(found) == prep.indices)), "n": n_samples})
    return rows
