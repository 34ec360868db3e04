"""Surrogate generation -> attack -> inversion channel.

A latent is "rendered" by an invertible affine map into a [0, 1] image,
attacked in image space, mapped back, and perturbed by additive Gaussian noise
standing in for inversion error. Regeneration acts directly on the latent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import correlate1d

from .watermark import check_latent

ATTACK_KINDS = ("identity", "brightness", "contrast", "jpeg", "blur", "noise",
                "crop_center", "crop_random", "regen")

# parameter names and defaults per attack kind
_PARAMS = {
    "identity": {},
    "brightness": {"factor": 2.0},
    "contrast": {"factor": 0.5},
    "jpeg": {"quality": 25},
    "blur": {"radius": 1},
    "noise": {"sigma": 0.05},
    "crop_center": {"scale": 0.5},
    "crop_random": {"scale": 0.7, "seed": 0},
    "regen": {"t_star": 60, "steps_total": 1000},
}

# standard JPEG luminance quantization table
JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "identity"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACK_KINDS}")
        unknown = set(self.params) - set(_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**_PARAMS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        _validate(self.kind, merged)

    def __getitem__(self, name):
        return self.params[name]

    @property
    def label(self) -> str:
        """Stable row label such as ``jpeg(quality=25)``."""
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={self.params[k]:g}" for k in sorted(self.params))
        return f"{self.kind}({inner})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{f"{self.kind}.{k}": v for k, v in sorted(self.params.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackSpec":
        doc = dict(doc)
        kind = doc.pop("kind", "identity")
        params = {}
        for key, value in doc.items():
            prefix, _, name = key.partition(".")
            if not name:
                name, prefix = prefix, kind
            if prefix != kind:
                raise ValueError(f"parameter {key!r} does not belong to attack {kind!r}")
            params[name] = value
        return cls(kind, params)

    @classmethod
    def from_json(cls, text: str) -> "AttackSpec":
        return cls.from_dict(json.loads(text))


def _validate(kind: str, p: dict) -> None:
    def bad(msg):
        raise ValueError(f"{kind}: {msg}")

    if kind in ("brightness", "contrast") and not p["factor"] > 0:
        bad("factor must be > 0")
    if kind == "jpeg" and not 1 <= p["quality"] <= 100:
        bad("quality must be in [1, 100]")
    if kind == "blur" and (p["radius"] < 0 or int(p["radius"]) != p["radius"]):
        bad("radius must be a non-negative integer")
    if kind == "noise" and not p["sigma"] >= 0:
        bad("sigma must be >= 0")
    if kind in ("crop_center", "crop_random") and not 0 < p["scale"] <= 1:
        bad("scale must be in (0, 1]")
    if kind == "regen" and not 0 <= p["t_star"] <= p["steps_total"]:
        bad("need 0 <= t_star <= steps_total")
    if kind == "regen" and p["steps_total"] <= 0:
        bad("steps_total must be positive")


@dataclass(frozen=True)
class ChannelConfig:
    inversion_noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.inversion_noise_sigma) or self.inversion_noise_sigma < 0:
            raise ValueError("inversion_noise_sigma must be finite and >= 0")


def render(latent) -> np.ndarray:
    return np.clip((check_latent(latent) + 4.0) / 8.0, 0.0, 1.0)


def unrender(image) -> np.ndarray:
    return 8.0 * np.asarray(image, dtype=np.float64) - 4.0


def jpeg_quant_table(quality: int) -> np.ndarray:
    q = int(quality)
    scale = 5000 / q if q < 50 else 200 - 2 * q
    return np.clip(np.floor((JPEG_LUMA * scale + 50) / 100), 1, 255)


def _jpeg(image: np.ndarray, quality: int) -> np.ndarray:
    c, h, w = image.shape
    table = jpeg_quant_table(quality)
    pad_h, pad_w = -h % 8, -w % 8
    x = np.pad(image * 255.0 - 128.0, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    blocks = x.reshape(c, x.shape[1] // 8, 8, x.shape[2] // 8, 8).transpose(0, 1, 3, 2, 4)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / table) * table
    out = idctn(coef, axes=(-2, -1), norm="ortho").transpose(0, 1, 3, 2, 4).reshape(x.shape)
    return (out[:, :h, :w] + 128.0) / 255.0


def gaussian_kernel(radius: int) -> np.ndarray:
    r = int(radius)
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / (r / 2.0)) ** 2)
    return k / k.sum()


def _blur(image: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return image.copy()
    k = gaussian_kernel(radius)
    out = correlate1d(image, k, axis=1, mode="reflect")
    return correlate1d(out, k, axis=2, mode="reflect")


def crop_side(size: int, scale: float) -> int:
    """Side of the kept square window, ``round(size * sqrt(scale))`` half-up."""
    return int(np.floor(size * np.sqrt(scale) + 0.5))


def _crop(image: np.ndarray, scale: float, rng: np.random.Generator | None) -> np.ndarray:
    _, h, w = image.shape
    side_h, side_w = min(crop_side(h, scale), h), min(crop_side(w, scale), w)
    top, left = (h - side_h) // 2, (w - side_w) // 2
    src_top, src_left = top, left
    if rng is not None:
        src_top = int(rng.integers(0, h - side_h + 1))
        src_left = int(rng.integers(0, w - side_w + 1))
    out = np.full_like(image, 0.5)
    out[:, top:top + side_h, left:left + side_w] = image[:, src_top:src_top + side_h, src_left:src_left + side_w]
    return out


def apply_attack(image, spec: AttackSpec, rng_seed: int = 0) -> np.ndarray:
    """Attack a surrogate image; the result keeps its shape and [0, 1] range."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"image must have shape (C, H, W), got {x.shape}")
    k, p = spec.kind, spec.params
    if k == "identity":
        return x.copy()
    if k == "regen":
        raise ValueError("regen acts on latents; use regen_surrogate or channel_roundtrip")
    rng = np.random.default_rng(rng_seed)
    if k == "brightness":
        y = x * p["factor"]
    elif k == "contrast":
        mean = x.mean(axis=(1, 2), keepdims=True)
        y = (x - mean) * p["factor"] + mean
    elif k == "noise":
        y = x + rng.normal(0.0, p["sigma"], size=x.shape)
    elif k == "blur":
        y = _blur(x, int(p["radius"]))
    elif k == "jpeg":
        y = _jpeg(x, p["quality"])
    elif k == "crop_center":
        y = _crop(x, p["scale"], None)
    else:
        y = _crop(x, p["scale"], np.random.default_rng([int(p["seed"]), int(rng_seed)]))
    return np.clip(y, 0.0, 1.0)


def regen_alpha(t_star: int, steps_total: int) -> float:
    return float(np.cos(t_star / steps_total * np.pi / 2) ** 2)


def regen_surrogate(latent, t_star: int, steps_total: int, rng_seed: int = 0) -> np.ndarray:
    """Forward-noise the latent to step ``t_star`` under a cosine schedule."""
    if not 0 <= t_star <= steps_total or steps_total <= 0:
        raise ValueError("need 0 <= t_star <= steps_total and steps_total > 0")
    z = check_latent(latent)
    alpha = regen_alpha(t_star, steps_total)
    if alpha == 1.0:
        return z.copy()
    eps = np.random.default_rng(rng_seed).normal(size=z.shape)
    return np.sqrt(alpha) * z + np.sqrt(1.0 - alpha) * eps


def channel_roundtrip(latent, spec: AttackSpec, cfg: ChannelConfig) -> np.ndarray:
    """Render, attack, unrender and add inversion noise (``cfg.seed`` drives both)."""
    attack_seed, noise_seed = np.random.SeedSequence(cfg.seed).generate_state(2)
    if spec.kind == "regen":
        z = regen_surrogate(latent, int(spec["t_star"]), int(spec["steps_total"]), int(attack_seed))
    else:
        z = unrender(apply_attack(render(latent), spec, int(attack_seed)))
    if cfg.inversion_noise_sigma > 0:
        z = z + np.random.default_rng(int(noise_seed)).normal(0.0, cfg.inversion_noise_sigma, size=z.shape)
    return z
