"""Key-region distances, verification ROC, pool identification, HSQR decoding
and Kolmogorov-Smirnov normality statistics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from . import qrcode
from ._kernels import l1_argmin, l1_rows
from .watermark import (
    KeyRegionMask,
    WatermarkKey,
    extract_spectrum,
    hsqr_block,
    key_region_mask,
    reference_pattern,
)

COMPONENT_MODES = ("both", "real")

# numpy 2 renamed trapz
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def l1_distance(query, reference, mask) -> float:
    """L1 distance over masked components.

    ``query`` is a centered spectrum, ``reference`` the complex values listed in
    ``mask.coords`` order. Sequences of all three are summed with equal weight.
    """
    if isinstance(mask, KeyRegionMask):
        query, reference, mask = [query], [reference], [mask]
    if not len(query) == len(reference) == len(mask):
        raise ValueError("query, reference and mask sequences differ in length")
    total = 0.0
    for q, r, m in zip(query, reference, mask):
        ref = np.asarray(r)
        if ref.shape != (len(m.coords[0]),):
            raise ValueError(f"reference has {ref.size} values, mask has {len(m.coords[0])} bins")
        total += float(np.abs(m.components(q) - m.components(m.scatter(ref))).sum())
    return total


# --- verification ---------------------------------------------------------------

@dataclass(frozen=True)
class RocSummary:
    """ROC of the rule "watermarked iff distance <= threshold".

    ``thresholds`` starts at ``-inf`` (nothing flagged) and then runs through
    every distinct score in increasing order.
    """
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    tpr_at_1pct_fpr: float
    max_accuracy: float
    n_pos: int
    n_neg: int

    def to_dict(self, include_curve: bool = False) -> dict:
        doc = {
            "auc": self.auc,
            "tpr_at_1pct_fpr": self.tpr_at_1pct_fpr,
            "max_accuracy": self.max_accuracy,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }
        if include_curve:
            doc["thresholds"] = [None if not np.isfinite(t) else float(t) for t in self.thresholds]
            doc["tpr"] = self.tpr.tolist()
            doc["fpr"] = self.fpr.tolist()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(include_curve=True), sort_keys=True)


def verify_batch(pos, neg, max_fpr: float = 0.01) -> RocSummary:
    """Sweep thresholds over watermarked (``pos``) and null (``neg``) distances."""
    p = np.asarray(pos, dtype=np.float64).ravel()
    n = np.asarray(neg, dtype=np.float64).ravel()
    if p.size == 0 or n.size == 0:
        raise ValueError("verify_batch needs non-empty positive and negative score lists")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(n))):
        raise ValueError("scores must be finite")
    thr = np.unique(np.concatenate([p, n]))
    p_sorted, n_sorted = np.sort(p), np.sort(n)
    tp = np.searchsorted(p_sorted, thr, side="right")
    fp = np.searchsorted(n_sorted, thr, side="right")
    thresholds = np.concatenate([[-np.inf], thr])
    tpr = np.concatenate([[0.0], tp / p.size])
    fpr = np.concatenate([[0.0], fp / n.size])
    auc = float(_trapezoid(tpr, fpr))
    ok = fpr <= max_fpr
    tpr_at = float(tpr[ok].max())
    tn = n.size - np.concatenate([[0], fp])
    acc = (np.concatenate([[0], tp]) + tn) / (p.size + n.size)
    return RocSummary(thresholds, tpr, fpr, auc, tpr_at, float(acc.max()), int(p.size), int(n.size))


# --- identification -------------------------------------------------------------

def _geometry(key: WatermarkKey) -> tuple:
    return (key.kind, key.channel, key.region, key.radius, key.cell_px)


class KeyPool:
    """Ordered, immutable pool of same-geometry keys; index = message identity.

    An optional shared noise key contributes its own masked distance, which is
    the same for every pool member.
    """

    def __init__(self, keys, noise_key: WatermarkKey | None = None, components: str = "both"):
        self.keys = tuple(keys)
        if not self.keys:
            raise ValueError("key pool is empty")
        if components not in COMPONENT_MODES:
            raise ValueError(f"components must be one of {COMPONENT_MODES}")
        geom = _geometry(self.keys[0])
        if any(_geometry(k) != geom for k in self.keys):
            raise ValueError("all pool keys must share kind, channel, region and size parameters")
        self.noise_key = noise_key
        self.components = components
        mask = key_region_mask(self.keys[0])
        self.mask = mask.real_only() if components == "real" else mask
        self.noise_mask = None
        if noise_key is not None:
            nm = key_region_mask(noise_key)
            self.noise_mask = nm.real_only() if components == "real" else nm

    def __len__(self) -> int:
        return len(self.keys)

    def __getitem__(self, i) -> WatermarkKey:
        return self.keys[i]

    @cached_property
    def reference_matrix(self) -> np.ndarray:
        """``(K, n)`` component vectors of every key's reference pattern."""
        rows = [self.mask.components(self.mask.scatter(reference_pattern(k))) for k in self.keys]
        return np.ascontiguousarray(np.array(rows, dtype=np.float64).reshape(len(rows), -1))

    @cached_property
    def noise_reference(self) -> np.ndarray | None:
        if self.noise_mask is None:
            return None
        return self.noise_mask.components(self.noise_mask.scatter(reference_pattern(self.noise_key)))

    def query_vector(self, latent) -> np.ndarray:
        spec = extract_spectrum(latent, self.mask.channel, self.mask.region)
        return self.mask.components(spec)

    def noise_distance(self, latent) -> float:
        if self.noise_mask is None:
            return 0.0
        spec = extract_spectrum(latent, self.noise_mask.channel, self.noise_mask.region)
        return float(np.abs(self.noise_mask.components(spec) - self.noise_reference).sum())

    def distances(self, latent) -> np.ndarray:
        """Distance from ``latent`` to every key in the pool."""
        q = np.ascontiguousarray(self.query_vector(latent))
        return l1_rows(q, self.reference_matrix) + self.noise_distance(latent)

    def distance(self, latent, index: int) -> float:
        q = self.query_vector(latent)
        return float(np.abs(q - self.reference_matrix[index]).sum()) + self.noise_distance(latent)


def identify(latent, pool: KeyPool) -> tuple[int, float]:
    """Index of the nearest pool key (lowest index on ties) and its distance."""
    idx, dist = identify_batch([latent], pool)
    return int(idx[0]), float(dist[0])


def identify_batch(latents, pool: KeyPool) -> tuple[np.ndarray, np.ndarray]:
    latents = list(latents)
    if len(pool) == 0:
        raise ValueError("key pool is empty")
    if not latents:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    queries = np.ascontiguousarray(np.array([pool.query_vector(z) for z in latents]))
    idx, dist = l1_argmin(queries, pool.reference_matrix)
    noise = np.array([pool.noise_distance(z) for z in latents])
    return np.asarray(idx, dtype=np.int64), np.asarray(dist) + noise


# --- HSQR decoding --------------------------------------------------------------

def hsqr_sign_grid(spectrum, key: WatermarkKey) -> np.ndarray:
    """Reassemble the signed pixel grid: real parts on the left, imaginary on the right."""
    if key.kind != "hsqr":
        raise ValueError("key is not an HSQR key")
    s = np.asarray(spectrum)
    if s.shape != (key.size, key.size):
        raise ValueError(f"spectrum shape {s.shape} does not match the key region")
    rows, cols = hsqr_block(key.size, key.cell_px)
    block = s[rows, cols]
    return np.concatenate([block.real, block.imag], axis=1)


def decode_hsqr(spectrum, key: WatermarkKey) -> tuple[bytes, int]:
    """Recover ``(payload, corrected_codewords)``; raises :class:`qrcode.QrDecodeError`."""
    grid = hsqr_sign_grid(spectrum, key)
    return qrcode.qr_read(qrcode.cell_downsample(grid, key.cell_px))


def hsqr_raw_payload(spectrum, key: WatermarkKey) -> bytes:
    """Hard-decision data codewords without error correction, unmasked with the
    key's own mask; used to score bits when decoding fails."""
    grid = hsqr_sign_grid(spectrum, key)
    codewords, _ = qrcode.read_codewords(qrcode.cell_downsample(grid, key.cell_px), key.mask_id)
    return codewords[: qrcode.DATA_CODEWORDS]


def decode_hsqr_latent(latent, key: WatermarkKey) -> tuple[bytes, int]:
    return decode_hsqr(extract_spectrum(latent, key.channel, key.region), key)


def bit_accuracy(decoded, truth) -> float:
    a = np.unpackbits(np.frombuffer(bytes(decoded), dtype=np.uint8))
    b = np.unpackbits(np.frombuffer(bytes(truth), dtype=np.uint8))
    if a.size != b.size:
        raise ValueError("payloads differ in length")
    if a.size == 0:
        return 1.0
    return float(np.mean(a == b))


# --- Gaussianity ------------------------------------------------------------------

@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int


_KS_TERMS = 100
_KS_EPS = 1e-12


def kolmogorov_sf(lam: float) -> float:
    """``P(K > lam)`` for the limiting Kolmogorov distribution.

    Uses ``2 * sum (-1)^(k-1) exp(-2 k^2 lam^2)`` for ``lam >= 1``; below that the
    alternating series converges slowly, so the equivalent theta-function form
    ``1 - sqrt(2 pi)/lam * sum exp(-(2k-1)^2 pi^2 / (8 lam^2))`` is used.
    """
    if lam <= 0:
        return 1.0
    total = 0.0
    if lam < 1.0:
        for k in range(1, _KS_TERMS + 1):
            term = np.exp(-((2 * k - 1) ** 2) * np.pi ** 2 / (8 * lam * lam))
            total += term
            if term < _KS_EPS:
                break
        p = 1.0 - np.sqrt(2 * np.pi) / lam * total
    else:
        for k in range(1, _KS_TERMS + 1):
            term = np.exp(-2.0 * k * k * lam * lam)
            total += term if k % 2 else -term
            if term < _KS_EPS:
                break
        p = 2.0 * total
    return float(min(1.0, max(0.0, p)))


def ks_statistic(samples) -> float:
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def ks_test(samples) -> KsResult:
    """One-sample KS test against N(0, 1) with the asymptotic p-value."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 8:
        raise ValueError("ks_test needs at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    d = ks_statistic(x)
    return KsResult(d, kolmogorov_sf(np.sqrt(x.size) * d), int(x.size))


def ks_failure_rate(latents, alpha: float = 0.05) -> float:
    """Fraction of latents whose flattened values are rejected at level ``alpha``."""
    batch = list(latents)
    if not batch:
        raise ValueError("empty batch")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    fails = sum(ks_test(z).p_value <= alpha for z in batch)
    return fails / len(batch)


def batch_std(latents) -> float:
    return float(np.std(np.concatenate([np.asarray(z, dtype=np.float64).ravel() for z in latents])))


# --- serialization ----------------------------------------------------------------

RESULT_COLUMNS = ("method", "attack", "tpr_at_1pct_fpr", "auc", "max_acc", "ident_acc", "bit_acc", "n")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def results_to_csv(rows) -> str:
    """One row per (method, attack); missing metrics become empty cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def roc_points_to_csv(curves) -> str:
    """``curves`` maps ``(method, attack)`` to a :class:`RocSummary`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "attack", "threshold", "fpr", "tpr"))
    for (method, attack), roc in curves:
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow((method, attack, "-inf" if not np.isfinite(t) else f"{t:.6f}", f"{f:.6f}", f"{p:.6f}"))
    return buf.getvalue()
