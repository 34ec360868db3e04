"""Watermark keys, key-region masks, embedding and reference patterns.

Key geometry is expressed in the *centered* view of the embedding spectrum
(DC at ``(S // 2, S // 2)`` for an ``S x S`` window). Supported kinds:

``tree_ring``
    Baseline ring pattern written over the whole disk; the inverse transform's
    imaginary part is discarded, as the original baseline does.
``hstr``
    The same rings restricted to the free half-plane, mirrored as conjugates so
    the watermarked window stays exactly real.
``hsqr``
    A QR code whose left half sets the signs of real parts and right half the
    signs of imaginary parts of a block just right of the vertical DC axis.
``noise``
    A seeded Gaussian plane that replaces the whole window of its channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import qrcode
from .spectral import dft2, hermitian_project, idft2, mirror, shift

LATENT_SHAPE = (4, 64, 64)
FULL_SIZE = 64
CENTER_SIZE = 44
REGIONS = {"full": (0, FULL_SIZE), "center": ((FULL_SIZE - CENTER_SIZE) // 2, CENTER_SIZE)}

KINDS = ("tree_ring", "hstr", "hsqr", "noise")
MASK_VERSION = 1

DEFAULT_RADIUS = 14
DEFAULT_CELL_PX = 2
# ~ std of the real/imag parts of a 64x64 N(0,1) spectrum: sqrt(64**2 / 2)
DEFAULT_AMPLITUDE = 45.0


def region_bounds(region: str) -> tuple[int, int]:
    """``(offset, size)`` of the square embedding window inside a 64x64 plane."""
    try:
        return REGIONS[region]
    except KeyError:
        raise ValueError(f"unknown region {region!r}; expected one of {sorted(REGIONS)}") from None


def region_window(region: str) -> tuple[slice, slice]:
    off, size = region_bounds(region)
    return slice(off, off + size), slice(off, off + size)


def check_latent(latent) -> np.ndarray:
    z = np.asarray(latent, dtype=np.float64)
    if z.ndim != 3 or z.shape[1:] != LATENT_SHAPE[1:]:
        raise ValueError(f"latent must have shape (C, 64, 64), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent contains non-finite values")
    return z


# --- centered-view geometry -------------------------------------------------

def _offsets(size: int) -> tuple[np.ndarray, np.ndarray]:
    c = size // 2
    r, col = np.indices((size, size))
    return r - c, col - c


def ring_index(size: int) -> np.ndarray:
    """Integer ring of every bin: ``floor(distance_to_DC + 0.5)``."""
    dr, dc = _offsets(size)
    return np.floor(np.hypot(dr, dc) + 0.5).astype(int)


def free_half(size: int) -> np.ndarray:
    """Bins whose value may be chosen freely; their mirrors are then fixed.

    Excludes the self-conjugate bins. Even ``size`` only.
    """
    c = size // 2
    dr, dc = _offsets(size)
    self_mirror_col = (dc == 0) | (dc == -c)
    return ((dc >= 1) & (dc <= c - 1)) | (self_mirror_col & (dr >= 1) & (dr <= c - 1))


def _mirror_centered(a: np.ndarray) -> np.ndarray:
    return shift(mirror(shift(a, to_centered=False)), to_centered=True)


def hsqr_block(size: int, cell_px: int) -> tuple[slice, slice]:
    """Rows and columns of the complex block carrying an HSQR code.

    The block is ``21*cell_px`` rows by ``21*cell_px/2`` columns, starting one
    column right of the vertical DC axis and vertically centered.
    """
    height = qrcode.SIZE * cell_px
    if height % 2:
        raise ValueError("21 * cell_px must be even so the code splits into two halves")
    width = height // 2
    c = size // 2
    if height > size or width > c - 1:
        raise ValueError(f"HSQR code of {height}x{height} pixels does not fit a {size}x{size} spectrum")
    r0 = (size - height) // 2
    return slice(r0, r0 + height), slice(c + 1, c + 1 + width)


# --- keys ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WatermarkKey:
    kind: str
    seed: int
    channel: int
    center_aware: bool
    radius: int | None = None
    payload: bytes | None = None
    cell_px: int | None = None
    amplitude: float | None = None
    mask_id: int = 0

    @property
    def region(self) -> str:
        return "center" if self.center_aware else "full"

    @property
    def size(self) -> int:
        return region_bounds(self.region)[1]

    @cached_property
    def ring_values(self) -> np.ndarray:
        """One complex value per ring, drawn from CN(0, S*S)."""
        if self.kind not in ("tree_ring", "hstr"):
            raise AttributeError(f"{self.kind} key has no ring values")
        rng = np.random.default_rng(self.seed)
        draws = rng.normal(size=(self.radius, 2))
        scale = np.sqrt(self.size * self.size / 2.0)
        return (draws[:, 0] + 1j * draws[:, 1]) * scale

    @cached_property
    def noise_plane(self) -> np.ndarray:
        if self.kind != "noise":
            raise AttributeError(f"{self.kind} key has no noise plane")
        return np.random.default_rng(self.seed).normal(size=(self.size, self.size))

    @cached_property
    def qr_matrix(self) -> np.ndarray:
        if self.kind != "hsqr":
            raise AttributeError(f"{self.kind} key has no QR code")
        return qrcode.qr_build(self.payload, self.mask_id)

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "channel": self.channel,
            "seed": self.seed,
            "center_aware": self.center_aware,
            "radius": self.radius,
            "payload": self.payload.hex() if self.payload is not None else None,
            "cell_px": self.cell_px,
            "amplitude": self.amplitude,
            "mask_id": self.mask_id,
            "mask_version": MASK_VERSION,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WatermarkKey":
        doc = json.loads(text)
        if doc.get("mask_version", MASK_VERSION) != MASK_VERSION:
            raise ValueError(f"unsupported mask version {doc.get('mask_version')}")
        payload = doc.get("payload")
        return make_key(
            doc["kind"],
            doc["seed"],
            channel=doc.get("channel"),
            center_aware=doc.get("center_aware"),
            radius=doc.get("radius") if doc.get("radius") is not None else DEFAULT_RADIUS,
            payload=bytes.fromhex(payload) if payload else None,
            cell_px=doc.get("cell_px") or DEFAULT_CELL_PX,
            amplitude=doc.get("amplitude") or DEFAULT_AMPLITUDE,
            mask_id=doc.get("mask_id", 0),
        )


def make_key(
    kind: str,
    seed: int,
    *,
    channel: int | None = None,
    center_aware: bool | None = None,
    radius: int = DEFAULT_RADIUS,
    payload: bytes | None = None,
    cell_px: int = DEFAULT_CELL_PX,
    amplitude: float = DEFAULT_AMPLITUDE,
    mask_id: int = 0,
) -> WatermarkKey:
    """Build a key. Defaults follow the usual settings: ring and QR patterns in
    channel 3 (tree_ring full-frame, hstr/hsqr center-aware), noise in channel 0."""
    if kind not in KINDS:
        raise ValueError(f"unknown key kind {kind!r}; expected one of {KINDS}")
    if channel is None:
        channel = 0 if kind == "noise" else 3
    if center_aware is None:
        center_aware = kind != "tree_ring"
    if not 0 <= channel < LATENT_SHAPE[0]:
        raise ValueError(f"channel must be in 0..{LATENT_SHAPE[0] - 1}, got {channel}")
    size = region_bounds("center" if center_aware else "full")[1]
    seed = int(seed)

    if kind in ("tree_ring", "hstr"):
        if not 0 <= radius < size // 2:
            raise ValueError(f"radius must be in 0..{size // 2 - 1} for a {size}x{size} spectrum")
        return WatermarkKey(kind, seed, channel, bool(center_aware), radius=int(radius))
    if kind == "hsqr":
        if cell_px < 1:
            raise ValueError("cell_px must be >= 1")
        hsqr_block(size, cell_px)
        if amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if payload is None:
            payload = np.random.default_rng(seed).bytes(qrcode.DATA_CODEWORDS)
        payload = bytes(payload)
        if len(payload) != qrcode.DATA_CODEWORDS:
            raise ValueError(f"payload must be {qrcode.DATA_CODEWORDS} octets")
        if mask_id not in range(8):
            raise ValueError("mask_id must be in 0..7")
        return WatermarkKey(kind, seed, channel, bool(center_aware), payload=payload,
                            cell_px=int(cell_px), amplitude=float(amplitude), mask_id=int(mask_id))
    return WatermarkKey(kind, seed, channel, bool(center_aware))


# --- masks ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KeyRegionMask:
    """Masked components of one channel's centered spectrum.

    ``real`` and ``imag`` tag which component of each bin takes part in the
    distance. Component vectors list real parts first, then imaginary parts,
    each in row-major bin order.
    """
    channel: int
    region: str
    real: np.ndarray
    imag: np.ndarray
    coords: tuple[np.ndarray, np.ndarray] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", np.nonzero(self.real | self.imag))

    @property
    def size(self) -> int:
        return self.real.shape[0]

    @property
    def n_components(self) -> int:
        return int(self.real.sum() + self.imag.sum())

    def components(self, spectrum) -> np.ndarray:
        s = np.asarray(spectrum)
        if s.shape != self.real.shape:
            raise ValueError(f"spectrum shape {s.shape} does not match mask {self.real.shape}")
        return np.concatenate([s.real[self.real], s.imag[self.imag]])

    def scatter(self, values) -> np.ndarray:
        """Place complex values listed in ``coords`` order into a centered plane."""
        plane = np.zeros(self.real.shape, dtype=np.complex128)
        plane[self.coords] = values
        return plane

    def real_only(self) -> "KeyRegionMask":
        return KeyRegionMask(self.channel, self.region, self.real, np.zeros_like(self.imag))


def key_region_mask(key: WatermarkKey, region: str | None = None) -> KeyRegionMask:
    if region is not None and region != key.region:
        raise ValueError(f"key embeds in the {key.region!r} region, not {region!r}")
    size = key.size
    if key.kind == "tree_ring":
        disk = ring_index(size) <= key.radius if key.radius else np.zeros((size, size), bool)
        return KeyRegionMask(key.channel, key.region, disk, disk.copy())
    if key.kind == "hstr":
        disk = (ring_index(size) <= key.radius) & free_half(size) if key.radius else np.zeros((size, size), bool)
        return KeyRegionMask(key.channel, key.region, disk, disk.copy())
    if key.kind == "hsqr":
        rows, cols = hsqr_block(size, key.cell_px)
        block = np.zeros((size, size), dtype=bool)
        block[rows, cols] = True
        return KeyRegionMask(key.channel, key.region, block, block.copy())
    full = np.ones((size, size), dtype=bool)
    return KeyRegionMask(key.channel, key.region, full, full.copy())


def _ring_plane(key: WatermarkKey) -> np.ndarray:
    size = key.size
    ring = np.clip(ring_index(size), 1, None)
    plane = np.zeros((size, size), dtype=np.complex128)
    inside = ring <= key.radius
    plane[inside] = key.ring_values[ring[inside] - 1]
    return plane


def _hsqr_signs(key: WatermarkKey) -> tuple[np.ndarray, np.ndarray]:
    grid = qrcode.cell_upsample(key.qr_matrix, key.cell_px)
    half = grid.shape[1] // 2
    return grid[:, :half], grid[:, half:]


def reference_pattern(key: WatermarkKey) -> np.ndarray:
    """Complex reference values on the key's mask, in ``mask.coords`` order.

    HSQR uses ``+amplitude`` for dark modules and ``-amplitude`` for light
    ones on each tagged component; ring kinds use their stored ring values;
    noise keys use the centered spectrum of the noise plane.
    """
    mask = key_region_mask(key)
    if key.kind in ("tree_ring", "hstr"):
        if not key.radius:
            return np.zeros(0, dtype=np.complex128)
        return _ring_plane(key)[mask.coords]
    if key.kind == "hsqr":
        rows, cols = hsqr_block(key.size, key.cell_px)
        s_re, s_im = _hsqr_signs(key)
        plane = np.zeros((key.size, key.size), dtype=np.complex128)
        plane[rows, cols] = key.amplitude * (s_re + 1j * s_im)
        return plane[mask.coords]
    return shift(dft2(key.noise_plane))[mask.coords]


# --- embedding ------------------------------------------------------------------

def _write_symmetric(centered: np.ndarray, written: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Set ``values`` on ``written`` bins and their conjugates on the mirror bins,
    then return the uncentered, Hermitian-projected spectrum."""
    f = np.where(written, values, centered)
    f = np.where(_mirror_centered(written), np.conj(_mirror_centered(values)), f)
    return hermitian_project(shift(f, to_centered=False))


def embed_plane(window, key: WatermarkKey) -> np.ndarray:
    """Watermark one spatial window; returns the complex inverse transform
    (exactly real up to rounding for every kind except ``tree_ring``)."""
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (key.size, key.size):
        raise ValueError(f"window shape {w.shape} does not match key region {key.size}")
    centered = shift(dft2(w))
    if key.kind == "tree_ring":
        mask = key_region_mask(key)
        f = np.where(mask.real, _ring_plane(key), centered)
        return idft2(shift(f, to_centered=False))
    if key.kind == "hstr":
        mask = key_region_mask(key)
        return idft2(_write_symmetric(centered, mask.real, _ring_plane(key)))
    if key.kind == "hsqr":
        mask = key_region_mask(key)
        rows, cols = hsqr_block(key.size, key.cell_px)
        s_re, s_im = _hsqr_signs(key)
        values = centered.copy()
        blk = centered[rows, cols]
        values[rows, cols] = s_re * np.abs(blk.real) + 1j * s_im * np.abs(blk.imag)
        return idft2(_write_symmetric(centered, mask.real, values))
    return idft2(hermitian_project(dft2(key.noise_plane)))


def embed(latent, key: WatermarkKey, region: str | None = None) -> np.ndarray:
    """Return a watermarked copy of ``latent``; other channels are untouched."""
    z = check_latent(latent)
    if region is not None and region != key.region:
        raise ValueError(f"key embeds in the {key.region!r} region, not {region!r}")
    out = z.copy()
    if key_region_mask(key).n_components == 0:
        return out
    rows, cols = region_window(key.region)
    out[key.channel, rows, cols] = embed_plane(z[key.channel, rows, cols], key).real
    return out


def embed_keys(latent, keys) -> np.ndarray:
    out = check_latent(latent)
    for key in keys:
        out = embed(out, key)
    return out


def discarded_imaginary_energy(latent, key: WatermarkKey) -> float:
    """Sum of squared imaginary parts thrown away when ``key`` is embedded."""
    z = check_latent(latent)
    rows, cols = region_window(key.region)
    return float(np.sum(embed_plane(z[key.channel, rows, cols], key).imag ** 2))


def extract_spectrum(latent, channel: int, region: str) -> np.ndarray:
    """Centered spectrum of ``channel`` inside the region window."""
    z = check_latent(latent)
    if not 0 <= channel < z.shape[0]:
        raise ValueError(f"channel {channel} out of range")
    rows, cols = region_window(region)
    return shift(dft2(z[channel, rows, cols]))
