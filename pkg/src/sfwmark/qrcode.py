"""Version-1, level-H QR matrices carrying a raw 72-bit payload.

The nine payload octets are used directly as the nine data codewords (no mode
or length header), followed by 17 Reed-Solomon parity codewords. Function
patterns, codeword placement, masking and format information follow the QR
standard, so the symbol is structurally valid but not scanner-readable text.

Matrices are ``(21, 21)`` boolean arrays indexed ``[row, col]``, ``True`` = dark.
"""
from __future__ import annotations

import numpy as np

from .reedsolomon import DATA_CODEWORDS, TOTAL_CODEWORDS, rs_decode, rs_encode

SIZE = 21
PAYLOAD_BITS = 72
# two-bit format indicator for error-correction level H
EC_LEVEL_H = 0b10
_FORMAT_GEN = 0x537
_FORMAT_XOR = 0x5412
# three format-word errors are always correctable (BCH(15,5) has distance 7)
_FORMAT_MAX_DIST = 3


class QrDecodeError(Exception):
    """Format information or codewords could not be recovered."""


_MASKS = {
    0: lambda r, c: (r + c) % 2 == 0,
    1: lambda r, c: r % 2 == 0,
    2: lambda r, c: c % 3 == 0,
    3: lambda r, c: (r + c) % 3 == 0,
    4: lambda r, c: (r // 2 + c // 3) % 2 == 0,
    5: lambda r, c: (r * c) % 2 + (r * c) % 3 == 0,
    6: lambda r, c: ((r * c) % 2 + (r * c) % 3) % 2 == 0,
    7: lambda r, c: ((r + c) % 2 + (r * c) % 3) % 2 == 0,
}


def payload_to_bits(payload) -> np.ndarray:
    data = bytes(payload)
    if len(data) != DATA_CODEWORDS:
        raise ValueError(f"payload must be {DATA_CODEWORDS} octets (72 bits), got {len(data)}")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_payload(bits) -> bytes:
    b = np.asarray(bits, dtype=np.uint8).ravel()
    if b.size != PAYLOAD_BITS:
        raise ValueError(f"expected {PAYLOAD_BITS} bits, got {b.size}")
    return np.packbits(b).tobytes()


def format_word(mask_id: int, ec_level: int = EC_LEVEL_H) -> int:
    """15-bit BCH-protected, XOR-masked format word."""
    data = (ec_level << 3) | mask_id
    rem = data
    for _ in range(10):
        rem = (rem << 1) ^ ((rem >> 9) * _FORMAT_GEN)
    return ((data << 10) | rem) ^ _FORMAT_XOR


def _format_positions() -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(row, col) of format bits 0..14 for the two copies."""
    first = [(i, 8) for i in range(6)] + [(7, 8), (8, 8), (8, 7)]
    first += [(8, 14 - i) for i in range(9, 15)]
    second = [(8, SIZE - 1 - i) for i in range(8)]
    second += [(SIZE - 15 + i, 8) for i in range(8, 15)]
    return first, second


def _function_layout() -> tuple[np.ndarray, np.ndarray]:
    """Fixed modules (finders, separators, timing, dark module) and their mask."""
    modules = np.zeros((SIZE, SIZE), dtype=bool)
    is_func = np.zeros((SIZE, SIZE), dtype=bool)
    for i in range(SIZE):
        modules[6, i] = modules[i, 6] = i % 2 == 0
        is_func[6, i] = is_func[i, 6] = True
    for cr, cc in ((3, 3), (3, SIZE - 4), (SIZE - 4, 3)):
        for dr in range(-4, 5):
            for dc in range(-4, 5):
                r, c = cr + dr, cc + dc
                if 0 <= r < SIZE and 0 <= c < SIZE:
                    modules[r, c] = max(abs(dr), abs(dc)) not in (2, 4)
                    is_func[r, c] = True
    for r, c in sum(_format_positions(), []):
        is_func[r, c] = True
    modules[SIZE - 8, 8] = True
    is_func[SIZE - 8, 8] = True
    return modules, is_func


_BASE_MODULES, _IS_FUNCTION = _function_layout()


def _zigzag_order() -> list[tuple[int, int]]:
    order = []
    right = SIZE - 1
    while right >= 1:
        if right == 6:
            right = 5
        upward = ((right + 1) & 2) == 0
        for vert in range(SIZE):
            row = SIZE - 1 - vert if upward else vert
            for j in range(2):
                col = right - j
                if not _IS_FUNCTION[row, col]:
                    order.append((row, col))
        right -= 2
    return order


_DATA_ORDER = _zigzag_order()
assert len(_DATA_ORDER) == TOTAL_CODEWORDS * 8
_DATA_ROWS = np.array([p[0] for p in _DATA_ORDER])
_DATA_COLS = np.array([p[1] for p in _DATA_ORDER])


def data_module_mask() -> np.ndarray:
    """Boolean mask of the 208 modules carrying codeword bits."""
    m = np.zeros((SIZE, SIZE), dtype=bool)
    m[_DATA_ROWS, _DATA_COLS] = True
    return m


def _mask_pattern(mask_id: int) -> np.ndarray:
    if mask_id not in _MASKS:
        raise ValueError(f"mask_id must be in 0..7, got {mask_id}")
    r, c = np.indices((SIZE, SIZE))
    return _MASKS[mask_id](r, c) & ~_IS_FUNCTION


def qr_build(payload, mask_id: int = 0) -> np.ndarray:
    """Encode a 9-octet payload into a masked 21x21 matrix."""
    data = bytes(payload)
    if len(data) != DATA_CODEWORDS:
        raise ValueError(f"payload must be {DATA_CODEWORDS} octets, got {len(data)}")
    pattern = _mask_pattern(mask_id)
    codewords = rs_encode(data)
    bits = np.unpackbits(np.frombuffer(codewords, dtype=np.uint8)).astype(bool)
    modules = _BASE_MODULES.copy()
    modules[_DATA_ROWS, _DATA_COLS] = bits
    modules ^= pattern
    word = format_word(mask_id)
    for copy in _format_positions():
        for i, (r, c) in enumerate(copy):
            modules[r, c] = bool((word >> i) & 1)
    return modules


def _read_format(matrix: np.ndarray) -> tuple[int, int, int]:
    """Return ``(ec_level, mask_id, hamming_distance)`` of the best format match."""
    best = None
    for copy in _format_positions():
        word = sum(int(matrix[r, c]) << i for i, (r, c) in enumerate(copy))
        for data in range(32):
            dist = bin(word ^ format_word(data & 7, data >> 3)).count("1")
            if best is None or dist < best[2]:
                best = (data >> 3, data & 7, dist)
    return best


def read_codewords(matrix, mask_id: int | None = None) -> tuple[bytes, int]:
    """Unmask and read the 26 raw codewords (no error correction).

    The mask comes from the format information unless ``mask_id`` is given.
    Returns ``(codewords, mask_id)``.
    """
    m = np.asarray(matrix, dtype=bool)
    if m.shape != (SIZE, SIZE):
        raise ValueError(f"expected a {SIZE}x{SIZE} matrix, got {m.shape}")
    if mask_id is None:
        ec_level, mask_id, dist = _read_format(m)
        if dist > _FORMAT_MAX_DIST:
            raise QrDecodeError(f"format information unrecoverable (distance {dist})")
        if ec_level != EC_LEVEL_H:
            raise QrDecodeError(f"format information names EC level {ec_level:#04b}, expected H")
    bits = m[_DATA_ROWS, _DATA_COLS] ^ _mask_pattern(mask_id)[_DATA_ROWS, _DATA_COLS]
    return np.packbits(bits.astype(np.uint8)).tobytes(), mask_id


def qr_read(matrix) -> tuple[bytes, int]:
    """Decode a matrix back to ``(payload, corrected_codewords)``.

    Raises :class:`QrDecodeError` if the format or codewords are unrecoverable.
    """
    from .reedsolomon import ReedSolomonError

    codewords, _ = read_codewords(matrix)
    try:
        return rs_decode(codewords)
    except ReedSolomonError as exc:
        raise QrDecodeError(str(exc)) from exc


def cell_upsample(matrix, cell_px: int) -> np.ndarray:
    """Signed pixel grid: each module becomes a ``cell_px`` block of +1 (dark) / -1."""
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    signed = np.where(np.asarray(matrix, dtype=bool), 1.0, -1.0)
    return np.kron(signed, np.ones((cell_px, cell_px)))


def cell_downsample(grid, cell_px: int) -> np.ndarray:
    """Module is dark iff the mean score of its block is >= 0."""
    g = np.asarray(grid, dtype=np.float64)
    h, w = g.shape
    if cell_px < 1 or h % cell_px or w % cell_px:
        raise ValueError(f"grid {g.shape} not divisible by cell size {cell_px}")
    blocks = g.reshape(h // cell_px, cell_px, w // cell_px, cell_px)
    return blocks.mean(axis=(1, 3)) >= 0


def matrix_to_text(matrix) -> str:
    m = np.asarray(matrix, dtype=bool)
    return "\n".join("".join("1" if v else "0" for v in row) for row in m) + "\n"


def matrix_from_text(text: str) -> np.ndarray:
    rows = [line.strip() for line in text.strip().splitlines()]
    if len(rows) != SIZE or any(len(r) != SIZE or set(r) - {"0", "1"} for r in rows):
        raise ValueError(f"expected {SIZE} lines of {SIZE} '0'/'1' characters")
    return np.array([[ch == "1" for ch in r] for r in rows], dtype=bool)
