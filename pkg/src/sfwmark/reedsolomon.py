"""Reed-Solomon over GF(256) with the QR-code field and generator conventions.

Field polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D), primitive element 2,
generator roots alpha^0 .. alpha^(nsym-1). Codewords are stored
highest-degree coefficient first, data followed by parity.
"""
from __future__ import annotations

PRIMITIVE_POLY = 0x11D

# version-1 / level-H block: 9 data + 17 parity codewords
DATA_CODEWORDS = 9
EC_CODEWORDS = 17
TOTAL_CODEWORDS = DATA_CODEWORDS + EC_CODEWORDS


class ReedSolomonError(Exception):
    """The received word lies outside the decoder's correction radius."""


def _build_tables():
    exp = [0] * 512
    log = [0] * 256
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIMITIVE_POLY
    for i in range(255, 512):
        exp[i] = exp[i - 255]
    return exp, log


GF_EXP, GF_LOG = _build_tables()


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return GF_EXP[GF_LOG[a] + GF_LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return GF_EXP[(GF_LOG[a] + 255 - GF_LOG[b]) % 255]


def gf_pow(a: int, n: int) -> int:
    if a == 0:
        return 0
    return GF_EXP[(GF_LOG[a] * n) % 255]


def gf_inverse(a: int) -> int:
    return gf_div(1, a)


def poly_mul(p: list[int], q: list[int]) -> list[int]:
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] ^= gf_mul(a, b)
    return out


def poly_eval(p: list[int], x: int) -> int:
    """Horner evaluation, coefficients highest degree first."""
    y = 0
    for c in p:
        y = gf_mul(y, x) ^ c
    return y


def generator_poly(nsym: int) -> list[int]:
    g = [1]
    for i in range(nsym):
        g = poly_mul(g, [1, GF_EXP[i]])
    return g


_GEN_CACHE: dict[int, list[int]] = {}


def _generator(nsym: int) -> list[int]:
    if nsym not in _GEN_CACHE:
        _GEN_CACHE[nsym] = generator_poly(nsym)
    return _GEN_CACHE[nsym]


def rs_encode(data, nsym: int = EC_CODEWORDS, k: int | None = DATA_CODEWORDS) -> bytes:
    """Systematic encode: returns ``data + parity`` where parity is the remainder
    of ``data(x) * x^nsym`` divided by the generator polynomial."""
    data = bytes(data)
    if k is not None and len(data) != k:
        raise ValueError(f"expected {k} data octets, got {len(data)}")
    gen = _generator(nsym)
    rem = list(data) + [0] * nsym
    for i in range(len(data)):
        coef = rem[i]
        if coef:
            for j in range(1, len(gen)):
                rem[i + j] ^= gf_mul(gen[j], coef)
    return data + bytes(rem[len(data):])


def syndromes(codeword, nsym: int = EC_CODEWORDS) -> list[int]:
    cw = list(codeword)
    return [poly_eval(cw, GF_EXP[i]) for i in range(nsym)]


def _berlekamp_massey(synd: list[int]) -> list[int]:
    """Error locator Lambda(x), lowest degree first, Lambda[0] == 1."""
    lam = [1]
    prev = [1]
    length = 0
    shift = 1
    prev_disc = 1
    for n, s in enumerate(synd):
        disc = s
        for i in range(1, length + 1):
            if i < len(lam):
                disc ^= gf_mul(lam[i], synd[n - i])
        if disc == 0:
            shift += 1
            continue
        coef = gf_div(disc, prev_disc)
        update = [0] * shift + [gf_mul(coef, c) for c in prev]
        new = lam + [0] * max(0, len(update) - len(lam))
        for i, c in enumerate(update):
            new[i] ^= c
        if 2 * length <= n:
            prev = lam
            length = n + 1 - length
            prev_disc = disc
            shift = 1
        else:
            shift += 1
        lam = new
    while len(lam) > 1 and lam[-1] == 0:
        lam.pop()
    if len(lam) - 1 != length:
        # degree collapsed below the register length: not a valid locator
        raise ReedSolomonError("inconsistent error locator")
    return lam


def rs_decode(codeword, nsym: int = EC_CODEWORDS, k: int | None = DATA_CODEWORDS) -> tuple[bytes, int]:
    """Bounded-distance decode. Returns ``(data, corrected_symbol_count)``.

    Raises :class:`ReedSolomonError` when more than ``nsym // 2`` symbols appear
    to be in error or the correction does not yield a valid codeword.
    """
    cw = list(bytes(codeword))
    n = len(cw)
    if k is not None and n != k + nsym:
        raise ValueError(f"expected {k + nsym} codeword octets, got {n}")
    if n > 255:
        raise ValueError("codeword longer than 255 symbols")
    synd = syndromes(cw, nsym)
    if not any(synd):
        return bytes(cw[: n - nsym]), 0

    lam = _berlekamp_massey(synd)
    n_err = len(lam) - 1
    if n_err > nsym // 2:
        raise ReedSolomonError(f"{n_err} errors exceed correction radius {nsym // 2}")

    # Chien search. Position p (0 = first symbol) has locator X = alpha^(n-1-p);
    # it is an error location iff Lambda(X^-1) == 0.
    positions = []
    for p in range(n):
        x_inv = GF_EXP[(255 - (n - 1 - p)) % 255]
        acc = 0
        for c in reversed(lam):
            acc = gf_mul(acc, x_inv) ^ c
        if acc == 0:
            positions.append(p)
    if len(positions) != n_err:
        raise ReedSolomonError("error locator roots do not match its degree")

    # Forney: Omega(x) = S(x) Lambda(x) mod x^nsym, lowest degree first
    omega = [0] * nsym
    for i, s in enumerate(synd):
        if s == 0:
            continue
        for j, l in enumerate(lam):
            if i + j < nsym:
                omega[i + j] ^= gf_mul(s, l)
    # formal derivative keeps odd-degree terms
    lam_deriv = [lam[i] if i % 2 == 1 else 0 for i in range(1, len(lam))]
    for p in positions:
        x = GF_EXP[(n - 1 - p) % 255]
        x_inv = gf_inverse(x)
        num = 0
        for c in reversed(omega):
            num = gf_mul(num, x_inv) ^ c
        den = 0
        for c in reversed(lam_deriv):
            den = gf_mul(den, x_inv) ^ c
        if den == 0:
            raise ReedSolomonError("zero derivative in Forney step")
        # first consecutive root is alpha^0, hence the extra factor X
        cw[p] ^= gf_mul(x, gf_div(num, den))

    if any(syndromes(cw, nsym)):
        raise ReedSolomonError("correction did not produce a codeword")
    return bytes(cw[: n - nsym]), n_err
