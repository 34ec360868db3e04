import random

import pytest

from sfwmark.reedsolomon import (
    DATA_CODEWORDS,
    EC_CODEWORDS,
    GF_EXP,
    GF_LOG,
    ReedSolomonError,
    gf_div,
    gf_mul,
    rs_decode,
    rs_encode,
    syndromes,
)

from oracles import long_division_parity, slow_mul


def test_field_tables_against_bitwise_multiply():
    rng = random.Random(0)
    for _ in range(2000):
        a, b = rng.randrange(256), rng.randrange(256)
        assert gf_mul(a, b) == slow_mul(a, b)
    assert len(set(GF_EXP[:255])) == 255
    assert all(GF_EXP[GF_LOG[x]] == x for x in range(1, 256))
    assert gf_div(gf_mul(77, 201), 201) == 77
    with pytest.raises(ZeroDivisionError):
        gf_div(3, 0)


def test_encoder_matches_long_division():
    rng = random.Random(1)
    for _ in range(200):
        data = bytes(rng.randrange(256) for _ in range(DATA_CODEWORDS))
        cw = rs_encode(data)
        assert cw[:DATA_CODEWORDS] == data
        assert cw[DATA_CODEWORDS:] == long_division_parity(data, EC_CODEWORDS)
        assert not any(syndromes(cw))


def test_known_qr_parity():
    # all-zero data gives all-zero parity; a lone 1 in the last slot gives the generator tail
    assert rs_encode(bytes(9)) == bytes(26)
    assert rs_encode(bytes(8) + b"\x01")[9:] == long_division_parity(bytes(8) + b"\x01", 17)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        rs_encode(b"short")
    with pytest.raises(ValueError):
        rs_decode(bytes(25))


@pytest.mark.parametrize("n_err", range(0, 9))
def test_corrects_up_to_eight(n_err):
    rng = random.Random(100 + n_err)
    for _ in range(60):
        data = bytes(rng.randrange(256) for _ in range(9))
        cw = bytearray(rs_encode(data))
        for p in rng.sample(range(26), n_err):
            cw[p] ^= rng.randrange(1, 256)
        got, corrected = rs_decode(bytes(cw))
        assert got == data
        assert corrected == n_err


@pytest.mark.parametrize("n_err", [9, 10, 13, 20])
def test_beyond_radius_detected(n_err):
    # minimum distance 18: nine or more errors can never land within 8 of another codeword
    rng = random.Random(n_err)
    detected = 0
    for _ in range(100):
        data = bytes(rng.randrange(256) for _ in range(9))
        cw = bytearray(rs_encode(data))
        for p in rng.sample(range(26), n_err):
            cw[p] ^= rng.randrange(1, 256)
        try:
            got, _ = rs_decode(bytes(cw))
        except ReedSolomonError:
            detected += 1
            continue
        if n_err == 9:
            pytest.fail("nine errors decoded without an error signal")
        assert got != data or not any(syndromes(bytes(cw)))
    if n_err == 9:
        assert detected == 100
