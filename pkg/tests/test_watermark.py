import numpy as np
import pytest

from sfwmark import qrcode
from sfwmark.spectral import dft2, hermitian_deviation, self_conjugate_points, shift
from sfwmark.watermark import (
    CENTER_SIZE,
    WatermarkKey,
    discarded_imaginary_energy,
    embed,
    embed_keys,
    extract_spectrum,
    free_half,
    hsqr_block,
    key_region_mask,
    make_key,
    reference_pattern,
    region_window,
)


@pytest.fixture
def latent():
    return np.random.default_rng(11).normal(size=(4, 64, 64))


def test_center_window_is_rows_10_to_53():
    rows, cols = region_window("center")
    assert (rows.start, rows.stop - 1) == (10, 53)
    assert (cols.start, cols.stop - 1) == (10, 53)
    with pytest.raises(ValueError):
        region_window("edge")


def test_defaults_and_determinism():
    k = make_key("hsqr", 9)
    assert (k.channel, k.cell_px, k.amplitude, k.center_aware) == (3, 2, 45.0, True)
    assert k.amplitude == pytest.approx(np.sqrt(64 ** 2 / 2), abs=0.3)
    assert make_key("tree_ring", 1).center_aware is False
    assert make_key("noise", 1).channel == 0
    assert make_key("hsqr", 9).payload == k.payload
    a, b = make_key("hstr", 4), make_key("hstr", 4)
    assert np.array_equal(a.ring_values, b.ring_values)
    assert not np.array_equal(a.ring_values, make_key("hstr", 5).ring_values)


def test_tree_ring_mask_is_rounded_disk():
    k = make_key("tree_ring", 0, radius=14)
    assert k.ring_values.shape == (14,)
    mask = key_region_mask(k)
    c = 32
    expected = sum(1 for r in range(64) for q in range(64)
                   if np.floor(np.hypot(r - c, q - c) + 0.5) <= 14)
    assert mask.real.sum() == expected and np.array_equal(mask.real, mask.imag)


def test_ring_values_have_region_variance():
    vals = np.concatenate([make_key("hstr", s).ring_values for s in range(400)])
    assert np.mean(np.abs(vals) ** 2) == pytest.approx(CENTER_SIZE ** 2, rel=0.1)


def test_hsqr_geometry():
    k = make_key("hsqr", 0)
    mask = key_region_mask(k)
    assert len(mask.coords[0]) == 42 * 21
    assert mask.n_components == 42 * 42
    rows, cols = hsqr_block(44, 2)
    assert (rows.start, rows.stop - 1) == (1, 42)
    # first column sits one to the right of the vertical DC axis
    assert cols.start == 22 + 1 and cols.stop - 1 == 43


@pytest.mark.parametrize("kind", ["hstr", "hsqr"])
def test_sfw_masks_avoid_self_conjugate_points_and_stay_in_free_half(kind):
    mask = key_region_mask(make_key(kind, 2))
    uncentered = shift(mask.real, to_centered=False)
    for p in self_conjugate_points(44, 44):
        assert not uncentered[p]
    assert not (mask.real & ~free_half(44)).any()


def test_free_half_partitions_spectrum():
    for size in (8, 44, 64):
        free = shift(free_half(size), to_centered=False)
        from sfwmark.spectral import mirror
        partner = mirror(free)
        assert not (free & partner).any()
        assert (free | partner).sum() == size * size - len(self_conjugate_points(size, size))


def test_geometry_overflow_and_invalid_params():
    with pytest.raises(ValueError):
        make_key("hsqr", 0, cell_px=3)
    with pytest.raises(ValueError):
        make_key("hsqr", 0, cell_px=4)
    with pytest.raises(ValueError):
        make_key("hstr", 0, radius=22)
    with pytest.raises(ValueError):
        make_key("hstr", 0, channel=4)
    with pytest.raises(ValueError):
        make_key("hsqr", 0, amplitude=0.0)
    with pytest.raises(ValueError):
        make_key("spiral", 0)
    # cell_px=2 fits the full frame too
    assert key_region_mask(make_key("hsqr", 0, center_aware=False)).size == 64


def test_hsqr_embed_sets_signs_from_qr_bits(latent):
    k = make_key("hsqr", 3)
    z = embed(latent, k)
    spec = extract_spectrum(z, k.channel, k.region)
    rows, cols = hsqr_block(44, 2)
    grid = qrcode.cell_upsample(k.qr_matrix, 2)
    block = spec[rows, cols]
    assert np.array_equal(np.sign(block.real), grid[:, :21])
    assert np.array_equal(np.sign(block.imag), grid[:, 21:])
    # magnitudes preserved
    before = extract_spectrum(latent, 3, "center")[rows, cols]
    np.testing.assert_allclose(np.abs(block.real), np.abs(before.real), atol=1e-9)


def test_hsqr_reference_is_plus_minus_lambda():
    k = make_key("hsqr", 3)
    ref = reference_pattern(k)
    mask = key_region_mask(k)
    plane = mask.scatter(ref)
    rows, cols = hsqr_block(44, 2)
    grid = qrcode.cell_upsample(k.qr_matrix, 2)
    assert np.array_equal(plane[rows, cols].real, 45.0 * grid[:, :21])
    assert np.array_equal(plane[rows, cols].imag, 45.0 * grid[:, 21:])


def test_empty_mask_key_leaves_latent_untouched(latent):
    for kind in ("tree_ring", "hstr"):
        k = make_key(kind, 0, radius=0)
        assert key_region_mask(k).n_components == 0
        assert np.array_equal(embed(latent, k), latent)


@pytest.mark.parametrize("kind", ["hstr", "hsqr", "noise"])
def test_sfw_embedding_is_real(latent, kind):
    k = make_key(kind, 7)
    assert discarded_imaginary_energy(latent, k) < 1e-18
    z = embed(latent, k)
    rows, cols = region_window(k.region)
    assert hermitian_deviation(dft2(z[k.channel, rows, cols])) <= 1e-9
    for c in range(4):
        if c != k.channel:
            assert np.array_equal(z[c], latent[c])


def test_tree_ring_discards_imaginary_energy(latent):
    k = make_key("tree_ring", 7)
    assert discarded_imaginary_energy(latent, k) > 1.0


@pytest.mark.parametrize("kind", ["tree_ring", "hstr", "noise"])
def test_reference_matches_written_values(latent, kind):
    k = make_key(kind, 21)
    mask = key_region_mask(k)
    if kind == "tree_ring":
        # the baseline's written values are visible before the real part is taken
        from sfwmark.watermark import _ring_plane
        assert np.array_equal(_ring_plane(k)[mask.coords], reference_pattern(k))
        return
    spec = extract_spectrum(embed(latent, k), k.channel, k.region)
    np.testing.assert_allclose(spec[mask.coords], reference_pattern(k), atol=1e-9)


def test_hstr_rings_constant_and_dc_shares_first_ring():
    k = make_key("hstr", 8)
    ref = key_region_mask(k).scatter(reference_pattern(k))
    c = 22
    assert ref[c, c + 1] == k.ring_values[0]
    assert ref[c - 3, c + 4] == k.ring_values[4]
    assert ref[c, c] == 0


def test_embed_region_mismatch_and_bad_latent(latent):
    k = make_key("hstr", 0)
    with pytest.raises(ValueError):
        embed(latent, k, region="full")
    bad = latent.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        embed(bad, k)
    with pytest.raises(ValueError):
        embed(np.zeros((4, 32, 32)), k)


def test_extract_shapes(latent):
    assert extract_spectrum(latent, 0, "center").shape == (44, 44)
    assert extract_spectrum(latent, 0, "full").shape == (64, 64)
    with pytest.raises(ValueError):
        extract_spectrum(latent, 5, "full")


def test_full_region_noise_spectrum_variance():
    rng = np.random.default_rng(0)
    power = np.mean([np.abs(extract_spectrum(rng.normal(size=(4, 64, 64)), 2, "full")) ** 2 for _ in range(50)])
    assert power == pytest.approx(4096, rel=0.05)


def test_deterministic_embedding(latent):
    keys = [make_key("hsqr", 5), make_key("noise", 6)]
    assert np.array_equal(embed_keys(latent, keys), embed_keys(latent, keys))


@pytest.mark.parametrize("kind", ["tree_ring", "hstr", "hsqr", "noise"])
def test_key_json_roundtrip(kind):
    k = make_key(kind, 123456789)
    k2 = WatermarkKey.from_json(k.to_json())
    assert k2.to_json() == k.to_json()
    assert '"mask_version": 1' in k.to_json()
