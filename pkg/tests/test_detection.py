import numpy as np
import pytest
from scipy import stats

from sfwmark.channel import AttackSpec, ChannelConfig, channel_roundtrip
from sfwmark.detection import (
    KeyPool,
    RocSummary,
    bit_accuracy,
    decode_hsqr,
    decode_hsqr_latent,
    identify,
    identify_batch,
    kolmogorov_sf,
    ks_failure_rate,
    ks_test,
    l1_distance,
    results_to_csv,
    roc_points_to_csv,
    verify_batch,
)
from sfwmark.qrcode import QrDecodeError
from sfwmark.watermark import (
    KeyRegionMask,
    embed,
    embed_keys,
    extract_spectrum,
    key_region_mask,
    make_key,
    reference_pattern,
)


def single_bin_mask(size=4):
    real = np.zeros((size, size), bool)
    real[1, 2] = True
    return KeyRegionMask(0, "full", real, np.zeros_like(real))


def test_l1_trivial_cases():
    mask = single_bin_mask()
    q = np.zeros((4, 4), complex)
    q[1, 2] = 3 + 7j
    assert l1_distance(q, np.array([-2 + 100j]), mask) == 5.0
    assert l1_distance(q, np.array([3 + 7j]), mask) == 0.0
    with pytest.raises(ValueError):
        l1_distance(np.zeros((5, 5)), np.array([0j]), mask)
    with pytest.raises(ValueError):
        l1_distance(q, np.array([0j, 1j]), mask)


def test_l1_matches_per_coordinate_sum():
    rng = np.random.default_rng(0)
    k, nk = make_key("hstr", 1), make_key("noise", 2)
    z = rng.normal(size=(4, 64, 64))
    masks = [key_region_mask(k), key_region_mask(nk)]
    queries = [extract_spectrum(z, m.channel, m.region) for m in masks]
    refs = [reference_pattern(k), reference_pattern(nk)]
    naive = 0.0
    for q, r, m in zip(queries, refs, masks):
        for (i, j), v in zip(zip(*m.coords), r):
            if m.real[i, j]:
                naive += abs(q[i, j].real - v.real)
            if m.imag[i, j]:
                naive += abs(q[i, j].imag - v.imag)
    assert l1_distance(queries, refs, masks) == pytest.approx(naive, rel=1e-12)
    pool = KeyPool([k], nk)
    assert pool.distance(z, 0) == pytest.approx(naive, rel=1e-12)


def test_verify_perfect_separation():
    roc = verify_batch([1.0, 2.0, 3.0], [4.0, 5.0])
    assert (roc.auc, roc.tpr_at_1pct_fpr, roc.max_accuracy) == (1.0, 1.0, 1.0)
    assert np.isneginf(roc.thresholds[0])
    assert np.all(np.diff(roc.tpr) >= 0) and np.all(np.diff(roc.fpr) >= 0)


def test_verify_same_distribution():
    rng = np.random.default_rng(4)
    roc = verify_batch(rng.normal(size=1000), rng.normal(size=1000))
    assert roc.auc == pytest.approx(0.5, abs=0.05)


def mann_whitney(pos, neg):
    wins = sum((p < n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@pytest.mark.parametrize("seed", range(5))
def test_auc_equals_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    # rounded scores force ties
    pos = np.round(rng.normal(0.0, 1.0, size=rng.integers(5, 150)), 1)
    neg = np.round(rng.normal(0.7, 1.0, size=rng.integers(5, 150)), 1)
    assert verify_batch(pos, neg).auc == pytest.approx(mann_whitney(pos, neg), abs=1e-9)


def test_tpr_at_fpr_monotone_in_separation():
    rng = np.random.default_rng(1)
    pos, neg = rng.normal(size=300), rng.normal(size=300)
    last = -1.0
    for shift in np.linspace(0, 6, 13):
        t = verify_batch(pos, neg + shift).tpr_at_1pct_fpr
        assert t >= last
        last = t


def test_tpr_at_fpr_closed_constraint():
    # 100 negatives: one negative below the threshold is exactly 1% FPR and allowed
    neg = np.arange(1, 101, dtype=float)
    pos = np.array([0.5, 1.5])
    assert verify_batch(pos, neg).tpr_at_1pct_fpr == 1.0


def test_verify_rejects_empty():
    with pytest.raises(ValueError):
        verify_batch([], [1.0])


def test_max_accuracy_counts_best_threshold():
    roc = verify_batch([1.0, 5.0], [2.0, 3.0])
    assert roc.max_accuracy == 0.75


@pytest.fixture(scope="module")
def hsqr_pool():
    keys = [make_key("hsqr", 1000 + i) for i in range(2048)]
    return KeyPool(keys, make_key("noise", 7))


def test_identify_clean_index_137(hsqr_pool):
    z = np.random.default_rng(3).normal(size=(4, 64, 64))
    marked = embed_keys(z, [hsqr_pool[137], hsqr_pool.noise_key])
    idx, score = identify(marked, hsqr_pool)
    assert idx == 137
    brute = [hsqr_pool.distance(marked, i) for i in range(len(hsqr_pool))]
    assert int(np.argmin(brute)) == 137
    assert score == pytest.approx(brute[137], rel=1e-12)


def test_identify_pool_of_one_and_ties():
    k = make_key("hstr", 3)
    z = np.random.default_rng(0).normal(size=(4, 64, 64))
    assert identify(z, KeyPool([k]))[0] == 0
    # identical keys tie; lowest index wins
    assert identify(embed(z, k), KeyPool([make_key("hstr", 9), k, k]))[0] == 1
    with pytest.raises(ValueError):
        KeyPool([])
    with pytest.raises(ValueError):
        KeyPool([make_key("hstr", 1), make_key("hsqr", 1)])


def test_identify_invariant_under_monotone_transform():
    keys = [make_key("hstr", s) for s in range(50)]
    pool = KeyPool(keys)
    z = channel_roundtrip(embed(np.random.default_rng(1).normal(size=(4, 64, 64)), keys[17]),
                          AttackSpec("noise"), ChannelConfig(0.1, 5))
    d = pool.distances(z)
    assert int(np.argmin(np.log1p(d) * 3 + 7)) == identify(z, pool)[0] == 17


def test_identify_batch_matches_single():
    keys = [make_key("hstr", s) for s in range(30)]
    pool = KeyPool(keys, make_key("noise", 1), components="real")
    rng = np.random.default_rng(2)
    zs = [embed(rng.normal(size=(4, 64, 64)), keys[i]) for i in (3, 8, 29)]
    idx, dist = identify_batch(zs, pool)
    assert idx.tolist() == [3, 8, 29]
    for z, i, d in zip(zs, idx, dist):
        assert identify(z, pool) == (i, pytest.approx(d))


@pytest.mark.parametrize("center_aware", [False, True])
def test_hsqr_clean_distance_and_separation(center_aware):
    k = make_key("hsqr", 5, center_aware=center_aware)
    mask, ref = key_region_mask(k), reference_pattern(k)
    clean = []
    for s in range(20):
        spec = extract_spectrum(embed(np.random.default_rng(100 + s).normal(size=(4, 64, 64)), k), 3, k.region)
        d = l1_distance(spec, ref, mask)
        # magnitudes kept, signs matched: distance is sum of ||F| - amplitude|
        assert d == pytest.approx(np.abs(np.abs(mask.components(spec)) - 45.0).sum(), rel=1e-9) and d > 0
        clean.append(d)
    nulls = [l1_distance(extract_spectrum(np.random.default_rng(s).normal(size=(4, 64, 64)), 3, k.region), ref, mask)
             for s in range(20)]
    assert max(clean) < min(nulls) - 20 * np.std(nulls)
    if not center_aware:
        # amplitude 45 matches the 64x64 component scale; the 44x44 window
        # has smaller components and a ratio near 1.94 instead
        assert np.mean(nulls) / np.mean(clean) > 2


def test_decode_hsqr_clean():
    k = make_key("hsqr", 12)
    marked = embed(np.random.default_rng(0).normal(size=(4, 64, 64)), k)
    assert decode_hsqr_latent(marked, k) == (k.payload, 0)


def test_decode_hsqr_under_noise():
    rng = np.random.default_rng(99)
    ok = 0
    for t in range(200):
        k = make_key("hsqr", 5000 + t)
        marked = embed(rng.normal(size=(4, 64, 64)), k)
        q = channel_roundtrip(marked, AttackSpec("noise", {"sigma": 0.05}), ChannelConfig(0.1, t))
        try:
            ok += decode_hsqr_latent(q, k)[0] == k.payload
        except QrDecodeError:
            pass
    assert ok >= 198


def test_decode_hsqr_negated_query_fails_gracefully():
    k = make_key("hsqr", 12)
    marked = embed(np.random.default_rng(0).normal(size=(4, 64, 64)), k)
    spec = -extract_spectrum(marked, k.channel, k.region)
    try:
        payload, _ = decode_hsqr(spec, k)
    except QrDecodeError:
        return
    assert payload != k.payload


def test_bit_accuracy():
    a = bytes(range(9))
    assert bit_accuracy(a, a) == 1.0
    assert bit_accuracy(a, bytes(255 - b for b in a)) == 0.0
    flipped = bytearray(a)
    for i in range(18):
        flipped[i // 8] ^= 1 << (i % 8)
    assert bit_accuracy(bytes(flipped), a) == 0.75


@pytest.mark.parametrize("lam", [0.05, 0.3, 0.6, 0.9, 0.999, 1.0, 1.01, 1.5, 2.5, 4.0])
def test_kolmogorov_sf_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-12)


def test_ks_matches_scipy_asymptotic():
    x = np.random.default_rng(6).normal(0.1, 1.0, size=2000)
    ours = ks_test(x)
    ref = stats.kstest(x, "norm", method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-14)
    assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_ks_examples():
    zero = ks_test(np.zeros(10_000))
    assert zero.statistic == pytest.approx(0.5) and zero.p_value < 1e-12
    assert ks_test(np.random.default_rng(0).normal(0.5, 1, size=10_000)).p_value < 1e-6
    with pytest.raises(ValueError):
        ks_test(np.zeros(7))


def test_ks_p_values_calibrated():
    rng = np.random.default_rng(12)
    p = np.array([ks_test(rng.normal(size=2000)).p_value for _ in range(300)])
    assert stats.kstest(p, "uniform").pvalue > 0.001
    assert ks_test(np.random.default_rng(1).normal(size=100_000)).p_value > 0.001


def test_ks_failure_rate():
    rng = np.random.default_rng(3)
    batch = [rng.normal(size=(4, 64, 64)) for _ in range(200)]
    assert ks_failure_rate(batch) == pytest.approx(0.05, abs=0.03)
    assert ks_failure_rate(batch[:5], alpha=1.0) == 1.0
    with pytest.raises(ValueError):
        ks_failure_rate([])


def test_serialization():
    roc = verify_batch([1.0, 2.0], [3.0, 2.0])
    assert isinstance(roc, RocSummary)
    assert '"auc"' in roc.to_json()
    csv_text = results_to_csv([{"method": "hsqr", "attack": "identity", "auc": 1.0, "n": 2}])
    assert csv_text.splitlines()[0] == "method,attack,tpr_at_1pct_fpr,auc,max_acc,ident_acc,bit_acc,n"
    assert csv_text.splitlines()[1] == "hsqr,identity,,1.000000,,,,2"
    pts = roc_points_to_csv([(("hsqr", "identity"), roc)]).splitlines()
    assert pts[1].startswith("hsqr,identity,-inf,0.000000,0.000000")
    assert len(pts) == 1 + len(roc.thresholds)
