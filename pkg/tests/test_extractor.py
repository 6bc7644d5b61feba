import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_idw, brute_pool

from greenseg.core_io import PointCloud
from greenseg.errors import ArgumentError, FormatError, StateError
from greenseg import extractor
from greenseg.extractor import (
    HopConfig,
    StandardizationParams,
    decode,
    encode,
    encoder_hop,
    extract_units,
    fit_encode,
    interpolate,
    output_width,
    pool_neighbors,
    positional_encode,
    quantize_features,
)


def unit(n, d=21, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 3)) * [4, 3, 2.5]
    return PointCloud(pos, np.zeros((n, 3)), attributes=rng.normal(size=(n, d)), unit_id=f"u{seed}")


def test_positional_examples():
    np.testing.assert_array_equal(positional_encode([1, 2, 3], [1, 2, 3]), [1, 2, 3, 1, 2, 3, 0, 0, 0, 0])
    np.testing.assert_array_equal(positional_encode([0, 0, 0], [3, 4, 0]), [0, 0, 0, 3, 4, 0, -3, -4, 0, 5])


finite = st.floats(-100, 100, allow_nan=False)


@given(st.lists(finite, min_size=6, max_size=6))
def test_positional_consistency(v):
    code = positional_encode(v[:3], v[3:])
    np.testing.assert_allclose(code[6:9], np.subtract(v[:3], v[3:]), atol=1e-12)
    assert code[9] >= 0
    assert code[9] == pytest.approx(np.sqrt(np.sum(code[6:9] ** 2)), abs=1e-9)


def test_hop_config_validation():
    with pytest.raises(ArgumentError):
        HopConfig(sample_ratios=(0.25, 0.25, 0.5))
    with pytest.raises(ArgumentError):
        HopConfig(sample_ratios=(0.25, 0.0, 0.5, 0.5))
    with pytest.raises(ArgumentError):
        HopConfig(k_neighbors=0)


def test_single_point_hop():
    pos = np.array([[1.0, 2.0, 3.0]])
    feat = np.array([[5.0, -1.0]])
    pts, out, mean, std, centers = encoder_hop(pos, feat, HopConfig(), 0)
    assert out.shape == (1, 12) and centers.tolist() == [0]
    pooled = np.array([5.0, -1.0, 1, 2, 3, 1, 2, 3, 0, 0, 0, 0])
    np.testing.assert_allclose(out[0] * max(std, extractor.STD_EPS) + mean, pooled, atol=1e-12)
    np.testing.assert_array_equal(pts, pos)


def test_pool_matches_gather_and_max_oracle():
    rng = np.random.default_rng(0)
    pos = rng.random((5, 3))
    feats = rng.normal(size=(5, 4))
    centers = np.array([0, 3])
    for k in (1, 3, 5, 8):
        np.testing.assert_allclose(pool_neighbors(pos, feats, centers, k), brute_pool(pos, feats, centers, k), atol=0)


def test_pool_larger_oracle():
    rng = np.random.default_rng(1)
    pos = rng.random((300, 3))
    feats = rng.normal(size=(300, 6))
    centers = rng.choice(300, 40, replace=False)
    np.testing.assert_array_equal(pool_neighbors(pos, feats, centers, 64), brute_pool(pos, feats, centers, 64))


def test_pool_permutation_invariant():
    rng = np.random.default_rng(2)
    pos = rng.random((400, 3))
    feats = rng.normal(size=(400, 21))
    centers = rng.choice(400, 100, replace=False)
    perm = rng.permutation(400)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(400)
    a = pool_neighbors(pos, feats, centers, 64)
    b = pool_neighbors(pos[perm], feats[perm], inv[centers], 64)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("d", [1, 5, 21])
def test_width_grows_by_ten(d):
    _, out, *_ = encoder_hop(np.random.default_rng(0).random((50, 3)), np.ones((50, d)), HopConfig(), 0)
    assert out.shape[1] == d + 10


def test_encode_widths_sizes_and_params():
    pyr = encode(unit(1024))
    assert pyr.widths == [21, 31, 41, 51, 61]
    assert pyr.sizes == [1024, 256, 64, 32, 16]
    assert pyr.params.parameter_count == 8
    for h in pyr.hops:
        assert abs(h.features.mean()) < 1e-6 and abs(h.features.std() - 1) < 1e-6
        assert len(np.unique(h.indices)) == h.indices.size


def test_encode_deterministic():
    a, b = encode(unit(700, seed=3)), encode(unit(700, seed=3))
    for ha, hb in zip(a.hops, b.hops):
        assert ha.features.tobytes() == hb.features.tobytes()
        np.testing.assert_array_equal(ha.indices, hb.indices)
    c = encode(unit(700, seed=3), HopConfig(seed=1))
    assert not np.array_equal(a.hops[0].indices, c.hops[0].indices)


def test_encode_with_stored_params():
    u = unit(500)
    params = StandardizationParams((1.0, 2.0, 3.0, 4.0), (2.0, 2.0, 2.0, 2.0))
    pyr = encode(u, params=params)
    assert pyr.params == params
    with pytest.raises(StateError):
        encode(u, HopConfig(num_hops=2, sample_ratios=(0.5, 0.5)), params=params)


def test_encode_needs_attributes():
    with pytest.raises(StateError):
        encode(PointCloud(np.zeros((3, 3)), np.zeros((3, 3))))
    with pytest.raises(StateError):
        encoder_hop(np.zeros((0, 3)), np.zeros((0, 4)), HopConfig(), 0)


def test_no_label_parameters():
    for fn in (encoder_hop, encode, fit_encode, decode, extract_units, pool_neighbors):
        assert not any("label" in p for p in inspect.signature(fn).parameters)


def test_fit_encode_global_standardization():
    units = [unit(n, seed=i) for i, n in enumerate([300, 800, 120])]
    pyramids, params = fit_encode(units)
    assert params.parameter_count == 8
    for h in range(4):
        stacked = np.concatenate([p.hops[h].features.ravel() for p in pyramids])
        assert abs(stacked.mean()) < 1e-6 and abs(stacked.std() - 1) < 1e-6
    # applying the stored statistics reproduces the training pyramids
    for i, u in enumerate(units):
        again = encode(u, params=params, unit_index=i)
        for a, b in zip(again.hops, pyramids[i].hops):
            np.testing.assert_allclose(a.features, b.features, rtol=0, atol=1e-12)


def test_fit_encode_workers_do_not_change_results():
    units = [unit(400, seed=i) for i in range(4)]
    a, pa = fit_encode(units, workers=1)
    b, pb = fit_encode(units, workers=3)
    assert pa == pb
    for x, y in zip(a, b):
        for hx, hy in zip(x.hops, y.hops):
            assert hx.features.tobytes() == hy.features.tobytes()


def test_params_file_round_trip(tmp_path):
    params = StandardizationParams((0.1, -2.5, 3.0000000000000004, 1e-300), (1.0, 0.3, 7.25, 2.0))
    params.save(tmp_path / "p.txt")
    assert StandardizationParams.load(tmp_path / "p.txt") == params
    (tmp_path / "bad.txt").write_text("hop1.mean=1\nhop1.std=2\nhop3.mean=1\nhop3.std=1\n")
    with pytest.raises(FormatError):
        StandardizationParams.load(tmp_path / "bad.txt")


def test_interpolate_zero_distance_copy():
    rng = np.random.default_rng(0)
    coarse = rng.random((20, 3))
    feats = rng.normal(size=(20, 7)) * 1e3
    out = interpolate(coarse, feats, coarse[[3, 11]], 3)
    assert out.tobytes() == feats[[3, 11]].tobytes()


def test_interpolate_equidistant_mean():
    coarse = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [5, 5, 5]])
    feats = np.array([[3.0, 0], [6.0, 3], [9.0, 9], [100, 100]])
    out = interpolate(coarse, feats, [[0, 0, 0]], 3)
    np.testing.assert_allclose(out[0], [6.0, 4.0])


def test_interpolate_matches_idw_oracle():
    rng = np.random.default_rng(4)
    coarse = rng.random((30, 3))
    feats = rng.normal(size=(30, 5))
    fine = np.vstack([rng.random((100, 3)), coarse[:5]])
    np.testing.assert_allclose(interpolate(coarse, feats, fine, 3), brute_idw(coarse, feats, fine, 3), atol=1e-12)
    np.testing.assert_allclose(interpolate(coarse[:2], feats[:2], fine, 3), brute_idw(coarse[:2], feats[:2], fine, 3))


def _decode_oracle(pyr):
    level_pos = [pyr.positions] + [h.positions for h in pyr.hops]
    level_feat = [pyr.attributes] + [h.features for h in pyr.hops]
    f = level_feat[-1]
    for lvl in range(len(level_pos) - 2, -1, -1):
        f = np.hstack([brute_idw(level_pos[lvl + 1], f, level_pos[lvl], 3), level_feat[lvl]])
    return f


def test_decode_matches_oracle():
    pyr = encode(unit(200, seed=7))
    out = decode(pyr, pyr.positions)
    assert out.shape == (200, 205) == (200, output_width(21, 4))
    np.testing.assert_allclose(out, _decode_oracle(pyr), atol=1e-9)
    # the attributes sit in the last 21 columns unchanged
    np.testing.assert_array_equal(out[:, -21:], pyr.attributes)


def test_decode_position_mismatch():
    pyr = encode(unit(100))
    with pytest.raises(StateError):
        decode(pyr, pyr.positions[:-1])


@settings(max_examples=15)
@given(n=st.integers(1, 300), seed=st.integers(0, 1000))
def test_decode_row_count(n, seed):
    pyr = encode(unit(n, seed=seed))
    assert decode(pyr, pyr.positions).shape == (n, 205)


def test_quantize():
    x = np.array([[1.0000001, 2.5]], dtype=np.float32)
    np.testing.assert_array_equal(quantize_features(x, "f32"), x)
    assert quantize_features(np.array([1.0000001]), "f16")[0] == 1.0
    assert quantize_features(x, "f16").dtype == np.float16
    with pytest.raises(ArgumentError):
        quantize_features(x, "f8")
    with pytest.raises(StateError):
        quantize_features(np.array([np.nan]), "f32")


def test_extract_units_train_then_test():
    train = [unit(300, seed=i) for i in range(3)]
    test = [unit(250, seed=10)]
    feats, params = extract_units(train)
    assert all(f.shape == (len(u), 205) and f.dtype == np.float32 for f, u in zip(feats, train))
    tf, same = extract_units(test, params=params, precision="f16")
    assert same is params and tf[0].dtype == np.float16 and tf[0].shape == (250, 205)
