import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from soapool import aggregate as agg
from soapool.errors import ConfigError, DimensionMismatchError, PartitionMismatchError
from soapool.symmat import NsConfig, is_psd, ns_sqrt, sym_eig, upper_tri_vec

finite = st.floats(-100, 100, allow_nan=False)


def features(max_d=16, max_n=40):
    shape = st.tuples(st.integers(1, max_d), st.integers(1, max_n))
    return hnp.arrays(np.float64, shape, elements=finite)


def test_spoc_mac_examples():
    x = np.array([[1.0, 3.0], [2.0, 2.0]])
    assert agg.spoc(x).values.tolist() == [2.0, 2.0]
    assert agg.mac(x).values.tolist() == [3.0, 2.0]


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.just(1)), elements=finite))
def test_single_column_first_order(x):
    for f in (agg.spoc, agg.mac):
        assert np.array_equal(f(x).values, x[:, 0])


def test_spoc_mac_against_loops(rng):
    x = rng.standard_normal((4, 100))
    want = [sum(row) / len(row) for row in x.tolist()]
    np.testing.assert_allclose(agg.spoc(x).values, want, rtol=1e-12)
    y = rng.standard_normal((8, 50))
    assert agg.mac(y).values.tolist() == [max(r) for r in y.tolist()]


def test_gem_examples():
    assert agg.gem([[1.0, 3.0]], 2.0).values[0] == pytest.approx(np.sqrt(5.0), rel=1e-12)
    assert abs(agg.gem([[1.0, 3.0]], 100.0).values[0] - 3.0) <= 0.02 * 3.0


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 30)),
                  elements=st.floats(0.01, 50)))
def test_gem_p1_is_spoc_and_monotone_in_p(x):
    np.testing.assert_allclose(agg.gem(x, 1.0).values, agg.spoc(x).values, rtol=1e-12)
    g = [agg.gem(x, p).values for p in (1.0, 2.0, 4.0, 16.0)]
    for lo, hi in zip(g, g[1:]):
        assert np.all(hi >= lo * (1 - 1e-12))
    assert np.all(g[-1] <= agg.mac(x).values * (1 + 1e-12))


def test_gem_rejects_small_p_and_clamps():
    with pytest.raises(ConfigError):
        agg.gem([[1.0]], 0.5)
    v = agg.gem([[-5.0, -1.0]], 3.0).values
    assert v[0] == pytest.approx(agg.GEM_CLAMP_FLOOR)


def test_covariance_examples():
    np.testing.assert_array_equal(agg.covariance([[1.0, -1.0], [1.0, -1.0]]), np.ones((2, 2)))
    np.testing.assert_array_equal(agg.covariance([[3.0], [4.0]]), np.zeros((2, 2)))


@pytest.mark.parametrize("seed", range(5))
def test_covariance_two_pass_oracle(seed):
    x = np.random.default_rng(seed).standard_normal((6, 200))
    mean = [sum(r) / 200 for r in x.tolist()]
    want = np.array([[sum((a - ma) * (b - mb) for a, b in zip(ra, rb)) / 200
                      for rb, mb in zip(x.tolist(), mean)] for ra, ma in zip(x.tolist(), mean)])
    np.testing.assert_allclose(agg.covariance(x), want, rtol=1e-12, atol=1e-14)


def test_covariance_scales_quadratically_and_ignores_shift(rng):
    x = rng.standard_normal((5, 30))
    c = agg.covariance(x)
    np.testing.assert_allclose(agg.covariance(3.0 * x), 9.0 * c, rtol=1e-12)
    np.testing.assert_allclose(agg.covariance(x + 7.0), c, rtol=1e-9, atol=1e-12)


def test_dimension_table():
    assert agg.descriptor_dim("full", 256) == 32896
    assert agg.descriptor_dim("cps", 256, 2) == 8256
    assert agg.descriptor_dim("cps", 256, 16) == 136
    assert agg.descriptor_dim("cbp", 256, sketch_dim=8192) == 8192
    with pytest.raises(PartitionMismatchError):
        agg.descriptor_dim("cps", 256, 3)


@pytest.mark.parametrize("d,k", [(256, 1), (256, 2), (256, 16), (24, 3), (12, 12)])
def test_descriptor_dim_matches_output(d, k):
    x = np.random.default_rng(d + k).standard_normal((d, 10))
    assert agg.cps(x, agg.CpsParams(agg.PartitionConfig(k))).dim == agg.descriptor_dim("cps", d, k)


def test_partition_examples():
    x = np.arange(8.0).reshape(4, 2)
    a, b = agg.partition(x, agg.PartitionConfig(2))
    assert a.tolist() == x[:2].tolist() and b.tolist() == x[2:].tolist()
    groups = agg.partition(np.zeros((256, 3)), agg.PartitionConfig(16))
    assert [g.shape[0] for g in groups] == [16] * 16
    assert [g.shape[0] for g in agg.partition(np.zeros((5, 3)), agg.PartitionConfig(2, "ragged"))] == [3, 2]


def test_partition_errors():
    with pytest.raises(PartitionMismatchError) as e:
        agg.partition(np.zeros((256, 2)), agg.PartitionConfig(3))
    assert "256" in str(e.value) and "3" in str(e.value)
    # ceil(5/4)=2 leaves nothing for the fourth group
    with pytest.raises(PartitionMismatchError):
        agg.PartitionConfig(4, "ragged").sizes(5)
    with pytest.raises(ConfigError):
        agg.PartitionConfig(0)


@given(st.integers(1, 40), st.integers(1, 40))
def test_ragged_partition_covers_channels_in_order(d, k):
    cfg = agg.PartitionConfig(k, "ragged")
    x = np.arange(d, dtype=np.float64)[:, None]
    try:
        groups = agg.partition(x, cfg)
    except PartitionMismatchError:
        head = -(-d // k)
        assert k > d or d - head * (k - 1) < 1
        return
    assert np.array_equal(np.vstack(groups), x)
    assert len(groups) == k


def test_cps_k1_is_full_soa_bitwise(rng):
    for _ in range(20):
        x = rng.standard_normal((int(rng.integers(1, 33)), int(rng.integers(1, 100))))
        one = agg.cps(x, agg.CpsParams(agg.PartitionConfig(1), [rng.standard_normal()]))
        assert one.values.tobytes() == agg.full_soa(x).values.tobytes()


def test_cps_one_hot_selects_group(rng):
    x = rng.standard_normal((12, 40))
    raw = np.array([-800.0, 0.0, -800.0])
    z = agg.cps(x, agg.CpsParams(agg.PartitionConfig(3), raw)).values
    want = upper_tri_vec(ns_sqrt(agg.covariance(x[4:8])))
    assert np.array_equal(z, want)


def test_cps_ignores_cross_group_covariance(rng):
    x = rng.standard_normal((8, 30))
    params = agg.CpsParams(agg.PartitionConfig(2), rng.standard_normal(2))
    c = agg.covariance(x)
    base = agg.cps_from_covariance(c, params).values
    c2 = c.copy()
    c2[1, 6] += 5.0
    c2[6, 1] += 5.0
    assert np.array_equal(agg.cps_from_covariance(c2, params).values, base)
    np.testing.assert_allclose(agg.cps(x, params).values, base, rtol=1e-13, atol=1e-15)


def test_cps_is_convex_combination_of_groups(rng):
    x = rng.standard_normal((8, 30))
    params = agg.CpsParams(agg.PartitionConfig(4), rng.standard_normal(4))
    cs = agg.group_vectors(x, params)
    np.testing.assert_allclose(agg.cps(x, params).values, params.weights @ cs, rtol=1e-13)
    assert params.weights.sum() == pytest.approx(1.0)


def test_cps_requires_strict_mode():
    with pytest.raises(ConfigError):
        agg.cps(np.ones((5, 4)), agg.CpsParams(agg.PartitionConfig(2, "ragged")))


def test_cps_weight_count_checked():
    with pytest.raises(ConfigError):
        agg.CpsParams(agg.PartitionConfig(3), [0.0, 1.0])


ALL = {
    "spoc": agg.spoc,
    "mac": agg.mac,
    "gem": lambda x: agg.gem(x, 3.0),
    "cov": agg.full_soa,
    "cps": lambda x: agg.cps(x, agg.CpsParams(agg.PartitionConfig(2), [0.2, -0.4])),
    "cbp": lambda x: agg.cbp_ts(x, agg.SketchConfig.make(x.shape[0], 128, 1)),
    "kernel": lambda x: agg.kernel_soa(x, 4.0),
}


@pytest.mark.parametrize("name", sorted(ALL))
@pytest.mark.parametrize("seed", range(4))
def test_permutation_invariance(name, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2 * int(rng.integers(1, 8)), int(rng.integers(2, 90))))
    perm = rng.permutation(x.shape[1])
    a, b = ALL[name](x).values, ALL[name](x[:, perm]).values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_cbp_examples():
    sk = agg.SketchConfig.make(6, 64, 3)
    assert np.array_equal(agg.cbp_ts(np.zeros((6, 5)), sk).values, np.zeros(64))
    x = np.random.default_rng(0).standard_normal((6, 9))
    again = agg.SketchConfig.make(6, 64, 3)
    assert agg.cbp_ts(x, sk).values.tobytes() == agg.cbp_ts(x, again).values.tobytes()


def test_cbp_matches_dense_tensor_sketch(rng):
    # explicit count sketch of vec(x x^T) with hash (h1+h2) mod D and sign s1*s2
    d, D = 5, 16
    sk = agg.SketchConfig.make(d, D, 2)
    x = rng.standard_normal((d, 7))
    want = np.zeros(D)
    for col in x.T:
        for i in range(d):
            for j in range(d):
                want[(sk.h1[i] + sk.h2[j]) % D] += sk.s1[i] * sk.s2[j] * col[i] * col[j]
    np.testing.assert_allclose(agg.cbp_ts(x, sk).values, want / 7, atol=1e-12)


def test_cbp_chunking_does_not_change_result(rng, monkeypatch):
    x = rng.standard_normal((4, 50))
    sk = agg.SketchConfig.make(4, 32, 0)
    full = agg.cbp_ts(x, sk).values
    monkeypatch.setattr(agg, "_SKETCH_CHUNK_ELEMS", 32 * 7)
    np.testing.assert_allclose(agg.cbp_ts(x, sk).values, full, atol=1e-13)


def test_cbp_inner_product_estimates_squared_dot():
    x = np.array([[1.0], [0.5], [-0.3], [0.8], [0.2], [-1.0]])
    y = np.array([[0.9], [0.4], [-0.1], [1.0], [0.0], [-0.6]])
    exact = float(x[:, 0] @ y[:, 0]) ** 2
    est = np.mean([agg.cbp_ts(x, agg.SketchConfig.make(6, 32, s)).values
                   @ agg.cbp_ts(y, agg.SketchConfig.make(6, 32, s)).values for s in range(200)])
    assert abs(est - exact) <= 0.1 * exact


def test_cbp_dimension_checked():
    with pytest.raises(DimensionMismatchError):
        agg.cbp_ts(np.ones((3, 2)), agg.SketchConfig.make(4, 8))


def test_kernel_examples(rng):
    same = np.tile(rng.standard_normal(20), (4, 1))
    assert np.array_equal(agg.rbf_kernel_matrix(same, 1.0), np.ones((4, 4)))
    bounded = rng.uniform(-1, 1, size=(5, 30))
    assert np.max(np.abs(agg.rbf_kernel_matrix(bounded, 1e6) - 1.0)) <= 1e-6
    k = agg.rbf_kernel_matrix(rng.standard_normal((8, 40)), 1.0)
    assert np.array_equal(k, k.T)
    assert sym_eig(k)[0][-1] >= -1e-8
    with pytest.raises(ConfigError):
        agg.rbf_kernel_matrix(bounded, 0.0)


def test_full_soa_output_is_psd_square_root(rng):
    x = rng.standard_normal((6, 50))
    r = agg.full_soa(x, NsConfig(30)).values
    from soapool.symmat import unflatten_upper
    m = unflatten_upper(r)
    assert is_psd(m)
    np.testing.assert_allclose(m @ m, agg.covariance(x), atol=1e-8)


@given(features())
def test_descriptors_finite_and_sized(x):
    d = x.shape[0]
    assert agg.full_soa(x).dim == d * (d + 1) // 2
    assert agg.spoc(x).dim == d


def test_non_finite_features_rejected():
    with pytest.raises(ConfigError):
        agg.spoc([[np.nan, 1.0]])
    with pytest.raises(DimensionMismatchError):
        agg.spoc(np.ones(3))


def test_method_tags_track_parameters():
    a = agg.AggregatorSpec("cps", k=2)
    assert a.tag == a.replace().tag
    assert a.tag != a.replace(raw_weights=(0.1, 0.0)).tag
    assert a.tag != a.replace(ns_iters=6).tag
    assert agg.AggregatorSpec("full_soa").tag == agg.AggregatorSpec("cov").tag
    assert agg.AggregatorSpec("gem", p=2.0).tag != agg.AggregatorSpec("gem", p=2.0000001).tag
    assert agg.AggregatorSpec("cov").tag != agg.AggregatorSpec("cps", k=1).tag


@pytest.mark.parametrize("method", agg.METHODS)
def test_spec_call_matches_tag_and_dim(method, rng):
    spec = agg.AggregatorSpec(method, k=2, sketch_dim=64, sigma=4.0)
    d = spec(rng.standard_normal((8, 20)))
    assert d.method_tag == spec.tag and d.dim == spec.dim(8)


def test_spec_validation():
    with pytest.raises(ConfigError):
        agg.AggregatorSpec("vlad")
    with pytest.raises(ConfigError):
        agg.AggregatorSpec("gem", p=0.9)
    with pytest.raises(ConfigError):
        agg.AggregatorSpec("cps", k=2, raw_weights=(1.0,))
