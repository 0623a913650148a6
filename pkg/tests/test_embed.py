import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gazepersist.embed import (
    EMBEDDING_DIM,
    MIN_SEQUENCE_LENGTH,
    SeededConvEmbedder,
    StatFeatureEmbedder,
    _band_edges,
    build_embedding_matrix,
    centroid,
    embed_sequence,
    make_provider,
)
from gazepersist.errors import ArgumentError
from gazepersist.model import SequenceBatch

# positions of a few statistics in the unmixed vector (horizontal channel)
MEAN, SD, RMS = 0, 1, 12
HAAR = slice(27, 31)
ACF = slice(14, 19)


@pytest.fixture(scope="module")
def conv():
    return SeededConvEmbedder(seed=3)


def _seq(L=5000, seed=0):
    return np.random.default_rng(seed).normal(size=(2, L))


def test_conv_shape_and_determinism(conv):
    x = _seq()
    a = embed_sequence(conv, x)
    assert a.shape == (EMBEDDING_DIM,)
    assert np.isfinite(a).all()
    np.testing.assert_array_equal(a, embed_sequence(SeededConvEmbedder(seed=3), x))


def test_conv_seeds_differ():
    x = _seq(400)
    outs = [embed_sequence(SeededConvEmbedder(seed=s), x) for s in (0, 1, 2)]
    assert not np.array_equal(outs[0], outs[1])
    assert not np.array_equal(outs[1], outs[2])
    assert not np.array_equal(outs[0], outs[2])


def test_conv_architecture(conv):
    assert len(conv.layers) == 8
    assert [d for _, _, d in conv.layers] == [1, 2, 4, 8, 16, 32, 64, 128]
    w0, _, _ = conv.layers[0]
    w7, _, _ = conv.layers[7]
    assert w0.shape == (3, 32, 2)
    assert w7.shape == (3, 32, 2 + 7 * 32)
    assert conv.head.shape == (2 + 8 * 32, 128)


def test_conv_batch_matches_single(conv):
    xs = np.random.default_rng(1).normal(size=(3, 2, 300))
    batch = conv(xs)
    for i in range(3):
        np.testing.assert_array_equal(batch[i], conv(xs[i]))


def test_stat_shape_and_purity():
    p = StatFeatureEmbedder()
    x = _seq()
    a = embed_sequence(p, x)
    assert a.shape == (128,)
    np.testing.assert_array_equal(a, embed_sequence(p, x.copy()))


def test_stat_zero_sequence():
    f = StatFeatureEmbedder().features(np.zeros((1, 2, 500)))[0]
    for ch in (0, 64):
        assert f[ch + MEAN] == 0.0
        assert f[ch + SD] == 0.0
        assert f[ch + RMS] == 0.0
    assert np.isfinite(f).all()


def test_stat_mixing_is_orthogonal():
    xs = np.random.default_rng(2).normal(size=(4, 2, 300))
    raw = StatFeatureEmbedder(mix=False)(xs)
    mixed = StatFeatureEmbedder()(xs)
    np.testing.assert_allclose(np.linalg.norm(mixed, axis=1), np.linalg.norm(raw, axis=1), rtol=1e-12)
    np.testing.assert_allclose(mixed @ mixed.T, raw @ raw.T, rtol=1e-10, atol=1e-10)


def test_stat_reversal_changes_multiscale_feature():
    x = np.cumsum(np.random.default_rng(4).normal(size=(2, 1000)), axis=1)
    x[:, :300] += 5.0
    p = StatFeatureEmbedder(mix=False)
    fwd, rev = p.features(x[None]), p.features(x[None, :, ::-1].copy())
    assert not np.allclose(fwd[0, HAAR], rev[0, HAAR])


def test_identical_batches_give_identical_rows():
    seqs = np.random.default_rng(0).normal(size=(4, 2, 200))
    batches = [SequenceBatch("a", "S1", seqs), SequenceBatch("b", "S1", seqs)]
    m = build_embedding_matrix(StatFeatureEmbedder(), batches, 4)
    np.testing.assert_array_equal(m.get("a", "S1"), m.get("b", "S1"))


def test_too_short_sequence():
    with pytest.raises(ArgumentError):
        embed_sequence(StatFeatureEmbedder(), np.zeros((2, MIN_SEQUENCE_LENGTH - 1)))
    with pytest.raises(ArgumentError):
        StatFeatureEmbedder()(np.zeros((3, 3, 100)))


def test_make_provider():
    assert isinstance(make_provider("stat"), StatFeatureEmbedder)
    assert make_provider("stat-raw").mix is False
    assert make_provider("seeded-conv", 5).seed == 5
    with pytest.raises(ArgumentError):
        make_provider("transformer")


@pytest.mark.parametrize("n_bins", [20, 25, 100, 625, 2500])
def test_band_edges_nonempty(n_bins):
    edges = _band_edges(n_bins)
    assert len(edges) == 9
    assert edges[0] == 1 and edges[-1] == n_bins + 1
    assert all(b > a for a, b in zip(edges, edges[1:]))


@settings(max_examples=30, deadline=None)
@given(
    L=st.integers(MIN_SEQUENCE_LENGTH, 600),
    scale=st.floats(1e-3, 1e3),
    zeros=st.floats(0, 1),
)
def test_stat_always_finite(L, scale, zeros):
    rng = np.random.default_rng(L)
    x = rng.normal(size=(2, 2, L)) * scale
    x[rng.random(x.shape) < zeros] = 0.0
    out = StatFeatureEmbedder()(x)
    assert out.shape == (2, 128) and np.isfinite(out).all()


# --- centroids ---


def test_centroid_examples():
    e = np.random.default_rng(0).normal(size=128)
    np.testing.assert_allclose(centroid([e, e, e]), e, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(centroid([e, -e]), np.zeros(128))
    a, b = np.zeros(128), np.zeros(128)
    a[0], b[1] = 1.0, 1.0
    expected = np.zeros(128)
    expected[:2] = 0.5
    np.testing.assert_array_equal(centroid([a, b]), expected)
    with pytest.raises(ArgumentError):
        centroid([])


@settings(max_examples=40, deadline=None)
@given(
    a=hnp.arrays(float, (st.integers(1, 6).map(lambda n: (n, 5))), elements=st.floats(-1e3, 1e3)),
    b=hnp.arrays(float, (st.integers(1, 6).map(lambda n: (n, 5))), elements=st.floats(-1e3, 1e3)),
)
def test_centroid_linearity(a, b):
    whole = centroid(np.vstack([a, b]))
    parts = (len(a) * centroid(a) + len(b) * centroid(b)) / (len(a) + len(b))
    np.testing.assert_allclose(whole, parts, rtol=0, atol=1e-12 * max(1.0, np.abs(np.vstack([a, b])).max()))


def test_build_matrix_first_sequence_and_shortfall():
    p = StatFeatureEmbedder()
    seqs = np.random.default_rng(1).normal(size=(12, 2, 100))
    batches = [SequenceBatch("s1", "S1", seqs), SequenceBatch("s1", "S2", seqs[::-1].copy())]
    m1 = build_embedding_matrix(p, batches, 1)
    np.testing.assert_array_equal(m1.get("s1", "S1"), p(seqs[0]))
    m12 = build_embedding_matrix(p, batches, 12)
    assert m12.values.shape == (2, 128)
    np.testing.assert_allclose(m12.get("s1", "S1"), p(seqs).mean(axis=0), rtol=0, atol=1e-12)
    with pytest.raises(ArgumentError, match="s1"):
        build_embedding_matrix(p, [SequenceBatch("s1", "S1", seqs[:9])], 10)
