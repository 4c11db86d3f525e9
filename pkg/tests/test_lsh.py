from dataclasses import replace

import numpy as np
import pytest
from core.errors import (
    DimensionError,
    NormalizationError,
    ParamsError,
    SignatureError,
)
from core.hashing import JsLshParams, MinHashParams, minhash_scheme
from datasketch import MinHash
from engine.lsh import (
    BandIndex,
    JsLshIndex,
    band_digest,
    bands_collide,
    collision_probability,
    estimate_distance,
    estimate_jaccard,
    estimate_js,
    hash_matrix,
    jslsh_hash,
    jslsh_matrix,
    label_normals,
    match_matrix,
    minhash_matrix,
    minhash_signatures,
    project_hash,
    projection_matrix,
    scaled_params,
    unit_offsets,
)
from engine.metrics import js_divergence
from scipy.stats import spearmanr

MINHASH = MinHashParams(k_per_band=4, num_bands=32, master_seed=1)


def test_minhash_shape_and_determinism():
    tokens = {"a", "b", "c"}
    matrix = minhash_matrix(tokens, MINHASH)
    assert matrix.shape == (32, 4)
    assert np.array_equal(matrix, minhash_matrix(["c", "b", "a", "a"], MINHASH))
    signatures = minhash_signatures(tokens, MINHASH)
    assert len(signatures) == 32
    assert signatures[3].band_index == 3
    assert signatures[3].values == tuple(matrix[3].tolist())


def test_minhash_rejects_empty_set():
    with pytest.raises(SignatureError):
        minhash_matrix([], MINHASH)


def test_minhash_tracks_jaccard():
    # Each pair shares 50 of 150 tokens: Jaccard 1/3.
    estimates = []
    for trial in range(20):
        a = {f"{trial}:{i}" for i in range(100)}
        b = {f"{trial}:{i}" for i in range(50, 150)}
        estimates.append(
            estimate_jaccard(minhash_matrix(a, MINHASH), minhash_matrix(b, MINHASH))
        )
    assert np.mean(estimates) == pytest.approx(1 / 3, abs=0.03)


def test_label_normals_are_standard_normal():
    normals = label_normals(5, "f#0/8", 20000)
    assert abs(normals.mean()) < 0.05
    assert normals.std() == pytest.approx(1.0, abs=0.05)
    assert np.array_equal(normals, label_normals(5, "f#0/8", 20000))
    assert not np.array_equal(normals, label_normals(6, "f#0/8", 20000))


def test_unit_offsets_range():
    offsets = unit_offsets(2, 1000)
    assert offsets.min() >= 0.0
    assert offsets.max() < 1.0


def test_projection_is_keyed_by_label():
    params = JsLshParams()
    both = projection_matrix(params, ["a", "b"])
    only_b = projection_matrix(params, ["b"])
    assert both.shape == (params.num_functions, 2)
    assert np.array_equal(both[:, 1], only_b[:, 0])


def test_hash_matrix_agrees_with_single_hash():
    params = JsLshParams(k_per_band=3, num_bands=4, r=0.7, master_seed=9)
    labels = ["x", "y", "z"]
    row = np.array([0.2, 0.5, 0.3])
    hashes = hash_matrix(row, params, labels)
    assert hashes.shape == (1, 4, 3)
    a = projection_matrix(params, labels)
    b = unit_offsets(params.master_seed, params.num_functions) * params.r
    slot = 2 * params.k_per_band + 1
    assert hashes[0, 2, 1] == project_hash(row, a[slot], b[slot], params.r)


def test_hash_matrix_checks_dimension():
    with pytest.raises(DimensionError):
        hash_matrix(np.array([0.5, 0.5]), JsLshParams(), ["only"])


def test_jslsh_requires_distribution():
    with pytest.raises(NormalizationError):
        jslsh_matrix(np.array([0.5, 0.6]), JsLshParams(), ["a", "b"])
    with pytest.raises(NormalizationError):
        jslsh_matrix(np.array([1.5, -0.5]), JsLshParams(), ["a", "b"])


def test_jslsh_hash_single_slot():
    params = JsLshParams()
    p = np.array([0.25, 0.75])
    matrix = jslsh_matrix(p, params, ["a", "b"])
    assert jslsh_hash(p, 4, 7, params, ["a", "b"]) == matrix[0, 4, 7]


def test_identical_distributions_collide():
    params = JsLshParams()
    p = np.array([0.1, 0.2, 0.7])
    a = jslsh_matrix(p, params, ["a", "b", "c"])[0]
    b = jslsh_matrix(p.copy(), params, ["a", "b", "c"])[0]
    assert bands_collide(a, b)
    assert band_digest(a[0]) == band_digest(b[0])


def test_band_index():
    index = BandIndex(num_bands=2)
    index.add("m1", np.array([[1, 2], [3, 4]]))
    index.add("m2", np.array([[1, 2], [9, 9]]))
    assert index.query(np.array([[1, 2], [0, 0]])) == {"m1", "m2"}
    assert index.query(np.array([[0, 0], [9, 9]])) == {"m2"}
    assert index.query(np.array([[0, 0], [0, 0]])) == set()
    assert len(index) == 2
    with pytest.raises(SignatureError):
        index.query(np.array([[1, 2]]))


def test_match_matrix_orientation():
    source = np.array([[[1, 1]], [[2, 2]], [[3, 3]]])
    target = np.array([[[2, 2]]])
    matched = match_matrix(source, target)
    assert matched.shape == (3, 1)
    assert matched[:, 0].tolist() == [False, True, False]
    assert match_matrix(target, source).T.tolist() == matched.tolist()


def test_collision_curve():
    assert collision_probability(0.0, 1.5) == 1.0
    curve = [collision_probability(d, 1.5) for d in (0.1, 0.3, 0.6, 1.0, 1.4)]
    assert curve == sorted(curve, reverse=True)
    fraction = collision_probability(0.3, 1.5)
    assert estimate_distance(fraction, 1.5) == pytest.approx(0.3, abs=1e-6)
    assert estimate_distance(1.0, 1.5) == 0.0
    assert estimate_js(1.0, 1.5) == 0.0


def test_scaled_params_widen_with_threshold():
    params = JsLshParams(r=1.5)
    assert scaled_params(params, 0.1).r == pytest.approx(1.5)
    assert scaled_params(params, 0.4).r == pytest.approx(3.0)


def test_band_collisions_fall_with_js():
    rng = np.random.default_rng(4)
    params = JsLshParams(k_per_band=2, num_bands=250, r=1.0)
    labels = [f"d{i}" for i in range(16)]
    p = rng.dirichlet(np.ones(16), size=1000)
    mix = rng.random((1000, 1))
    q = (1 - mix) * p + mix * rng.dirichlet(np.ones(16), size=1000)
    q = q / q.sum(axis=1, keepdims=True)
    a = jslsh_matrix(p, params, labels)
    b = jslsh_matrix(q, params, labels)
    rate = np.mean(np.all(a == b, axis=2), axis=1)
    js = [js_divergence(x, y).value for x, y in zip(p, q)]
    rho, _ = spearmanr(js, rate)
    assert rho < -0.9


def test_js_index_finds_neighbours():
    labels = [f"d{i}" for i in range(8)]
    near = np.full(8, 1 / 8)
    far = np.zeros(8)
    far[0] = 1.0
    index = JsLshIndex(JsLshParams(), labels, t_js=0.1)
    index.add_many(["near", "far"], np.stack([near, far]))
    assert len(index) == 2
    other = np.zeros(8)
    other[7] = 1.0
    assert "near" in index.query(near)
    assert "far" not in index.query(other)


def test_minhash_uses_library_hashing():
    tokens = ["f=b", "f=a", "g#3/8"]
    reference = MinHash(num_perm=128, seed=1)
    reference.update_batch(sorted(t.encode("utf-8") for t in tokens))
    matrix = minhash_matrix(tokens, MINHASH)
    assert matrix.ravel().tolist() == [int(v) for v in reference.hashvalues]
    assert MINHASH.scheme == minhash_scheme()


def test_minhash_rejects_foreign_scheme():
    with pytest.raises(ParamsError, match="datasketch-0"):
        minhash_matrix(["a"], replace(MINHASH, scheme="datasketch-0"))


def test_minhash_estimate_is_unbiased_over_many_pairs():
    rng = np.random.default_rng(12)
    exact, estimated = [], []
    for pair in range(10000):
        a = {f"{pair}:{i}" for i in rng.choice(30, size=rng.integers(1, 16))}
        b = {f"{pair}:{i}" for i in rng.choice(30, size=rng.integers(1, 16))}
        exact.append(len(a & b) / len(a | b))
        estimated.append(
            estimate_jaccard(minhash_matrix(a, MINHASH), minhash_matrix(b, MINHASH))
        )
    assert np.mean(estimated) == pytest.approx(np.mean(exact), abs=0.03)
