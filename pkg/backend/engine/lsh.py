"""Seeded hash families and banding.

MinHash estimates Jaccard similarity of bin-token sets. JS-LSH hashes the
elementwise square root of a distribution with a p-stable projection,
h = ceil((a . sqrt(P) + b) / r), so collisions track the Hellinger distance
and therefore JS divergence. L2-LSH is the same projection over raw vectors.

Projection entries are keyed by dimension label, not position: two datasets
projected onto the same shared bins see the same ``a`` entries for those bins
whatever else either dataset contains.
"""

import hashlib
import math
from collections import defaultdict
from collections.abc import Hashable, Iterable, Sequence
from functools import lru_cache

import numpy as np
from core.errors import (
    DimensionError,
    NormalizationError,
    ParamsError,
    SignatureError,
)
from core.hashing import JsLshParams, MinHashParams, Signature, minhash_scheme
from core.sketch import NORMALIZATION_TOLERANCE, ProbabilityVector
from datasketch import MinHash
from scipy.optimize import brentq
from scipy.stats import norm

# JsLshParams.r is calibrated for this JS threshold (nats).
REFERENCE_JS_THRESHOLD = 0.1
# Upper bound of the Hellinger distance ||sqrt(P) - sqrt(Q)||.
MAX_HELLINGER_DISTANCE = math.sqrt(2.0)

_TWO_POW_53 = float(2**53)


# MinHash


def minhash_matrix(tokens: Iterable[str], params: MinHashParams) -> np.ndarray:
    """MinHash values of a token set, shape (L, K); slot k of band b is b*K+k."""
    encoded = sorted({t.encode("utf-8") for t in tokens})
    if not encoded:
        raise SignatureError("cannot MinHash an empty token set")
    if params.scheme != minhash_scheme():
        raise ParamsError(
            f"MinHash scheme {params.scheme} differs from the installed "
            f"{minhash_scheme()}"
        )
    mh = MinHash(num_perm=params.num_functions, seed=params.master_seed)
    mh.update_batch(encoded)
    values = np.asarray(mh.hashvalues, dtype=np.int64)
    return values.reshape(params.num_bands, params.k_per_band)


def signatures_from_matrix(matrix: np.ndarray) -> list[Signature]:
    return [
        Signature(band_index=b, values=tuple(int(v) for v in row))
        for b, row in enumerate(matrix)
    ]


def minhash_signatures(tokens: Iterable[str], params: MinHashParams) -> list[Signature]:
    return signatures_from_matrix(minhash_matrix(tokens, params))


def estimate_jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of equal MinHash slots."""
    return float(np.mean(a == b))


# p-stable projections


def _philox(*key_parts) -> np.random.Philox:
    material = ":".join(str(p) for p in key_parts).encode("utf-8")
    key = int.from_bytes(hashlib.blake2b(material, digest_size=16).digest(), "big")
    return np.random.Philox(key=key)


def _box_muller(raw: np.ndarray) -> np.ndarray:
    # Two 64-bit lanes per variate: u1 in (0, 1], u2 in [0, 1).
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO_POW_53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) / _TWO_POW_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@lru_cache(maxsize=65536)
def label_normals(master_seed: int, label: str, count: int) -> np.ndarray:
    """Standard normal projection entries of one dimension, one per hash slot."""
    raw = _philox(master_seed, "dim", label).random_raw(2 * count)
    normals = _box_muller(raw)
    normals.setflags(write=False)
    return normals


@lru_cache(maxsize=256)
def unit_offsets(master_seed: int, count: int) -> np.ndarray:
    """Offsets ``b / r`` per hash slot, uniform on [0, 1)."""
    raw = _philox(master_seed, "offset").random_raw(count)
    offsets = (raw >> np.uint64(11)).astype(np.float64) / _TWO_POW_53
    offsets.setflags(write=False)
    return offsets


def projection_matrix(params: JsLshParams, labels: Sequence[str]) -> np.ndarray:
    """The ``a`` vectors of every hash slot, shape (K*L, len(labels))."""
    if not labels:
        raise DimensionError("projection needs at least one dimension label")
    count = params.num_functions
    return np.stack(
        [label_normals(params.master_seed, label, count) for label in labels], axis=1
    )


def project_hash(values, a, b: float, r: float) -> int:
    """ceil((a . values + b) / r) for one hash function."""
    return math.ceil((float(np.dot(a, values)) + b) / r)


def hash_matrix(
    rows: np.ndarray, params: JsLshParams, labels: Sequence[str]
) -> np.ndarray:
    """p-stable hashes of every row, shape (rows, L, K)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(labels):
        raise DimensionError(
            f"{rows.shape[1]}-dimensional input with {len(labels)} labels"
        )
    a = projection_matrix(params, labels)
    b = unit_offsets(params.master_seed, params.num_functions) * params.r
    hashes = np.ceil((rows @ a.T + b) / params.r).astype(np.int64)
    return hashes.reshape(rows.shape[0], params.num_bands, params.k_per_band)


def _check_normalized(rows: np.ndarray) -> None:
    if np.any(rows < 0) or np.any(
        np.abs(rows.sum(axis=1) - 1.0) > NORMALIZATION_TOLERANCE
    ):
        raise NormalizationError("JS-LSH input is not a probability distribution")


def jslsh_matrix(
    probabilities: np.ndarray, params: JsLshParams, labels: Sequence[str]
) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    _check_normalized(rows)
    return hash_matrix(np.sqrt(rows), params, labels)


def _vector_and_labels(P, labels):
    if isinstance(P, ProbabilityVector):
        return P.entries, labels if labels is not None else P.labels
    return np.asarray(P, dtype=np.float64), labels


def jslsh_hash(
    P: ProbabilityVector,
    band: int,
    slot: int,
    params: JsLshParams,
    dimension_labels: Sequence[str] | None = None,
) -> int:
    entries, labels = _vector_and_labels(P, dimension_labels)
    if not labels or len(labels) != len(entries):
        raise DimensionError("one dimension label per entry is required")
    _check_normalized(entries[None, :])
    if not (0 <= band < params.num_bands and 0 <= slot < params.k_per_band):
        raise ValueError(f"no hash function at band {band}, slot {slot}")
    index = band * params.k_per_band + slot
    a = projection_matrix(params, labels)[index]
    b = unit_offsets(params.master_seed, params.num_functions)[index] * params.r
    return project_hash(np.sqrt(entries), a, b, params.r)


def jslsh_signatures(
    P: ProbabilityVector,
    params: JsLshParams,
    dimension_labels: Sequence[str] | None = None,
) -> list[Signature]:
    entries, labels = _vector_and_labels(P, dimension_labels)
    return signatures_from_matrix(jslsh_matrix(entries, params, labels)[0])


def l2lsh_signatures(
    v, params: JsLshParams, dimension_labels: Sequence[str]
) -> list[Signature]:
    return signatures_from_matrix(hash_matrix(v, params, dimension_labels)[0])


def scaled_params(params: JsLshParams, t_js: float) -> JsLshParams:
    """Widen or narrow the buckets for a JS threshold other than the reference.

    Near zero, JS is about half the squared distance between the square-root
    vectors, so the width scales with sqrt(t_js).
    """
    t = max(t_js, 1e-6)
    return params.with_width(params.r * math.sqrt(t / REFERENCE_JS_THRESHOLD))


# Banding


def band_digest(values) -> int:
    """Stable 64-bit digest of one band's K values."""
    data = np.ascontiguousarray(values, dtype="<i8").tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def bands_collide(a: np.ndarray, b: np.ndarray) -> bool:
    """True when any band of two (L, K) signatures matches on all K values."""
    return bool(np.any(np.all(a == b, axis=1)))


class BandIndex:
    """Query-time per-band hash tables over (L, K) signature matrices.

    Buckets are keyed by the band's K values themselves.
    """

    def __init__(self, num_bands: int):
        self.num_bands = num_bands
        self._tables: list[defaultdict[tuple[int, ...], list[Hashable]]] = [
            defaultdict(list) for _ in range(num_bands)
        ]
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def _check(self, signature: np.ndarray) -> None:
        if signature.shape[0] != self.num_bands:
            raise SignatureError(
                f"signature has {signature.shape[0]} bands, index has {self.num_bands}"
            )

    def add(self, key: Hashable, signature: np.ndarray) -> None:
        self._check(signature)
        for table, row in zip(self._tables, signature.tolist()):
            table[tuple(row)].append(key)
        self._size += 1

    def query(self, signature: np.ndarray) -> set[Hashable]:
        self._check(signature)
        found = set()
        for table, row in zip(self._tables, signature.tolist()):
            found.update(table.get(tuple(row), ()))
        return found


def match_matrix(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Boolean (source, target) matrix of band collisions between partitions.

    The side with more partitions is indexed and the other is looked up in it.
    """
    matched = np.zeros((source.shape[0], target.shape[0]), dtype=bool)
    index_source = source.shape[0] >= target.shape[0]
    indexed, probing = (source, target) if index_source else (target, source)
    index = BandIndex(indexed.shape[1])
    for i, signature in enumerate(indexed):
        index.add(i, signature)
    for j, signature in enumerate(probing):
        for i in index.query(signature):
            if index_source:
                matched[i, j] = True
            else:
                matched[j, i] = True
    return matched


class JsLshIndex:
    """JS neighbour index over distributions laid out on one label space."""

    def __init__(
        self,
        params: JsLshParams,
        labels: Sequence[str],
        t_js: float = REFERENCE_JS_THRESHOLD,
    ):
        self.labels = tuple(labels)
        self.params = scaled_params(params, t_js)
        self._index = BandIndex(self.params.num_bands)

    def __len__(self) -> int:
        return len(self._index)

    def add_many(self, keys: Sequence[Hashable], probabilities: np.ndarray) -> None:
        hashes = jslsh_matrix(probabilities, self.params, self.labels)
        for key, signature in zip(keys, hashes):
            self._index.add(key, signature)

    def query(self, probability: np.ndarray) -> set[Hashable]:
        return self._index.query(
            jslsh_matrix(probability, self.params, self.labels)[0]
        )


# Collision-curve inversion


def collision_probability(distance: float, r: float) -> float:
    """Probability that one p-stable hash of width ``r`` collides at ``distance``."""
    if distance <= 0:
        return 1.0
    c = r / distance
    return float(
        1.0
        - 2.0 * norm.cdf(-c)
        - 2.0 / (math.sqrt(2.0 * math.pi) * c) * (1.0 - math.exp(-(c**2) / 2.0))
    )


def estimate_distance(
    fraction: float, r: float, upper: float = MAX_HELLINGER_DISTANCE
) -> float:
    """Distance whose single-hash collision probability equals ``fraction``."""
    if fraction >= 1.0:
        return 0.0
    if fraction <= collision_probability(upper, r):
        return upper
    return float(
        brentq(lambda d: collision_probability(d, r) - fraction, 1e-12, upper)
    )


def estimate_js(fraction: float, r: float) -> float:
    d = estimate_distance(fraction, r)
    return min(d * d / 2.0, math.log(2.0))
