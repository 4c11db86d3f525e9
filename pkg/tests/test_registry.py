import pytest
from core.errors import ConflictError, NotFoundError, ParamsError
from core.record import ModelRecord
from core.sketch import feature_id_for
from engine.registry import Registry, feature_signatures

from tests.conftest import make_sketch


def _record(model_id: str, dataset_id: str, **fields) -> ModelRecord:
    return ModelRecord(model_id=model_id, dataset_id=dataset_id, **fields)


def test_register_posts_every_feature_band(manifest, workload):
    registry = Registry(manifest)
    dataset_id = workload.source_ids[0]
    sketch = workload.sketch(dataset_id, 200)
    receipt = registry.register_model(_record("m", dataset_id), sketch)
    assert receipt.num_features == 4
    assert receipt.num_postings == 4 * manifest.minhash_params.num_bands
    assert sum(t.num_postings for t in registry.snapshot().tables) == 4 * 32
    assert "m" in registry
    assert registry.sketch_for("m") is sketch


def test_duplicate_model_id(manifest, letters):
    registry = Registry(manifest)
    registry.register_model(_record("m", "letters"), letters)
    with pytest.raises(ConflictError):
        registry.register_model(_record("m", "letters"), letters)
    assert len(registry) == 1


def test_dataset_shared_between_models(manifest, letters):
    registry = Registry(manifest)
    registry.register_model(_record("m1", "letters"), letters)
    registry.register_model(_record("m2", "letters"), letters)
    assert [r.model_id for r in registry.list_models()] == ["m1", "m2"]

    other = make_sketch("letters", {"x": ["z"] * 10})
    with pytest.raises(ConflictError):
        registry.register_model(_record("m3", "letters"), other)


def test_bins_mismatch(manifest):
    registry = Registry(manifest)
    sketch = make_sketch("t", {"v": [0.0, 1.0, 2.0]}, bins=16)
    with pytest.raises(ParamsError):
        registry.register_model(_record("m", "t"), sketch)
    assert len(registry) == 0


def test_record_must_name_the_sketch(manifest, letters):
    with pytest.raises(ParamsError):
        Registry(manifest).register_model(_record("m", "other"), letters)


def test_remove_model(manifest, letters):
    registry = Registry(manifest)
    registry.register_model(_record("m1", "letters"), letters)
    registry.register_model(_record("m2", "letters"), letters)

    first = registry.remove_model("m1")
    assert not first.dataset_removed
    assert registry.sketch_for("m2") is letters

    second = registry.remove_model("m2")
    assert second.dataset_removed
    assert len(registry) == 0
    assert sum(t.num_postings for t in registry.snapshot().tables) == 0

    with pytest.raises(NotFoundError):
        registry.remove_model("m2")


def test_unknown_model(registry):
    with pytest.raises(NotFoundError):
        registry.get("nope")


def test_snapshot_is_isolated(manifest, letters):
    registry = Registry(manifest)
    before = registry.snapshot()
    registry.register_model(_record("m", "letters"), letters)
    assert before.list_models() == []
    assert [r.model_id for r in registry.snapshot().list_models()] == ["m"]

    during = registry.snapshot()
    registry.remove_model("m")
    assert during.get("m").dataset_id == "letters"


def test_empty_feature_is_not_indexed(manifest):
    reference = make_sketch("ref", {"v": [0.0, 1.0], "c": ["a", "b"]})
    sketch = make_sketch(
        "t",
        {"v": [None, None], "c": ["a", "b"]},
        schema=[("v", "numeric"), ("c", "categorical")],
        reference=reference,
    )
    signatures = feature_signatures(sketch, manifest)
    assert list(signatures) == [feature_id_for("c")]


def test_source_accuracy_range():
    with pytest.raises(ValueError):
        _record("m", "d", source_accuracy=1.2)
