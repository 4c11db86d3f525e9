"""JSON encoding of the domain dataclasses.

Decoding goes through pydantic, which re-runs every dataclass invariant, so a
sketch read from a file, a registry blob or a request body is validated the
same way as one built by ingestion.
"""

import json
from pathlib import Path
from typing import Any

import numpy as np
from core.errors import FormatError, IngestError, InputError
from core.record import FORMAT_VERSION, ModelRecord, RegistryManifest
from core.results import SearchResult
from core.sketch import DatasetSketch
from pydantic import TypeAdapter, ValidationError

SKETCH_FILE_KIND = "model-scout/sketch"

sketch_adapter = TypeAdapter(DatasetSketch)
record_adapter = TypeAdapter(ModelRecord)
manifest_adapter = TypeAdapter(RegistryManifest)
results_adapter = TypeAdapter(list[SearchResult])
_signatures_adapter = TypeAdapter(dict[int, list[list[int]]])


def _describe(error: ValueError) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        location = ".".join(str(p) for p in first.get("loc", ()))
        return f"{location}: {first['msg']}" if location else first["msg"]
    return str(error)


def sketch_to_json(sketch: DatasetSketch) -> bytes:
    return sketch_adapter.dump_json(sketch)


def sketch_from_json(
    data: bytes | str, error: type[Exception] = IngestError
) -> DatasetSketch:
    try:
        return sketch_adapter.validate_json(data)
    except ValueError as e:
        raise error(f"invalid sketch: {_describe(e)}") from e


def sketch_from_python(obj: Any, error: type[Exception] = InputError) -> DatasetSketch:
    try:
        return sketch_adapter.validate_python(obj)
    except ValueError as e:
        raise error(f"invalid sketch: {_describe(e)}") from e


def sketch_to_python(sketch: DatasetSketch) -> dict[str, Any]:
    return sketch_adapter.dump_python(sketch, mode="json")


def write_sketch_file(path: str | Path, sketch: DatasetSketch) -> None:
    document = {
        "kind": SKETCH_FILE_KIND,
        "format_version": FORMAT_VERSION,
        "sketch": sketch_to_python(sketch),
    }
    Path(path).write_text(json.dumps(document))


def read_sketch_file(path: str | Path) -> DatasetSketch:
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise IngestError(f"cannot read sketch file {path}: {e}") from e
    if not isinstance(document, dict) or document.get("kind") != SKETCH_FILE_KIND:
        raise IngestError(f"{path} is not a sketch file")
    if document.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path} has format version {document.get('format_version')}, "
            f"expected {FORMAT_VERSION}"
        )
    return sketch_from_python(document.get("sketch"), IngestError)


def record_from_python(obj: Any) -> ModelRecord:
    try:
        return record_adapter.validate_python(obj)
    except ValueError as e:
        raise InputError(f"invalid model record: {_describe(e)}") from e


def signatures_to_json(signatures: dict[int, np.ndarray]) -> bytes:
    return _signatures_adapter.dump_json(
        {fid: matrix.tolist() for fid, matrix in signatures.items()}
    )


def signatures_from_json(data: bytes) -> dict[int, np.ndarray]:
    raw = _signatures_adapter.validate_json(data)
    return {fid: np.asarray(rows, dtype=np.int64) for fid, rows in raw.items()}
