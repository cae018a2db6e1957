"""
CSV tables of result records and the manifest of an output directory.

Every table starts with a versioned comment line, then a header row whose
column order is the field order of its record model. Reals are written with
17 significant digits and parsed back with pandas' round-trip parser, so
write/read is the identity on finite doubles.
"""

import hashlib
import json
import logging
import typing
from collections.abc import Sequence
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import pandas as pd
from pydantic import BaseModel

from models.records import (
    DiagnosticsRecord,
    EpsilonComparison,
    EpsilonMember,
    HorizonResult,
    IdentityReport,
    Manifest,
    MMSResult,
    SnapshotEntry,
    SweepRecord,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION: int = 1
FLOAT_FORMAT: str = "%.17g"
MANIFEST_NAME: str = "manifest.json"

# Table kind -> record model; the kind names the header line
TABLES: dict[str, type[BaseModel]] = {
    "diagnostics": DiagnosticsRecord,
    "sweep": SweepRecord,
    "identities": IdentityReport,
    "mms": MMSResult,
    "members": EpsilonMember,
    "comparison": EpsilonComparison,
    "horizon": HorizonResult,
    "snapshots": SnapshotEntry,
}

VERSIONED_PACKAGES: tuple[str, ...] = ("numpy", "scipy", "sympy", "pandas", "pydantic", "typer")


def header_line(kind: str) -> str:
    return f"# zk-{kind} v{FORMAT_VERSION}"


def _is_mapping(model: type[BaseModel], name: str) -> bool:
    annotation = model.model_fields[name].annotation
    return annotation is dict or typing.get_origin(annotation) is dict


def write_table(path: str | Path, kind: str, records: Sequence[BaseModel]) -> Path:
    """
    Write records of one kind as a CSV table.

    Args:
        path (str | Path): Destination file.
        kind (str): Table kind, a key of TABLES.
        records (Sequence[BaseModel]): Records of the kind's model.

    Returns:
        Path: The written file.
    """
    model: type[BaseModel] = TABLES[kind]
    columns: list[str] = list(model.model_fields)
    rows: list[dict] = []
    for item in records:
        if not isinstance(item, model):
            raise TypeError(f"{kind} table holds {model.__name__}, got {type(item).__name__}")
        row: dict = item.model_dump(mode="json")
        for name in columns:
            if _is_mapping(model, name):
                row[name] = json.dumps(row[name], sort_keys=True)
        rows.append(row)

    frame: pd.DataFrame = pd.DataFrame(rows, columns=columns)
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as stream:
            stream.write(header_line(kind) + "\n")
            frame.to_csv(stream, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise OSError(f"cannot write {kind} table {path}: {exc.strerror}") from exc
    logger.debug("Wrote %d %s rows to %s", len(rows), kind, path)
    return path


def read_table(path: str | Path, kind: str) -> list[BaseModel]:
    """Read a table written by write_table, checking its header line."""
    model: type[BaseModel] = TABLES[kind]
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as stream:
            first: str = stream.readline().rstrip("\n")
            if first != header_line(kind):
                raise ValueError(f"{path}: expected header {header_line(kind)!r}, found {first!r}")
            frame: pd.DataFrame = pd.read_csv(stream, float_precision="round_trip")
    except OSError as exc:
        raise OSError(f"cannot read {kind} table {path}: {exc.strerror}") from exc

    expected: list[str] = list(model.model_fields)
    if list(frame.columns) != expected:
        raise ValueError(f"{path}: columns {list(frame.columns)} differ from {expected}")

    records: list[BaseModel] = []
    for row in frame.astype(object).where(frame.notna(), None).to_dict(orient="records"):
        for name in expected:
            if _is_mapping(model, name) and row[name] is not None:
                row[name] = json.loads(row[name])
        records.append(model.model_validate(row))
    return records


def write_diagnostics_csv(path: str | Path, records: Sequence[DiagnosticsRecord]) -> Path:
    return write_table(path, "diagnostics", records)


def read_diagnostics_csv(path: str | Path) -> list[DiagnosticsRecord]:
    return read_table(path, "diagnostics")


def write_sweep_csv(path: str | Path, records: Sequence[SweepRecord]) -> Path:
    return write_table(path, "sweep", records)


def read_sweep_csv(path: str | Path) -> list[SweepRecord]:
    return read_table(path, "sweep")


def checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as stream:
        for block in iter(lambda: stream.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def package_versions() -> dict[str, str]:
    versions: dict[str, str] = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(directory: str | Path, command: str, config: BaseModel) -> Manifest:
    """Create the output directory and its manifest, before any data file exists."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: Manifest = Manifest(
        created=datetime.now(timezone.utc).isoformat(),
        command=command,
        config=config.model_dump(mode="json"),
        versions=package_versions(),
    )
    (directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Output directory %s", directory)
    return manifest


def finalize_manifest(directory: str | Path, manifest: Manifest, files: Sequence[str | Path]) -> Manifest:
    """Record the sha256 of every data file and rewrite the manifest."""
    directory = Path(directory)
    digests: dict[str, str] = dict(manifest.files)
    for name in files:
        path: Path = directory / name
        digests[str(path.relative_to(directory))] = checksum(path)
    updated: Manifest = manifest.model_copy(update={"files": dict(sorted(digests.items()))})
    (directory / MANIFEST_NAME).write_text(updated.model_dump_json(indent=2), encoding="utf-8")
    return updated


def read_manifest(directory: str | Path) -> Manifest:
    return Manifest.model_validate_json((Path(directory) / MANIFEST_NAME).read_text(encoding="utf-8"))


def verify_manifest(directory: str | Path) -> list[str]:
    """Names of the files whose current checksum differs from the manifest."""
    directory = Path(directory)
    manifest: Manifest = read_manifest(directory)
    return [
        name
        for name, digest in manifest.files.items()
        if not (directory / name).is_file() or checksum(directory / name) != digest
    ]
