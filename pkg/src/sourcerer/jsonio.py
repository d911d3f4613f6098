"""Canonical JSON helpers and loading of versioned data files."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

from .errors import InputError, MalformedDataFile


def canonical_dumps(obj) -> str:
    """Serialize with a stable byte representation (sorted keys, tight separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_id(prefix: str, *parts: str) -> str:
    """Short content-addressed identifier, stable across runs and reloads."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:12]
    return f"{prefix}-{digest}"


def parse_json_object(payload: bytes | str, error_cls: type[InputError], what: str) -> dict:
    """Parse bytes/text as a JSON object, raising error_cls with context on failure."""
    try:
        text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
        obj = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise error_cls(f"{what}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise error_cls(f"{what}: expected a JSON object, got {type(obj).__name__}")
    return obj


def packaged_data(*parts: str) -> bytes:
    """Read a data file shipped inside the package (e.g. 'taxonomy.json')."""
    return resources.files("sourcerer").joinpath("data", *parts).read_bytes()


def read_path_or_packaged(
    value: str | Path | None,
    default_name: str,
    error_cls: type[InputError] = MalformedDataFile,
) -> tuple[bytes, str]:
    """Read an explicit path when given, else the shipped data file.

    Returns (payload, source label) so parse errors can say where they came from.
    """
    if value is None:
        return packaged_data(default_name), f"packaged {default_name}"
    path = Path(value)
    try:
        return path.read_bytes(), str(path)
    except OSError as exc:
        raise error_cls(f"cannot read {path}: {exc}") from None


def atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
