"""Flat-file artifact helpers: every file the tools produce embeds a format
version and the full flag set used to produce it, so results are reproducible
from the artifact alone."""
from __future__ import annotations

import json
from typing import Iterable, Iterator

FORMAT_VERSION = 1


class ArtifactError(ValueError):
    """Missing/invalid header or version mismatch in an artifact file."""


def header(kind: str, flags: dict | None = None) -> dict:
    return {"type": "header", "format_version": FORMAT_VERSION, "kind": kind,
            "flags": dict(flags or {})}


def dumps(obj: dict) -> str:
    """Canonical one-line JSON (sorted keys) used for all artifacts."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_jsonl(path, kind: str, records: Iterable[dict],
                flags: dict | None = None) -> int:
    n = 0
    with open(path, "w") as f:
        f.write(dumps(header(kind, flags)) + "\n")
        for rec in records:
            f.write(dumps(rec) + "\n")
            n += 1
    return n


def read_jsonl(path, expect_kind: str | None = None) -> tuple[dict, list[dict]]:
    """Returns (header, records); validates version and (optionally) kind."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise ArtifactError(f"{path}: empty file")
    try:
        head = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(head, dict) or head.get("type") != "header":
        raise ArtifactError(f"{path}: missing artifact header")
    if head.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: unsupported format_version {head.get('format_version')}")
    if expect_kind is not None and head.get("kind") != expect_kind:
        raise ArtifactError(
            f"{path}: expected kind {expect_kind!r}, found {head.get('kind')!r}")
    return head, records


def write_json(path, kind: str, payload: dict, flags: dict | None = None) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": kind,
           "flags": dict(flags or {}), **payload}
    with open(path, "w") as f:
        f.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_json(path, expect_kind: str | None = None) -> dict:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ArtifactError(f"{path}: not an artifact file")
    if doc["format_version"] != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: unsupported format_version {doc['format_version']}")
    if expect_kind is not None and doc.get("kind") != expect_kind:
        raise ArtifactError(
            f"{path}: expected kind {expect_kind!r}, found {doc.get('kind')!r}")
    return doc
