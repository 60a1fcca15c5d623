"""Run manifests, content hashing, and config-file handling.

Every CLI command records a ``run.json`` in its output directory: the
resolved configuration, the seed, hashes of the inputs it consumed, and
hashes of the files it produced plus one combined content hash.  Two
runs with equal configuration and seed therefore produce equal content
hashes, which is the reproducibility contract the tests pin down.

Config files are plain text, one ``key = value`` assignment per line
with JSON-encoded values; ``#`` starts a comment.  Command-line flags
override file values, which override built-in defaults.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from .errors import MissingInputError, ParameterError

RUN_MANIFEST = "run.json"
SCHEMA_VERSION = 1


def hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(root, skip: tuple[str, ...] = (RUN_MANIFEST,)) -> dict[str, str]:
    """Per-file hashes for every regular file under root, sorted paths."""
    root = Path(root)
    if not root.exists():
        raise MissingInputError(f"cannot hash missing path: {root}")
    if root.is_file():
        return {root.name: hash_file(root)}
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in skip:
            out[path.relative_to(root).as_posix()] = hash_file(path)
    return out


def combine_hashes(file_hashes: dict[str, str]) -> str:
    """One content hash over (path, hash) pairs in sorted order."""
    h = hashlib.sha256()
    for rel in sorted(file_hashes):
        h.update(rel.encode("utf-8"))
        h.update(b"\0")
        h.update(file_hashes[rel].encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines with JSON values."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            out[key] = json.loads(value.strip())
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return out


def require_fresh(out_dir, force: bool) -> None:
    """Refuse to reuse an output directory unless force is set."""
    marker = Path(out_dir) / RUN_MANIFEST
    if marker.exists() and not force:
        raise ParameterError(f"{marker} exists; rerun with --force to overwrite")


def write_run_manifest(
    out_dir,
    kind: str,
    command: list[str],
    config: dict,
    seed: int,
    inputs: dict[str, str],
) -> Path:
    """Hash the run outputs and persist the manifest; returns its path."""
    out_dir = Path(out_dir)
    outputs = hash_tree(out_dir)
    doc = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "content_hash": combine_hashes(outputs),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / RUN_MANIFEST
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_run_manifest(run_dir) -> dict:
    path = Path(run_dir) / RUN_MANIFEST
    if not path.is_file():
        raise MissingInputError(f"run manifest not found: {path}")
    return json.loads(path.read_text())


def verify_run_manifest(run_dir) -> dict:
    """Re-hash outputs and compare against the stored manifest."""
    doc = read_run_manifest(run_dir)
    current = hash_tree(run_dir)
    if current != doc["outputs"]:
        changed = sorted(
            set(current.items()) ^ set(doc["outputs"].items())
        )
        raise ParameterError(f"run outputs changed since manifest: {changed[:4]}")
    return doc
