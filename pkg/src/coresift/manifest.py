"""Run manifests: every command records its resolved configuration and input
digests next to its outputs, so any artifact can be traced and re-produced.

The output directory itself is deliberately excluded from the manifest so
that re-running a command into a different directory yields byte-identical
outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    params: dict,
    inputs: dict[str, str | Path],
) -> Path:
    """Write manifest.json into *out_dir*; exactly one manifest per directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "coresift",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": {
            name: {"path": str(path), "sha256": file_digest(path)}
            for name, path in sorted(inputs.items())
        },
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
