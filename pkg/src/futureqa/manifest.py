"""Input/output hashing so any report can be traced back to raw data."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(path: str | Path) -> dict[str, str]:
    """File -> sha256 map; descends into directories, sorted paths."""
    path = Path(path)
    if path.is_file():
        return {str(path): sha256_file(path)}
    out = {}
    for sub in sorted(p for p in path.rglob("*") if p.is_file()):
        if sub.name.endswith(".manifest.json"):
            continue
        out[str(sub)] = sha256_file(sub)
    return out


def write_manifest(command: str, config: dict, inputs: list[str | Path],
                   outputs: list[str | Path], path: str | Path) -> None:
    payload = {
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "inputs": {},
        "outputs": {},
    }
    for group, paths in (("inputs", inputs), ("outputs", outputs)):
        for p in paths:
            payload[group].update(hash_tree(p))
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")
