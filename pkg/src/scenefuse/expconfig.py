"""Run-directory bookkeeping: merged configs, content stamps, skip logic.

Every CLI command persists its effective configuration to ``config.json``
inside its output directory before doing work, and writes a completion
stamp afterward.  A rerun with an unchanged configuration and intact
artifacts is skipped unless forced.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from scenefuse.errors import ConfigurationError

STAMP_NAME = ".complete.json"
CONFIG_NAME = "config.json"


def load_config_file(path: str | os.PathLike) -> dict:
    """Parse a JSON configuration file into a flat dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return data


def merge_config(defaults: dict, file_config: dict | None, flags: dict) -> dict:
    """Layer configuration sources: defaults, then file, then explicit flags.

    Flag entries whose value is None are treated as unset and never override.
    Unknown keys in the file are rejected so typos surface early.
    """
    merged = dict(defaults)
    if file_config:
        unknown = sorted(set(file_config) - set(defaults))
        if unknown:
            raise ConfigurationError(
                f"unknown config keys: {', '.join(unknown)}"
            )
        merged.update(file_config)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return merged


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def persist_config(config: dict, out_dir: str | os.PathLike) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / CONFIG_NAME
    path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
    return path


def file_sha256(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_stamp(
    out_dir: str | os.PathLike,
    config: dict,
    artifacts: list[str | os.PathLike],
    extra: dict | None = None,
) -> Path:
    """Record completion: the config hash plus a checksum per artifact."""
    out_dir = Path(out_dir)
    checks = {}
    for artifact in artifacts:
        artifact = Path(artifact)
        if not artifact.is_file():
            raise ConfigurationError(f"cannot stamp missing artifact: {artifact}")
        key = os.path.relpath(artifact, out_dir)
        checks[key] = file_sha256(artifact)
    stamp = {"config_sha256": config_hash(config), "artifacts": checks}
    if extra:
        stamp["extra"] = extra
    path = out_dir / STAMP_NAME
    path.write_text(json.dumps(stamp, sort_keys=True, indent=2) + "\n")
    return path


def is_complete(out_dir: str | os.PathLike, config: dict) -> bool:
    """True when a prior run with this exact config left intact artifacts."""
    out_dir = Path(out_dir)
    stamp_path = out_dir / STAMP_NAME
    if not stamp_path.is_file():
        return False
    try:
        stamp = json.loads(stamp_path.read_text())
    except (json.JSONDecodeError, OSError):
        return False
    if stamp.get("config_sha256") != config_hash(config):
        return False
    for rel, digest in stamp.get("artifacts", {}).items():
        artifact = out_dir / rel
        if not artifact.is_file() or file_sha256(artifact) != digest:
            return False
    return True
