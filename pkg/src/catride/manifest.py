"""Run manifests: every CLI command records its resolved configuration so a
run can be reproduced bit-for-bit from the manifest alone."""

from __future__ import annotations

import json
import subprocess
import time
from pathlib import Path

from .errors import ParseError, ValidationError

MANIFEST_FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"


def build_id():
    """git-describe of the working tree when available, else the package tag."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "catride-0.1.0"


def write_manifest(out_dir, command, config, seed, inputs, outputs):
    out_dir = Path(out_dir)
    payload = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "build_id": build_id(),
        "wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if "command" not in payload or "config" not in payload:
        raise ValidationError(f"{path}: missing command/config fields")
    return payload
