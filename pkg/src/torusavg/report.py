"""Deterministic result emission: CSV dumps and JSON verdicts.

Every artifact embeds a fingerprint of its normalized configuration so that
outputs are diffable and traceable to the exact run parameters.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = ["config_fingerprint", "write_csv", "write_json"]


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_normalize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_fingerprint(config: dict) -> str:
    """Stable 12-hex-digit digest of a configuration mapping."""
    canon = json.dumps(_normalize(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def write_csv(path, header, rows, fingerprint=None):
    """Write rows (iterables of scalars) with a fixed header; the fingerprint
    rides in a leading comment line so numeric loaders can skip it."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if fingerprint is not None:
            fh.write(f"# fingerprint={fingerprint}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_json(path, obj):
    path = Path(path)
    with path.open("w") as fh:
        json.dump(_normalize(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
