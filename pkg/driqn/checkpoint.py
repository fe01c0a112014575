"""Versioned binary checkpoint documents for network parameters.

Layout: MAGIC, 8-byte little-endian header length, UTF-8 JSON header, then one
little-endian float64 block per named vector in header order.
"""
from __future__ import annotations
import json
import logging
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .qnet import NetworkParams, NetworkSpec, build_layout
from .types import DriqnError

log = logging.getLogger(__name__)

MAGIC = b"DRIQNCKPT\n"
VERSION = 1


class CheckpointError(DriqnError):
    """A checkpoint document was refused."""
    def __init__(self, reason: str, path: str = ""):
        super().__init__(f"checkpoint refused: {reason}" + (f" ({path})" if path else ""))
        self.reason = reason
        self.path = path


def save_checkpoint(params: NetworkParams, metadata: dict,
                    target: NetworkParams | None = None) -> bytes:
    vectors = {"online": params}
    if target is not None:
        if target.spec != params.spec:
            raise CheckpointError("target network spec differs from online spec")
        vectors["target"] = target
    header = {
        "version": VERSION,
        "spec": asdict(params.spec),
        "layout": [{"name": s.name, "offset": s.offset, "shape": list(s.shape)} for s in params.layout],
        "head_slice": [params.head_slice.start, params.head_slice.stop],
        "d": params.d,
        "vectors": list(vectors),
        "metadata": metadata,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(v.theta.astype("<f8").tobytes() for v in vectors.values())
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def _header_bounds(document: bytes) -> tuple[int, int]:
    """Start and end offsets of the JSON header."""
    if not document.startswith(MAGIC):
        raise CheckpointError("not a checkpoint document (bad magic)")
    start = len(MAGIC) + 8
    if len(document) < start:
        raise CheckpointError("truncated header")
    (length,) = struct.unpack("<Q", document[len(MAGIC):start])
    if len(document) < start + length:
        raise CheckpointError("truncated header")
    return start, start + length


def read_header(document: bytes) -> dict:
    start, end = _header_bounds(document)
    try:
        header = json.loads(document[start:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header ({exc})") from None
    if not isinstance(header, dict):
        raise CheckpointError("corrupt header (not a JSON object)")
    return header


def load_checkpoint(document: bytes, obs_dim: int | None = None,
                    config_hash: str | None = None) -> tuple[NetworkParams, dict, NetworkParams | None]:
    """Returns (online params, metadata, target params or None)."""
    header = read_header(document)
    if header.get("version") != VERSION:
        raise CheckpointError(f"version {header.get('version')} is not supported (expected {VERSION})")
    try:
        spec = NetworkSpec(**header["spec"])
        stored_hash = header["metadata"].get("config_hash")
        recorded = [(s["name"], s["offset"], tuple(s["shape"])) for s in header["layout"]]
        d, names = int(header["d"]), list(header["vectors"])
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise CheckpointError(f"malformed header ({exc!r})") from None
    if "online" not in names:
        raise CheckpointError("malformed header (no online vector)")
    if obs_dim is not None and spec.obs_dim != obs_dim:
        raise CheckpointError(f"observation dim {spec.obs_dim} does not match expected {obs_dim}")
    if config_hash is not None and stored_hash != config_hash:
        raise CheckpointError(f"config hash {stored_hash} does not match run config {config_hash}")
    layout = build_layout(spec)
    if recorded != [(s.name, s.offset, s.shape) for s in layout]:
        raise CheckpointError("parameter layout does not match network spec")

    body = document[_header_bounds(document)[1]:]
    if len(body) != 8 * d * len(names):
        raise CheckpointError("truncated parameter block")
    vectors = {}
    for i, name in enumerate(names):
        theta = np.frombuffer(body, dtype="<f8", count=d, offset=8 * d * i).astype(np.float64)
        vectors[name] = NetworkParams(spec, theta, layout)
    return vectors["online"], header["metadata"], vectors.get("target")


def write_checkpoint(path: str | Path, params: NetworkParams, metadata: dict,
                     target: NetworkParams | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(save_checkpoint(params, metadata, target))
    log.debug("checkpoint written to %s", path)


def read_checkpoint(path: str | Path, obs_dim: int | None = None,
                    config_hash: str | None = None) -> tuple[NetworkParams, dict, NetworkParams | None]:
    try:
        document = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError("file not found", path=str(path)) from None
    return load_checkpoint(document, obs_dim=obs_dim, config_hash=config_hash)
