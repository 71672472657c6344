"""Binary parameter container with bit-exact round-trips.

Layout::

    bytes 0..7    magic "MOLECKPT"
    bytes 8..11   format version, u32 little-endian
    bytes 12..19  header length H, u64 little-endian
    bytes 20..20+H  UTF-8 JSON header
    rest          concatenated float64 little-endian tensor payloads

The header records the architecture name, per-layer specs, seeds, and for
every tensor its name ("<layer>.<param>"), shape, and byte offset into the
payload. JSON is serialized with sorted keys so identical contents give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from .layers import LayerSpec

MAGIC = b"MOLECKPT"
VERSION = 1


class CheckpointError(Exception):
    """Unreadable or inconsistent checkpoint file."""


def save_checkpoint(path, architecture: str, specs: list, params: list,
                    seeds: dict, meta: Optional[dict] = None) -> None:
    """Write (architecture, specs, named arrays, seeds) to ``path``.

    ``params`` is one dict of name -> array-like per layer; parameter-free
    layers pass empty dicts. ``seeds``/``meta`` must be JSON-serializable.
    """
    if len(specs) != len(params):
        raise CheckpointError(f"{len(specs)} specs vs {len(params)} param groups")
    records = []
    chunks = []
    offset = 0
    for li, group in enumerate(params):
        for name in sorted(group):
            arr = np.ascontiguousarray(np.asarray(group[name], dtype="<f8"))
            records.append({"name": f"{li}.{name}", "shape": list(arr.shape),
                            "offset": offset})
            raw = arr.tobytes()
            chunks.append(raw)
            offset += len(raw)
    header = {
        "architecture": architecture,
        "layers": [s.to_dict() for s in specs],
        "seeds": seeds,
        "tensors": records,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> dict:
    """Read a checkpoint; returns a dict with keys ``architecture``,
    ``specs`` (LayerSpec list), ``params`` (list of name -> ndarray dicts),
    ``seeds`` and ``meta``. Raises CheckpointError on any corruption."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 12)
    if 20 + hlen > len(blob):
        raise CheckpointError("truncated header")
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"header parse error: {exc}") from exc
    payload = blob[20 + hlen:]

    try:
        specs = [LayerSpec.from_dict(d) for d in header["layers"]]
        records = header["tensors"]
        arch = header["architecture"]
        seeds = header["seeds"]
        meta = header.get("meta", {})
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed header: {exc}") from exc

    params = [dict() for _ in specs]
    for rec in records:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape, dtype=int)) if shape else 1
        start = rec["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise CheckpointError(f"tensor '{rec['name']}' overruns payload")
        arr = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape).copy()
        layer_str, _, name = rec["name"].partition(".")
        li = int(layer_str)
        if not 0 <= li < len(specs):
            raise CheckpointError(f"tensor '{rec['name']}' references missing layer")
        params[li][name] = arr
    return {"architecture": arch, "specs": specs, "params": params,
            "seeds": seeds, "meta": meta}
