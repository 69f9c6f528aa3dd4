"""Self-describing checkpoint container.

Layout::

    b"SGCK"                 magic
    uint16 LE               format version
    uint32 LE               header length in bytes
    header                  UTF-8 JSON: spec, tensor directory, metadata
    tensor data             little-endian float32, row-major, at the
                            directory offsets (relative to the data start)
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import CnnSpec, Network

MAGIC = b"SGCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: CnnSpec
    weights: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.spec.param_shapes()
        if set(shapes) != set(self.weights):
            raise CheckpointError("weight names do not match the spec")
        for name, shape in shapes.items():
            if tuple(np.shape(self.weights[name])) != shape:
                raise CheckpointError(f"{name}: shape {np.shape(self.weights[name])} != {shape}")
        self.weights = {n: np.asarray(w, dtype=np.float32) for n, w in self.weights.items()}

    @classmethod
    def from_network(cls, net: Network, metadata: dict | None = None) -> Checkpoint:
        return cls(net.spec, {n: p.copy() for n, p in net.params.items()}, dict(metadata or {}))

    def network(self, dtype=np.float32) -> Network:
        return Network(self.spec, {n: w.astype(dtype) for n, w in self.weights.items()}, dtype)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights.values())

    def to_bytes(self) -> bytes:
        directory = []
        chunks = []
        offset = 0
        for name in sorted(self.weights):
            data = self.weights[name].astype("<f4").tobytes(order="C")
            directory.append(
                {"name": name, "shape": list(self.weights[name].shape), "offset": offset, "nbytes": len(data)}
            )
            chunks.append(data)
            offset += len(data)
        header = json.dumps(
            {
                "format_version": FORMAT_VERSION,
                "dtype": "float32-le",
                "spec": self.spec.to_dict(),
                "tensors": directory,
                "metadata": self.metadata,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> Checkpoint:
        if len(blob) < _PREFIX.size:
            raise CheckpointError("truncated checkpoint")
        magic, version, hlen = _PREFIX.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        start = _PREFIX.size
        try:
            header = json.loads(blob[start:start + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
        data = memoryview(blob)[start + hlen:]
        weights = {}
        for t in header["tensors"]:
            end = t["offset"] + t["nbytes"]
            if end > len(data):
                raise CheckpointError(f"tensor {t['name']} runs past the end of the file")
            arr = np.frombuffer(data[t["offset"]:end], dtype="<f4").reshape(t["shape"])
            weights[t["name"]] = arr.astype(np.float32)
        try:
            spec = CnnSpec.from_dict(header["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"invalid spec in checkpoint: {exc}") from exc
        return cls(spec, weights, header.get("metadata", {}))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> Checkpoint:
        return cls.from_bytes(Path(path).read_bytes())
