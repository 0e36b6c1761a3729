"""Checkpoint files: text manifest + raw little-endian float32 tensors.

Layout:

    MDCK 1
    meta <key> <value-as-json>        (zero or more)
    tensor <name> <dim0,dim1,...> <byte offset into blob>
    ...
    ---
    <raw little-endian float32 data>

Values are stored float32 (training math stays float64 in memory), so
save -> load -> save is byte-identical even though load -> save of freshly
trained float64 weights quantizes once.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = "MDCK 1"


def save_checkpoint(path, tensors: Dict[str, np.ndarray], meta: Dict | None = None):
    path = Path(path)
    lines = [MAGIC]
    for key, value in sorted((meta or {}).items()):
        lines.append(f"meta {key} {json.dumps(value, sort_keys=True)}")
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        shape = ",".join(str(s) for s in arr.shape) if arr.ndim else "scalar"
        lines.append(f"tensor {name} {shape} {offset}")
        raw = arr.astype("<f4").tobytes()
        blobs.append(raw)
        offset += len(raw)
    header = ("\n".join(lines) + "\n---\n").encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        for raw in blobs:
            f.write(raw)
    tmp.replace(path)


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], Dict]:
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    sep = data.index(b"\n---\n")
    header = data[:sep].decode("utf-8").splitlines()
    blob = data[sep + 5:]
    if header[0] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic {header[0]!r})")
    meta: Dict = {}
    tensors: Dict[str, np.ndarray] = {}
    for line in header[1:]:
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            key, value = rest.split(" ", 1)
            meta[key] = json.loads(value)
        elif kind == "tensor":
            name, shape_s, off_s = rest.rsplit(" ", 2)
            shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split(","))
            count = int(np.prod(shape)) if shape else 1
            off = int(off_s)
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
            tensors[name] = arr.reshape(shape).astype(np.float64)
        else:
            raise ValueError(f"{path}: unknown manifest line {line!r}")
    return tensors, meta
