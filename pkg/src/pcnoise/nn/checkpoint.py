"""Checkpoint file format: text header + raw little-endian float64 payload.

Layout::

    pcnoise-checkpoint 1
    model <tag>
    config <key> <value>          (zero or more)
    tensor <name> <dim0> <dim1>.. (one per tensor, in payload order)
    data
    <concatenated '<f8' bytes of every tensor, declaration order>

Values round-trip bit-exactly.
"""

from __future__ import annotations

import numpy as np

from ..cloud import _atomic_write

MAGIC = "pcnoise-checkpoint 1"


class CorruptCheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str,
    model_tag: str,
    config_items: dict[str, str],
    tensors: list[tuple[str, np.ndarray]],
) -> None:
    lines = [MAGIC, f"model {model_tag}"]
    for k, v in config_items.items():
        if " " in k or "\n" in str(v):
            raise ValueError(f"config key/value may not contain spaces/newlines: {k!r}")
        lines.append(f"config {k} {v}")
    blobs = []
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float64)
        lines.append("tensor " + name + " " + " ".join(str(d) for d in arr.shape))
        blobs.append(arr.astype("<f8").tobytes())
    header = "\n".join(lines) + "\ndata\n"
    _atomic_write(path, header.encode("ascii") + b"".join(blobs))


def load_checkpoint(path: str) -> tuple[str, dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    marker = b"\ndata\n"
    cut = raw.find(marker)
    if cut < 0:
        raise CorruptCheckpointError("corrupt checkpoint: missing data marker")
    try:
        header = raw[:cut].decode("ascii").split("\n")
    except UnicodeDecodeError as e:
        raise CorruptCheckpointError(f"corrupt checkpoint: bad header ({e})") from None
    payload = raw[cut + len(marker):]
    if not header or header[0] != MAGIC:
        raise CorruptCheckpointError("corrupt checkpoint: bad magic line")
    model_tag = ""
    config: dict[str, str] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "model":
            model_tag = rest
        elif kind == "config":
            k, _, v = rest.partition(" ")
            config[k] = v
        elif kind == "tensor":
            parts = rest.split(" ")
            shapes.append((parts[0], tuple(int(d) for d in parts[1:])))
        else:
            raise CorruptCheckpointError(f"corrupt checkpoint: unknown header line {line!r}")
    if not model_tag:
        raise CorruptCheckpointError("corrupt checkpoint: missing model tag")
    expected = sum(int(np.prod(s, dtype=np.int64)) for _, s in shapes) * 8
    if len(payload) != expected:
        raise CorruptCheckpointError(
            f"corrupt checkpoint: payload has {len(payload)} bytes, expected {expected}"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        tensors[name] = arr.astype(np.float64).reshape(shape)
        offset += count * 8
    return model_tag, config, tensors
