"""Binary checkpoints: JSON header + raw little-endian float64 payload.

Layout: 6-byte magic, uint32 little-endian header length, UTF-8 JSON header,
then the raw bytes of every array in the exact order the header lists them.
Round trips are bit-exact.
"""

import json
import os

import numpy as np

from ..errors import CheckpointError, MissingFileError

MAGIC = b"UASAM1"


def _blob(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(path, store, optimizer=None, config=None):
    """Write parameters (and optionally optimizer state) to `path`."""
    header = {
        "params": [
            {"name": n, "shape": list(t.shape), "trainable": bool(t.requires_grad)}
            for n, t in store.items()
        ],
        "config": config or {},
    }
    payload = [_blob(t.data) for _, t in store.items()]
    if optimizer is not None:
        state = optimizer.state()
        moments = [
            {"name": n, "shape": list(state["m"][n].shape)} for n in state["m"]
        ]
        header["optimizer"] = {
            k: state[k]
            for k in ("lr", "beta1", "beta2", "eps",
                      "decay_every", "decay_factor", "step_count")
        }
        header["optimizer"]["moments"] = moments
        for entry in moments:
            payload.append(_blob(state["m"][entry["name"]]))
            payload.append(_blob(state["v"][entry["name"]]))
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(len(raw)).astype("<u4").tobytes())
        f.write(raw)
        for blob in payload:
            f.write(blob)


def _parse_header(f, path) -> dict:
    """Read the header, leaving `f` positioned at the payload start."""
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    size_bytes = f.read(4)
    if len(size_bytes) != 4:
        raise CheckpointError(f"{path}: truncated header length")
    size = int(np.frombuffer(size_bytes, dtype="<u4")[0])
    raw = f.read(size)
    if len(raw) != size:
        raise CheckpointError(f"{path}: truncated header")
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed header ({e})") from None


def _open_checkpoint(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"checkpoint not found: {path}")
    return open(path, "rb")


def read_header(path) -> dict:
    """Parse and return just the JSON header of a checkpoint."""
    with _open_checkpoint(path) as f:
        return _parse_header(f, path)


def _read_array(f, shape, path) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    raw = f.read(count * 8)
    if len(raw) != count * 8:
        raise CheckpointError(f"{path}: truncated payload")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def load_checkpoint(path, store, optimizer=None) -> dict:
    """Restore parameters (and optimizer) in place; returns the config echo."""
    with _open_checkpoint(path) as f:
        header = _parse_header(f, path)
        for entry in header["params"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            if name not in store:
                raise CheckpointError(f"{path}: unknown parameter {name!r}")
            t = store[name]
            if t.shape != shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name!r}: "
                    f"file has {shape}, store has {t.shape}")
            t.data = _read_array(f, shape, path)
            t.requires_grad = bool(entry["trainable"])
            t.grad = None
        opt_header = header.get("optimizer")
        if optimizer is not None:
            if opt_header is None:
                raise CheckpointError(f"{path}: checkpoint has no optimizer state")
            m, v = {}, {}
            for entry in opt_header["moments"]:
                shape = tuple(entry["shape"])
                m[entry["name"]] = _read_array(f, shape, path)
                v[entry["name"]] = _read_array(f, shape, path)
            state = {k: opt_header[k]
                     for k in ("lr", "beta1", "beta2", "eps",
                               "decay_every", "decay_factor", "step_count")}
            state["m"] = m
            state["v"] = v
            optimizer.load_state(state)
    return header.get("config", {})
