"""Byte-stable checkpoint container.

Layout: magic, 8-byte little-endian header length, canonical-JSON header,
then the raw tensor bytes back to back.  Tensors inside the model and
optimizer state dicts are replaced by ``{"__tensor__": i}`` placeholders in
the header, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..arrayio import canonical_json

MAGIC = b"PRIMEDCKPT1\n"
FORMAT_VERSION = 1

_TORCH_DTYPES = {
    "float32": torch.float32,
    "float64": torch.float64,
    "int64": torch.int64,
    "uint8": torch.uint8,
}


def _pack(obj, tensors: list[torch.Tensor]):
    if isinstance(obj, torch.Tensor):
        tensors.append(obj)
        return {"__tensor__": len(tensors) - 1}
    if isinstance(obj, dict):
        # keys may be str or int (optimizer state is keyed by parameter index)
        items = []
        for k, v in obj.items():
            if isinstance(k, bool) or not isinstance(k, (str, int)):
                raise TypeError(f"unsupported dict key {k!r} in checkpoint")
            items.append([k, _pack(v, tensors)])
        return {"__dict__": items}
    if isinstance(obj, (list, tuple)):
        return [_pack(v, tensors) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} in checkpoint")


def _unpack(obj, tensors: list[torch.Tensor]):
    if isinstance(obj, dict):
        if set(obj) == {"__tensor__"}:
            return tensors[obj["__tensor__"]]
        return {k: _unpack(v, tensors) for k, v in obj["__dict__"]}
    if isinstance(obj, list):
        return [_unpack(v, tensors) for v in obj]
    return obj


def save_checkpoint(
    path: str | Path,
    model_state: dict,
    optim_state: dict,
    epoch: int,
    config: dict,
) -> None:
    tensors: list[torch.Tensor] = []
    body = {
        "version": FORMAT_VERSION,
        "epoch": epoch,
        "config": config,
        "model": _pack(model_state, tensors),
        "optim": _pack(optim_state, tensors),
    }
    metas = []
    blobs = []
    for t in tensors:
        arr = t.detach().cpu().numpy()
        name = arr.dtype.name
        if name not in _TORCH_DTYPES:
            raise TypeError(f"unsupported tensor dtype {name}")
        data = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False)
        blobs.append(data.tobytes())
        metas.append({"dtype": name, "shape": list(arr.shape)})
    body["tensors"] = metas
    header = canonical_json(body).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> dict:
    import json

    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    off = len(MAGIC)
    hlen = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    body = json.loads(raw[off : off + hlen].decode())
    if body["version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {body['version']}")
    off += hlen
    tensors = []
    for meta in body["tensors"]:
        dt = np.dtype(meta["dtype"]).newbyteorder("<")
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=off).reshape(meta["shape"])
        off += arr.nbytes
        # np.array keeps 0-dim scalars 0-dim (ascontiguousarray would not)
        tensors.append(torch.from_numpy(np.array(arr, dtype=meta["dtype"], order="C")))
    return {
        "epoch": body["epoch"],
        "config": body["config"],
        "model": _unpack(body["model"], tensors),
        "optim": _unpack(body["optim"], tensors),
    }


def load_model_state(model, state: dict) -> None:
    """Apply a checkpoint's model state, naming the offending block on mismatch."""
    try:
        model.load_state_dict(state)
    except RuntimeError as err:
        raise ValueError(f"checkpoint does not match model dimensions: {err}") from err
