"""Versioned checkpoint container.

Layout: an 8-byte magic string, a 4-byte little-endian format version, then
a pickled payload.  The payload is restricted to plain Python containers,
strings, numbers and numpy arrays (torch tensors are converted on save), so
a save -> load -> save cycle is byte-identical and checkpoints remain
readable without the training code.
"""

import io
import pickle

import numpy as np
import torch

MAGIC = b"PMCOCKPT"
FORMAT_VERSION = 1


def _to_plain(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        converted = [_to_plain(v) for v in obj]
        return type(obj)(converted) if isinstance(obj, tuple) else converted
    if isinstance(obj, (str, bytes, int, float, bool, np.ndarray)) or obj is None:
        return obj
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot store object of type {type(obj).__name__} in a checkpoint")


def save_checkpoint(path, payload: dict) -> None:
    body = pickle.dumps(_to_plain(payload), protocol=4)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(FORMAT_VERSION.to_bytes(4, "little"))
    buf.write(body)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version = int.from_bytes(blob[len(MAGIC):len(MAGIC) + 4], "little")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    return pickle.loads(blob[len(MAGIC) + 4:])


def module_state_to_arrays(module: torch.nn.Module) -> dict:
    """state_dict with tensors replaced by numpy arrays."""
    return {k: v.detach().cpu().numpy().copy()
            for k, v in module.state_dict().items()}


def arrays_to_module_state(module: torch.nn.Module, arrays: dict) -> None:
    state = {k: torch.from_numpy(np.asarray(v)) for k, v in arrays.items()}
    module.load_state_dict(state)


def optimizer_state_to_plain(optimizer) -> dict:
    return _to_plain(optimizer.state_dict())


def plain_to_optimizer_state(optimizer, plain: dict) -> None:
    def revive(obj):
        if isinstance(obj, np.ndarray):
            return torch.from_numpy(obj.copy())
        if isinstance(obj, dict):
            return {k: revive(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [revive(v) for v in obj]
        return obj
    optimizer.load_state_dict(revive(plain))
