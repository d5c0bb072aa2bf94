"""Checkpoint archive: one zip with a JSON manifest + raw tensor blobs.

Layout:
    manifest.json          config, step, metrics, tensor table (name -> shape/dtype)
    tensors/<name>         raw little-endian blobs (float32 unless noted)

Tensor names are namespaced: "denoiser/...", "posefuse3d/...", "optim/...",
"rng/torch".
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np
import torch

SCHEMA_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "i8": np.dtype("<i8"), "u1": np.dtype("u1")}


def _to_array(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    return np.asarray(t)


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "f4"
    if arr.dtype.kind in "iu" and arr.dtype.itemsize == 1:
        return "u1"
    if arr.dtype.kind in "iu":
        return "i8"
    raise TypeError(f"unsupported checkpoint dtype {arr.dtype}")


def save_checkpoint(path, *, config: dict, step: int, tensors: dict,
                    metrics: dict | None = None) -> None:
    """Write the archive atomically (temp file + replace)."""
    import os
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "step": int(step),
        "metrics": metrics or {},
        "tensors": {},
    }
    tmp = str(path) + ".tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, value in tensors.items():
            arr = _to_array(value)
            tag = _dtype_tag(arr)
            arr = arr.astype(_DTYPES[tag], copy=False)
            manifest["tensors"][name] = {"shape": list(arr.shape), "dtype": tag}
            zf.writestr(f"tensors/{name}", arr.tobytes())
        zf.writestr("manifest.json", json.dumps(manifest))
    os.replace(tmp, str(path))


def load_checkpoint(path) -> dict:
    """Returns {config, step, metrics, tensors: dict[str, np.ndarray]}."""
    with zipfile.ZipFile(str(path)) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported checkpoint schema {manifest.get('schema_version')!r}")
        tensors = {}
        for name, info in manifest["tensors"].items():
            raw = zf.read(f"tensors/{name}")
            arr = np.frombuffer(raw, dtype=_DTYPES[info["dtype"]])
            tensors[name] = arr.reshape(info["shape"]).copy()
    return {
        "config": manifest["config"],
        "step": manifest["step"],
        "metrics": manifest["metrics"],
        "tensors": tensors,
    }


def state_dict_to_tensors(module: torch.nn.Module, prefix: str) -> dict:
    return {f"{prefix}/{k}": v for k, v in module.state_dict().items()}


def load_module_tensors(module: torch.nn.Module, tensors: dict,
                        prefix: str) -> None:
    sd = {}
    want = {k: v for k, v in tensors.items() if k.startswith(prefix + "/")}
    for k, v in want.items():
        sd[k[len(prefix) + 1:]] = torch.as_tensor(v)
    missing = set(module.state_dict()) - set(sd)
    if missing:
        raise KeyError(f"checkpoint missing tensors under {prefix!r}: "
                       f"{sorted(missing)[:4]} ...")
    module.load_state_dict({k: v.to(dtype=module.state_dict()[k].dtype)
                            for k, v in sd.items()})
