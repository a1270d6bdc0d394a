"""Checkpoint archives: a zip of named ``.npy`` arrays plus ``manifest.json``."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

MANIFEST = "manifest.json"


def save_archive(path: str | Path, arrays: dict[str, np.ndarray], manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())
        info = zipfile.ZipInfo(MANIFEST, date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))
    tmp.replace(path)
    return path


def load_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {}
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read(MANIFEST))
        for name in zf.namelist():
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, manifest


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, set, frozenset)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def module_arrays(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_module(prefix: str, module: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    """Load arrays stored under ``prefix/`` (or ``prefix.`` for a sub-module)."""
    state = {
        k[len(prefix) + 1 :]: torch.from_numpy(v.copy())
        for k, v in arrays.items()
        if k.startswith(prefix) and k[len(prefix) : len(prefix) + 1] in ("/", ".")
    }
    module.load_state_dict(state, strict=True)


def optimizer_arrays(prefix: str, opt: torch.optim.Optimizer) -> tuple[dict[str, np.ndarray], list]:
    sd = opt.state_dict()
    arrays = {}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            arrays[f"{prefix}/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy().copy()
    return arrays, sd["param_groups"]


def load_optimizer(prefix: str, opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray], groups: list) -> None:
    p = prefix + "/"
    state: dict[int, dict] = {}
    for k, v in arrays.items():
        if k.startswith(p):
            idx, key = k[len(p):].split("/", 1)
            state.setdefault(int(idx), {})[key] = torch.from_numpy(v.copy())
    opt.load_state_dict({"state": state, "param_groups": groups})
