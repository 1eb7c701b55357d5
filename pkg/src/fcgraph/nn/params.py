"""Named parameter store and checkpoint IO (JSON manifest + raw-f64 blobs)."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import binio
from ..errors import FormatError, ValidationError

CHECKPOINT_VERSION = 1
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass
class Params:
    """Ordered name -> float64 array mapping."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    init_seed: int | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if not _NAME_RE.match(name):
            raise ValidationError(f"bad parameter name {name!r}")
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def n_scalars(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "Params":
        return Params(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            init_seed=self.init_seed,
        )


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def save_checkpoint(params: Params, dir: str | Path, extra: dict | None = None) -> Path:
    """Write weights/<name>.bin blobs plus a checkpoint.json manifest."""
    root = Path(dir)
    (root / "weights").mkdir(parents=True, exist_ok=True)
    entries = []
    for name, tensor in params.tensors.items():
        as2d = tensor.reshape(1, -1) if tensor.ndim == 1 else tensor
        rel = f"weights/{name}.bin"
        binio.write_matrix(root / rel, as2d)
        entries.append({"name": name, "file": rel, "shape": list(tensor.shape)})
    manifest = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "init_seed": params.init_seed,
        "tensors": entries,
        "extra": extra or {},
    }
    path = root / "checkpoint.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(dir: str | Path) -> tuple[Params, dict]:
    root = Path(dir)
    manifest_path = root / "checkpoint.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {manifest.get('checkpoint_version')}"
        )
    params = Params(init_seed=manifest.get("init_seed"))
    for entry in manifest["tensors"]:
        data = binio.read_matrix(root / entry["file"])
        params[entry["name"]] = data.reshape(entry["shape"])
    return params, manifest.get("extra", {})
