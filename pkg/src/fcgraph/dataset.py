"""Graph dataset serialization and deterministic stratified splits.

Directory layout::

    <dir>/manifest.json          dataset metadata + per-blob sha256 checksums
    <dir>/graphs/NNNNNN.bin      one little-endian blob per graph
    <dir>/splits/seed<k>.json    saved splits

Static blob: u32 n, u32 d, u64 m, m x (u32 i, u32 j), n*d f32 features
row-major, then a label record (u8 kind: 0 none / 1 class + i64 / 2 real +
f64). Dynamic blob: u32 frame count, u32 gamma/stride/crop_length/crop_start,
the frames as unlabeled static sections, then one label record. Features are
stored f32; everything else round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetLoadError, FormatError, ValidationError
from .graph_build import DynamicGraphSequence, StaticGraph

FORMAT_VERSION = 1
PIPELINE_VERSION = "0.1.0"

TASK_KINDS = ("classification", "regression")


@dataclass
class GraphDataset:
    name: str
    task_kind: str
    graphs: list[StaticGraph] | list[DynamicGraphSequence]
    num_classes: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValidationError(
                f"task_kind must be one of {TASK_KINDS}, got {self.task_kind!r}"
            )
        if self.task_kind == "classification":
            if not self.num_classes or self.num_classes < 2:
                raise ValidationError("classification needs num_classes >= 2")
        kinds = {type(g).__name__ for g in self.graphs}
        if len(kinds) > 1:
            raise ValidationError(f"mixed graph kinds in one dataset: {kinds}")
        for idx, g in enumerate(self.graphs):
            if self.task_kind == "classification":
                if not isinstance(g.label, (int, np.integer)) or not (
                    0 <= int(g.label) < self.num_classes
                ):
                    raise ValidationError(
                        f"graph {idx}: label {g.label!r} outside "
                        f"[0, {self.num_classes})"
                    )
            else:
                if g.label is None or not math.isfinite(float(g.label)):
                    raise ValidationError(f"graph {idx}: regression target missing")

    @property
    def graph_kind(self) -> str:
        if not self.graphs:
            return "static"
        return "dynamic" if isinstance(self.graphs[0], DynamicGraphSequence) else "static"

    def labels(self) -> list[int | float]:
        return [g.label for g in self.graphs]


@dataclass
class SplitSpec:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        groups = [set(self.train), set(self.val), set(self.test)]
        total = sum(len(g) for g in groups)
        union = groups[0] | groups[1] | groups[2]
        if total != len(union):
            raise ValidationError("split parts overlap")
        if union and union != set(range(max(union) + 1)):
            raise ValidationError("split does not cover 0..n-1 exactly")


def age_bracket_label(age_years: int | float) -> int | None:
    """Three brackets 22-25 / 26-30 / 31-35; anything older is dropped."""
    if 22 <= age_years <= 25:
        return 0
    if 26 <= age_years <= 30:
        return 1
    if 31 <= age_years <= 35:
        return 2
    return None


# --- binary blobs ---------------------------------------------------------

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def _pack_section(g: StaticGraph) -> bytes:
    parts = [
        _U32.pack(g.n),
        _U32.pack(g.feature_dim),
        _U64.pack(g.n_edges),
    ]
    for i, j in g.edges:
        parts.append(_U32.pack(i))
        parts.append(_U32.pack(j))
    parts.append(np.ascontiguousarray(g.features, dtype="<f4").tobytes())
    return b"".join(parts)


def _pack_label(label: int | float | None) -> bytes:
    if label is None:
        return b"\x00"
    if isinstance(label, (int, np.integer)):
        return b"\x01" + struct.pack("<q", int(label))
    return b"\x02" + struct.pack("<d", float(label))


class _Reader:
    def __init__(self, blob: bytes, where: str):
        self.blob = blob
        self.pos = 0
        self.where = where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DatasetLoadError(f"{self.where}: truncated blob")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]


def _unpack_section(r: _Reader, window: tuple[int, int] | None = None) -> StaticGraph:
    n = r.u32()
    d = r.u32()
    m = r.u64()
    edges = [(r.u32(), r.u32()) for _ in range(m)]
    feats = np.frombuffer(r.take(4 * n * d), dtype="<f4").reshape(n, d)
    return StaticGraph(n=n, edges=edges, features=feats.astype(np.float64), window=window)


def _unpack_label(r: _Reader) -> int | float | None:
    kind = r.take(1)[0]
    if kind == 0:
        return None
    if kind == 1:
        return int(struct.unpack("<q", r.take(8))[0])
    if kind == 2:
        return float(struct.unpack("<d", r.take(8))[0])
    raise DatasetLoadError(f"{r.where}: unknown label kind {kind}")


def _pack_graph(g: StaticGraph | DynamicGraphSequence) -> bytes:
    if isinstance(g, StaticGraph):
        return _pack_section(g) + _pack_label(g.label)
    parts = [
        _U32.pack(g.n_frames),
        _U32.pack(g.gamma),
        _U32.pack(g.stride),
        _U32.pack(g.crop_length),
        _U32.pack(g.crop_start),
    ]
    parts.extend(_pack_section(frame) for frame in g.frames)
    parts.append(_pack_label(g.label))
    return b"".join(parts)


def _unpack_graph(blob: bytes, kind: str, where: str):
    r = _Reader(blob, where)
    if kind == "static":
        g = _unpack_section(r)
        g.label = _unpack_label(r)
        out = g
    else:
        n_frames = r.u32()
        gamma, stride, crop_length, crop_start = (r.u32() for _ in range(4))
        frames = [
            _unpack_section(r, window=(crop_start + k * stride, gamma))
            for k in range(n_frames)
        ]
        label = _unpack_label(r)
        out = DynamicGraphSequence(
            frames=frames,
            gamma=gamma,
            stride=stride,
            crop_length=crop_length,
            crop_start=crop_start,
            label=label,
        )
        for frame in frames:
            frame.label = label
    if r.pos != len(blob):
        raise DatasetLoadError(f"{where}: {len(blob) - r.pos} trailing bytes")
    return out


def save_dataset(ds: GraphDataset, dir: str | Path) -> Path:
    """Write manifest + one blob per graph; returns the manifest path."""
    if not ds.graphs:
        raise ValidationError("refusing to save an empty dataset")
    root = Path(dir)
    (root / "graphs").mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, g in enumerate(ds.graphs):
        blob = _pack_graph(g)
        rel = f"graphs/{idx:06d}.bin"
        with open(root / rel, "wb") as fh:
            fh.write(blob)
        entries.append(
            {
                "file": rel,
                "sha256": hashlib.sha256(blob).hexdigest(),
                "n_bytes": len(blob),
                "subject_id": g.subject_id,
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "pipeline_version": PIPELINE_VERSION,
        "name": ds.name,
        "task_kind": ds.task_kind,
        "num_classes": ds.num_classes,
        "graph_kind": ds.graph_kind,
        "provenance": ds.provenance,
        "graphs": entries,
    }
    path = root / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(dir: str | Path) -> GraphDataset:
    """Load and fully re-validate a saved dataset."""
    root = Path(dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"unsupported dataset format version {manifest.get('format_version')}"
        )
    kind = manifest["graph_kind"]
    graphs = []
    for idx, entry in enumerate(manifest["graphs"]):
        where = f"graph {idx} ({entry['file']})"
        blob_path = root / entry["file"]
        if not blob_path.exists():
            raise DatasetLoadError(f"{where}: blob missing", graph_index=idx)
        blob = blob_path.read_bytes()
        if len(blob) != entry["n_bytes"]:
            raise DatasetLoadError(
                f"{where}: size {len(blob)} != recorded {entry['n_bytes']}",
                graph_index=idx,
            )
        if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise DatasetLoadError(f"{where}: checksum mismatch", graph_index=idx)
        try:
            g = _unpack_graph(blob, kind, where)
        except ValidationError as exc:
            raise DatasetLoadError(f"{where}: {exc}", graph_index=idx) from exc
        g.subject_id = entry.get("subject_id", "")
        graphs.append(g)
    return GraphDataset(
        name=manifest["name"],
        task_kind=manifest["task_kind"],
        graphs=graphs,
        num_classes=manifest.get("num_classes"),
        provenance=manifest.get("provenance", {}),
    )


# --- stratified splits ----------------------------------------------------


def _largest_remainder(count: int, fractions: tuple[float, float, float]) -> list[int]:
    exact = [count * f for f in fractions]
    base = [int(math.floor(e)) for e in exact]
    leftover = count - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def _quantile_bins(targets: np.ndarray, n_bins: int = 4) -> np.ndarray:
    edges = np.quantile(targets, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.digitize(targets, edges, right=True)


def stratified_split(
    labels: list[int | float],
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 123,
    task_kind: str = "classification",
    num_classes: int | None = None,
) -> SplitSpec:
    """Per-class shuffle + largest-remainder allocation into train/val/test.

    Each stratum's part sizes differ from the exact fractional counts by
    less than one sample. Regression targets are stratified on quartile bins.
    """
    if not labels:
        raise ValidationError("no samples to split")
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValidationError("fractions must be three non-negative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {sum(fractions)}")

    arr = np.asarray(labels)
    if task_kind == "classification":
        if num_classes is not None:
            counts = {int(c): 0 for c in range(num_classes)}
            for v in labels:
                counts[int(v)] = counts.get(int(v), 0) + 1
            empty = [c for c, k in counts.items() if k == 0]
            if empty:
                raise ValidationError(f"classes with zero samples: {empty}")
        strata = arr.astype(np.int64)
    elif task_kind == "regression":
        strata = _quantile_bins(arr.astype(np.float64))
    else:
        raise ValidationError(f"unknown task_kind {task_kind!r}")

    rng = np.random.default_rng(seed)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for value in sorted(set(strata.tolist())):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(len(idx))]
        n_train, n_val, n_test = _largest_remainder(len(idx), tuple(fractions))
        parts[0].extend(int(i) for i in idx[:n_train])
        parts[1].extend(int(i) for i in idx[n_train : n_train + n_val])
        parts[2].extend(int(i) for i in idx[n_train + n_val :])
        assert n_train + n_val + n_test == len(idx)
    return SplitSpec(
        train=sorted(parts[0]),
        val=sorted(parts[1]),
        test=sorted(parts[2]),
        seed=seed,
        fractions=tuple(fractions),
    )


def save_split(split: SplitSpec, dir: str | Path) -> Path:
    root = Path(dir) / "splits"
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"seed{split.seed}.json"
    payload = {
        "seed": split.seed,
        "fractions": list(split.fractions),
        "train": split.train,
        "val": split.val,
        "test": split.test,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_split(path: str | Path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return SplitSpec(
        train=payload["train"],
        val=payload["val"],
        test=payload["test"],
        seed=payload["seed"],
        fractions=tuple(payload["fractions"]),
    )
