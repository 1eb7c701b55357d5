"""Attributed graph construction from correlation matrices.

Edges are the strongest positive correlations: the candidate universe is the
strictly positive off-diagonal upper triangle (M entries), of which the top
ceil(p/100 * M) survive, together with any entries tied exactly with the
cutoff value so the selection is permutation-stable.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .connectivity import ConnectivityMatrix, pearson_windowed, window_normalized
from .errors import DimensionError, ValidationError
from .preprocess import CleanTimeSeries

DENSITY_PRESETS = {"sparse5": 5.0, "medium10": 10.0, "dense20": 20.0}

FEATURE_KINDS = ("corr", "bold", "corr_bold")


def resolve_density(spec: str | float) -> float:
    """Map a preset name (sparse5/medium10/dense20) or percentage to percent."""
    if isinstance(spec, str):
        if spec not in DENSITY_PRESETS:
            raise ValidationError(
                f"unknown density preset {spec!r}; use one of {sorted(DENSITY_PRESETS)}"
            )
        return DENSITY_PRESETS[spec]
    pct = float(spec)
    if not 0.0 < pct <= 100.0:
        raise ValidationError(f"top_percent must lie in (0, 100], got {pct}")
    return pct


@dataclass(frozen=True)
class FeatureConfig:
    """Node feature layout: correlation rows, signal rows, or both side by side."""

    kind: str = "corr"

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(
                f"unknown feature kind {self.kind!r}; use one of {FEATURE_KINDS}"
            )

    def dim(self, n_rois: int, signal_len: int) -> int:
        if self.kind == "corr":
            return n_rois
        if self.kind == "bold":
            return signal_len
        return n_rois + signal_len


@dataclass
class EdgeSelection:
    """Result of percentile thresholding; empty candidate sets are flagged."""

    edges: list[tuple[int, int]]
    n_candidates: int
    cutoff: float | None
    no_candidates: bool


@dataclass
class StaticGraph:
    """Undirected attributed graph over ROIs."""

    n: int
    edges: list[tuple[int, int]]
    features: np.ndarray
    label: int | float | None = None
    density_percent: float | None = None
    subject_id: str = ""
    window: tuple[int, int] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.n:
            raise ValidationError(
                f"feature matrix must have {self.n} rows, got {self.features.shape}"
            )
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f"self loop at node {i}")
            if not (0 <= i < j < self.n):
                raise ValidationError(f"edge ({i}, {j}) out of range or not i<j")
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)


@dataclass
class DynamicGraphSequence:
    """Ordered window graphs from a random crop of one scan."""

    frames: list[StaticGraph]
    gamma: int
    stride: int
    crop_length: int
    crop_start: int
    subject_id: str = ""
    label: int | float | None = None

    def __post_init__(self):
        expected = (self.crop_length - self.gamma) // self.stride + 1
        if len(self.frames) != expected:
            raise ValidationError(
                f"{len(self.frames)} frames but (l-gamma)/stride+1 = {expected}"
            )
        if not self.frames:
            raise ValidationError("dynamic sequence needs at least one frame")
        n = self.frames[0].n
        d = self.frames[0].feature_dim
        for k, g in enumerate(self.frames):
            if g.n != n or g.feature_dim != d:
                raise ValidationError(f"frame {k} disagrees on n or feature dim")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n(self) -> int:
        return self.frames[0].n


def threshold_edges(cm: ConnectivityMatrix, top_percent: float) -> EdgeSelection:
    """Keep the top ceil(p/100 * M) positive upper-triangle correlations.

    Entries tied exactly with the cutoff value are all kept, so the edge set
    is deterministic and stable under node relabeling.
    """
    pct = resolve_density(top_percent)
    n = cm.n_rois
    iu, ju = np.triu_indices(n, k=1)
    vals = cm.values[iu, ju]
    pos = vals > 0.0
    m = int(pos.sum())
    if m == 0:
        return EdgeSelection(edges=[], n_candidates=0, cutoff=None, no_candidates=True)
    k = math.ceil(pct / 100.0 * m)
    pos_vals = vals[pos]
    cutoff = float(np.sort(pos_vals)[::-1][k - 1])
    keep = pos & (vals >= cutoff)
    edges = [(int(i), int(j)) for i, j in zip(iu[keep], ju[keep])]
    return EdgeSelection(edges=edges, n_candidates=m, cutoff=cutoff, no_candidates=False)


def _node_features(
    ts: CleanTimeSeries, cm: ConnectivityMatrix, feat: FeatureConfig
) -> np.ndarray:
    if cm.window is None:
        signal = ts.data.T  # ROI i's normalized full-scan signal as row i
    else:
        start, gamma = cm.window
        signal = window_normalized(ts, start, gamma).T
    if feat.kind == "corr":
        return cm.values.copy()
    if feat.kind == "bold":
        return signal.copy()
    return np.hstack([cm.values, signal])


def build_static(
    ts: CleanTimeSeries,
    cm: ConnectivityMatrix,
    feat: FeatureConfig,
    top_percent: float | str,
) -> StaticGraph:
    """Threshold a correlation matrix and attach node features."""
    if cm.n_rois != ts.n_rois:
        raise DimensionError(
            f"matrix is {cm.n_rois}x{cm.n_rois} but scan has {ts.n_rois} ROIs"
        )
    pct = resolve_density(top_percent)
    selection = threshold_edges(cm, pct)
    return StaticGraph(
        n=cm.n_rois,
        edges=selection.edges,
        features=_node_features(ts, cm, feat),
        label=ts.label,
        density_percent=pct,
        subject_id=ts.subject_id,
        window=cm.window,
    )


def derive_crop_seed(global_seed: int, subject_id: str) -> int:
    """Stable per-subject crop seed; independent of Python hash salting."""
    digest = hashlib.sha256(f"{global_seed}:{subject_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def build_dynamic(
    ts: CleanTimeSeries,
    feat: FeatureConfig,
    gamma: int,
    stride: int,
    l: int,
    crop_seed: int,
    top_percent: float | str,
) -> DynamicGraphSequence:
    """Random-crop the scan to l timepoints and build one graph per window.

    Windows start at crop_start + k*stride for k = 0..floor((l-gamma)/stride);
    each is re-normalized individually before correlation and thresholding.
    """
    if l > ts.n_timepoints:
        raise ValidationError(f"crop length {l} exceeds scan length {ts.n_timepoints}")
    if gamma > l:
        raise ValidationError(f"window length {gamma} exceeds crop length {l}")
    if gamma < 2:
        raise ValidationError(f"window length must be >= 2, got {gamma}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    pct = resolve_density(top_percent)

    rng = np.random.default_rng(crop_seed)
    crop_start = int(rng.integers(0, ts.n_timepoints - l, endpoint=True))

    frames = []
    for k in range((l - gamma) // stride + 1):
        start = crop_start + k * stride
        cm = pearson_windowed(ts, start, gamma)
        frames.append(build_static(ts, cm, feat, pct))
    return DynamicGraphSequence(
        frames=frames,
        gamma=gamma,
        stride=stride,
        crop_length=l,
        crop_start=crop_start,
        subject_id=ts.subject_id,
        label=ts.label,
    )


@dataclass
class BuildPresets:
    """Benchmark construction presets used by the CLI defaults."""

    static_rois: int = 1000
    static_task_rois: int = 400
    static_density: float = DENSITY_PRESETS["sparse5"]
    dynamic_rois: int = 100
    dynamic_density: float = DENSITY_PRESETS["medium10"]
    gamma: int = 50
    stride: int = 3
    crop_length: int = 150
    features: str = "corr"


PRESETS = BuildPresets()
