"""Pearson correlation matrices over full scans and sliding windows."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import ValidationError
from .preprocess import CleanTimeSeries, standardize_columns

SYMMETRY_TOL = 1e-12


@dataclass
class ConnectivityMatrix:
    """N x N correlation matrix; correlations of degenerate ROIs are 0."""

    values: np.ndarray
    window: tuple[int, int] | None = None  # (start_index, length)
    degenerate_rois: list[int] = field(default_factory=list)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"correlation matrix must be square, got {v.shape}")
        if np.abs(v - v.T).max(initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("correlation matrix is not symmetric")
        if np.any(np.diag(v) != 1.0):
            raise ValidationError("correlation diagonal must be exactly 1")
        if np.abs(v).max() > 1.0 + SYMMETRY_TOL:
            raise ValidationError("correlation entries outside [-1, 1]")
        self.values = v

    @property
    def n_rois(self) -> int:
        return self.values.shape[0]


def _correlate(data: np.ndarray, window: tuple[int, int] | None) -> ConnectivityMatrix:
    z, degenerate = standardize_columns(data)
    c = (z.T @ z) / data.shape[0]
    c = (c + c.T) / 2.0
    np.fill_diagonal(c, 1.0)
    return ConnectivityMatrix(values=c, window=window, degenerate_rois=degenerate)


def pearson_full(ts: CleanTimeSeries) -> ConnectivityMatrix:
    """Pairwise Pearson correlation of all ROI pairs over the whole scan."""
    if ts.n_timepoints < 2:
        raise ValidationError("correlation needs at least 2 timepoints")
    return _correlate(ts.data, window=None)


def pearson_windowed(ts: CleanTimeSeries, start: int, gamma: int) -> ConnectivityMatrix:
    """Correlation over rows [start, start+gamma), re-normalized in-window.

    Per-window re-normalization matters for downstream signal features;
    the correlation itself is invariant to it.
    """
    if gamma < 2:
        raise ValidationError(f"window length must be >= 2, got {gamma}")
    if start < 0 or start + gamma > ts.n_timepoints:
        raise ValidationError(
            f"window [{start}, {start + gamma}) out of range for T={ts.n_timepoints}"
        )
    return _correlate(ts.data[start : start + gamma], window=(start, gamma))


def window_normalized(ts: CleanTimeSeries, start: int, gamma: int) -> np.ndarray:
    """The in-window re-normalized slice used for window signal features."""
    if start < 0 or gamma < 2 or start + gamma > ts.n_timepoints:
        raise ValidationError(
            f"window [{start}, {start + gamma}) out of range for T={ts.n_timepoints}"
        )
    z, _ = standardize_columns(ts.data[start : start + gamma])
    return z


def save_connectivity(cm: ConnectivityMatrix, path: str | Path) -> None:
    path = Path(path)
    binio.write_matrix(path, cm.values, magic=b"NGCM")
    if cm.window is not None:
        meta = {"window_start": cm.window[0], "window_length": cm.window[1]}
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_connectivity(path: str | Path) -> ConnectivityMatrix:
    path = Path(path)
    values = binio.read_matrix(path, magic=b"NGCM")
    window = None
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        window = (int(meta["window_start"]), int(meta["window_length"]))
    degenerate = [
        int(j)
        for j in range(values.shape[0])
        if np.all(np.delete(values[j], j) == 0.0)
    ]
    return ConnectivityMatrix(values=values, window=window, degenerate_rois=degenerate)
