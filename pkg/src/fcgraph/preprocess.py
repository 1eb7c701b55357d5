"""Scan cleaning: nuisance regression and per-ROI temporal normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, DimensionError, ValidationError
from .ingest import NuisanceDesign, RoiTimeSeries

RANK_RTOL = 1e-10  # smallest/largest singular value ratio treated as rank deficient


@dataclass
class Provenance:
    regressors: list[str] | None = None
    normalized: bool = False
    degenerate_rois: list[int] = field(default_factory=list)


@dataclass
class CleanTimeSeries:
    """Normalized T x N matrix; degenerate (constant) ROIs are all-zero."""

    data: np.ndarray
    provenance: Provenance
    tr_seconds: float = 0.72
    subject_id: str = ""
    label: int | float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.provenance.normalized:
            degenerate = set(self.provenance.degenerate_rois)
            live = [j for j in range(self.data.shape[1]) if j not in degenerate]
            if live:
                mu = self.data[:, live].mean(axis=0)
                sd = self.data[:, live].std(axis=0)
                if np.abs(mu).max() >= 1e-10 or np.abs(sd - 1).max() >= 1e-10:
                    raise ValidationError("normalized columns drifted from (0, 1)")
            for j in degenerate:
                if np.any(self.data[:, j] != 0.0):
                    raise ValidationError(f"degenerate ROI {j} is not all-zero")

    @property
    def n_timepoints(self) -> int:
        return self.data.shape[0]

    @property
    def n_rois(self) -> int:
        return self.data.shape[1]


def _numerical_rank(m: np.ndarray) -> int:
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def _offending_columns(design: NuisanceDesign) -> list[str]:
    """Columns that do not increase the numerical rank of the design."""
    bad = []
    rank = 0
    for j in range(design.columns.shape[1]):
        new_rank = _numerical_rank(design.columns[:, : j + 1])
        if new_rank == rank:
            bad.append(design.names[j])
        rank = new_rank
    return bad


def regress_nuisance(ts: RoiTimeSeries, design: NuisanceDesign) -> RoiTimeSeries:
    """Residualize every ROI against the design via least squares.

    The returned residual matrix is orthogonal to every design column to
    relative 1e-10, and the projection is idempotent at the same tolerance.
    """
    if design.n_timepoints != ts.n_timepoints:
        raise DimensionError(
            f"design has {design.n_timepoints} rows, scan has {ts.n_timepoints}"
        )
    d = design.columns
    sv = np.linalg.svd(d, compute_uv=False)
    if sv[-1] < RANK_RTOL * sv[0]:
        bad = _offending_columns(design)
        raise ConditioningError(
            f"rank-deficient design (cond ratio {sv[-1] / sv[0]:.2e}); "
            f"offending columns: {', '.join(bad) or 'unresolved'}",
            offending_columns=bad,
        )
    beta, *_ = np.linalg.lstsq(d, ts.data, rcond=None)
    residual = ts.data - d @ beta
    return RoiTimeSeries(
        data=residual,
        tr_seconds=ts.tr_seconds,
        subject_id=ts.subject_id,
        label=ts.label,
    )


def standardize_columns(data: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Zero-mean unit-(population)-variance per column; constants become zeros.

    Returns the standardized matrix and the indices of degenerate columns.
    """
    data = np.asarray(data, dtype=np.float64)
    mu = data.mean(axis=0)
    sd = data.std(axis=0)  # population (divide by T)
    degenerate = (sd == 0.0) | (sd < 1e-13 * np.abs(mu))
    safe_sd = np.where(degenerate, 1.0, sd)
    z = (data - mu) / safe_sd
    # second pass pins mean/std to machine precision even for ill-scaled
    # columns (large mean, tiny variance) where one pass leaves drift
    mu2 = z.mean(axis=0)
    sd2 = z.std(axis=0)
    safe_sd2 = np.where(degenerate | (sd2 == 0.0), 1.0, sd2)
    z = (z - mu2) / safe_sd2
    z[:, degenerate] = 0.0
    return z, [int(j) for j in np.flatnonzero(degenerate)]


def normalize(ts: RoiTimeSeries, regressors: list[str] | None = None) -> CleanTimeSeries:
    """Temporally normalize each ROI to zero mean and unit population variance."""
    if ts.n_timepoints < 2:
        raise ValidationError("normalization needs at least 2 timepoints")
    z, degenerate = standardize_columns(ts.data)
    return CleanTimeSeries(
        data=z,
        provenance=Provenance(
            regressors=regressors, normalized=True, degenerate_rois=degenerate
        ),
        tr_seconds=ts.tr_seconds,
        subject_id=ts.subject_id,
        label=ts.label,
    )
