"""ROI time-series ingestion: file IO, nuisance regressors, synthetic corpora.

Time series are stored as T x N matrices (rows = timepoints, columns = ROIs)
either as CSV or in the raw-f64 container (magic "NGTS"). A JSON sidecar with
the same stem (``scan.csv`` -> ``scan.json``) carries ``subject_id``,
``tr_seconds`` and an optional ``label``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import DimensionError, ParseError, ValidationError

DEFAULT_TR_SECONDS = 0.72
N_MOTION_PARAMS = 6


@dataclass
class RoiTimeSeries:
    """BOLD signal matrix for one scan, T timepoints by N ROIs."""

    data: np.ndarray
    tr_seconds: float = DEFAULT_TR_SECONDS
    subject_id: str = ""
    label: int | float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValidationError(f"time series must be 2-D, got ndim={self.data.ndim}")
        t, n = self.data.shape
        if t < 2:
            raise ValidationError(f"need at least 2 timepoints, got {t}")
        if n < 1:
            raise ValidationError("need at least 1 ROI")
        if not np.all(np.isfinite(self.data)):
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise ValidationError(
                f"non-finite entry at timepoint {bad[0]}, ROI {bad[1]}"
            )
        if not self.tr_seconds > 0:
            raise ValidationError(f"tr_seconds must be positive, got {self.tr_seconds}")

    @property
    def n_timepoints(self) -> int:
        return self.data.shape[0]

    @property
    def n_rois(self) -> int:
        return self.data.shape[1]


@dataclass
class NuisanceDesign:
    """Regressor matrix paired with a scan: T rows, one named column each."""

    columns: np.ndarray
    names: list[str]

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=np.float64)
        if self.columns.ndim != 2:
            raise ValidationError("design must be 2-D")
        if self.columns.shape[1] != len(self.names):
            raise DimensionError(
                f"{self.columns.shape[1]} columns but {len(self.names)} names"
            )
        if self.columns.shape[1] < 1:
            raise ValidationError("design needs at least one column")
        if not np.all(np.isfinite(self.columns)):
            raise ValidationError("design contains non-finite entries")

    @property
    def n_timepoints(self) -> int:
        return self.columns.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-signal synthetic corpus.

    Subjects of class c share elevated correlation among the ROIs of block c
    (indices [c*block_size, (c+1)*block_size)); all remaining ROIs are
    independent noise. The class signal therefore lives in the correlation
    structure, not in the marginal distribution of any single signal.
    """

    n_subjects: int
    n_rois: int
    n_timepoints: int
    n_classes: int
    block_size: int
    within_block_corr: float
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValidationError("n_subjects must be >= 1")
        if self.n_timepoints < 2:
            raise ValidationError("n_timepoints must be >= 2")
        if self.n_classes < 1 or self.block_size < 1:
            raise ValidationError("n_classes and block_size must be >= 1")
        if self.block_size * self.n_classes > self.n_rois:
            raise ValidationError(
                f"block_size*n_classes = {self.block_size * self.n_classes} "
                f"exceeds n_rois = {self.n_rois}"
            )
        if not 0.0 < self.within_block_corr < 1.0:
            raise ValidationError("within_block_corr must lie in (0, 1)")
        if not self.noise_sd > 0:
            raise ValidationError("noise_sd must be positive")


def _parse_csv_rows(path: Path) -> list[list[float]]:
    rows: list[list[float]] = []
    n_cols: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if not rows and n_cols is None:
                # optional header: skip the first row iff any field is non-numeric
                try:
                    [float(f) for f in fields]
                except ValueError:
                    n_cols = len(fields)
                    continue
            if n_cols is not None and len(fields) != n_cols:
                raise ParseError(
                    f"{path}: row {lineno} has {len(fields)} fields, expected {n_cols}"
                )
            n_cols = len(fields)
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}") from exc
            for col, v in enumerate(values):
                if not math.isfinite(v):
                    raise ValidationError(
                        f"{path}: non-finite value at row {lineno}, column {col}"
                    )
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return rows


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def load_timeseries(path: str | Path, format: str = "csv") -> RoiTimeSeries:
    """Load a T x N scan from ``csv`` or ``raw-f64``, plus sidecar metadata."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if format == "csv":
        data = np.array(_parse_csv_rows(path), dtype=np.float64)
    elif format == "raw-f64":
        data = binio.read_matrix(path, magic=b"NGTS")
    else:
        raise ValidationError(f"unknown format {format!r}; use 'csv' or 'raw-f64'")

    meta = {}
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return RoiTimeSeries(
        data=data,
        tr_seconds=float(meta.get("tr_seconds", DEFAULT_TR_SECONDS)),
        subject_id=str(meta.get("subject_id", path.stem)),
        label=meta.get("label"),
    )


def save_timeseries(ts: RoiTimeSeries, path: str | Path, format: str = "csv") -> None:
    """Write a scan plus its JSON sidecar. Raw is bit-exact; CSV uses %.17g."""
    path = Path(path)
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in ts.data:
                fh.write(",".join("%.17g" % v for v in row))
                fh.write("\n")
    elif format == "raw-f64":
        binio.write_matrix(path, ts.data, magic=b"NGTS")
    else:
        raise ValidationError(f"unknown format {format!r}; use 'csv' or 'raw-f64'")
    meta = {"subject_id": ts.subject_id, "tr_seconds": ts.tr_seconds}
    if ts.label is not None:
        meta["label"] = ts.label
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_nuisance(path: str | Path, t: int, derivative: bool = True) -> NuisanceDesign:
    """Read a T x 6 motion-parameter file and assemble the regressor design.

    Column order: intercept, linear trend, quadratic trend (trend domain
    rescaled to [0, 1] for conditioning), the six motion parameters, then,
    when ``derivative`` is set, their backward differences with a zero first
    row, giving K = 3 + 6 + 6 = 15.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    motion = np.array(_parse_csv_rows(path), dtype=np.float64)
    if motion.shape[1] != N_MOTION_PARAMS:
        raise DimensionError(
            f"{path}: expected {N_MOTION_PARAMS} motion columns, got {motion.shape[1]}"
        )
    if motion.shape[0] != t:
        raise DimensionError(
            f"{path}: {motion.shape[0]} rows but scan has {t} timepoints"
        )
    return build_nuisance_design(motion, derivative=derivative)


def build_nuisance_design(motion: np.ndarray, derivative: bool = True) -> NuisanceDesign:
    """Assemble trend + motion (+ backward-difference) regressors."""
    motion = np.asarray(motion, dtype=np.float64)
    t = motion.shape[0]
    if t < 2:
        raise ValidationError("need at least 2 timepoints for trend regressors")
    u = np.arange(t, dtype=np.float64) / (t - 1)
    cols = [np.ones(t), u, u**2]
    names = ["intercept", "trend_linear", "trend_quadratic"]
    for j in range(motion.shape[1]):
        cols.append(motion[:, j])
        names.append(f"motion_{j + 1}")
    if derivative:
        for j in range(motion.shape[1]):
            d = np.zeros(t)
            d[1:] = np.diff(motion[:, j])
            cols.append(d)
            names.append(f"motion_{j + 1}_diff")
    return NuisanceDesign(columns=np.column_stack(cols), names=names)


def generate_synthetic(spec: SyntheticSpec) -> list[RoiTimeSeries]:
    """Deterministically generate a labeled corpus with planted block structure.

    Block-ROI signal model: x = sqrt(rho)*z + sqrt(1-rho)*noise_sd*eps with a
    per-subject latent z, so within-block correlation equals rho in
    expectation at noise_sd = 1 and exceeds it for smaller noise. Labels cycle
    over classes, so class counts are balanced whenever
    n_subjects % n_classes == 0.
    """
    rng = np.random.default_rng(spec.seed)
    sqrt_rho = math.sqrt(spec.within_block_corr)
    sqrt_com = math.sqrt(1.0 - spec.within_block_corr)
    corpus: list[RoiTimeSeries] = []
    for s in range(spec.n_subjects):
        label = s % spec.n_classes
        z = rng.standard_normal(spec.n_timepoints)
        eps = rng.standard_normal((spec.n_timepoints, spec.n_rois))
        data = spec.noise_sd * eps
        block = slice(label * spec.block_size, (label + 1) * spec.block_size)
        data[:, block] = (
            sqrt_rho * z[:, None] + sqrt_com * spec.noise_sd * eps[:, block]
        )
        corpus.append(
            RoiTimeSeries(
                data=data,
                tr_seconds=DEFAULT_TR_SECONDS,
                subject_id=f"synth-{s:04d}",
                label=label,
            )
        )
    return corpus


@dataclass
class CorpusDir:
    """Helpers for a directory of raw-f64 scans written by the CLI."""

    root: Path
    paths: list[Path] = field(default_factory=list)

    @staticmethod
    def write(corpus: list[RoiTimeSeries], root: str | Path) -> "CorpusDir":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, ts in enumerate(corpus):
            name = ts.subject_id or f"scan-{i:04d}"
            p = root / f"{name}.bin"
            save_timeseries(ts, p, format="raw-f64")
            paths.append(p)
        return CorpusDir(root=root, paths=paths)

    @staticmethod
    def read(root: str | Path) -> list[RoiTimeSeries]:
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"no such directory: {root}")
        paths = sorted(root.glob("*.bin"))
        if not paths:
            raise FileNotFoundError(f"no .bin scans under {root}")
        return [load_timeseries(p, format="raw-f64") for p in paths]
