"""fcgraph: functional-connectivity graphs and reference graph neural models.

Pipeline: ROI time series -> nuisance regression -> temporal normalization ->
Pearson connectivity (full-scan or sliding-window) -> percentile-thresholded
attributed graphs -> datasets, statistics, and from-scratch model training.
"""

from .bench import Metrics, ProbeGrid, TrainConfig, evaluate, run_probe, train
from .connectivity import ConnectivityMatrix, pearson_full, pearson_windowed
from .dataset import (
    GraphDataset,
    SplitSpec,
    load_dataset,
    save_dataset,
    stratified_split,
)
from .errors import (
    ConditioningError,
    DatasetLoadError,
    DimensionError,
    FcgraphError,
    FormatError,
    ParseError,
    ValidationError,
)
from .graph_build import (
    DynamicGraphSequence,
    FeatureConfig,
    StaticGraph,
    build_dynamic,
    build_static,
    threshold_edges,
)
from .graph_stats import GraphStats, aggregate_stats, compute_stats
from .ingest import (
    NuisanceDesign,
    RoiTimeSeries,
    SyntheticSpec,
    generate_synthetic,
    load_nuisance,
    load_timeseries,
    save_timeseries,
)
from .preprocess import CleanTimeSeries, normalize, regress_nuisance

__version__ = "0.1.0"

__all__ = [
    "CleanTimeSeries",
    "ConditioningError",
    "ConnectivityMatrix",
    "DatasetLoadError",
    "DimensionError",
    "DynamicGraphSequence",
    "FcgraphError",
    "FeatureConfig",
    "FormatError",
    "GraphDataset",
    "GraphStats",
    "Metrics",
    "NuisanceDesign",
    "ParseError",
    "ProbeGrid",
    "RoiTimeSeries",
    "SplitSpec",
    "StaticGraph",
    "SyntheticSpec",
    "TrainConfig",
    "ValidationError",
    "aggregate_stats",
    "build_dynamic",
    "build_static",
    "compute_stats",
    "evaluate",
    "generate_synthetic",
    "load_dataset",
    "load_nuisance",
    "load_timeseries",
    "normalize",
    "pearson_full",
    "pearson_windowed",
    "regress_nuisance",
    "run_probe",
    "save_dataset",
    "save_timeseries",
    "stratified_split",
    "threshold_edges",
    "train",
]
