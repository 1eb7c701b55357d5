"""Training loop, metrics, and the feature/ROI/density probe.

Determinism contract: with a fixed config (and single-threaded kernels) the
optimizer trajectory, checkpoints, and metrics are reproducible bit for bit.
All randomness flows from named substreams of the config seed. Wall time and
peak RSS are measured but kept out of the deterministic report files.
"""

from __future__ import annotations

import json
import resource
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import GraphDataset, SplitSpec, load_dataset, stratified_split
from .errors import DimensionError, ValidationError
from .graph_build import FeatureConfig, StaticGraph, build_static
from .ingest import SyntheticSpec, generate_synthetic
from .connectivity import pearson_full
from .models import (
    MODELS,
    model_card,
    prepare_graph,
    prepare_sequence,
    uppertri_features,
)
from .nn import AdamState, adam_step, cross_entropy, mae
from .nn.params import Params, load_checkpoint, save_checkpoint
from .preprocess import normalize

LOSS_FOR_TASK = {"classification": "cross_entropy", "regression": "mae"}


@dataclass
class TrainConfig:
    model: str = "gnnstar"
    loss: str = "cross_entropy"
    epochs: int = 100
    lr: float = 1e-5
    weight_decay: float = 5e-4
    dropout: float = 0.5
    seed: int = 123
    dataset_dir: str | None = None
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    step_mode: str = "full_batch"  # one averaged step per epoch, or "per_graph"
    normalize_targets: bool = True
    model_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.lr < 0:
            raise ValidationError("lr must be >= 0")  # lr=0 is the no-update limit
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}")
        if self.loss not in ("cross_entropy", "mae"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.step_mode not in ("per_graph", "full_batch"):
            raise ValidationError(f"unknown step_mode {self.step_mode!r}")

    @staticmethod
    def defaults_for(task_kind: str, **overrides) -> "TrainConfig":
        """Protocol defaults: 100 epochs @ lr 1e-5 for classification,
        50 epochs @ lr 1e-3 for regression."""
        if task_kind == "classification":
            base = TrainConfig(loss="cross_entropy", epochs=100, lr=1e-5)
        elif task_kind == "regression":
            base = TrainConfig(loss="mae", epochs=50, lr=1e-3)
        else:
            raise ValidationError(f"unknown task kind {task_kind!r}")
        return replace(base, **overrides)


@dataclass
class Metrics:
    metric_name: str  # "accuracy" or "mae"
    train: float
    val: float
    test: float
    loss_curve: list[float]
    wall_time_s: float = 0.0
    peak_rss_mb: float = 0.0

    def deterministic_dict(self) -> dict:
        """Everything except timing/memory, for reproducible report files."""
        return {
            "metric_name": self.metric_name,
            "train": self.train,
            "val": self.val,
            "test": self.test,
            "loss_curve": self.loss_curve,
        }


@dataclass
class TrainResult:
    metrics: Metrics
    params: Params
    split: SplitSpec
    card: dict
    checkpoint_extra: dict


def _peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _prepare_samples(ds: GraphDataset, model_kind: str):
    if model_kind == "dyn":
        if ds.graph_kind != "dynamic":
            raise ValidationError("model 'dyn' needs a dynamic dataset")
        return [prepare_sequence(g) for g in ds.graphs]
    if ds.graph_kind != "static":
        raise ValidationError(f"model {model_kind!r} needs a static dataset")
    if model_kind == "mlp":
        kind = ds.provenance.get("features", "corr")
        return [uppertri_features(g, kind) for g in ds.graphs]
    return [prepare_graph(g) for g in ds.graphs]


def _sample_dims(ds: GraphDataset, samples, model_kind: str) -> tuple[int, int]:
    """(input feature dim, node count) for model initialization."""
    if model_kind == "mlp":
        return samples[0].shape[1], 0
    if model_kind == "dyn":
        first = samples[0].frames[0]
        return first.x.shape[1], first.n
    return samples[0].x.shape[1], samples[0].n


def _model_config(config: TrainConfig):
    base = MODELS[config.model].default_config
    return replace(base, dropout=config.dropout, **config.model_overrides)


class _TargetCodec:
    """Optional min-max normalization of regression targets, fit on train."""

    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        self.lo = lo
        self.hi = hi

    @staticmethod
    def fit(values: np.ndarray) -> "_TargetCodec":
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            hi = lo + 1.0
        return _TargetCodec(lo, hi)

    def encode(self, y: np.ndarray) -> np.ndarray:
        return (y - self.lo) / (self.hi - self.lo)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}


def _forward_loss(model, sample, params, cfg, target, loss_kind, train, rng):
    out, cache = model.forward(sample, params, cfg, train, rng)
    if loss_kind == "cross_entropy":
        loss, d_out = cross_entropy(out, np.array([target], dtype=np.int64))
    else:
        loss, d_out = mae(out, np.array([[target]], dtype=np.float64))
    return out, cache, loss, d_out


def _eval_split(model, samples, params, cfg, targets, idx, loss_kind):
    """Eval-mode metric and mean loss over one split."""
    if not idx:
        return float("nan"), float("nan")
    losses = []
    hits = 0
    abs_err = 0.0
    for i in idx:
        out, _, loss, _ = _forward_loss(
            model, samples[i], params, cfg, targets[i], loss_kind, False, None
        )
        losses.append(loss)
        if loss_kind == "cross_entropy":
            hits += int(np.argmax(out[0]) == targets[i])
        else:
            abs_err += abs(float(out[0, 0]) - targets[i])
    metric = hits / len(idx) if loss_kind == "cross_entropy" else abs_err / len(idx)
    return metric, float(np.mean(losses))


def train(config: TrainConfig, dataset: GraphDataset | None = None) -> TrainResult:
    """Train per config; keep the best-validation checkpoint; test with it."""
    started = time.perf_counter()
    if dataset is None:
        if not config.dataset_dir:
            raise ValidationError("no dataset given and no dataset_dir configured")
        dataset = load_dataset(config.dataset_dir)
    expected_loss = LOSS_FOR_TASK[dataset.task_kind]
    if config.loss != expected_loss:
        raise ValidationError(
            f"loss {config.loss!r} does not match task {dataset.task_kind!r}"
        )

    split = stratified_split(
        dataset.labels(),
        fractions=config.fractions,
        seed=config.seed,
        task_kind=dataset.task_kind,
        num_classes=dataset.num_classes,
    )
    model = MODELS[config.model]
    cfg = _model_config(config)
    samples = _prepare_samples(dataset, config.model)
    in_dim, n_nodes = _sample_dims(dataset, samples, config.model)
    out_dim = dataset.num_classes if dataset.task_kind == "classification" else 1

    codec = _TargetCodec()
    if dataset.task_kind == "classification":
        targets = np.array([int(y) for y in dataset.labels()], dtype=np.int64)
    else:
        raw = np.array([float(y) for y in dataset.labels()], dtype=np.float64)
        if config.normalize_targets:
            codec = _TargetCodec.fit(raw[split.train])
        targets = codec.encode(raw)

    params = model.init(cfg, in_dim, out_dim, n_nodes, config.seed)
    opt = AdamState.for_params(params)
    dropout_rng = np.random.default_rng([config.seed, 1])
    shuffle_rng = np.random.default_rng([config.seed, 2])

    maximize = dataset.task_kind == "classification"
    best_metric = -np.inf if maximize else np.inf
    best_params = params.copy()
    loss_curve: list[float] = []

    for epoch in range(config.epochs):
        if config.step_mode == "per_graph":
            for i in shuffle_rng.permutation(split.train):
                _, cache, loss, d_out = _forward_loss(
                    model, samples[i], params, cfg, targets[i],
                    config.loss, True, dropout_rng,
                )
                if not np.isfinite(loss):
                    raise ValidationError(
                        f"non-finite loss at epoch {epoch}, graph {i}"
                    )
                grads = model.backward(cache, d_out)
                adam_step(params, grads, opt, config.lr, config.weight_decay)
        else:
            acc: dict[str, np.ndarray] = {}
            for i in split.train:
                _, cache, loss, d_out = _forward_loss(
                    model, samples[i], params, cfg, targets[i],
                    config.loss, True, dropout_rng,
                )
                if not np.isfinite(loss):
                    raise ValidationError(
                        f"non-finite loss at epoch {epoch}, graph {i}"
                    )
                grads = model.backward(cache, d_out)
                for k, g in grads.items():
                    acc[k] = acc.get(k, 0.0) + g
            n = len(split.train)
            adam_step(
                params, {k: g / n for k, g in acc.items()}, opt,
                config.lr, config.weight_decay,
            )
        _, train_loss = _eval_split(
            model, samples, params, cfg, targets, split.train, config.loss
        )
        val_metric, _ = _eval_split(
            model, samples, params, cfg, targets, split.val, config.loss
        )
        loss_curve.append(train_loss)
        improved = val_metric > best_metric if maximize else val_metric < best_metric
        if improved:
            best_metric = val_metric
            best_params = params.copy()

    final = best_params
    train_metric, _ = _eval_split(
        model, samples, final, cfg, targets, split.train, config.loss
    )
    val_metric, _ = _eval_split(
        model, samples, final, cfg, targets, split.val, config.loss
    )
    test_metric, _ = _eval_split(
        model, samples, final, cfg, targets, split.test, config.loss
    )
    metrics = Metrics(
        metric_name="accuracy" if maximize else "mae",
        train=train_metric,
        val=val_metric,
        test=test_metric,
        loss_curve=loss_curve,
        wall_time_s=time.perf_counter() - started,
        peak_rss_mb=_peak_rss_mb(),
    )
    card = model_card(config.model, cfg, in_dim, out_dim, n_nodes, config.seed)
    extra = {
        "model": config.model,
        "model_config": asdict(cfg),
        "input_dim": in_dim,
        "output_dim": out_dim,
        "n_nodes": n_nodes,
        "task_kind": dataset.task_kind,
        "loss": config.loss,
        "target_norm": codec.to_dict(),
        "normalize_targets": config.normalize_targets,
        "train_seed": config.seed,
        "fractions": list(config.fractions),
    }
    return TrainResult(
        metrics=metrics, params=final, split=split, card=card, checkpoint_extra=extra
    )


def _config_from_extra(extra: dict):
    model_kind = extra["model"]
    base = MODELS[model_kind].default_config
    cfg_dict = dict(extra["model_config"])
    for key in ("mlp_dims", "hidden_dims"):
        if key in cfg_dict and isinstance(cfg_dict[key], list):
            cfg_dict[key] = tuple(cfg_dict[key])
    if model_kind == "dyn":
        trunk = dict(cfg_dict.pop("trunk"))
        if isinstance(trunk.get("mlp_dims"), list):
            trunk["mlp_dims"] = tuple(trunk["mlp_dims"])
        from .models import DynConfig, GnnStarConfig

        cfg_dict["mlp_dims"] = tuple(cfg_dict["mlp_dims"])
        return DynConfig(trunk=GnnStarConfig(**trunk), **cfg_dict)
    return type(base)(**cfg_dict)


def check_compatibility(params: Params, extra: dict) -> None:
    """Verify checkpoint tensors match the architecture; name the offender."""
    model = MODELS[extra["model"]]
    cfg = _config_from_extra(extra)
    reference = model.init(
        cfg, extra["input_dim"], extra["output_dim"], extra["n_nodes"], 0
    )
    for name in reference.names():
        if name not in params:
            raise DimensionError(f"checkpoint is missing tensor {name!r}")
        if params[name].shape != reference[name].shape:
            raise DimensionError(
                f"tensor {name!r}: checkpoint {params[name].shape} vs "
                f"expected {reference[name].shape}"
            )
    stray = set(params.names()) - set(reference.names())
    if stray:
        raise DimensionError(f"checkpoint has unexpected tensors {sorted(stray)}")


def evaluate(
    checkpoint_dir: str | Path,
    dataset: GraphDataset,
    split: SplitSpec,
) -> Metrics:
    """Deterministic eval-mode metrics of a stored checkpoint on a split."""
    params, extra = load_checkpoint(checkpoint_dir)
    check_compatibility(params, extra)
    model = MODELS[extra["model"]]
    cfg = _config_from_extra(extra)
    loss_kind = extra["loss"]
    samples = _prepare_samples(dataset, extra["model"])
    if dataset.task_kind == "classification":
        targets = np.array([int(y) for y in dataset.labels()], dtype=np.int64)
    else:
        raw = np.array([float(y) for y in dataset.labels()], dtype=np.float64)
        norm = extra.get("target_norm", {"lo": 0.0, "hi": 1.0})
        targets = _TargetCodec(norm["lo"], norm["hi"]).encode(raw)
    started = time.perf_counter()
    tr, _ = _eval_split(model, samples, params, cfg, targets, split.train, loss_kind)
    va, _ = _eval_split(model, samples, params, cfg, targets, split.val, loss_kind)
    te, _ = _eval_split(model, samples, params, cfg, targets, split.test, loss_kind)
    return Metrics(
        metric_name="accuracy" if loss_kind == "cross_entropy" else "mae",
        train=tr,
        val=va,
        test=te,
        loss_curve=[],
        wall_time_s=time.perf_counter() - started,
        peak_rss_mb=_peak_rss_mb(),
    )


def save_train_outputs(result: TrainResult, out_dir: str | Path) -> None:
    """checkpoint/, metrics.json, model_card.json, split.json (deterministic)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, out / "checkpoint", extra=result.checkpoint_extra)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(result.metrics.deterministic_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "model_card.json", "w", encoding="utf-8") as fh:
        json.dump(result.card, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "split.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "seed": result.split.seed,
                "fractions": list(result.split.fractions),
                "train": result.split.train,
                "val": result.split.val,
                "test": result.split.test,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


# --- hyperparameter probe ---------------------------------------------------


@dataclass(frozen=True)
class ProbeGrid:
    features: tuple[str, ...] = ("corr", "bold", "corr_bold")
    rois: tuple[int, ...] = (20, 50)
    densities: tuple[float, ...] = (5.0, 10.0, 20.0)


DEFAULT_PROBE_SYNTH = SyntheticSpec(
    n_subjects=160,
    n_rois=20,
    n_timepoints=120,
    n_classes=2,
    block_size=5,
    within_block_corr=0.8,
    noise_sd=1.0,
    seed=7,
)


@dataclass
class ProbeReport:
    rows: list[dict]

    def mean_metric(self, feature_kind: str) -> float:
        vals = [r["test"] for r in self.rows if r["features"] == feature_kind]
        return float(np.mean(vals))

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2, sort_keys=True)

    def to_text(self) -> str:
        header = ["features", "rois", "density%", "train", "val", "test"]
        body = [
            [
                r["features"],
                str(r["rois"]),
                f"{r['density_percent']:g}",
                f"{r['train']:.4f}",
                f"{r['val']:.4f}",
                f"{r['test']:.4f}",
            ]
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [header] + body) for i in range(6)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(header, widths)),
            "  ".join("-" * w for w in widths),
        ]
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in body]
        means = ", ".join(
            f"{kind}={self.mean_metric(kind):.4f}"
            for kind in sorted({r["features"] for r in self.rows})
        )
        lines.append("")
        lines.append(f"mean test metric by features: {means}")
        return "\n".join(lines) + "\n"


def run_probe(
    grid: ProbeGrid,
    base_config: TrainConfig,
    synth: SyntheticSpec = DEFAULT_PROBE_SYNTH,
) -> ProbeReport:
    """Train one model per (features x rois x density) cell on planted corpora.

    Rows are emitted in grid order, so the report is deterministic for a
    fixed seed.
    """
    rows = []
    for n_rois in grid.rois:
        spec = replace(synth, n_rois=n_rois)
        corpus = generate_synthetic(spec)
        cleaned = [normalize(ts) for ts in corpus]
        matrices = [pearson_full(c) for c in cleaned]
        for feature_kind in grid.features:
            feat = FeatureConfig(feature_kind)
            for density in grid.densities:
                graphs: list[StaticGraph] = [
                    build_static(c, m, feat, density)
                    for c, m in zip(cleaned, matrices)
                ]
                ds = GraphDataset(
                    name=f"probe-{feature_kind}-{n_rois}-{density:g}",
                    task_kind="classification",
                    graphs=graphs,
                    num_classes=spec.n_classes,
                    provenance={"features": feature_kind, "threshold": density},
                )
                result = train(base_config, dataset=ds)
                rows.append(
                    {
                        "features": feature_kind,
                        "rois": n_rois,
                        "density_percent": float(density),
                        "train": result.metrics.train,
                        "val": result.metrics.val,
                        "test": result.metrics.test,
                    }
                )
    return ProbeReport(rows=rows)
