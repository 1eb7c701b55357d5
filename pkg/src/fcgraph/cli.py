"""Command-line front end.

Precedence for every option: command-line flag > --config JSON file > built-in
default (the benchmark presets). Exit codes: 0 success, 1 validation error,
2 IO error. Every command writes its outputs under --out together with a
run_manifest.json recording the resolved config, its hash, versions, and
timings; the manifest is the only output file that is not bit-for-bit
reproducible across runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import resource
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    ProbeGrid,
    TrainConfig,
    evaluate,
    run_probe,
    save_train_outputs,
    train,
)
from .connectivity import pearson_full
from .dataset import (
    GraphDataset,
    SplitSpec,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    stratified_split,
)
from .errors import FcgraphError, ValidationError
from .graph_build import (
    FeatureConfig,
    build_dynamic,
    build_static,
    derive_crop_seed,
    resolve_density,
)
from .graph_stats import aggregate_stats, stats_report_json, stats_table
from .ingest import (
    CorpusDir,
    RoiTimeSeries,
    SyntheticSpec,
    generate_synthetic,
    load_nuisance,
    save_timeseries,
)
from .preprocess import normalize, regress_nuisance


@dataclass
class PipelineConfig:
    """All tunable pipeline parameters; defaults are the benchmark presets."""

    seed: int = 123
    rois: int = 1000  # benchmark grid: 100 / 400 / 1000
    density: float = 5.0  # benchmark grid: 5 / 10 / 20 (top percent)
    features: str = "corr"  # corr | bold | corr_bold
    gamma: int = 50
    stride: int = 3
    crop_len: int = 150
    model: str = "gnnstar"
    epochs: int | None = None  # None -> per-task default (100 cls / 50 reg)
    lr: float | None = None  # None -> per-task default (1e-5 cls / 1e-3 reg)
    weight_decay: float = 5e-4
    dropout: float = 0.5
    step_mode: str = "full_batch"
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    n_subjects: int = 200
    n_timepoints: int = 176
    n_classes: int = 2
    block_size: int = 5
    within_block_corr: float = 0.8
    noise_sd: float = 1.0
    probe_features: tuple[str, ...] = ("corr", "bold", "corr_bold")
    probe_rois: tuple[int, ...] = (20, 50)
    probe_densities: tuple[float, ...] = (5.0, 10.0, 20.0)


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for key in ("fractions", "probe_features", "probe_rois", "probe_densities"):
        if key in payload:
            payload[key] = tuple(payload[key])
    return replace(cfg, **payload)


def _apply_flag_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    updates = {}
    for f in fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            updates[f.name] = value
    return replace(cfg, **updates)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors -> exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _json_default(o):
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {o!r}")


def _write_run_manifest(
    out_dir: Path, command: str, cfg: PipelineConfig, started: float
) -> None:
    resolved = asdict(cfg)
    blob = json.dumps(resolved, sort_keys=True, default=_json_default).encode()
    manifest = {
        "command": command,
        "config": resolved,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "toolkit_version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "peak_rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0,
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands ----------------------------------------------------------------


def cmd_synth(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    spec = SyntheticSpec(
        n_subjects=cfg.n_subjects,
        n_rois=cfg.rois,
        n_timepoints=cfg.n_timepoints,
        n_classes=cfg.n_classes,
        block_size=cfg.block_size,
        within_block_corr=cfg.within_block_corr,
        noise_sd=cfg.noise_sd,
        seed=cfg.seed,
    )
    corpus = generate_synthetic(spec)
    CorpusDir.write(corpus, out / "scans")
    print(f"wrote {len(corpus)} scans to {out / 'scans'}")


def _load_clean_corpus(data_dir: Path, nuisance_dir: Path | None, derivative: bool):
    corpus = CorpusDir.read(data_dir)
    cleaned = []
    for ts in corpus:
        regressors = None
        if nuisance_dir is not None:
            motion_path = Path(nuisance_dir) / f"{ts.subject_id}.motion.csv"
            if not motion_path.exists():
                raise FileNotFoundError(f"no motion file: {motion_path}")
            design = load_nuisance(motion_path, ts.n_timepoints, derivative=derivative)
            ts = regress_nuisance(ts, design)
            regressors = design.names
        cleaned.append(normalize(ts, regressors=regressors))
    return cleaned


def cmd_preprocess(cfg: PipelineConfig, args) -> None:
    del cfg
    out = _out_dir(args)
    nuisance = Path(args.nuisance) if args.nuisance else None
    cleaned = _load_clean_corpus(Path(args.data), nuisance, not args.no_derivatives)
    clean_dir = out / "clean"
    clean_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for c in cleaned:
        save_timeseries(
            RoiTimeSeries(
                data=c.data,
                tr_seconds=c.tr_seconds,
                subject_id=c.subject_id,
                label=c.label,
            ),
            clean_dir / f"{c.subject_id}.bin",
            format="raw-f64",
        )
        records.append(
            {
                "subject_id": c.subject_id,
                "regressors": c.provenance.regressors,
                "normalized": c.provenance.normalized,
                "degenerate_rois": c.provenance.degenerate_rois,
            }
        )
    with open(out / "preprocess_manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"scans": records}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"cleaned {len(cleaned)} scans into {clean_dir}")


def _infer_task(labels) -> tuple[str, int | None]:
    if all(isinstance(y, (int, np.integer)) for y in labels):
        classes = sorted({int(y) for y in labels})
        return "classification", max(classes) + 1
    return "regression", None


def cmd_build_static(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    cleaned = _load_clean_corpus(Path(args.data), None, True)
    feat = FeatureConfig(cfg.features)
    pct = resolve_density(cfg.density)
    graphs = []
    for c in cleaned:
        if c.label is None:
            raise ValidationError(f"scan {c.subject_id!r} has no label")
        graphs.append(build_static(c, pearson_full(c), feat, pct))
    task, num_classes = _infer_task([g.label for g in graphs])
    ds = GraphDataset(
        name=args.name,
        task_kind=task,
        graphs=graphs,
        num_classes=num_classes,
        provenance={
            "features": cfg.features,
            "threshold": pct,
            "rois": graphs[0].n,
            "pipeline_version": __version__,
        },
    )
    manifest = save_dataset(ds, out / "dataset")
    print(f"built {len(graphs)} static graphs; manifest at {manifest}")


def cmd_build_dynamic(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    cleaned = _load_clean_corpus(Path(args.data), None, True)
    feat = FeatureConfig(cfg.features)
    pct = resolve_density(cfg.density)
    sequences = []
    for c in cleaned:
        if c.label is None:
            raise ValidationError(f"scan {c.subject_id!r} has no label")
        sequences.append(
            build_dynamic(
                c,
                feat,
                gamma=cfg.gamma,
                stride=cfg.stride,
                l=cfg.crop_len,
                crop_seed=derive_crop_seed(cfg.seed, c.subject_id),
                top_percent=pct,
            )
        )
    frames = {seq.n_frames for seq in sequences}
    if len(frames) != 1:
        raise ValidationError(f"inconsistent frame counts across subjects: {frames}")
    task, num_classes = _infer_task([s.label for s in sequences])
    ds = GraphDataset(
        name=args.name,
        task_kind=task,
        graphs=sequences,
        num_classes=num_classes,
        provenance={
            "features": cfg.features,
            "threshold": pct,
            "rois": sequences[0].n,
            "gamma": cfg.gamma,
            "stride": cfg.stride,
            "crop_length": cfg.crop_len,
            "frames_per_subject": frames.pop(),
            "pipeline_version": __version__,
        },
    )
    manifest = save_dataset(ds, out / "dataset")
    print(
        f"built {len(sequences)} dynamic sequences "
        f"({ds.provenance['frames_per_subject']} frames/subject); "
        f"manifest at {manifest}"
    )


def cmd_stats(cfg: PipelineConfig, args) -> None:
    del cfg
    out = _out_dir(args)
    ds = load_dataset(args.dataset)
    if ds.graph_kind == "dynamic":
        graphs = [frame for seq in ds.graphs for frame in seq.frames]
    else:
        graphs = ds.graphs
    agg = aggregate_stats(graphs)
    (out / "stats.json").write_text(stats_report_json(ds.name, agg) + "\n")
    table = stats_table([(ds.name, agg)])
    (out / "stats.txt").write_text(table)
    print(table, end="")


def cmd_split(cfg: PipelineConfig, args) -> None:
    ds = load_dataset(args.dataset)
    split = stratified_split(
        ds.labels(),
        fractions=cfg.fractions,
        seed=cfg.seed,
        task_kind=ds.task_kind,
        num_classes=ds.num_classes,
    )
    path = save_split(split, args.dataset)
    print(
        f"split sizes train/val/test = "
        f"{len(split.train)}/{len(split.val)}/{len(split.test)} -> {path}"
    )


def _train_config(cfg: PipelineConfig, dataset: GraphDataset) -> TrainConfig:
    base = TrainConfig.defaults_for(dataset.task_kind)
    return replace(
        base,
        model=cfg.model,
        epochs=cfg.epochs if cfg.epochs is not None else base.epochs,
        lr=cfg.lr if cfg.lr is not None else base.lr,
        weight_decay=cfg.weight_decay,
        dropout=cfg.dropout,
        seed=cfg.seed,
        fractions=cfg.fractions,
        step_mode=cfg.step_mode,
    )


def cmd_train(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    ds = load_dataset(args.dataset)
    config = _train_config(cfg, ds)
    result = train(config, dataset=ds)
    save_train_outputs(result, out)
    m = result.metrics
    print(
        f"{m.metric_name}: train {m.train:.4f}  val {m.val:.4f}  test {m.test:.4f} "
        f"({m.wall_time_s:.1f}s)"
    )


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    ds = load_dataset(args.dataset)
    if args.split:
        split = load_split(args.split)
    else:
        split = stratified_split(
            ds.labels(),
            fractions=cfg.fractions,
            seed=cfg.seed,
            task_kind=ds.task_kind,
            num_classes=ds.num_classes,
        )
    metrics = evaluate(args.checkpoint, ds, split)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics.deterministic_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"{metrics.metric_name}: train {metrics.train:.4f}  "
        f"val {metrics.val:.4f}  test {metrics.test:.4f}"
    )


def cmd_probe(cfg: PipelineConfig, args) -> None:
    out = _out_dir(args)
    grid = ProbeGrid(
        features=tuple(cfg.probe_features),
        rois=tuple(cfg.probe_rois),
        densities=tuple(cfg.probe_densities),
    )
    base = TrainConfig.defaults_for("classification")
    base = replace(
        base,
        model=cfg.model,
        seed=cfg.seed,
        dropout=cfg.dropout,
        weight_decay=cfg.weight_decay,
        step_mode=cfg.step_mode,
        epochs=cfg.epochs if cfg.epochs is not None else base.epochs,
        lr=cfg.lr if cfg.lr is not None else base.lr,
    )
    report = run_probe(grid, base)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="fcgraph",
        description=(
            "Functional-connectivity graphs and reference graph neural models. "
            "Option precedence: command-line flags override --config JSON, "
            "which overrides the built-in benchmark presets."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = True):
        p.add_argument("--config", help="JSON pipeline config file")
        p.add_argument("--out", required=out_required, help="run output directory")
        p.add_argument("--seed", type=int, help="global seed (default 123)")

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    common(p)
    p.add_argument("--rois", type=int, help="ROI count (benchmark grid: 100/400/1000)")
    p.add_argument("--n-subjects", dest="n_subjects", type=int)
    p.add_argument("--n-timepoints", dest="n_timepoints", type=int)
    p.add_argument("--n-classes", dest="n_classes", type=int)
    p.add_argument("--block-size", dest="block_size", type=int)
    p.add_argument("--within-block-corr", dest="within_block_corr", type=float)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="regress nuisance signals and normalize")
    common(p)
    p.add_argument("--data", required=True, help="directory of raw-f64 scans")
    p.add_argument("--nuisance", help="directory of <subject>.motion.csv files")
    p.add_argument(
        "--no-derivatives",
        action="store_true",
        help="skip motion-derivative regressors",
    )
    p.set_defaults(func=cmd_preprocess)

    for name, fn in (("build-static", cmd_build_static), ("build-dynamic", cmd_build_dynamic)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} graph dataset")
        common(p)
        p.add_argument("--data", required=True, help="directory of raw-f64 scans")
        p.add_argument("--name", default="dataset", help="dataset name")
        p.add_argument(
            "--features", choices=("corr", "bold", "corr_bold"), help="node features"
        )
        p.add_argument(
            "--density", type=float, help="top percent kept (benchmark grid: 5/10/20)"
        )
        if name == "build-dynamic":
            p.add_argument("--gamma", type=int, help="window length (default 50)")
            p.add_argument("--stride", type=int, help="window stride (default 3)")
            p.add_argument(
                "--crop-len", "--l", dest="crop_len", type=int,
                help="random crop length (default 150)",
            )
        p.set_defaults(func=fn)

    p = sub.add_parser("stats", help="dataset statistics report")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="write a stratified split into the dataset dir")
    common(p, out_required=False)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.set_defaults(func=cmd_split, out=None)

    p = sub.add_parser("train", help="train a reference model")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", choices=("gcn", "gnnstar", "mlp", "dyn"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--step-mode", dest="step_mode", choices=("full_batch", "per_graph"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--split", help="split JSON (default: recompute from seed)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="feature/ROI/density grid on planted corpora")
    common(p)
    p.add_argument("--model", choices=("gcn", "gnnstar", "mlp", "dyn"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_pipeline_config(args.config)
        cfg = _apply_flag_overrides(cfg, args)
        args.func(cfg, args)
        if getattr(args, "out", None):
            _write_run_manifest(Path(args.out), args.command, cfg, started)
    except (ValidationError, FcgraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
