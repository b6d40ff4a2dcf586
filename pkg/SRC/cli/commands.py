"""Command handlers. Each takes parsed arguments and returns an exit code;
failures surface as YNetError subclasses mapped to exit codes by main."""

import argparse
import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..clustering.kmeans import kmeans_fit
from ..clustering.service import hard_assign, kl_divergence, soft_assign, target_distribution
from ..data.codec import decode_ppm, encode_pgm
from ..data.models import Sample
from ..data.schemas import DatasetManifest, SynthConfig
from ..data.service import load_manifest, load_split
from ..data.synth import synth_generate
from ..data.transforms import ResizeMode, resize
from ..shared.exceptions import ConfigurationError, DatasetIOError, ShapeError, ValidationError
from ..training.metrics import embed_samples, evaluate_clustering, evaluate_iou
from ..training.reports import write_json, write_kl_curve, write_loss_curve, write_prediction_masks
from ..training.schemas import EpochMetrics, MetricsReport
from ..training.service import compare_variants, init_clusters, train_clustering, train_segmentation
from ..ynet.checkpoint import CheckpointMetadata, config_hash, load_model, save_checkpoint, snapshot
from ..ynet.models import YNet
from ..ynet.schemas import ModelConfig
from ..ynet.service import analytic_param_count, build, closest_config, forward_embed, forward_seg
from .schemas import RunConfig, load_run_config, validate_config

logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "checkpoint_final.json"
BEST_CHECKPOINT = "checkpoint_best.json"
CLUSTER_INIT_CHECKPOINT = "checkpoint_clusters.json"
CLUSTER_CHECKPOINT = "checkpoint_clustering.json"
DEFAULT_SYNTH_SAMPLES = 200

_ARCHITECTURE_FIELDS = ("image_size", "in_channels", "base_channels", "depth", "embed_dim", "variant")


def _dataset(run: RunConfig) -> DatasetManifest:
    """Load the run's manifest, generating the synthetic set on first use."""
    path = run.manifest_file
    if run.data.synth is not None and not path.is_file():
        synth_generate(run.data.synth, path.parent)
    return load_manifest(path)


def _split(run: RunConfig, manifest: DatasetManifest, name: str) -> List[Sample]:
    return load_split(manifest, name, size=run.model.image_size)


def _existing_checkpoint(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ValidationError(f"{what} checkpoint not found at {path}")
    return path


def _describe(config: ModelConfig) -> str:
    return (
        f"{config.variant.value} input {(config.in_channels, config.image_size, config.image_size)}, "
        f"B={config.base_channels}, L={config.depth}, bottleneck {config.deepest_shape} -> {config.embed_dim}"
    )


def _check_architecture(model: YNet, run: RunConfig) -> None:
    for name in _ARCHITECTURE_FIELDS:
        if getattr(model.config, name) != getattr(run.model, name):
            raise ShapeError(f"checkpoint has {_describe(model.config)}; config has {_describe(run.model)}")


def _read_loss_curve(path: Path) -> List[EpochMetrics]:
    if not path.is_file():
        return []
    with path.open(newline="", encoding="utf-8") as handle:
        return [
            EpochMetrics(**{key: (value if value != "" else None) for key, value in row.items()})
            for row in csv.DictReader(handle)
        ]


def cmd_synth(args: argparse.Namespace) -> int:
    overrides = {
        name: value
        for name, value in (("n_samples", args.n), ("size", args.size), ("seed", args.seed))
        if value is not None
    }
    if args.config is not None:
        run = load_run_config(args.config)
        if run.data.synth is None:
            raise ValidationError("config has no data.synth section to generate")
        document = {**run.data.synth.model_dump(), **overrides}
        out_dir = args.out or run.manifest_file.parent
    else:
        document = {"n_samples": DEFAULT_SYNTH_SAMPLES, **overrides}
        out_dir = args.out
    config = validate_config(SynthConfig, document, prefix="synth")
    manifest = synth_generate(config, Path(out_dir))
    print(f"manifest: {manifest.root / 'manifest.json'}")
    return 0


def cmd_train_seg(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    manifest = _dataset(run)
    train, val = _split(run, manifest, "train"), _split(run, manifest, "val")
    model = build(run.model, seed=run.train.seed)
    result = train_segmentation(model, train, val, run.train)
    out = run.output_dir
    save_checkpoint(result.final, out / FINAL_CHECKPOINT)
    save_checkpoint(result.best, out / BEST_CHECKPOINT)
    write_loss_curve(result.history, out / "loss_curve.csv")
    print(f"checkpoint: {out / FINAL_CHECKPOINT}")
    print(f"best checkpoint: {out / BEST_CHECKPOINT} (epoch {result.best_epoch})")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    out = run.output_dir
    train = _split(run, _dataset(run), "train")
    if args.phase == "init":
        source = _existing_checkpoint(Path(args.checkpoint) if args.checkpoint else out / FINAL_CHECKPOINT, "phase-1")
        model = load_model(source)
        _check_architecture(model, run)
        init = init_clusters(model, train, run.train)
        metadata = CheckpointMetadata(phase="clusters_init", config_hash=config_hash(model.config, run.train))
        save_checkpoint(snapshot(model, metadata), out / CLUSTER_INIT_CHECKPOINT)
        print(f"centroids: {out / CLUSTER_INIT_CHECKPOINT} (inertia {init.kmeans.inertia:.6g})")
        return 0

    source = _existing_checkpoint(
        Path(args.checkpoint) if args.checkpoint else out / CLUSTER_INIT_CHECKPOINT, "cluster-initialised"
    )
    model = load_model(source)
    _check_architecture(model, run)
    result = train_clustering(model, train, run.train)
    save_checkpoint(result.checkpoint, out / CLUSTER_CHECKPOINT)
    write_kl_curve(result.kl_history, out / "kl_curve.csv")
    print(f"checkpoint: {out / CLUSTER_CHECKPOINT} (final KL {result.kl_final:.6g})")
    return 0


def _cluster_metrics(model: YNet, test: List[Sample], run: RunConfig, report: MetricsReport) -> None:
    reference: Optional[np.ndarray] = None
    report.label_source = "severity"
    if any(s.severity is None for s in test):
        z = embed_samples(model, test)
        reference = kmeans_fit(z, len(model.centroids), seed=run.train.seed, n_init=run.train.kmeans_n_init).labels
        report.label_source = "kmeans"
    evaluation = evaluate_clustering(model, test, reference_labels=reference, alpha=run.train.alpha)
    assignment = soft_assign(embed_samples(model, test), model.centroids, run.train.alpha)
    report.confusion = evaluation.confusion.tolist()
    report.label_mapping = evaluation.label_mapping
    report.cluster_accuracy = evaluation.cluster_accuracy
    report.unmatched_accuracy = evaluation.unmatched_accuracy
    report.kl_final = kl_divergence(target_distribution(assignment).p, assignment.q)


def cmd_eval(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    model = load_model(args.checkpoint)
    _check_architecture(model, run)
    test = _split(run, _dataset(run), "test")
    out = run.output_dir
    report = MetricsReport(
        variant=model.config.variant.value,
        param_count=model.param_count(),
        n_samples=len(test),
        iou_mean=evaluate_iou(model, test, run.train.threshold),
        per_epoch_losses=_read_loss_curve(out / "loss_curve.csv"),
    )
    if model.has_bottleneck and model.centroids is not None:
        _cluster_metrics(model, test, run, report)
    write_prediction_masks(model, test, out / "predictions")
    write_json(report, out / "metrics.json")
    print(f"metrics: {out / 'metrics.json'} (IoU {report.iou_mean:.4f})")
    return 0


def _read_image(path: Path) -> np.ndarray:
    try:
        return decode_ppm(path.read_bytes())
    except OSError as e:
        raise DatasetIOError(f"cannot read image ({e.strerror or e})", str(path)) from e


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.checkpoint)
    image = resize(_read_image(Path(args.image)), model.config.image_size, ResizeMode.BILINEAR)
    probs = forward_seg(model, image, training=False)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(encode_pgm(probs[0]))
    except OSError as e:
        raise DatasetIOError(f"cannot write mask ({e.strerror or e})", str(out)) from e
    print(f"mask: {out}")
    if args.embed:
        z = forward_embed(model, image, training=False)
        print("embedding: " + " ".join(f"{float(v):.6f}" for v in z))
        if model.centroids is not None:
            label = int(hard_assign(soft_assign(z[None, :], model.centroids))[0])
            print(f"cluster: {label}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    manifest = _dataset(run)
    splits = [_split(run, manifest, name) for name in ("train", "val", "test")]
    report = compare_variants(run.model, *splits, run.train)
    path = write_json(report, run.output_dir / "comparison.json")
    for score in report.scores:
        print(f"{score.variant}: params={score.param_count} test_iou={score.test_iou:.4f}")
    print(f"comparison: {path}")
    return 0


def _params_for(args: argparse.Namespace) -> Tuple[ModelConfig, int]:
    if args.config is not None:
        config = load_run_config(args.config).model
        return config, analytic_param_count(config)
    if args.target <= 0:
        raise ConfigurationError(f"must be a positive parameter count, got {args.target}", field="--target")
    return closest_config(args.target, image_size=args.image_size, in_channels=args.in_channels)


def cmd_params(args: argparse.Namespace) -> int:
    config, count = _params_for(args)
    if args.target is not None:
        gap = (count - args.target) / args.target
        print(f"closest: B={config.base_channels} L={config.depth} ({gap:+.2%} from {args.target})")
    print(f"param_count={count}")
    return 0
