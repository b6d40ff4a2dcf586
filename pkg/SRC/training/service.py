"""Two-phase training: segmentation pretraining, then k-means initialised
KL self-training of the encoder and cluster centroids."""

import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..clustering.kmeans import assign, kmeans_fit
from ..clustering.models import KMeansResult
from ..clustering.service import kl_divergence, kl_grad, reseed_empty_centroids, soft_assign, target_distribution
from ..data.models import Sample
from ..shared.exceptions import NumericalError, ShapeError, ValidationError
from ..tensor_nn import layers as nn
from ..tensor_nn.optimizer import AdamState, adam_step
from ..ynet.checkpoint import CheckpointMetadata, config_hash, snapshot
from ..ynet.models import (
    CENTROIDS_NAME,
    EMBED_LAYER,
    EXPAND_LAYER,
    HEAD_LAYER,
    YNet,
    decoder_layer_names,
    encoder_layer_names,
)
from ..ynet.schemas import ModelConfig, ModelVariant
from ..ynet.service import backward, backward_seg, build, forward_embed_traced, forward_seg_traced
from .metrics import embed_samples, evaluate_iou
from .models import ClusterInit, ClusteringResult, SegmentationResult
from .schemas import ComparisonReport, EpochMetrics, KLRecord, TrainConfig, VariantScore

logger = logging.getLogger(__name__)

Gradients = Dict[str, np.ndarray]


def _phase_rngs(seed: int, phase: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(shuffle, dropout) generators; phases draw from disjoint seed streams."""
    children = np.random.SeedSequence(seed).spawn(4)
    return np.random.default_rng(children[2 * phase]), np.random.default_rng(children[2 * phase + 1])


def _check_samples(model: YNet, samples: Sequence[Sample], split: str) -> None:
    cfg = model.config
    image_shape = (cfg.in_channels, cfg.image_size, cfg.image_size)
    mask_shape = (cfg.image_size, cfg.image_size)
    for sample in samples:
        if sample.image.shape != image_shape or sample.mask.shape != mask_shape:
            raise ShapeError(
                f"{split} sample {sample.name or '?'} has image {tuple(sample.image.shape)} and mask "
                f"{tuple(sample.mask.shape)}; model expects {image_shape} and {mask_shape}"
            )


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]


def _accumulate(total: Gradients, grads: Gradients, scale: float) -> None:
    for name, grad in grads.items():
        if name in total:
            total[name] += grad * scale
        else:
            total[name] = grad * scale


def _require_finite(loss: float, epoch: int, batch: int, phase: str) -> None:
    if not math.isfinite(loss):
        raise NumericalError(f"{phase}: non-finite loss {loss} at epoch {epoch}, batch {batch}")


def _metadata(phase: str, epoch: int, model: YNet, cfg: TrainConfig, rng: np.random.Generator) -> CheckpointMetadata:
    return CheckpointMetadata(
        phase=phase,
        epoch=epoch,
        config_hash=config_hash(model.config, cfg),
        rng_state=rng.bit_generator.state,
    )


def segmentation_loss(model: YNet, samples: Sequence[Sample]) -> float:
    """Eval-mode mean BCE over samples."""
    losses = []
    for sample in samples:
        probs, _ = forward_seg_traced(model, sample.image, training=False)
        losses.append(nn.bce_loss(probs, sample.mask.reshape(probs.shape)))
    return math.fsum(losses) / len(losses)


def train_segmentation(
    model: YNet,
    train: Sequence[Sample],
    val: Sequence[Sample],
    cfg: TrainConfig,
) -> SegmentationResult:
    """Phase 1: Adam on mean BCE over seeded shuffles with dropout active.

    The model is updated in place. A snapshot is kept whenever validation IoU
    improves (training loss decreases when there is no validation split).

    Raises:
        ValidationError: empty training split
        ShapeError: samples disagree with the model configuration
        NumericalError: non-finite loss (epoch, batch and loss in the message)
    """
    if not train:
        raise ValidationError("training split is empty")
    _check_samples(model, train, "train")
    _check_samples(model, val, "val")
    shuffle_rng, dropout_rng = _phase_rngs(cfg.seed, 0)
    params = {name: t for name, t in model.named_tensors() if name != CENTROIDS_NAME}
    state = AdamState.create(params, learning_rate=cfg.learning_rate)

    history: List[EpochMetrics] = []
    best, best_epoch, best_score = None, 0, -math.inf
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for b, batch in enumerate(_batches(shuffle_rng.permutation(len(train)), cfg.batch_size)):
            grads: Gradients = {}
            batch_loss = 0.0
            for index in batch:
                sample = train[index]
                _, trace = forward_seg_traced(model, sample.image, training=True, rng=dropout_rng)
                loss, sample_grads = backward_seg(model, trace, sample.mask)
                _accumulate(grads, sample_grads, 1.0 / len(batch))
                batch_loss += loss / len(batch)
            _require_finite(batch_loss, epoch, b, "segmentation")
            logger.debug("epoch %d batch %d loss %.6f", epoch, b, batch_loss)
            adam_step(params, grads, state)
            losses.extend([batch_loss] * len(batch))

        metrics = EpochMetrics(epoch=epoch, train_loss=math.fsum(losses) / len(losses))
        if val:
            metrics.val_loss = segmentation_loss(model, val)
            metrics.val_iou = evaluate_iou(model, val, cfg.threshold)
        history.append(metrics)
        logger.info(
            "epoch %d/%d: train loss %.5f, val loss %s, val IoU %s",
            epoch,
            cfg.epochs,
            metrics.train_loss,
            "n/a" if metrics.val_loss is None else f"{metrics.val_loss:.5f}",
            "n/a" if metrics.val_iou is None else f"{metrics.val_iou:.4f}",
        )
        score = metrics.val_iou if metrics.val_iou is not None else -metrics.train_loss
        if score > best_score:
            best_score, best_epoch = score, epoch
            best = snapshot(model, _metadata("segmentation", epoch, model, cfg, shuffle_rng))

    final = snapshot(model, _metadata("segmentation", cfg.epochs, model, cfg, shuffle_rng))
    logger.info("phase 1 done; best epoch %d", best_epoch)
    return SegmentationResult(final=final, best=best or final, best_epoch=best_epoch, history=history)


def condition_embedding(model: YNet, scale: float) -> None:
    """Multiply the dense(k) output by scale and divide the expand weights by it.

    expand(scale * z) with weights / scale equals expand(z), so segmentation is
    unchanged; only the units the clustering head sees move.
    """
    if not scale > 0.0 or not math.isfinite(scale):
        raise ValidationError(f"embedding scale must be a positive finite number, got {scale}")
    embed, expand = model.layers[EMBED_LAYER], model.layers[EXPAND_LAYER]
    embed.weights *= scale
    embed.bias *= scale
    expand.weights /= scale


def _rescaled(result: KMeansResult, embeddings: np.ndarray, scale: float) -> KMeansResult:
    centroids = result.centroids * scale
    labels, dist = assign(embeddings, centroids)
    return KMeansResult(
        centroids=centroids,
        labels=labels,
        inertia=float(dist.sum()),
        iterations=result.iterations,
        inertia_history=[value * scale * scale for value in result.inertia_history],
    )


def init_clusters(model: YNet, train: Sequence[Sample], cfg: TrainConfig) -> ClusterInit:
    """Fit k-means on eval-mode training embeddings and store the centroids in the model.

    With cfg.embedding_spread set, the embedding is first rescaled (see
    condition_embedding) so the RMS distance from an embedding to its centroid
    equals that spread, in units of the Student-t kernel width.

    Raises: ValidationError for fewer samples than clusters or a U-Net model
    """
    if not model.has_bottleneck:
        raise ValidationError("the U-Net baseline has no embedding to cluster")
    if len(train) < cfg.n_clusters:
        raise ValidationError(f"{len(train)} training samples cannot seed {cfg.n_clusters} clusters")
    _check_samples(model, train, "train")
    embeddings = embed_samples(model, train)
    result = kmeans_fit(embeddings, cfg.n_clusters, seed=cfg.seed, n_init=cfg.kmeans_n_init)
    if cfg.embedding_spread is not None and result.inertia > 0.0:
        scale = cfg.embedding_spread / math.sqrt(result.inertia / len(train))
        condition_embedding(model, scale)
        embeddings = embed_samples(model, train)
        result = _rescaled(result, embeddings, scale)
        logger.info("embedding rescaled by %.4g to RMS spread %.3g", scale, cfg.embedding_spread)
    model.centroids = result.centroids.astype(model.dtype)
    return ClusterInit(kmeans=result, embeddings=embeddings)


def _phase2_parameters(model: YNet, cfg: TrainConfig) -> Dict[str, np.ndarray]:
    layers = encoder_layer_names(model.config) + [EMBED_LAYER]
    if not cfg.freeze_decoder_in_phase2:
        layers += [EXPAND_LAYER] + decoder_layer_names(model.config) + [HEAD_LAYER]
    names = {f"{layer}.{part}" for layer in layers for part in ("weight", "bias")}
    names.add(CENTROIDS_NAME)
    return {name: t for name, t in model.named_tensors() if name in names}


def train_clustering(model: YNet, train: Sequence[Sample], cfg: TrainConfig) -> ClusteringResult:
    """Phase 2: minimise KL(P || Q) (+ gamma_seg * BCE) over encoder, dense(k) and centroids.

    P is recomputed from a full eval-mode pass every p_update_interval batches
    (default once per epoch) and once more after the last epoch; every refresh
    is recorded. Empty clusters are re-seeded at refresh time.

    Raises:
        ValidationError: centroids not initialised or empty split
        NumericalError: non-finite loss
    """
    if model.centroids is None:
        raise ValidationError("cluster centroids are not initialised; run cluster init first")
    if not train:
        raise ValidationError("training split is empty")
    _check_samples(model, train, "train")
    shuffle_rng, dropout_rng = _phase_rngs(cfg.seed, 1)
    params = _phase2_parameters(model, cfg)
    state = AdamState.create(params, learning_rate=cfg.cluster_learning_rate)
    mu = model.centroids
    history: List[KLRecord] = []

    def refresh(epoch: int, step: int) -> np.ndarray:
        z = embed_samples(model, train)
        assignment = soft_assign(z, mu, cfg.alpha)
        if reseed_empty_centroids(z, mu, assignment):
            assignment = soft_assign(z, mu, cfg.alpha)
        p = target_distribution(assignment).p
        kl = kl_divergence(p, assignment.q)
        history.append(KLRecord(refresh=len(history), epoch=epoch, batch=step, kl=kl))
        logger.info("target refresh %d (epoch %d, batch %d): KL %.6f", len(history) - 1, epoch, step, kl)
        return p

    batches_per_epoch = math.ceil(len(train) / cfg.batch_size)
    interval = cfg.p_update_interval or batches_per_epoch
    joint = cfg.gamma_seg > 0
    step = 0
    p = refresh(0, 0)
    for epoch in range(1, cfg.cluster_epochs + 1):
        kl_sum = 0.0
        for b, batch in enumerate(_batches(shuffle_rng.permutation(len(train)), cfg.batch_size)):
            if step and step % interval == 0:
                p = refresh(epoch, step)
            traces, rows = [], []
            for index in batch:
                image = train[index].image
                if joint:
                    _, trace = forward_seg_traced(model, image, cfg.dropout_in_phase2, dropout_rng)
                    z = trace.encoder.z
                else:
                    z, trace = forward_embed_traced(model, image, cfg.dropout_in_phase2, dropout_rng)
                traces.append(trace)
                rows.append(z)
            z_batch = np.stack(rows).astype(np.float64)
            p_batch = p[batch]
            scale = 1.0 / len(batch)
            loss = kl_divergence(p_batch, soft_assign(z_batch, mu, cfg.alpha).q) * scale
            grad_z, grad_mu = kl_grad(z_batch, mu, p_batch, cfg.alpha)

            grads: Gradients = {}
            for row, (index, trace) in enumerate(zip(batch, traces)):
                grad_logits = None
                if joint:
                    target = train[index].mask.reshape(trace.probs.shape)
                    loss += cfg.gamma_seg * nn.bce_loss(trace.probs, target) * scale
                    grad_logits = nn.sigmoid_bce_backward(trace.probs, target) * (cfg.gamma_seg * scale)
                sample_grads = backward(
                    model, trace, grad_logits=grad_logits, grad_z=(grad_z[row] * scale).astype(model.dtype)
                )
                _accumulate(grads, sample_grads, 1.0)
            grads[CENTROIDS_NAME] = (grad_mu * scale).astype(model.dtype)
            _require_finite(loss, epoch, b, "clustering")
            logger.debug("epoch %d batch %d loss %.6f", epoch, b, loss)
            adam_step(params, {name: g for name, g in grads.items() if name in params}, state)
            kl_sum += loss * len(batch)
            step += 1
        logger.info("cluster epoch %d/%d: mean batch loss %.6f", epoch, cfg.cluster_epochs, kl_sum / len(train))
    refresh(cfg.cluster_epochs, step)

    checkpoint = snapshot(model, _metadata("clustering", cfg.cluster_epochs, model, cfg, shuffle_rng))
    return ClusteringResult(checkpoint=checkpoint, kl_history=history)


def compare_variants(
    config: ModelConfig,
    train: Sequence[Sample],
    val: Sequence[Sample],
    test: Sequence[Sample],
    cfg: TrainConfig,
) -> ComparisonReport:
    """Train Y-Net and the U-Net baseline from the same seed and budget; score both on test."""
    if not test:
        raise ValidationError("comparison needs a non-empty test split")
    scores = []
    for variant in (ModelVariant.YNET, ModelVariant.UNET):
        model = build(config.model_copy(update={"variant": variant}), seed=cfg.seed)
        result = train_segmentation(model, train, val, cfg)
        test_iou = evaluate_iou(model, test, cfg.threshold)
        logger.info("%s: %d parameters, test IoU %.4f", variant.value, model.param_count(), test_iou)
        scores.append(
            VariantScore(
                variant=variant.value,
                param_count=model.param_count(),
                test_iou=test_iou,
                final_train_loss=result.history[-1].train_loss,
            )
        )
    return ComparisonReport(seed=cfg.seed, epochs=cfg.epochs, scores=scores)
