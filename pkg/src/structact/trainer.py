"""Alternating training: latent search, then joint SGD on classifiers and CNN.

Each outer iteration re-estimates every sample's decomposition by
exhaustive search with the parameters frozen, then runs a few epochs of
mini-batch SGD in which the classifiers and the network are updated from
the same forward pass.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import structured_net as net
from .latent_segmentation import LatentAssignment, enumerate_assignments, equal_assignment
from .predictor import assignment_features, evaluate
from .radius_margin_loss import LossConfig, ovr_grads, ovr_loss
from .structured_net import ModelParams, Profile

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite gradients or objective."""


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    max_outer_iters: int = 50
    tol: float = 1e-4
    lr_classifier: float = 1e-2
    lr_cnn: float = 1e-3
    batch_size: int = 16
    inner_epochs: int = 10
    workers: int = 1
    pretrain_epochs: int = 30
    pretrain_lr: float = 3e-2

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.lr_classifier <= 0 or self.lr_cnn <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.max_outer_iters < 1 or self.inner_epochs < 1:
            raise ValueError("batch_size, max_outer_iters and inner_epochs must be >= 1")


@dataclass
class HistoryRow:
    iteration: int
    objective: float
    hinge: float
    radius: float
    train_accuracy: float
    estep_hinge_before: float
    estep_hinge_after: float
    lr_classifier: float
    lr_cnn: float

    FIELDS = ("iteration", "objective", "hinge", "radius", "train_accuracy",
              "estep_hinge_before", "estep_hinge_after", "lr_classifier", "lr_cnn")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class TrainState:
    params: ModelParams
    latents: list[LatentAssignment]
    lr_classifier: float
    lr_cnn: float
    batch_size: int
    rng_seed: int
    epoch: int = 0
    loss_history: list[HistoryRow] = field(default_factory=list)


@dataclass
class EStep:
    latents: list[LatentAssignment]
    hinge_before: float  # summed true-class squared hinge under the previous latents
    hinge_after: float


# ---------------------------------------------------------------------------
# step (i): latent variables


def select_latents(samples, margin_fn, assignments, previous=None, workers: int = 1) -> EStep:
    """Per-sample argmax of ``margin_fn(sample) -> (len(assignments),)`` margins.

    Ties go to the earliest candidate. Results are collected in sample
    order, so ``workers`` does not affect the outcome.
    """
    prev = list(previous) if previous is not None else [None] * len(samples)

    def job(i):
        margins = np.asarray(margin_fn(samples[i]), dtype=np.float64)
        k = int(np.argmax(margins))  # lowest index among equal margins
        before = margins[assignments.index(prev[i])] if prev[i] is not None else margins[k]
        return assignments[k], float(margins[k]), float(before)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(len(samples))))
    else:
        results = [job(i) for i in range(len(samples))]
    latents = [r[0] for r in results]
    after = float(sum(max(0.0, 1.0 - r[1]) ** 2 for r in results))
    before = float(sum(max(0.0, 1.0 - r[2]) ** 2 for r in results))
    return EStep(latents, before, after)


def estimate_latents(samples, params: ModelParams, previous=None, workers: int = 1) -> EStep:
    """Per-sample decomposition maximising the true-class margin.

    Candidates are scored with eval-mode features against frozen
    parameters.
    """
    assignments = enumerate_assignments(params.profile.segmentation)

    def margins(sample):
        feats = assignment_features(sample, params, assignments)
        return feats @ params.cls_w[sample.label] + params.cls_b[sample.label]

    return select_latents(samples, margins, assignments, previous, workers)


# ---------------------------------------------------------------------------
# steps (ii) + (iii): joint SGD


def batch_gradients(samples, latents, params: ModelParams, loss_cfg: LossConfig, seeds,
                    mode: str = "train"):
    """Forward a batch, then return ``(grads, loss_parts)`` at the current parameters."""
    phi, cache = net.forward_batch(samples, latents, params, mode, seeds)
    labels = [s.label for s in samples]
    parts = ovr_loss(phi, labels, params.cls_w, params.cls_b, loss_cfg)
    gW, gB, gphi = ovr_grads(phi, labels, params.cls_w, params.cls_b, loss_cfg)
    grads = net.backward_batch(gphi, cache, params)
    grads.cls_w[...] = gW
    grads.cls_b[...] = gB
    return grads, parts


def sgd_step(samples, latents, params: ModelParams, loss_cfg: LossConfig,
             lr_classifier: float, lr_cnn: float, seeds) -> ModelParams:
    """One simultaneous update of the classifiers and network; returns new params."""
    grads, _ = batch_gradients(samples, latents, params, loss_cfg, seeds)
    bad = [name for name, g in grads.named_arrays() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingError(f"non-finite gradient in {', '.join(bad)}")
    new = params.copy()
    for (name, p), g in zip(new.named_arrays(), grads.arrays()):
        lr = lr_classifier if name.startswith("cls_") else lr_cnn
        p -= lr * g
    return new


# ---------------------------------------------------------------------------
# the outer loop


def full_objective(samples, latents, params: ModelParams, loss_cfg: LossConfig):
    phi, _ = net.forward_batch(samples, latents, params, "eval")
    return ovr_loss(phi, [s.label for s in samples], params.cls_w, params.cls_b, loss_cfg)


def train_accuracy(samples, params: ModelParams, workers: int = 1) -> float:
    metrics, _ = evaluate(samples, params, workers)
    return metrics.overall_accuracy


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HistoryRow.FIELDS)
        for row in history:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_row()])


@dataclass
class TrainResult:
    params: ModelParams
    history: list[HistoryRow]
    latents: list[LatentAssignment]
    best_iteration: int


def _check_dataset(samples, n_classes):
    if not samples:
        raise ValueError("empty dataset")
    labels = {s.label for s in samples}
    if len(labels) < 2:
        raise ValueError("training needs at least two classes")
    if max(labels) >= n_classes or min(labels) < 0:
        raise ValueError(f"labels {sorted(labels)} outside 0..{n_classes - 1}")


def train(samples, profile: Profile, cfg: TrainConfig, seed: int, n_classes: int | None = None,
          init: ModelParams | None = None, out_dir=None) -> TrainResult:
    """Alternate latent estimation and SGD until the objective settles.

    Stops when the relative change of the full objective over one outer
    iteration drops below ``cfg.tol`` or after ``cfg.max_outer_iters``.
    Returns the parameters with the lowest objective seen.
    """
    n_classes = n_classes or (max(s.label for s in samples) + 1 if samples else 0)
    _check_dataset(samples, n_classes)
    rng = np.random.default_rng(seed)
    params = init.copy() if init is not None else net.init_params(profile, n_classes, rng)
    if params.profile != profile:
        raise ValueError("initial parameters were built for a different profile")
    state = TrainState(params, [equal_assignment(profile.segmentation)] * len(samples),
                       cfg.lr_classifier, cfg.lr_cnn, cfg.batch_size, seed)
    out_dir = Path(out_dir) if out_dir is not None else None

    prev_obj = full_objective(samples, state.latents, state.params, cfg.loss).total
    best = (math.inf, state.params, state.latents, 0)
    N = len(samples)
    for it in range(1, cfg.max_outer_iters + 1):
        est = estimate_latents(samples, state.params, state.latents, cfg.workers)
        state.latents = est.latents
        for _ in range(cfg.inner_epochs):
            order = rng.permutation(N)
            for start in range(0, N, state.batch_size):
                idx = order[start:start + state.batch_size]
                seeds = rng.integers(0, 2**63 - 1, size=len(idx))
                state.params = sgd_step([samples[i] for i in idx], [state.latents[i] for i in idx],
                                        state.params, cfg.loss, state.lr_classifier,
                                        state.lr_cnn, seeds)
            state.epoch += 1
        parts = full_objective(samples, state.latents, state.params, cfg.loss)
        if not math.isfinite(parts.total):
            raise TrainingError(f"objective became non-finite at iteration {it}")
        acc = train_accuracy(samples, state.params, cfg.workers)
        row = HistoryRow(it, parts.total, parts.hinge, parts.radius, acc,
                         est.hinge_before, est.hinge_after, state.lr_classifier, state.lr_cnn)
        state.loss_history.append(row)
        log.info("iter %d objective %.6g hinge %.4g radius %.4g acc %.3f",
                 it, parts.total, parts.hinge, parts.radius, acc)
        if parts.total < best[0]:
            best = (parts.total, state.params, state.latents, it)
        if out_dir is not None:
            net.save_checkpoint(out_dir / "checkpoint.lsnm", state.params)
            write_history_csv(out_dir / "loss_history.csv", state.loss_history)
        rel = abs(prev_obj - parts.total) / max(abs(prev_obj), 1e-12)
        if parts.total > prev_obj:
            state.lr_classifier /= 2.0
            state.lr_cnn /= 2.0
        prev_obj = parts.total
        if rel < cfg.tol:
            break
    return TrainResult(best[1], state.loss_history, best[2], best[3])


# ---------------------------------------------------------------------------
# pre-training on single-channel video


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def pretrain_softmax(samples, profile: Profile, cfg: TrainConfig, seed: int,
                     n_classes: int | None = None):
    """Cross-entropy pre-training on gray-only video with equal segments.

    Returns ``(params, losses)`` where ``params`` targets ``profile`` (two
    channels): the first-layer gray kernels are copied to the depth channel
    and the fully connected layer and classifiers are freshly randomised.
    """
    if not samples:
        raise ValueError("empty dataset")
    if any(s.channels != 1 for s in samples):
        raise ValueError("pre-training expects single-channel (gray) samples")
    n_classes = n_classes or max(s.label for s in samples) + 1
    rng = np.random.default_rng(seed)
    gray = profile.with_(channels=1)
    params = net.init_params(gray, n_classes, rng)
    h = equal_assignment(gray.segmentation)
    losses = []
    N = len(samples)
    for _ in range(cfg.pretrain_epochs):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [samples[i] for i in idx]
            seeds = rng.integers(0, 2**63 - 1, size=len(idx))
            z, cache = net.forward_batch(batch, [h] * len(idx), params, "train", seeds)
            p = softmax(z @ params.cls_w.T + params.cls_b)
            y = np.array([s.label for s in batch])
            total -= float(np.log(np.maximum(p[np.arange(len(y)), y], 1e-300)).sum())
            d = p.copy()
            d[np.arange(len(y)), y] -= 1.0
            grads = net.backward_batch(d @ params.cls_w, cache, params)
            grads.cls_w[...] = d.T @ z
            grads.cls_b[...] = d.sum(axis=0)
            for prm, g in zip(params.arrays(), grads.arrays()):
                prm -= cfg.pretrain_lr * g
        if not params.is_finite():
            raise TrainingError("pre-training diverged")
        losses.append(total / N)
    return transfer_pretrained(params, profile, rng), losses


def transfer_pretrained(gray_params: ModelParams, profile: Profile, seed) -> ModelParams:
    """Widen gray-only kernels to ``profile.channels`` and re-randomise the head."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fresh = net.init_params(profile, gray_params.n_classes, rng)
    subnets = []
    for sp in gray_params.subnets:
        k1 = np.repeat(sp.k1[:, :1], profile.channels, axis=1)
        subnets.append(net.SubnetParams(k1, sp.b1.copy(), sp.k2.copy(), sp.b2.copy(),
                                        sp.k3.copy(), sp.b3.copy()))
    return ModelParams(profile, subnets, fresh.fc_w, fresh.fc_b, fresh.cls_w, fresh.cls_b)
