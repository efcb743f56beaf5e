"""Joint search over class label and latent decomposition."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import structured_net as net
from .latent_segmentation import LatentAssignment, enumerate_assignments


@dataclass(frozen=True)
class Prediction:
    label: int
    assignment: LatentAssignment
    score: float
    per_class_best: np.ndarray
    per_class_assignment: tuple[LatentAssignment, ...] = ()


# Candidates are scored in fixed-size chunks; the partition does not depend
# on the worker count, so serial and threaded runs give identical bits.
CHUNK = 32


def assignment_features(sample, params, assignments=None, workers: int = 1) -> np.ndarray:
    """Eval-mode features for every candidate decomposition, shape ``(H, F)``.

    Each distinct segment of a chunk is pushed through its sub-network once,
    so the cost is one feature evaluation per assignment whatever the
    number of classes.
    """
    if assignments is None:
        assignments = enumerate_assignments(params.profile.segmentation)
    chunks = [assignments[i:i + CHUNK] for i in range(0, len(assignments), CHUNK)]

    def job(chunk):
        return net.assignment_features(sample, chunk, params)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    return np.concatenate(parts)


def predict(sample, params, assignments=None, workers: int = 1) -> Prediction:
    """``argmax_(y, h) w_y . phi(x; h) + b_y``.

    Ties go to the lowest class index, then the lexicographically first
    decomposition.
    """
    if assignments is None:
        assignments = enumerate_assignments(params.profile.segmentation)
    feats = assignment_features(sample, params, assignments, workers)
    scores = feats @ params.cls_w.T + params.cls_b  # (H, C)
    best_h = scores.argmax(axis=0)  # first maximum = lexicographic tie rule
    per_class = scores[best_h, np.arange(scores.shape[1])]
    label = int(np.argmax(per_class))
    return Prediction(
        label=label,
        assignment=assignments[best_h[label]],
        score=float(per_class[label]),
        per_class_best=per_class,
        per_class_assignment=tuple(assignments[k] for k in best_h),
    )


@dataclass
class Metrics:
    confusion: np.ndarray  # counts, rows = true class
    per_class_accuracy: np.ndarray
    average_accuracy: float
    overall_accuracy: float

    @property
    def confusion_normalized(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(self.confusion, rows, out=np.zeros_like(self.confusion, dtype=float),
                         where=rows > 0)


def metrics_from_labels(true, pred, n_classes: int) -> Metrics:
    true = np.asarray(true, dtype=int)
    pred = np.asarray(pred, dtype=int)
    conf = np.zeros((n_classes, n_classes))
    np.add.at(conf, (true, pred), 1)
    support = conf.sum(axis=1)
    present = support > 0
    per_class = np.divide(np.diag(conf), support, out=np.full(n_classes, np.nan), where=present)
    avg = float(np.mean(per_class[present])) if present.any() else float("nan")
    overall = float(np.mean(true == pred)) if len(true) else float("nan")
    return Metrics(conf, per_class, avg, overall)


def evaluate(samples, params, workers: int = 1):
    """Predict every sample; returns ``(metrics, predictions)`` in sample order."""
    assignments = enumerate_assignments(params.profile.segmentation)

    def job(s):
        return predict(s, params, assignments)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(job, samples))
    else:
        preds = [job(s) for s in samples]
    m = metrics_from_labels([s.label for s in samples], [p.label for p in preds], params.n_classes)
    return m, preds
