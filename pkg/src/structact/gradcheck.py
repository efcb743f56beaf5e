"""Finite-difference verification of the analytic training gradients."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import structured_net as net
from .latent_segmentation import enumerate_assignments
from .radius_margin_loss import LossConfig, grad_classifier, loss_L3, ovr_loss, ovr_targets
from .synthetic import generate_synthetic
from .trainer import batch_gradients


class GroupError(NamedTuple):
    name: str
    size: int
    rel_error: float


def rel_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return float(np.linalg.norm(a - n) / scale) if scale > 0 else 0.0


def _central(f, arr, idx, step):
    old = arr[idx]
    arr[idx] = old + step
    up = f()
    arr[idx] = old - step
    down = f()
    arr[idx] = old
    return (up - down) / (2 * step)


def network_gradient_errors(profile: net.Profile, seed: int = 0, n_per_class: int = 2,
                            n_classes: int = 2, step: float = 1e-6,
                            loss_cfg: LossConfig | None = None) -> list[GroupError]:
    """Relative error of every parameter array of the full objective.

    The batch mean feature is frozen at its value for the unperturbed
    parameters, matching how the analytic gradient treats it. Latents are
    spread over the candidate list and dropout masks use fixed seeds, so
    the objective is a deterministic function of the parameters.
    """
    cfg = loss_cfg or LossConfig()
    rng = np.random.default_rng(seed)
    params = net.init_params(profile, n_classes, rng)
    # random classifiers so every hinge is active with non-trivial weight
    params.cls_w[...] = rng.standard_normal(params.cls_w.shape)
    params.cls_b[...] = rng.standard_normal(params.cls_b.shape) * 0.1
    samples = generate_synthetic(n_per_class, n_classes, profile, seed)
    cands = enumerate_assignments(profile.segmentation)
    latents = [cands[(7 * i) % len(cands)] for i in range(len(samples))]
    seeds = [int(s) for s in rng.integers(0, 2**31, size=len(samples))]
    labels = [s.label for s in samples]

    phi0, _ = net.forward_batch(samples, latents, params, "train", seeds)
    mean = phi0.mean(axis=0)
    grads, _ = batch_gradients(samples, latents, params, cfg, seeds)

    def objective():
        phi, _ = net.forward_batch(samples, latents, params, "train", seeds)
        return ovr_loss(phi, labels, params.cls_w, params.cls_b, cfg, mean).total

    out = []
    for (name, arr), g in zip(params.named_arrays(), grads.arrays()):
        numeric = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            numeric[idx] = _central(objective, arr, idx, step)
        out.append(GroupError(name, arr.size, rel_error(g, numeric)))
    return out


def classifier_gradient_errors(seed: int = 0, n: int = 30, dim: int = 6, step: float = 1e-5,
                               loss_cfg: LossConfig | None = None) -> list[GroupError]:
    """Relative error of the closed-form ``(dw, db)`` on random features."""
    cfg = loss_cfg or LossConfig()
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((n, dim))
    y = ovr_targets(rng.integers(0, 2, size=n), 2)[0]
    w = rng.standard_normal(dim) * 0.5
    b = np.array([0.1])
    gw, gb = grad_classifier(phi, y, w, b[0], cfg)

    def objective():
        return loss_L3(phi, y, w, b[0], cfg)

    nw = np.array([_central(objective, w, (i,), step) for i in range(dim)])
    nb = _central(objective, b, (0,), step)
    return [GroupError("w", dim, rel_error(gw, nw)), GroupError("b", 1, rel_error(gb, nb))]
