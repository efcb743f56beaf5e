"""Max-margin classifier objectives with a radius regulariser.

Binary losses take features ``phi`` of shape ``(N, d)``, labels ``y`` in
``{-1, +1}`` and a hyperplane ``(w, b)``. The one-vs-rest helpers at the
bottom combine one binary problem per class, sharing the radius term.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0  # hinge trade-off
    eta: float = 0.01  # radius trade-off
    alpha: float = 0.0  # softmax sharpness (L2 only)
    variant: str = "L3"
    grad_mode: str = "frozen"  # "frozen" holds the mean feature fixed, "exact" differentiates it

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.eta < 0 or self.alpha < 0:
            raise ValueError("eta and alpha must be non-negative")
        if self.variant not in ("L2", "L3"):
            raise ValueError(f"variant must be L2 or L3, got {self.variant!r}")
        if self.grad_mode not in ("frozen", "exact"):
            raise ValueError(f"grad_mode must be frozen or exact, got {self.grad_mode!r}")


def squared_hinge(score, y):
    """``max(0, 1 - score*y)**2``; vectorised over arrays."""
    return np.maximum(0.0, 1.0 - np.asarray(score) * y) ** 2


def _slack(phi, y, w, b):
    return np.maximum(0.0, 1.0 - (phi @ w + b) * y)


def _as_points(points):
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("need a non-empty (N, d) point set")
    return p


def pairwise_sq_dists(points) -> np.ndarray:
    p = _as_points(points)
    diff = p[:, None, :] - p[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# ---------------------------------------------------------------------------
# minimum enclosing ball


class BallResult(NamedTuple):
    center: np.ndarray
    radius: float
    support: tuple[int, ...] = ()


def _circumball(pts: list[np.ndarray]):
    """Smallest ball with every point of ``pts`` on its boundary."""
    q0 = pts[0]
    if len(pts) == 1:
        return q0.copy(), 0.0
    V = np.array([q - q0 for q in pts[1:]])
    G = V @ V.T
    rhs = 0.5 * np.einsum("ij,ij->i", V, V)
    lam = np.linalg.lstsq(G, rhs, rcond=None)[0]
    c = q0 + lam @ V
    r2 = max(float(np.sum((q - c) ** 2)) for q in pts)
    return c, np.sqrt(r2)


def exact_meb(points, seed: int = 0, tol: float = 1e-12) -> BallResult:
    """Minimum enclosing ball by move-to-front Welzl recursion.

    The result is checked afterwards: every point must be inside and the
    centre must lie in the convex hull of the support points. A failed check
    retries with another shuffle.
    """
    P = _as_points(points)
    n, d = P.shape
    if np.all(P == P[0]):
        return BallResult(P[0].copy(), 0.0, (0,))
    last_err = None
    for attempt in range(8):
        order = list(range(n))
        random.Random(seed + attempt).shuffle(order)
        ball = _mtf_welzl(P, order, d, tol)
        ok, err = _verify_ball(P, ball, tol)
        if ok:
            return ball
        last_err = err
    raise ArithmeticError(f"minimum enclosing ball did not verify: {last_err}")


def _inside(p, c, r, tol):
    return float(np.sum((p - c) ** 2)) <= r * r * (1.0 + tol) + tol


def _mtf_welzl(P, order, d, tol):
    def recurse(end, support):
        c, r = _circumball([P[i] for i in support]) if support else (P[order[0]].copy(), -1.0)
        if len(support) == d + 1:
            return c, r, support
        best_support = support
        i = 0
        while i < end:
            idx = order[i]
            if r < 0 or not _inside(P[idx], c, r, tol):
                c, r, best_support = recurse(i, support + [idx])
                order.insert(0, order.pop(i))
            i += 1
        return c, r, best_support

    c, r, sup = recurse(len(order), [])
    return BallResult(np.asarray(c), float(max(r, 0.0)), tuple(sorted(sup)))


def _verify_ball(P, ball, tol):
    dist = np.sqrt(np.sum((P - ball.center) ** 2, axis=1))
    if np.any(dist > ball.radius + 1e-9 * max(1.0, ball.radius)):
        return False, f"point outside by {float(np.max(dist - ball.radius)):.3g}"
    S = P[list(ball.support)]
    if len(S) == 1:
        return True, None
    # centre = sum_k mu_k S_k with mu >= 0, sum mu = 1
    A = np.vstack([S.T, np.ones(len(S))])
    rhs = np.append(ball.center, 1.0)
    mu = np.linalg.lstsq(A, rhs, rcond=None)[0]
    resid = np.linalg.norm(A @ mu - rhs)
    scale = max(1.0, float(np.abs(S).max()))
    if resid > 1e-7 * scale or mu.min() < -1e-7:
        return False, f"centre not in hull of support (resid={resid:.3g}, min mu={mu.min():.3g})"
    return True, None


# ---------------------------------------------------------------------------
# relaxed radii


def relaxed_radius_max(points) -> float:
    """Largest pairwise distance (a diameter, not a radius)."""
    p = _as_points(points)
    if len(p) < 2:
        return 0.0
    return float(np.sqrt(pairwise_sq_dists(p).max()))


def softmax_weights(d2: np.ndarray, alpha: float) -> np.ndarray:
    z = alpha * d2
    return np.exp(z - logsumexp(z))


def softmax_radius(points, alpha: float):
    """``(sum_ij kappa_ij d_ij^2, kappa)`` with ``kappa`` a softmax over ``alpha*d^2``.

    The double sum runs over all ordered pairs, diagonal included.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    d2 = pairwise_sq_dists(points)
    kappa = softmax_weights(d2, alpha)
    return float(np.sum(kappa * d2)), kappa


def scatter(phi, mean=None) -> float:
    """``sum_i ||phi_i - mean||^2`` (mean defaults to the sample mean)."""
    phi = _as_points(phi)
    mean = phi.mean(axis=0) if mean is None else mean
    return float(np.sum((phi - mean) ** 2))


def radius_term(phi, cfg: LossConfig, mean=None) -> float:
    """The radius regulariser of the configured variant, weight included."""
    if cfg.variant == "L3":
        return 2.0 * cfg.eta * scatter(phi, mean)
    return cfg.eta * softmax_radius(phi, cfg.alpha)[0]


# ---------------------------------------------------------------------------
# binary losses


def _check_batch(phi, y):
    phi = _as_points(phi)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (phi.shape[0],):
        raise ValueError("labels must match the number of features")
    return phi, y


def hinge_sum(phi, y, w, b) -> float:
    phi, y = _check_batch(phi, y)
    return float(np.sum(_slack(phi, y, w, b) ** 2))


def loss_L3(phi, y, w, b, cfg: LossConfig, mean=None) -> float:
    phi, y = _check_batch(phi, y)
    w = np.asarray(w, dtype=np.float64)
    return (0.5 * float(w @ w) + 2.0 * cfg.eta * scatter(phi, mean)
            + cfg.lam * hinge_sum(phi, y, w, b))


def loss_L2(phi, y, w, b, cfg: LossConfig) -> float:
    phi, y = _check_batch(phi, y)
    w = np.asarray(w, dtype=np.float64)
    return (0.5 * float(w @ w) + cfg.eta * softmax_radius(phi, cfg.alpha)[0]
            + cfg.lam * hinge_sum(phi, y, w, b))


def loss_L1(phi, y, w, b, cfg: LossConfig) -> float:
    """Hard-max reference objective (evaluation only)."""
    phi, y = _check_batch(phi, y)
    w = np.asarray(w, dtype=np.float64)
    return 0.5 * float(w @ w) + relaxed_radius_max(phi) ** 2 + cfg.lam * hinge_sum(phi, y, w, b)


def loss_L0(phi, y, w, b, cfg: LossConfig, seed: int = 0) -> float:
    """Radius-margin ratio reference objective (evaluation only)."""
    phi, y = _check_batch(phi, y)
    w = np.asarray(w, dtype=np.float64)
    R = exact_meb(phi, seed).radius
    return 0.5 * float(w @ w) * R * R + cfg.lam * hinge_sum(phi, y, w, b)


def loss(phi, y, w, b, cfg: LossConfig, mean=None) -> float:
    if cfg.variant == "L3":
        return loss_L3(phi, y, w, b, cfg, mean)
    return loss_L2(phi, y, w, b, cfg)


# ---------------------------------------------------------------------------
# gradients


def grad_classifier(phi, y, w, b, cfg: LossConfig):
    """``(dL/dw, dL/db)`` of the squared-hinge objective (same for L2 and L3)."""
    phi, y = _check_batch(phi, y)
    xi = _slack(phi, y, w, b)
    gw = np.asarray(w, dtype=np.float64) - 2.0 * cfg.lam * (y * xi) @ phi
    gb = -2.0 * cfg.lam * float(np.sum(y * xi))
    return gw, gb


def _hinge_feature_grad(phi, y, w, b, lam):
    xi = _slack(phi, y, w, b)
    return -2.0 * lam * (y * xi)[:, None] * np.asarray(w)[None, :]


def radius_feature_grad(phi, cfg: LossConfig, mean=None) -> np.ndarray:
    """Gradient of :func:`radius_term` with respect to every feature."""
    phi = _as_points(phi)
    if cfg.variant == "L3":
        if cfg.grad_mode == "exact" or mean is None:
            mean = phi.mean(axis=0)
        g = 4.0 * cfg.eta * (phi - mean)
        if cfg.grad_mode == "exact":
            # coupling through the mean: -(1/N) sum_k (phi_k - mean), zero up to rounding
            g -= 4.0 * cfg.eta * (phi - mean).sum(axis=0) / len(phi)
        return g
    d2 = pairwise_sq_dists(phi)
    kappa = softmax_weights(d2, cfg.alpha)
    S = float(np.sum(kappa * d2))
    c = kappa * (1.0 + cfg.alpha * (d2 - S))
    c = c + c.T
    # sum_j c_ij * 2 (phi_i - phi_j)
    return cfg.eta * 2.0 * (c.sum(axis=1)[:, None] * phi - c @ phi)


def grad_features(phi, y, w, b, cfg: LossConfig, mean=None) -> np.ndarray:
    """``dL/dphi_i`` for every sample, shape ``(N, d)``.

    With the L3 variant in ``frozen`` mode the mean feature is treated as a
    constant; pass ``mean`` to pin it to a value computed elsewhere.
    """
    phi, y = _check_batch(phi, y)
    return radius_feature_grad(phi, cfg, mean) + _hinge_feature_grad(phi, y, w, b, cfg.lam)


# ---------------------------------------------------------------------------
# one-vs-rest over C classes


def ovr_targets(labels, n_classes: int) -> np.ndarray:
    """``(C, N)`` matrix of +1 for the sample's class and -1 elsewhere."""
    labels = np.asarray(labels, dtype=int)
    Y = -np.ones((n_classes, len(labels)))
    Y[labels, np.arange(len(labels))] = 1.0
    return Y


class LossParts(NamedTuple):
    total: float
    hinge: float  # lam-weighted squared hinge, summed over classes
    radius: float  # weighted radius term
    reg: float  # 0.5 * sum_c ||w_c||^2


def ovr_loss(phi, labels, W, B, cfg: LossConfig, mean=None) -> LossParts:
    phi = _as_points(phi)
    Y = ovr_targets(labels, W.shape[0])
    hinge = cfg.lam * sum(hinge_sum(phi, Y[c], W[c], B[c]) for c in range(W.shape[0]))
    reg = 0.5 * float(np.sum(W * W))
    rad = radius_term(phi, cfg, mean)
    return LossParts(reg + rad + hinge, hinge, rad, reg)


def ovr_grads(phi, labels, W, B, cfg: LossConfig, mean=None):
    """Gradients ``(dW, dB, dPhi)`` of :func:`ovr_loss`."""
    phi = _as_points(phi)
    Y = ovr_targets(labels, W.shape[0])
    gW = np.empty_like(W)
    gB = np.empty_like(B)
    gphi = radius_feature_grad(phi, cfg, mean)
    for c in range(W.shape[0]):
        gW[c], gB[c] = grad_classifier(phi, Y[c], W[c], B[c], cfg)
        gphi += _hinge_feature_grad(phi, Y[c], W[c], B[c], cfg.lam)
    return gW, gB, gphi
