"""Synthetic gray+depth activity videos with planted sub-activity boundaries.

Every class is an ordered sequence of motion motifs (bright stripes
drifting at a motif-specific velocity). Classes use the same motifs in different
orders, so only the temporal composition separates them. Motif durations
are drawn per sample, which is what makes the latent segmentation matter.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .latent_segmentation import SegmentationConfig, enumerate_assignments
from .structured_net import Profile
from .video_io import VideoSample


@dataclass(frozen=True)
class SyntheticSpec:
    n_phases: int = 3
    frames_per_anchor: int = 2
    period: float = 4.0  # stripe period in pixels
    shift: float = 2.0 / 3.0  # pixels per anchor frame between neighbouring motifs
    noise: float = 0.03
    channels: int = 2


def class_orders(n_classes: int, n_phases: int) -> list[tuple[int, ...]]:
    """Motif order per class: identity, reversed, then remaining permutations."""
    base = tuple(range(n_phases))
    orders = [base]
    if n_phases > 1:
        orders.append(base[::-1])
    for perm in itertools.permutations(base):
        if perm not in orders:
            orders.append(perm)
    if n_classes > len(orders):
        raise ValueError(f"{n_phases} motifs give at most {len(orders)} distinct classes")
    return orders[:n_classes]


def motif_velocity(k: int, spec: SyntheticSpec) -> float:
    """Drift in pixels per anchor frame; motifs are symmetric around standing still."""
    return (k - (spec.n_phases - 1) / 2.0) * spec.shift


def _render_stripes(offset, height, width, period):
    ys = np.arange(height, dtype=np.float64)[:, None]
    band = 0.5 + 0.5 * np.cos(2.0 * np.pi * (ys - offset) / period)
    return np.broadcast_to(band, (height, width))


def render_sample(lengths, order, profile: Profile, spec: SyntheticSpec, rng,
                  label=0, ident="") -> VideoSample:
    """Render one video whose phase ``j`` covers ``lengths[j]`` anchor frames.

    Horizontal bright stripes start at a random offset and drift
    vertically; each phase sets the drift velocity of its motif. The offset
    carries over between phases so boundaries show no jump. Depth is an
    inverted, compressed copy of the gray pattern.
    """
    fpa = spec.frames_per_anchor
    H, W = profile.height, profile.width
    frames = []
    offset = rng.uniform(0, spec.period)
    for t_j, motif in zip(lengths, order):
        v = motif_velocity(motif, spec) / fpa
        for _ in range(t_j * fpa):
            pattern = _render_stripes(offset, H, W, spec.period)
            offset += v
            gray = 0.1 + 0.8 * pattern
            depth = 0.8 - 0.5 * pattern
            frames.append(np.stack([gray, depth][: spec.channels]))
    px = np.asarray(frames)
    px = np.clip(px + spec.noise * rng.standard_normal(px.shape), 0.0, 1.0)
    return VideoSample(px, label=label, id=ident,
                       meta={"lengths": tuple(int(t) for t in lengths), "order": tuple(order)})


def generate_synthetic(n_per_class: int, n_classes: int, profile: Profile, seed: int,
                       spec: SyntheticSpec | None = None, prefix: str = "s") -> list[VideoSample]:
    """``n_per_class`` samples for each class; deterministic for a given seed.

    Each sample's ``meta['lengths']`` records its planted phase durations in
    anchor frames.
    """
    spec = spec or SyntheticSpec(n_phases=profile.M, channels=profile.channels)
    seg = SegmentationConfig(A=profile.A, M=spec.n_phases, m=profile.m, L_min=profile.L_min)
    choices = enumerate_assignments(seg)
    if not choices:
        raise ValueError(f"cannot split {profile.A} anchors into {spec.n_phases} phases "
                         f"of at least {profile.L_min}")
    orders = class_orders(n_classes, spec.n_phases)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_class):
        for c in range(n_classes):
            h = choices[rng.integers(len(choices))]
            out.append(render_sample(h.lengths, orders[c], profile, spec, rng,
                                     label=c, ident=f"{prefix}{len(out):05d}"))
    return out
