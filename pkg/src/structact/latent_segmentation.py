"""Latent temporal structure: anchor frames and segment decompositions."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb


@dataclass(frozen=True)
class SegmentationConfig:
    A: int = 30  # anchor frames per video
    M: int = 4  # segments / sub-networks
    m: int = 9  # frames fed to each sub-network
    L_min: int = 5  # minimum anchors per segment

    def __post_init__(self):
        if self.M < 1 or self.m < 1 or self.L_min < 1 or self.A < 1:
            raise ValueError(f"segmentation parameters must be positive: {self}")

    @property
    def feasible(self) -> bool:
        return self.A >= self.M * self.L_min


@dataclass(frozen=True, order=True)
class LatentAssignment:
    """Contiguous decomposition of ``A`` anchors into segments.

    ``starts`` are 1-based anchor indices. Ordering compares ``lengths`` first,
    which is the lexicographic order used for tie-breaking.
    """

    lengths: tuple[int, ...]
    starts: tuple[int, ...]

    @classmethod
    def from_lengths(cls, lengths) -> "LatentAssignment":
        lengths = tuple(int(t) for t in lengths)
        starts, s = [], 1
        for t in lengths:
            starts.append(s)
            s += t
        return cls(lengths, tuple(starts))

    @property
    def M(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        return sum(self.lengths)

    def is_valid(self, cfg: SegmentationConfig) -> bool:
        if len(self.lengths) != cfg.M or len(self.starts) != cfg.M:
            return False
        if not self.starts or self.starts[0] != 1:
            return False
        for j in range(cfg.M - 1):
            if self.starts[j + 1] != self.starts[j] + self.lengths[j]:
                return False
        return self.total == cfg.A and min(self.lengths) >= cfg.L_min

    def __str__(self):
        return "-".join(str(t) for t in self.lengths)


def sample_anchor_frames(frame_count: int, A: int) -> list[int]:
    """Indices ``floor(a * frame_count / A)``; short videos repeat frames."""
    if frame_count < 1:
        raise ValueError("frame_count must be positive")
    return [a * frame_count // A for a in range(A)]


def count_assignments(cfg: SegmentationConfig) -> int:
    if not cfg.feasible:
        return 0
    return comb(cfg.A - cfg.M * cfg.L_min + cfg.M - 1, cfg.M - 1)


@lru_cache(maxsize=64)
def _compositions(total: int, parts: int, low: int) -> tuple[tuple[int, ...], ...]:
    if parts == 1:
        return ((total,),) if total >= low else ()
    out = []
    for first in range(low, total - low * (parts - 1) + 1):
        for rest in _compositions(total - first, parts - 1, low):
            out.append((first,) + rest)
    return tuple(out)


def enumerate_assignments(cfg: SegmentationConfig) -> list[LatentAssignment]:
    """All decompositions with every segment at least ``L_min`` anchors long.

    Ordered lexicographically by segment lengths; empty when infeasible.
    """
    if not cfg.feasible:
        return []
    return [LatentAssignment.from_lengths(ls) for ls in _compositions(cfg.A, cfg.M, cfg.L_min)]


def equal_assignment(cfg: SegmentationConfig) -> LatentAssignment:
    """The most even valid decomposition (lexicographically first among ties)."""
    cands = enumerate_assignments(cfg)
    if not cands:
        raise ValueError(f"no valid assignment for {cfg}")
    mean = cfg.A / cfg.M
    return min(cands, key=lambda h: (max(abs(t - mean) for t in h.lengths), h))


def sample_segment_frames(assignment: LatentAssignment, j: int, anchors, m: int) -> list[int]:
    """``m`` key frames of segment ``j`` (1-based), uniformly from its anchors."""
    if not 1 <= j <= assignment.M:
        raise IndexError(f"segment index {j} outside 1..{assignment.M}")
    s, t = assignment.starts[j - 1], assignment.lengths[j - 1]
    return [anchors[s - 1 + k * t // m] for k in range(m)]
