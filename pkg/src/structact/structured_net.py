"""The M-sub-network spatio-temporal CNN and its parameters.

Each sub-network maps a ``(channels, h, w, m)`` segment through
3D conv -> pool -> 3D conv -> pool -> 2D conv (per temporal slice). The
sub-network outputs are concatenated, passed through dropout and one fully
connected ``tanh`` layer to give the feature vector the classifiers score.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .latent_segmentation import (
    LatentAssignment,
    SegmentationConfig,
    sample_anchor_frames,
    sample_segment_frames,
)
from .tensor_core import (
    MissingCacheError,
    ShapeError,
    dropout_mask,
    pool_blocks,
    unpool_blocks,
)


@dataclass(frozen=True)
class Profile:
    """Architecture and segmentation hyper-parameters."""

    name: str
    height: int
    width: int
    m: int
    A: int
    M: int
    L_min: int
    c1: int
    c2: int
    c3: int
    k1: tuple[int, int, int]
    k2: tuple[int, int, int]
    k3: tuple[int, int]
    pool1: tuple[int, int]
    pool2: tuple[int, int]
    fc_width: int
    channels: int = 2
    dropout: float = 0.6

    def __post_init__(self):
        ints = [self.height, self.width, self.m, self.A, self.M, self.L_min, self.c1, self.c2,
                self.c3, self.fc_width, *self.k1, *self.k2, *self.k3, *self.pool1, *self.pool2]
        if min(ints) < 1:
            raise ValueError(f"profile {self.name!r}: sizes must be positive")
        if self.channels not in (1, 2):
            raise ValueError(f"profile {self.name!r}: channels must be 1 or 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"profile {self.name!r}: dropout must lie in [0, 1)")

    @property
    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(A=self.A, M=self.M, m=self.m, L_min=self.L_min)

    def layer_shapes(self) -> dict:
        """Spatial/temporal extents after every stage of one sub-network."""
        h, w, t = self.height, self.width, self.m
        out = {"input": (h, w, t)}
        h, w, t = h - self.k1[0] + 1, w - self.k1[1] + 1, t - self.k1[2] + 1
        out["conv1"] = (h, w, t)
        h, w = h // self.pool1[0], w // self.pool1[1]
        out["pool1"] = (h, w, t)
        h, w, t = h - self.k2[0] + 1, w - self.k2[1] + 1, t - self.k2[2] + 1
        out["conv2"] = (h, w, t)
        h, w = h // self.pool2[0], w // self.pool2[1]
        out["pool2"] = (h, w, t)
        h, w = h - self.k3[0] + 1, w - self.k3[1] + 1
        out["conv3"] = (h, w, t)
        if min(min(v) for v in out.values()) < 1:
            raise ShapeError(f"profile {self.name!r} collapses a layer: {out}")
        return out

    @property
    def subnet_width(self) -> int:
        h, w, t = self.layer_shapes()["conv3"]
        return self.c1 * self.c2 * self.c3 * h * w * t

    @property
    def concat_width(self) -> int:
        return self.M * self.subnet_width

    def with_(self, **kw) -> "Profile":
        return replace(self, **kw)


PAPER = Profile(
    name="paper", height=80, width=60, m=9, A=30, M=4, L_min=5,
    c1=7, c2=5, c3=4, k1=(9, 7, 3), k2=(7, 7, 3), k3=(6, 4),
    pool1=(3, 3), pool2=(3, 3), fc_width=64, dropout=0.6,
)

MINI = Profile(
    name="mini", height=8, width=6, m=4, A=12, M=3, L_min=3,
    c1=2, c2=2, c3=2, k1=(3, 3, 2), k2=(2, 2, 2), k3=(2, 1),
    pool1=(2, 2), pool2=(1, 1), fc_width=4, dropout=0.0,
)

PROFILES = {"paper": PAPER, "mini": MINI}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r} (choose from {sorted(PROFILES)})") from None


# ---------------------------------------------------------------------------
# parameters


@dataclass
class SubnetParams:
    k1: np.ndarray  # (c1, channels, kh, kw, kt)
    b1: np.ndarray  # (c1,)
    k2: np.ndarray  # (c1, c2, kh, kw, kt)
    b2: np.ndarray  # (c1, c2)
    k3: np.ndarray  # (c1, c2, c3, kh, kw)
    b3: np.ndarray  # (c1, c2, c3)

    ARRAYS = ("k1", "b1", "k2", "b2", "k3", "b3")


@dataclass
class ModelParams:
    profile: Profile
    subnets: list[SubnetParams]
    fc_w: np.ndarray  # (fc_width, concat_width)
    fc_b: np.ndarray
    cls_w: np.ndarray  # (n_classes, fc_width)
    cls_b: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.cls_w.shape[0]

    def named_arrays(self):
        """``(name, array)`` pairs in declaration order (the checkpoint order)."""
        for j, sp in enumerate(self.subnets):
            for name in SubnetParams.ARRAYS:
                yield f"subnet{j}.{name}", getattr(sp, name)
        yield "fc_w", self.fc_w
        yield "fc_b", self.fc_b
        yield "cls_w", self.cls_w
        yield "cls_b", self.cls_b

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def map(self, fn) -> "ModelParams":
        subnets = [SubnetParams(*(fn(getattr(sp, n)) for n in SubnetParams.ARRAYS))
                   for sp in self.subnets]
        return ModelParams(self.profile, subnets, fn(self.fc_w), fn(self.fc_b),
                           fn(self.cls_w), fn(self.cls_b))

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def _glorot(rng, shape, fan_in, fan_out):
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


def init_subnet(profile: Profile, rng) -> SubnetParams:
    p = profile
    r1, r2, r3 = (int(np.prod(k)) for k in (p.k1, p.k2, p.k3))
    return SubnetParams(
        k1=_glorot(rng, (p.c1, p.channels) + p.k1, p.channels * r1, p.c1 * r1),
        b1=np.zeros(p.c1),
        k2=_glorot(rng, (p.c1, p.c2) + p.k2, r2, p.c2 * r2),
        b2=np.zeros((p.c1, p.c2)),
        k3=_glorot(rng, (p.c1, p.c2, p.c3) + p.k3, r3, p.c3 * r3),
        b3=np.zeros((p.c1, p.c2, p.c3)),
    )


def init_fc(profile: Profile, rng):
    D, F = profile.concat_width, profile.fc_width
    return _glorot(rng, (F, D), D, F), np.zeros(F)


def init_params(profile: Profile, n_classes: int, seed) -> ModelParams:
    """Uniform Glorot initialisation of every weight; biases start at zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    subnets = [init_subnet(profile, rng) for _ in range(profile.M)]
    fc_w, fc_b = init_fc(profile, rng)
    F = profile.fc_width
    cls_w = _glorot(rng, (n_classes, F), F, n_classes)
    return ModelParams(profile, subnets, fc_w, fc_b, cls_w, np.zeros(n_classes))


# ---------------------------------------------------------------------------
# sub-network forward / backward (batched over a leading sample axis)


class SubnetCache(NamedTuple):
    win1: np.ndarray
    v1: np.ndarray
    arg1: np.ndarray
    win2: np.ndarray
    v2: np.ndarray
    arg2: np.ndarray
    win3: np.ndarray
    v3: np.ndarray


_PATHS: dict = {}


def _einsum(subscripts, a, b):
    key = (subscripts, a.shape, b.shape)
    path = _PATHS.get(key)
    if path is None:
        path = _PATHS[key] = np.einsum_path(subscripts, a, b, optimize="optimal")[0]
    return np.einsum(subscripts, a, b, optimize=path)


def _windows(x, shape, axes):
    return sliding_window_view(x, shape, axis=axes)


def _pool(x, window, axes):
    blocks = pool_blocks(x, window, axes)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def _unpool(g, arg, full_shape, window, axes):
    d = window[0] * window[1]
    blocks = np.zeros(g.shape + (d,))
    np.put_along_axis(blocks, arg[..., None], g[..., None], axis=-1)
    return unpool_blocks(blocks, full_shape, window, axes)


# bytes of layer-1 windows one segment may materialise inside einsum
_CHUNK_BYTES = 256 * 2**20


def _chunk_size(profile: Profile) -> int:
    h, w, t = profile.layer_shapes()["conv1"]
    per = 8 * profile.channels * h * w * t * int(np.prod(profile.k1))
    return max(1, _CHUNK_BYTES // per)


def _subnet_batch(x, sp: SubnetParams, profile: Profile):
    """Forward a batch ``(n, channels, h, w, m)``; returns ``(outputs, cache)``."""
    win1 = _windows(x, profile.k1, (2, 3, 4))  # (n, C, H1, W1, T1, i, j, k)
    # each first-layer kernel sees every channel; responses are summed
    pre1 = _einsum("nchwtijk,acijk->nahwt", win1, sp.k1)
    v1 = np.tanh(pre1 + sp.b1[:, None, None, None])
    p1, arg1 = _pool(v1, profile.pool1, (2, 3))
    # every first-layer map set gets c2 kernels of its own
    win2 = _windows(p1, profile.k2, (2, 3, 4))  # (n, c1, H2, W2, T2, i, j, k)
    pre2 = _einsum("nahwtijk,abijk->nabhwt", win2, sp.k2)
    v2 = np.tanh(pre2 + sp.b2[:, :, None, None, None])
    p2, arg2 = _pool(v2, profile.pool2, (3, 4))
    # 2D kernels per map set, applied to each temporal slice
    win3 = _windows(p2, profile.k3, (3, 4))  # (n, c1, c2, H3, W3, T, i, j)
    pre3 = _einsum("nabhwtij,abcij->nabcthw", win3, sp.k3)
    v3 = np.tanh(pre3 + sp.b3[:, :, :, None, None, None])
    return v3.reshape(len(x), -1), SubnetCache(win1, v1, arg1, win2, v2, arg2, win3, v3)


def _subnet_batch_backward(grad, cache: SubnetCache, sp: SubnetParams, profile: Profile):
    p = profile
    v3 = cache.v3
    d3 = grad.reshape(v3.shape) * (1.0 - v3**2)  # (n, a, b, c, t, h, w)
    gk3 = _einsum("nabhwtij,nabcthw->abcij", cache.win3, d3)
    gb3 = d3.sum(axis=(0, 4, 5, 6))
    # input gradients are full correlations with the flipped kernels
    d3p = np.pad(d3, [(0, 0)] * 5 + [(s - 1, s - 1) for s in p.k3])
    w3 = _windows(d3p, p.k3, (5, 6))
    gp2 = _einsum("nabcthwij,abcij->nabhwt", w3, sp.k3[:, :, :, ::-1, ::-1])

    gv2 = _unpool(gp2, cache.arg2, cache.v2.shape, p.pool2, (3, 4))
    d2 = gv2 * (1.0 - cache.v2**2)  # (n, a, b, h, w, t)
    gk2 = _einsum("nahwtijk,nabhwt->abijk", cache.win2, d2)
    gb2 = d2.sum(axis=(0, 3, 4, 5))
    d2p = np.pad(d2, [(0, 0)] * 3 + [(s - 1, s - 1) for s in p.k2])
    w2 = _windows(d2p, p.k2, (3, 4, 5))
    gp1 = _einsum("nabhwtijk,abijk->nahwt", w2, sp.k2[:, :, ::-1, ::-1, ::-1])

    gv1 = _unpool(gp1, cache.arg1, cache.v1.shape, p.pool1, (2, 3))
    d1 = gv1 * (1.0 - cache.v1**2)  # (n, a, h, w, t)
    gk1 = _einsum("nchwtijk,nahwt->acijk", cache.win1, d1)
    gb1 = d1.sum(axis=(0, 2, 3, 4))
    return SubnetParams(gk1, gb1, gk2, gb2, gk3, gb3)


def _check_segment(x, profile):
    want = (profile.channels, profile.height, profile.width, profile.m)
    if x.shape[-4:] != want or x.ndim not in (4, 5):
        raise ShapeError(f"sub-network input must be {want} (optionally batched), got {x.shape}")


def forward_subnet(x: np.ndarray, sp: SubnetParams, profile: Profile, *, return_cache=False):
    """Feature vector of one segment ``x`` of shape ``(channels, h, w, m)``.

    A leading batch axis is allowed. Output order is set-major (first-layer
    kernel, second-layer kernel), then 2D kernel, then time, then any
    remaining spatial cells. With ``return_cache`` the result is
    ``(output, caches)`` where ``caches`` is a list of per-chunk caches.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_segment(x, profile)
    single = x.ndim == 4
    xb = x[None] if single else x
    step = _chunk_size(profile)
    outs, caches = [], []
    for i in range(0, len(xb), step):
        o, c = _subnet_batch(xb[i:i + step], sp, profile)
        outs.append(o)
        if return_cache:
            caches.append(c)
    out = np.concatenate(outs) if outs else np.zeros((0, profile.subnet_width))
    if single:
        out = out[0]
    return (out, caches) if return_cache else out


def backward_subnet(grad: np.ndarray, caches, sp: SubnetParams, profile: Profile) -> SubnetParams:
    """Parameter gradients summed over the batch, given ``d loss / d output``."""
    if not caches:
        raise MissingCacheError("backward_subnet called without a forward cache")
    g = np.asarray(grad, dtype=np.float64)
    g = g.reshape(-1, profile.subnet_width)
    total, start = None, 0
    for c in caches:
        n = c.v3.shape[0]
        part = _subnet_batch_backward(g[start:start + n], c, sp, profile)
        start += n
        if total is None:
            total = part
        else:
            for name in SubnetParams.ARRAYS:
                getattr(total, name).__iadd__(getattr(part, name))
    if start != len(g):
        raise ShapeError(f"gradient batch {len(g)} does not match cached batch {start}")
    return total


# ---------------------------------------------------------------------------
# whole network


forward_count = 0  # assignment-level feature evaluations, for tests and logs
_count_lock = threading.Lock()


def _count(n):
    global forward_count
    with _count_lock:
        forward_count += n


class ForwardCache(NamedTuple):
    subnets: list  # per sub-network list of chunk caches
    concat: np.ndarray  # (n, M*D)
    dropped: np.ndarray
    scale: np.ndarray  # dropout masks (train) or the keep factor (eval)
    feature: np.ndarray  # (n, F)


def segment_tensor(sample, h: LatentAssignment, j: int, profile: Profile) -> np.ndarray:
    """Frames of segment ``j`` (1-based) laid out as ``(channels, h, w, m)``."""
    anchors = sample_anchor_frames(sample.frame_count, profile.A)
    idx = sample_segment_frames(h, j, anchors, profile.m)
    return np.ascontiguousarray(sample.pixels[idx].transpose(1, 2, 3, 0))


def _check_assignment(h: LatentAssignment, profile: Profile):
    if not h.is_valid(profile.segmentation):
        raise ValueError(f"assignment {h} invalid for {profile.segmentation}")


def _check_sample(sample, profile):
    if sample.channels != profile.channels:
        raise ShapeError(f"sample has {sample.channels} channels, profile wants {profile.channels}")
    if (sample.height, sample.width) != (profile.height, profile.width):
        raise ShapeError(f"frames are {sample.height}x{sample.width}, profile wants "
                         f"{profile.height}x{profile.width}")


def _dropout_scale(n_rows, width, rate, mode, seeds):
    if mode == "train":
        return np.stack([dropout_mask(width, rate, s) for s in seeds])
    if mode == "eval":
        return np.full((n_rows, width), 1.0 - rate)
    raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


def forward_batch(samples, latents, params: ModelParams, mode: str = "eval", seeds=None):
    """Features for ``samples[i]`` under ``latents[i]``; returns ``(features, cache)``.

    Row ``i`` equals ``forward_full(samples[i], latents[i], params, mode, seeds[i])``.
    """
    profile = params.profile
    n = len(samples)
    if mode == "train" and (seeds is None or len(seeds) != n):
        raise ValueError("train mode needs one dropout seed per sample")
    for s, h in zip(samples, latents):
        _check_sample(s, profile)
        _check_assignment(h, profile)
    outs, caches = [], []
    for j in range(1, profile.M + 1):
        x = np.stack([segment_tensor(s, h, j, profile) for s, h in zip(samples, latents)])
        o, c = forward_subnet(x, params.subnets[j - 1], profile, return_cache=True)
        outs.append(o)
        caches.append(c)
    concat = np.concatenate(outs, axis=1)
    scale = _dropout_scale(n, concat.shape[1], profile.dropout, mode, seeds)
    dropped = concat * scale
    feature = np.tanh(dropped @ params.fc_w.T + params.fc_b)
    _count(n)
    return feature, ForwardCache(caches, concat, dropped, scale, feature)


def forward_full(sample, h: LatentAssignment, params: ModelParams, mode: str = "eval",
                 seed=None, *, return_cache: bool = False):
    """Feature vector of ``sample`` under latent decomposition ``h``.

    In ``train`` mode a dropout mask drawn from ``seed`` is applied to the
    concatenated sub-network outputs; in ``eval`` mode they are scaled by the
    keep probability instead.
    """
    seeds = [seed if seed is not None else 0]
    feature, cache = forward_batch([sample], [h], params, mode, seeds)
    if return_cache:
        return feature[0], cache
    return feature[0]


def backward_batch(grad_features: np.ndarray, cache: ForwardCache, params: ModelParams) -> ModelParams:
    """Network gradients summed over the batch; classifier entries are zero."""
    if cache is None or not cache.subnets:
        raise MissingCacheError("backward needs the cache from a forward pass")
    profile = params.profile
    g = np.asarray(grad_features, dtype=np.float64).reshape(cache.feature.shape)
    d = g * (1.0 - cache.feature**2)  # (n, F)
    g_fc_w = d.T @ cache.dropped
    g_fc_b = d.sum(axis=0)
    g_concat = (d @ params.fc_w) * cache.scale
    D = profile.subnet_width
    subs = [backward_subnet(g_concat[:, j * D:(j + 1) * D], c, sp, profile)
            for j, (sp, c) in enumerate(zip(params.subnets, cache.subnets))]
    return ModelParams(profile, subs, g_fc_w, g_fc_b,
                       np.zeros_like(params.cls_w), np.zeros_like(params.cls_b))


def backward_full(grad_feature: np.ndarray, cache: ForwardCache, params: ModelParams) -> ModelParams:
    """Gradients of every network parameter for one sample; classifier entries are zero."""
    return backward_batch(np.atleast_2d(grad_feature), cache, params)


def assignment_features(sample, assignments, params: ModelParams) -> np.ndarray:
    """Eval-mode features for every decomposition in ``assignments``, shape ``(H, F)``.

    Row ``k`` equals ``forward_full(sample, assignments[k], params)``; each
    distinct segment is pushed through its sub-network once.
    """
    profile = params.profile
    _check_sample(sample, profile)
    for h in assignments:
        _check_assignment(h, profile)
    parts = []
    for j in range(1, profile.M + 1):
        keys = sorted({(h.starts[j - 1], h.lengths[j - 1]) for h in assignments})
        pos = {k: i for i, k in enumerate(keys)}
        rep = {(h.starts[j - 1], h.lengths[j - 1]): h for h in assignments}
        x = np.stack([segment_tensor(sample, rep[k], j, profile) for k in keys])
        out = forward_subnet(x, params.subnets[j - 1], profile)
        parts.append(out[[pos[(h.starts[j - 1], h.lengths[j - 1])] for h in assignments]])
    concat = np.concatenate(parts, axis=1) * (1.0 - profile.dropout)
    _count(len(assignments))
    return np.tanh(concat @ params.fc_w.T + params.fc_b)


def score(feature: np.ndarray, cls_w: np.ndarray, cls_b: np.ndarray):
    """Per-class scores ``w_c . z + b_c`` and the argmax (lowest index on ties)."""
    s = cls_w @ feature + cls_b
    return s, int(np.argmax(s))


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"LSNM"
CKPT_VERSION = 1
_PROFILE_INTS = ("height", "width", "m", "A", "M", "L_min", "c1", "c2", "c3",
                 "k1", "k2", "k3", "pool1", "pool2", "fc_width", "channels")


class CheckpointError(ValueError):
    pass


def _profile_ints(p: Profile) -> list[int]:
    out = []
    for name in _PROFILE_INTS:
        v = getattr(p, name)
        out.extend(v if isinstance(v, tuple) else (v,))
    return out


_N_PROFILE_INTS = len(_profile_ints(PAPER))


def param_count(profile: Profile, n_classes: int) -> int:
    """Number of scalars in a :class:`ModelParams` for ``profile``."""
    p = profile
    c12 = p.c1 * p.c2
    sub = (p.c1 * p.channels * int(np.prod(p.k1)) + p.c1 + c12 * int(np.prod(p.k2)) + c12
           + c12 * p.c3 * int(np.prod(p.k3)) + c12 * p.c3)
    F = p.fc_width
    return p.M * sub + F * p.concat_width + F + n_classes * (F + 1)


def save_checkpoint(path, params: ModelParams) -> None:
    p = params.profile
    name = p.name.encode("utf-8")
    ints = _profile_ints(p)
    buf = [CKPT_MAGIC, struct.pack("<I", CKPT_VERSION), struct.pack("<I", len(name)), name,
           struct.pack(f"<{len(ints)}I", *ints), struct.pack("<d", p.dropout),
           struct.pack("<I", params.n_classes)]
    for a in params.arrays():
        buf.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(buf))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        if buf[:4] != CKPT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        version, nlen = struct.unpack_from("<II", buf, 4)
        if version != CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        off = 12
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        n_ints = _N_PROFILE_INTS
        ints = list(struct.unpack_from(f"<{n_ints}I", buf, off))
        off += 4 * n_ints
        (dropout,) = struct.unpack_from("<d", buf, off)
        off += 8
        (n_classes,) = struct.unpack_from("<I", buf, off)
        off += 4
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt header ({e})") from None
    kw, it = {}, iter(ints)
    for fname in _PROFILE_INTS:
        if fname in ("k1", "k2"):
            kw[fname] = (next(it), next(it), next(it))
        elif fname in ("k3", "pool1", "pool2"):
            kw[fname] = (next(it), next(it))
        else:
            kw[fname] = next(it)
    try:
        profile = Profile(name=name, dropout=dropout, **kw)
        profile.layer_shapes()
        if not 0.0 <= dropout < 1.0 or n_classes < 1:
            raise ValueError("bad dropout rate or class count")
    except ValueError as e:
        raise CheckpointError(f"{path}: invalid architecture in header ({e})") from None
    if 8 * param_count(profile, n_classes) != len(buf) - off:
        raise CheckpointError(f"{path}: payload is {len(buf) - off} bytes, header implies "
                              f"{8 * param_count(profile, n_classes)}")
    template = init_params(profile, n_classes, 0)
    arrays = []
    for a in template.arrays():
        nbytes = 8 * a.size
        if off + nbytes > len(buf):
            raise CheckpointError(f"{path}: parameter payload truncated")
        arrays.append(np.frombuffer(buf, "<f8", a.size, off).astype(np.float64).reshape(a.shape))
        off += nbytes
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    it = iter(arrays)
    return template.map(lambda _: next(it))
