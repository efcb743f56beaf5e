"""The ``STAV`` binary video container.

Layout, all integers little-endian ``u32``::

    b"STAV" | version | width | height | frame_count | channels | label
    | id_len | id bytes (utf-8) | pixels (float64, frame-major, plane per channel)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"STAV"
VERSION = 1
_HEADER = struct.Struct("<4s7I")
MAX_ID_LEN = 4096


class VideoFormatError(ValueError):
    """Base class for malformed STAV files."""


class BadMagicError(VideoFormatError):
    pass


class UnsupportedVersionError(VideoFormatError):
    pass


class TruncatedVideoError(VideoFormatError):
    pass


class BadHeaderError(VideoFormatError):
    pass


class PixelRangeError(VideoFormatError):
    pass


@dataclass(eq=False)
class VideoSample:
    """A gray (+ depth) frame sequence with its class label.

    ``pixels`` has shape ``(frame_count, channels, height, width)``.
    """

    pixels: np.ndarray
    label: int = 0
    id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 4:
            raise ValueError(f"pixels must be (frames, channels, h, w), got {self.pixels.shape}")

    @property
    def frame_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[3]

    def __eq__(self, other):
        if not isinstance(other, VideoSample):
            return NotImplemented
        return (
            self.label == other.label
            and self.id == other.id
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )


def encode_video(sample: VideoSample) -> bytes:
    px = sample.pixels
    if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
        raise PixelRangeError("pixel values must lie in [0, 1]")
    ident = sample.id.encode("utf-8")
    header = _HEADER.pack(
        MAGIC, VERSION, sample.width, sample.height, sample.frame_count,
        sample.channels, sample.label, len(ident),
    )
    return header + ident + px.astype("<f8").tobytes()


def decode_video(buf: bytes) -> VideoSample:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("not a STAV file (bad magic)")
    if len(buf) < _HEADER.size:
        raise TruncatedVideoError(f"header truncated: {len(buf)} < {_HEADER.size} bytes")
    _, version, width, height, frames, channels, label, id_len = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported STAV version {version}")
    if min(width, height, frames) < 1 or channels not in (1, 2):
        raise BadHeaderError(
            f"invalid extents w={width} h={height} frames={frames} channels={channels}"
        )
    if id_len > MAX_ID_LEN:
        raise BadHeaderError(f"id length {id_len} exceeds {MAX_ID_LEN}")
    off = _HEADER.size
    if len(buf) < off + id_len:
        raise TruncatedVideoError("id truncated")
    try:
        ident = buf[off:off + id_len].decode("utf-8")
    except UnicodeDecodeError as e:
        raise BadHeaderError(f"id is not utf-8: {e}") from None
    off += id_len
    n = frames * channels * height * width
    need = off + 8 * n
    if len(buf) < need:
        raise TruncatedVideoError(f"payload truncated: have {len(buf) - off} of {8 * n} bytes")
    if len(buf) > need:
        raise BadHeaderError(f"{len(buf) - need} trailing bytes after payload")
    px = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
    if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
        raise PixelRangeError("pixel values outside [0, 1]")
    return VideoSample(px.reshape(frames, channels, height, width), label=label, id=ident)


def write_video(path, sample: VideoSample) -> None:
    Path(path).write_bytes(encode_video(sample))


def read_video(path) -> VideoSample:
    return decode_video(Path(path).read_bytes())
