"""Dataset manifests: which video files belong to which class and split.

A manifest is a ``key = value`` text file. ``class`` and ``sample`` lines
repeat; paths are relative to the manifest's directory::

    format = 1
    seed = 7
    generator.noise = 0.03
    class = 0 order-0-1-2
    sample = train 0 videos/train_00000.stav

The synthetic generator also writes ``boundaries.csv`` listing each
sample's planted phase lengths in anchor frames.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .latent_segmentation import LatentAssignment
from .structured_net import Profile
from .synthetic import SyntheticSpec, class_orders, generate_synthetic
from .video_io import VideoSample, read_video, write_video

FORMAT = 1
SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    """Malformed manifest or a reference to a missing/invalid file."""


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    label: int
    path: str  # relative to the manifest directory


@dataclass
class DatasetManifest:
    classes: list[str]
    entries: list[ManifestEntry]
    seed: int | None = None
    params: dict = field(default_factory=dict)
    root: Path = Path(".")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def load(self, split: str) -> list[VideoSample]:
        """Read every video of ``split``; labels come from the manifest."""
        out = []
        for e in self.split(split):
            s = read_video(self.root / e.path)
            if s.label != e.label:
                raise ManifestError(f"{e.path}: file label {s.label} != manifest label {e.label}")
            out.append(s)
        return out


def format_manifest(m: DatasetManifest) -> str:
    lines = ["# structact dataset manifest", f"format = {FORMAT}"]
    if m.seed is not None:
        lines.append(f"seed = {m.seed}")
    lines += [f"{k} = {v}" for k, v in m.params.items()]
    lines += [f"class = {i} {name}" for i, name in enumerate(m.classes)]
    lines += [f"sample = {e.split} {e.label} {e.path}" for e in m.entries]
    return "\n".join(lines) + "\n"


def parse_manifest(text: str, root=".", source="<manifest>") -> DatasetManifest:
    classes: dict[int, str] = {}
    entries, params = [], {}
    seed = None
    seen_format = False
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ManifestError(f"{source}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            if key == "format":
                if int(value) != FORMAT:
                    raise ManifestError(f"{source}:{lineno}: unsupported format {value}")
                seen_format = True
            elif key == "seed":
                seed = int(value)
            elif key == "class":
                idx, name = value.split(maxsplit=1)
                classes[int(idx)] = name
            elif key == "sample":
                split, label, path = value.split(maxsplit=2)
                if split not in SPLITS:
                    raise ManifestError(f"{source}:{lineno}: unknown split {split!r}")
                entries.append(ManifestEntry(split, int(label), path))
            else:
                params[key] = value
        except ValueError as exc:
            if isinstance(exc, ManifestError):
                raise
            raise ManifestError(f"{source}:{lineno}: bad {key} line {value!r}") from None
    if not seen_format:
        raise ManifestError(f"{source}: missing format line")
    if sorted(classes) != list(range(len(classes))):
        raise ManifestError(f"{source}: class indices must be 0..{len(classes) - 1}")
    for e in entries:
        if not 0 <= e.label < len(classes):
            raise ManifestError(f"{source}: label {e.label} of {e.path} outside class range")
    return DatasetManifest([classes[i] for i in range(len(classes))], entries, seed, params,
                           Path(root))


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse ``path``; with ``check_files`` every referenced video must exist and parse."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    m = parse_manifest(path.read_text(), path.parent, str(path))
    if check_files:
        for e in m.entries:
            f = m.root / e.path
            if not f.is_file():
                raise ManifestError(f"{path}: missing video {e.path}")
            s = read_video(f)
            if s.label != e.label:
                raise ManifestError(f"{e.path}: file label {s.label} != manifest label {e.label}")
    return m


def write_synthetic_dataset(out_dir, profile: Profile, seed: int, n_per_class: int,
                            n_classes: int = 2, n_test_per_class: int = 0,
                            spec: SyntheticSpec | None = None) -> DatasetManifest:
    """Generate train (and optional test) videos, a manifest and the boundary sidecar."""
    spec = spec or SyntheticSpec(n_phases=profile.M, channels=profile.channels)
    out = Path(out_dir)
    (out / "videos").mkdir(parents=True, exist_ok=True)
    train_seq, test_seq = np.random.SeedSequence(seed).spawn(2)
    splits = [("train", generate_synthetic(n_per_class, n_classes, profile, train_seq, spec, "train_"))]
    if n_test_per_class:
        splits.append(("test", generate_synthetic(n_test_per_class, n_classes, profile, test_seq,
                                                  spec, "test_")))
    entries, rows = [], []
    for split, samples in splits:
        for s in samples:
            rel = f"videos/{s.id}.stav"
            write_video(out / rel, s)
            entries.append(ManifestEntry(split, s.label, rel))
            h = LatentAssignment.from_lengths(s.meta["lengths"])
            rows.append([s.id, split, s.label, "-".join(map(str, h.lengths)),
                         "-".join(map(str, h.starts))])
    params = {f"generator.{k}": v for k, v in asdict(spec).items()}
    params.update({"generator.profile": profile.name, "generator.n_per_class": n_per_class,
                   "generator.n_test_per_class": n_test_per_class})
    names = ["order-" + "-".join(map(str, o)) for o in class_orders(n_classes, spec.n_phases)]
    manifest = DatasetManifest(names, entries, seed, params, out)
    (out / "manifest.txt").write_text(format_manifest(manifest))
    with open(out / "boundaries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "split", "label", "lengths", "starts"])
        w.writerows(rows)
    return manifest


def read_boundaries(path) -> dict[str, tuple[int, ...]]:
    """Planted phase lengths per sample id from a boundary sidecar."""
    with open(path, newline="") as fh:
        return {r["id"]: tuple(int(v) for v in r["lengths"].split("-")) for r in csv.DictReader(fh)}
