"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key is typed and
range-checked when the file is parsed, so mistakes surface before any
training starts. Keys not given keep the defaults of the chosen profile
and of :class:`TrainConfig` / :class:`LossConfig`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .radius_margin_loss import LossConfig
from .structured_net import Profile, get_profile
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Unknown key, malformed line or out-of-range value."""


# key -> (section, type); sections: loss, train, profile, data
KEYS = {
    "lam": ("loss", float),
    "eta": ("loss", float),
    "alpha": ("loss", float),
    "variant": ("loss", str),
    "grad_mode": ("loss", str),
    "M": ("profile", int),
    "m": ("profile", int),
    "A": ("profile", int),
    "L_min": ("profile", int),
    "dropout": ("profile", float),
    "lr_classifier": ("train", float),
    "lr_cnn": ("train", float),
    "batch_size": ("train", int),
    "tol": ("train", float),
    "max_outer_iters": ("train", int),
    "inner_epochs": ("train", int),
    "workers": ("train", int),
    "pretrain_epochs": ("train", int),
    "pretrain_lr": ("train", float),
    "n_per_class": ("data", int),
    "n_classes": ("data", int),
    "n_test_per_class": ("data", int),
}


@dataclass
class RunConfig:
    profile: Profile
    train: TrainConfig = field(default_factory=TrainConfig)
    n_per_class: int = 40
    n_classes: int = 2
    n_test_per_class: int = 40

    def items(self) -> list[tuple[str, object]]:
        """Every resolved setting, in a stable order."""
        out = [("profile", self.profile.name)]
        for key, (section, _) in KEYS.items():
            if section == "loss":
                out.append((key, getattr(self.train.loss, key)))
            elif section == "profile":
                out.append((key, getattr(self.profile, key)))
            elif section == "train":
                out.append((key, getattr(self.train, key)))
            else:
                out.append((key, getattr(self, key)))
        return out


def _convert(key, raw, typ):
    if typ is str:
        return raw
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a typed dict (no range checks yet)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, KEYS[key][1])
    return values


def resolve(values: dict, profile: str | Profile = "mini") -> RunConfig:
    """Apply parsed overrides to the defaults; raises ConfigError on bad values."""
    base = get_profile(profile) if isinstance(profile, str) else profile
    by_section: dict[str, dict] = {"loss": {}, "train": {}, "profile": {}, "data": {}}
    for key, value in values.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        by_section[KEYS[key][0]][key] = value
    try:
        prof = base.with_(**by_section["profile"]) if by_section["profile"] else base
        prof.layer_shapes()
        if not prof.segmentation.feasible:
            raise ValueError(f"A={prof.A} cannot hold M={prof.M} segments of at least "
                             f"L_min={prof.L_min}")
        if not 0.0 <= prof.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        loss = LossConfig(**by_section["loss"])
        train = replace(TrainConfig(loss=loss), **by_section["train"])
        if train.workers < 1 or train.pretrain_epochs < 0 or train.pretrain_lr <= 0:
            raise ValueError("workers >= 1, pretrain_epochs >= 0 and pretrain_lr > 0 required")
        data = by_section["data"]
        run = RunConfig(prof, train, **data)
        if run.n_classes < 2 or run.n_per_class < 1 or run.n_test_per_class < 0:
            raise ValueError("need n_classes >= 2, n_per_class >= 1, n_test_per_class >= 0")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return run


def load_config(path=None, profile: str | Profile = "mini") -> RunConfig:
    """Read ``path`` (or nothing) and resolve it against ``profile``."""
    if path is None:
        return resolve({}, profile)
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {p}") from None
    return resolve(parse_config_text(text, str(p)), profile)


def format_config(run: RunConfig) -> str:
    """Resolved configuration in the same ``key = value`` syntax it is read from."""
    return "".join(f"{k} = {v}\n" for k, v in run.items())
