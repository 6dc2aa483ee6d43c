"""Run configuration: presets, a flat key=value file format, manifests.

Every command resolves its settings in one fixed order: field defaults,
then the chosen preset, then values from --config FILE, then individual
command-line flags.  The fully resolved result is what training writes to
``manifest.cfg``, and a manifest is itself a valid --config file, so any
artifact can be rebuilt from the manifest next to it.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .data import DatasetLayout, istd_layout
from .losses import LossWeights
from .model import ModelConfig


@dataclass
class RunConfig:
    preset: str = "custom"
    # dataset location; empty directory fields fall back to the standard
    # <split>_A / _B / _C naming under data_root
    data_root: str = ""
    shadow_dir: str = ""
    mask_dir: str = ""
    free_dir: str = ""
    out_dir: str = "run"
    seed: int = 0
    # training shape
    image_size: int = 256
    batch_size: int = 2
    epochs: int = 300
    lr: float = 2e-4
    limit: int = 0              # 0 = use every triple
    max_steps: int = 0          # 0 = no cap
    checkpoint_every: int = 0
    lambda_percep: float = 10.0
    lambda_grad: float = 100.0
    color_space: str = "lab"    # "rgb" for the no-LAB ablation
    # model switches
    rates: tuple = ((1, 4, 16), (2, 8, 32), (4, 16, 64))
    stage_channels: tuple = (16, 32, 48)
    merge_channels: int = 32
    eca_ratio: int = 4
    eca_mode: str = "laplacian"
    lsa_k: int = 32
    lsa_m: int = 256
    lsa_dilate: int = 7
    lsa_mode: str = "local"
    lsa_downsample: bool = True
    branch_mode: str = "two"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {self.preset!r}; choose from {tuple(PRESETS)}")
        if self.color_space not in ("lab", "rgb"):
            raise ConfigError(
                f"color_space must be 'lab' or 'rgb', got {self.color_space!r}")
        self.model_config()  # surface bad switch values early

    def model_config(self):
        try:
            return ModelConfig(
                rates=self.rates, stage_channels=self.stage_channels,
                merge_channels=self.merge_channels, eca_ratio=self.eca_ratio,
                eca_mode=self.eca_mode, lsa_k=self.lsa_k, lsa_m=self.lsa_m,
                lsa_dilate=self.lsa_dilate, lsa_mode=self.lsa_mode,
                lsa_downsample=self.lsa_downsample,
                branch_mode=self.branch_mode)
        except Exception as exc:
            raise ConfigError(str(exc)) from None

    def loss_weights(self):
        return LossWeights(self.lambda_percep, self.lambda_grad)

    def layout(self, split):
        base = istd_layout(split)
        return DatasetLayout(self.shadow_dir or base.shadow_dir,
                             self.mask_dir or base.mask_dir,
                             self.free_dir or base.free_dir)

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())


# preset values mirror the two published training recipes: square input
# size, batch size, epoch count, and the attention grid cap
PRESETS = {
    "custom": {},
    "istd": {"image_size": 256, "batch_size": 2, "epochs": 300, "lsa_m": 256},
    "srd": {"image_size": 400, "batch_size": 1, "epochs": 500, "lsa_m": 128},
}

_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}

# branch-mode spellings accepted on the command line; each expands to the
# underlying (branch_mode, color_space) pair
BRANCH_ALIASES = {
    "two-branch": ("two", "lab"),
    "lab-together": ("single", "lab"),
    "rgb-together": ("single", "rgb"),
}


def _format_value(v):
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(",".join(str(x) for x in g) for g in v)
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_value(name, text):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    text = text.strip()
    try:
        if name == "rates":
            return tuple(tuple(int(x) for x in group.split(","))
                         for group in text.split(";") if group.strip())
        if name == "stage_channels":
            return tuple(int(x) for x in text.split(","))
        if isinstance(_FIELD_TYPES[name].default, bool):
            if text.lower() in ("true", "on", "1", "yes"):
                return True
            if text.lower() in ("false", "off", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        default = _FIELD_TYPES[name].default
        if isinstance(default, int) and not isinstance(default, bool):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def parse_config_text(text, source="<config>"):
    """Flat key = value lines; '#' starts a comment, blank lines ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        out[key] = _parse_value(key, val)
    return out


def load_config_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def resolve(preset=None, file_values=None, overrides=None):
    """Merge defaults <- preset <- config file <- explicit overrides."""
    values = {}
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    name = (overrides.get("preset") or file_values.get("preset")
            or preset or "custom")
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {tuple(PRESETS)}")
    values.update(PRESETS[name])
    values.update(file_values)
    values.update(overrides)
    values["preset"] = name
    for key in values:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
