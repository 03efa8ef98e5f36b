"""Model configuration: architecture hyper-parameters, presets, and the
line-oriented key=value config file format.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, fields

from .errors import ConfigError

DIV2K_RGB_MEAN = (0.4488, 0.4371, 0.4040)


@dataclass(frozen=True)
class ModelConfig:
    scale: int = 2
    feat_channels: int = 64
    groups: int = 1
    blocks: int = 8
    channel_attention: bool = False
    ca_reduction: int = 16
    group_skip: bool = False
    res_scale: float = 1.0
    rgb_mean: tuple[float, float, float] = DIV2K_RGB_MEAN
    adapter_channels: int = 64

    def validate(self) -> "ModelConfig":
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"unsupported scale {self.scale}; expected 2, 3 or 4")
        for name in ("feat_channels", "groups", "blocks", "adapter_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channel_attention:
            if self.ca_reduction < 1:
                raise ConfigError(f"ca_reduction must be >= 1, got {self.ca_reduction}")
            if self.feat_channels % self.ca_reduction != 0:
                raise ConfigError(
                    f"ca_reduction {self.ca_reduction} must divide feat_channels "
                    f"{self.feat_channels}"
                )
        if len(self.rgb_mean) != 3 or any(not 0.0 <= m <= 1.0 for m in self.rgb_mean):
            raise ConfigError(f"rgb_mean must be 3 reals in [0, 1], got {self.rgb_mean}")
        return self

    def upsample_stages(self) -> tuple[int, ...]:
        """Pixel-shuffle factors of the reconstruction stage; x4 is two x2 stages."""
        return {2: (2,), 3: (3,), 4: (2, 2)}[self.scale]


def edsr_config(scale: int = 2) -> ModelConfig:
    """Wide single-group trunk: 32 blocks, 256 channels, residual scaling 0.1."""
    return ModelConfig(
        scale=scale, feat_channels=256, groups=1, blocks=32,
        channel_attention=False, group_skip=False, res_scale=0.1,
    ).validate()


def rcan_config(scale: int = 2) -> ModelConfig:
    """Grouped attention trunk: 10 groups of 20 blocks, 64 channels, group skips."""
    return ModelConfig(
        scale=scale, feat_channels=64, groups=10, blocks=20,
        channel_attention=True, ca_reduction=16, group_skip=True, res_scale=1.0,
    ).validate()


PRESETS = {"edsr": edsr_config, "rcan": rcan_config, "none": ModelConfig}

_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _parse_bool(v: str) -> bool:
    try:
        return _BOOL_WORDS[v.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {v!r}") from None


def parse_config(text: str) -> ModelConfig:
    """Parse key=value lines. A `preset` key supplies defaults that explicit
    keys override; blank lines and #-comments are ignored."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value

    preset = pairs.pop("preset", "none").lower()
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected edsr, rcan or none")
    cfg = PRESETS[preset]()

    ints = {"scale", "feat_channels", "groups", "blocks", "ca_reduction",
            "adapter_channels"}
    bools = {"channel_attention", "group_skip"}
    updates = {}
    for key, value in pairs.items():
        if key in ints:
            try:
                updates[key] = int(value)
            except ValueError:
                raise ConfigError(f"key {key}: expected an integer, got {value!r}") from None
        elif key in bools:
            updates[key] = _parse_bool(value)
        elif key == "res_scale":
            try:
                updates[key] = float(value)
            except ValueError:
                raise ConfigError(f"res_scale: expected a real, got {value!r}") from None
        elif key == "rgb_mean":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"rgb_mean needs 3 comma-separated reals, got {value!r}")
            try:
                updates[key] = tuple(float(p) for p in parts)
            except ValueError:
                raise ConfigError(f"rgb_mean: bad real in {value!r}") from None
        else:
            known = sorted(f.name for f in fields(ModelConfig)) + ["preset"]
            raise ConfigError(f"unknown config key {key!r}; known keys: {known}")
    return replace(cfg, **updates).validate()


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
