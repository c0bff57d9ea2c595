"""Run configuration: one flat, typed key-value file drives every command.

Format: ``section.key = value`` lines, ``#`` comments, blank lines ignored.
Unknown keys are errors (fail fast beats silently ignored typos). Missing
keys take the documented defaults. `save_config` always writes every key, so
a saved file reloads to an identical configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import SyntheticConfig
from .encoder import AdapterConfig, EncoderConfig
from .exceptions import InvalidArgumentError
from .losses import LossWeights
from .model import ModelConfig
from .polar import PolarGrid


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    mode: str = "scratch"  # peft | full | scratch
    epochs: int = 40
    batch_size: int = 8
    learning_rate: float = 1e-3  # scratch desk-scale rate; the fullscale preset uses 1e-4
    split_ratio: float = 0.8
    margin: float = 1.5
    use_polar: bool = True
    dataset_root: str = ""
    out_dir: str = ""
    loss: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: PolarGrid = field(default_factory=PolarGrid)
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        if self.mode not in ("peft", "full", "scratch"):
            raise InvalidArgumentError(f"mode must be peft|full|scratch, got {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if not 0.0 < self.split_ratio < 1.0:
            raise InvalidArgumentError("split_ratio must lie in (0, 1)")


# (flat prefix, RunConfig attribute path) pairs for the nested sections
_SECTIONS = [
    ("run", ()),
    ("loss", ("loss",)),
    ("encoder", ("model", "encoder")),
    ("adapter", ("model", "adapter")),
    ("spatial", ("model", "spatial")),
    ("channel", ("model", "channel")),
    ("model", ("model",)),
    ("grid", ("grid",)),
    ("synth", ("synth",)),
]

# model-section keys are only the ones not covered by their own section
_MODEL_KEYS = ("use_adapter", "use_cbam", "decoder_depth", "decoder_heads", "decoder_mlp_ratio")
_RUN_KEYS = ("seed", "mode", "epochs", "batch_size", "learning_rate", "split_ratio",
             "margin", "use_polar", "dataset_root", "out_dir")


def _leaf_obj(cfg: RunConfig, path: tuple[str, ...]):
    obj = cfg
    for attr in path:
        obj = getattr(obj, attr)
    return obj


def _section_keys(cfg: RunConfig, prefix: str, path: tuple[str, ...]):
    if prefix == "run":
        return _RUN_KEYS
    if prefix == "model":
        return _MODEL_KEYS
    return tuple(f.name for f in fields(_leaf_obj(cfg, path)))


def flatten_config(cfg: RunConfig) -> dict[str, str]:
    """RunConfig -> ordered {dotted key: repr string}."""
    out: dict[str, str] = {}
    for prefix, path in _SECTIONS:
        obj = _leaf_obj(cfg, path)
        for key in _section_keys(cfg, prefix, path):
            out[f"{prefix}.{key}"] = _format_value(getattr(obj, key))
    return out


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(raw: str, example):
    raw = raw.strip()
    if example is None or raw == "none":
        return None if raw == "none" else int(raw)
    if isinstance(example, bool):
        if raw not in ("true", "false"):
            raise InvalidArgumentError(f"expected true/false, got {raw!r}")
        return raw == "true"
    if isinstance(example, int):
        return int(raw)
    if isinstance(example, float):
        return float(raw)
    if isinstance(example, tuple):
        if raw == "":
            return ()
        elem = example[0] if example else 0
        return tuple(_parse_value(part, elem) for part in raw.split(","))
    return raw


def unflatten_config(flat: dict[str, str]) -> RunConfig:
    """{dotted key: string} -> RunConfig; unknown keys raise."""
    defaults = RunConfig()
    known = flatten_config(defaults)
    unknown = sorted(set(flat) - set(known))
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {', '.join(unknown)}")

    values: dict[str, dict] = {prefix: {} for prefix, _ in _SECTIONS}
    for dotted, raw in flat.items():
        prefix, key = dotted.split(".", 1)
        example = _leaf_value(defaults, prefix, key)
        values[prefix][key] = _parse_value(str(raw), example)

    encoder = replace(defaults.model.encoder, **values["encoder"])
    adapter = replace(defaults.model.adapter, **values["adapter"])
    spatial = replace(defaults.model.spatial, **values["spatial"])
    channel = replace(defaults.model.channel, **values["channel"])
    model = replace(defaults.model, encoder=encoder, adapter=adapter,
                    spatial=spatial, channel=channel, **values["model"])
    return RunConfig(model=model,
                     loss=replace(defaults.loss, **values["loss"]),
                     grid=replace(defaults.grid, **values["grid"]),
                     synth=replace(defaults.synth, **values["synth"]),
                     **values["run"])


def _leaf_value(cfg: RunConfig, prefix: str, key: str):
    for pfx, path in _SECTIONS:
        if pfx == prefix:
            return getattr(_leaf_obj(cfg, path), key)
    raise InvalidArgumentError(f"unknown config section {prefix!r}")


def save_config(cfg: RunConfig, path):
    lines = ["# polarseg run configuration"]
    last_prefix = None
    for dotted, value in flatten_config(cfg).items():
        prefix = dotted.split(".", 1)[0]
        if prefix != last_prefix:
            lines.append("")
            last_prefix = prefix
        lines.append(f"{dotted} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path) -> RunConfig:
    flat: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in flat:
            raise InvalidArgumentError(f"{path}:{lineno}: duplicate key {key!r}")
        flat[key] = value.strip()
    return unflatten_config(flat)


def preset(name: str) -> RunConfig:
    """Named configurations: desk (default), fullscale (documented protocol), tiny (tests)."""
    if name == "desk":
        return RunConfig()
    if name == "fullscale":
        # the documented full-scale protocol; not trainable at desk scale
        return RunConfig(
            epochs=150, batch_size=32, learning_rate=1e-4, mode="peft",
            model=replace(RunConfig().model,
                          encoder=EncoderConfig(image_size=1024, patch_size=16, embed_dim=768,
                                                depth=16, num_heads=12, window_size=14,
                                                global_block_indices=(3, 7, 11, 15),
                                                mlp_ratio=4.0, neck_dim=256),
                          adapter=AdapterConfig(bottleneck_ratio=0.0625)))
    if name == "tiny":
        return RunConfig(
            epochs=3, batch_size=4, learning_rate=1e-3,
            model=replace(RunConfig().model,
                          encoder=EncoderConfig(image_size=64, patch_size=8, embed_dim=48,
                                                depth=4, num_heads=4, window_size=4,
                                                global_block_indices=(3,), mlp_ratio=2.0,
                                                neck_dim=32)),
            grid=PolarGrid(num_radii=128, num_angles=128),
            synth=SyntheticConfig(image_size=64, disc_axis_range=(10.0, 16.0)))
    raise InvalidArgumentError(f"unknown preset {name!r}; choose desk, fullscale, or tiny")
