"""Run configuration from key=value files with [model], [train] and [synth]
sections (plus an optional [data] section pointing at JSONL files)."""

import configparser
import dataclasses
import os

from .data import DEFAULT_MAX_WORDS, SyntheticSpec
from .model import ModelConfig
from .training import TrainConfig


@dataclasses.dataclass
class DataPaths:
    train: str
    val: str
    test: str
    max_words: int = DEFAULT_MAX_WORDS
    vocab_cap: int = 0  # 0 means uncapped


@dataclasses.dataclass
class RunConfig:
    model: dict  # ModelConfig kwargs minus the data-dependent dims
    train: TrainConfig
    synth: SyntheticSpec
    data: DataPaths | None = None

    def model_config(self, vocab_size, num_labels):
        return ModelConfig(vocab_size=vocab_size, num_labels=num_labels, **self.model)


def _coerce(cls, section):
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key not in fields:
            raise ValueError(f"unknown key {key!r} in [{section.name}]")
        ftype = fields[key].type
        if ftype in ("int", int):
            kwargs[key] = int(raw)
        elif ftype in ("float", float):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return kwargs


_MODEL_KEYS = ("embed", "enc_hidden", "enc_layers", "dec_hidden", "dec_layers",
               "br_hidden", "br_depth", "dropout")


def load_config(path):
    """Parse a config file; missing sections fall back to defaults."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser()
    parser.read(path)

    model_kwargs = {}
    if parser.has_section("model"):
        for key, raw in parser["model"].items():
            if key not in _MODEL_KEYS:
                raise ValueError(f"unknown key {key!r} in [model]")
            model_kwargs[key] = float(raw) if key == "dropout" else int(raw)

    train_cfg = TrainConfig(**_coerce(TrainConfig, parser["train"])) \
        if parser.has_section("train") else TrainConfig()
    synth_spec = SyntheticSpec(**_coerce(SyntheticSpec, parser["synth"])) \
        if parser.has_section("synth") else SyntheticSpec()

    data = None
    if parser.has_section("data"):
        section = parser["data"]
        data = DataPaths(
            train=section.get("train"),
            val=section.get("val"),
            test=section.get("test"),
            max_words=section.getint("max_words", DEFAULT_MAX_WORDS),
            vocab_cap=section.getint("vocab_cap", 0),
        )
        for name in ("train", "val", "test"):
            if getattr(data, name) is None:
                raise ValueError(f"[data] section must set {name}")
    return RunConfig(model=model_kwargs, train=train_cfg, synth=synth_spec, data=data)


def write_default_config(path):
    """Emit a config file populated with the package defaults."""
    lines = ["[model]"]
    defaults = ModelConfig(vocab_size=1, num_labels=1)
    for key in _MODEL_KEYS:
        lines.append(f"{key} = {getattr(defaults, key)}")
    lines.append("")
    for header, obj in (("[train]", TrainConfig()), ("[synth]", SyntheticSpec())):
        lines.append(header)
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {getattr(obj, f.name)}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
