"""Experiment configuration: JSON schema, defaults, dotted-key overrides.

A config file is a JSON document with sections {dataset|oracle, network,
training, acquisition, loop, output}. Unknown keys anywhere are rejected.
"""

import json
from dataclasses import dataclass, fields

from . import nn_core
from .acquisition import PROPORTIONAL, TOP_K, Strategy
from .errors import ConfigurationError


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple = (64, 64)
    activation_slope: float = 0.1
    dropout: float = 0.1


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    target: str
    exclude: tuple = ()
    fractions: tuple = (0.10, 0.05, 0.05, 0.80)


@dataclass(frozen=True)
class OracleConfig:
    name: str
    noise_sigma: float = 0.0
    train: int = 50
    val: int = 50
    test: int = 500
    pool: int = 2000


@dataclass(frozen=True)
class TrainingSection:
    """Training hyperparameters as configured; seed is injected per run."""

    lr_initial: float = 1e-3
    lr_decay: float = 0.97
    lr_step_epochs: int = 50_000
    lr_floor: float = 1e-5
    l2: float = 1e-4
    batch_size: int = 200
    dropout_train: float = 0.1
    epochs_mandatory: int = 10_000
    epochs_max: int = 1_000_000
    es_check_step: int = 100
    es_window_frac: float = 0.01
    warnings_max: int = 3
    warm_start: bool = True

    def to_train_config(self, seed: int) -> nn_core.TrainConfig:
        return nn_core.TrainConfig(
            lr_initial=self.lr_initial,
            lr_decay=self.lr_decay,
            lr_step_epochs=self.lr_step_epochs,
            lr_floor=self.lr_floor,
            l2=self.l2,
            batch_size=self.batch_size,
            dropout_train=self.dropout_train,
            epochs_mandatory=self.epochs_mandatory,
            epochs_max=self.epochs_max,
            es_check_step=self.es_check_step,
            es_window_frac=self.es_window_frac,
            warnings_max=self.warnings_max,
            seed=seed,
        )


@dataclass(frozen=True)
class AcquisitionConfig:
    strategies: tuple = (Strategy.RANDOM, Strategy.NNGP)
    batch_size: int = 200
    passes: int = 64
    dropout: float | None = None  # None: reuse the network dropout rate
    ridge: float | None = None
    anchor_size: int = 500
    steps: int = 1
    selection: str = TOP_K
    rank_one: bool = True


@dataclass(frozen=True)
class LoopConfig:
    n_iter: int = 16
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class OutputConfig:
    name: str = "experiment"
    record_timings: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig
    training: TrainingSection
    acquisition: AcquisitionConfig
    loop: LoopConfig
    output: OutputConfig
    dataset: DatasetConfig | None = None
    oracle: OracleConfig | None = None

    def __post_init__(self):
        if (self.dataset is None) == (self.oracle is None):
            raise ConfigurationError("config needs exactly one of 'dataset' or 'oracle'")

    def to_dict(self) -> dict:
        out = {
            "network": _section_dict(self.network),
            "training": _section_dict(self.training),
            "acquisition": _section_dict(self.acquisition),
            "loop": _section_dict(self.loop),
            "output": _section_dict(self.output),
        }
        if self.dataset is not None:
            out["dataset"] = _section_dict(self.dataset)
        if self.oracle is not None:
            out["oracle"] = _section_dict(self.oracle)
        return out


@dataclass(frozen=True)
class RunConfig:
    """One executable unit: an experiment pinned to a strategy and seed."""

    experiment: ExperimentConfig
    strategy: Strategy
    seed: int

    def to_dict(self) -> dict:
        return {**self.experiment.to_dict(), "strategy": self.strategy.value,
                "seed": int(self.seed)}


def _section_dict(section) -> dict:
    out = {}
    for f in fields(section):
        value = getattr(section, f.name)
        if isinstance(value, tuple):
            value = [v.value if isinstance(v, Strategy) else v for v in value]
        if isinstance(value, Strategy):
            value = value.value
        out[f.name] = value
    return out


def _build(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as err:
        raise ConfigurationError(f"invalid '{section}' section: {err}") from None


_INT_KEYS = {
    "training": ("lr_step_epochs", "batch_size", "epochs_mandatory", "epochs_max",
                 "es_check_step", "warnings_max"),
    "acquisition": ("batch_size", "passes", "anchor_size", "steps"),
    "loop": ("n_iter",),
    "oracle": ("train", "val", "test", "pool"),
}


def _coerce(section: str, data: dict) -> dict:
    data = dict(data)
    for key in _INT_KEYS.get(section, ()):
        if key in data:
            data[key] = int(data[key])
    return data


def parse_config(raw: dict) -> ExperimentConfig:
    known_sections = {"dataset", "oracle", "network", "training", "acquisition",
                      "loop", "output"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")

    dataset = oracle = None
    if "dataset" in raw:
        data = _coerce("dataset", raw["dataset"])
        if "exclude" in data:
            data["exclude"] = tuple(data["exclude"])
        if "fractions" in data:
            data["fractions"] = tuple(float(f) for f in data["fractions"])
        dataset = _build(DatasetConfig, data, "dataset")
    if "oracle" in raw:
        oracle = _build(OracleConfig, _coerce("oracle", raw["oracle"]), "oracle")

    net_data = _coerce("network", raw.get("network", {}))
    if "hidden" in net_data:
        net_data["hidden"] = tuple(int(h) for h in net_data["hidden"])
    network = _build(NetworkConfig, net_data, "network")

    training = _build(TrainingSection, _coerce("training", raw.get("training", {})), "training")

    acq_data = _coerce("acquisition", raw.get("acquisition", {}))
    if "strategies" in acq_data:
        try:
            acq_data["strategies"] = tuple(Strategy(s) for s in acq_data["strategies"])
        except ValueError as err:
            raise ConfigurationError(f"unknown strategy: {err}") from None
    if acq_data.get("selection") not in (None, TOP_K, PROPORTIONAL):
        raise ConfigurationError(f"unknown selection mode {acq_data['selection']!r}")
    acq = _build(AcquisitionConfig, acq_data, "acquisition")

    loop_data = _coerce("loop", raw.get("loop", {}))
    if "seeds" in loop_data:
        loop_data["seeds"] = tuple(int(s) for s in loop_data["seeds"])
    loop = _build(LoopConfig, loop_data, "loop")

    output = _build(OutputConfig, raw.get("output", {}), "output")

    return ExperimentConfig(
        network=network, training=training, acquisition=acq, loop=loop,
        output=output, dataset=dataset, oracle=oracle,
    )


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply repeatable --set key.path=value pairs; values parse as JSON with
    a bare-string fallback."""
    raw = json.loads(json.dumps(raw))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        key_path, _, value_text = item.partition("=")
        try:
            value = json.loads(value_text)
        except json.JSONDecodeError:
            value = value_text
        node = raw
        parts = key_path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path {key_path!r} crosses a non-section value")
        node[parts[-1]] = value
    return raw


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path}:{err.lineno}: {err.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top-level JSON value must be an object")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_config(raw)
