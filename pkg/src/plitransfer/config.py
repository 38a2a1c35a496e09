"""Run configuration: one JSON document describing data, network, training and transfer.

Every default matches the base model (two hidden layers of 24, momentum SGD
with mu = 0.9 and eta = 0.01, Xavier initialisation). All random streams derive
from the single top-level ``seed`` so that ``--seed`` overrides everything.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .data import SynthConfig
from .errors import ConfigError
from .nn import derive_seed
from .optim import INIT_KINDS
from .training import TrainConfig

OUTPUT_ENV = "PLITRANSFER_OUTPUT_DIR"


@dataclass(frozen=True)
class CsvSource:
    """Paths to real data. ``target_eval_csv`` is optional held-out target rows."""

    source_csv: str
    source_schema: str
    target_csv: str
    target_schema: str
    target_eval_csv: str | None = None


@dataclass(frozen=True)
class NetworkConfig:
    hidden_sizes: tuple = (24, 24)
    init: str = "xavier"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be a non-empty list of positive widths, got {self.hidden_sizes}")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"unknown init {self.init!r}; expected one of {INIT_KINDS}")


@dataclass(frozen=True)
class TransferConfig:
    enabled: bool = True
    head_init: str = "random"
    epochs: int = 1000

    def __post_init__(self):
        if self.head_init not in INIT_KINDS:
            raise ConfigError(f"unknown head_init {self.head_init!r}")
        if self.epochs < 1:
            raise ConfigError("transfer epochs must be >= 1")


@dataclass(frozen=True)
class RunSeeds:
    """Independent seeds for one replicate, all derived from the run seed."""

    data: int
    split: int
    init: int
    train: int
    head: int
    scratch: int
    forest: int


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig | None = field(default_factory=SynthConfig)
    csv: CsvSource | None = None
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    test_fraction: float = 0.2
    seed: int = 0
    replicates: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if (self.synth is None) == (self.csv is None):
            raise ConfigError("exactly one data source (synth or csv) must be configured")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")

    def seeds(self, replicate=0):
        run = derive_seed(self.seed, replicate)
        return RunSeeds(*(derive_seed(run, k) for k in range(7)))

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        d = {
            "seed": self.seed,
            "replicates": self.replicates,
            "test_fraction": self.test_fraction,
            "output_dir": self.output_dir,
            "network": {"hidden_sizes": list(self.network.hidden_sizes), "init": self.network.init},
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "transfer": asdict(self.transfer),
        }
        if self.synth is not None:
            d["synth"] = {k: v for k, v in self.synth.to_dict().items() if k != "seed"}
        else:
            d["csv"] = asdict(self.csv)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"synth", "csv", "network", "train", "transfer", "test_fraction", "seed", "replicates", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: d[k] for k in ("test_fraction", "seed", "replicates", "output_dir") if k in d}
        try:
            if "csv" in d:
                if "synth" in d:
                    raise ConfigError("exactly one data source (synth or csv) must be configured")
                kw["csv"] = CsvSource(**d["csv"])
                kw["synth"] = None
            elif "synth" in d:
                kw["synth"] = _synth(d["synth"])
            if "network" in d:
                kw["network"] = NetworkConfig(**d["network"])
            if "train" in d:
                if "seed" in d["train"]:
                    raise ConfigError("train.seed is not configurable; set the top-level seed")
                kw["train"] = TrainConfig.from_dict(d["train"])
            if "transfer" in d:
                kw["transfer"] = TransferConfig(**d["transfer"])
        except TypeError as exc:
            raise ConfigError(f"malformed config section: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(doc)


def _synth(d):
    if "seed" in d:
        raise ConfigError("synth.seed is not configurable; set the top-level seed")
    return SynthConfig.from_dict(d)
