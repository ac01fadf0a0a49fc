"""Run configuration: INI file with fixed sections, overridable from the command line."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields
from pathlib import Path

from .data import LOADERS
from .model import ModelSpec, SplineConfig
from .training import TrainConfig
from .variational import PriorSpec


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # [data]
    dataset: str = "pima"
    data: str = ""
    test_fraction: float = 0.2
    # [model]
    preset: str = "bkan"
    hidden: str = "auto"
    grid_size: int = 5
    degree: int = 3
    domain_min: float = -2.0
    domain_max: float = 2.0
    prior_mu: float = 0.0
    prior_sigma: float = 1.0
    # [training]
    learning_rate: float = 0.001
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    mc_train_samples: int = 1
    kl_scale_rule: str = "per-example"
    validation_fraction: float = 0.1
    min_delta: float = 1e-5
    sigma_init: float = 0.05
    # [evaluation]
    mc_samples: int = 100
    bootstrap: int = 1000
    ci_level: float = 0.95
    # [run]
    seed: int = 1
    seeds: str = "1,2,3,4,5"
    out: str = "runs"

    # section membership, in file order
    SECTIONS = {
        "data": ("dataset", "data", "test_fraction"),
        "model": ("preset", "hidden", "grid_size", "degree", "domain_min", "domain_max", "prior_mu", "prior_sigma"),
        "training": ("learning_rate", "max_epochs", "patience", "batch_size", "mc_train_samples",
                     "kl_scale_rule", "validation_fraction", "min_delta", "sigma_init"),
        "evaluation": ("mc_samples", "bootstrap", "ci_level"),
        "run": ("seed", "seeds", "out"),
    }

    def set(self, key: str, raw) -> None:
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind = {"int": int, "float": float, "str": str}[types[key]]
        try:
            value = kind(raw) if kind is not int else int(str(raw), 10)
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a valid {types[key]}") from None
        setattr(self, key, value)

    # derived objects ------------------------------------------------------

    @property
    def seed_list(self) -> list[int]:
        try:
            seeds = [int(s) for s in self.seeds.replace(" ", "").split(",") if s]
        except ValueError:
            raise ConfigError(f"seeds must be a comma-separated list of integers, got {self.seeds!r}") from None
        if not seeds:
            raise ConfigError("at least one seed is required")
        return seeds

    def hidden_widths(self) -> list[int] | None:
        if self.hidden.strip().lower() == "auto":
            return None
        try:
            widths = [int(w) for w in self.hidden.split(",") if w.strip()]
        except ValueError:
            raise ConfigError(f"hidden must be 'auto' or comma-separated integers, got {self.hidden!r}") from None
        return widths

    def model_spec(self, input_dim: int) -> ModelSpec:
        try:
            spline = SplineConfig(self.grid_size, self.degree, (self.domain_min, self.domain_max))
            prior = PriorSpec(self.prior_mu, self.prior_sigma)
            hidden = self.hidden_widths()
            if self.preset == "bkan":
                return ModelSpec.bkan(input_dim, hidden, spline, prior)
            return ModelSpec.bayes_mlp(input_dim, hidden, spline=spline, prior=prior)
        except ValueError as exc:
            raise ConfigError(f"invalid model configuration: {exc}") from exc

    def train_config(self, seed: int | None = None) -> TrainConfig:
        try:
            return TrainConfig(
                learning_rate=self.learning_rate,
                max_epochs=self.max_epochs,
                patience=self.patience,
                batch_size=self.batch_size,
                mc_train_samples=self.mc_train_samples,
                kl_scale_rule=self.kl_scale_rule,
                seed=self.seed if seed is None else seed,
                validation_fraction=self.validation_fraction,
                min_delta=self.min_delta,
                sigma_init=self.sigma_init,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid training configuration: {exc}") from exc

    def validate(self, need_data: bool = True) -> None:
        if self.dataset not in LOADERS:
            raise ConfigError(f"dataset must be one of {sorted(LOADERS)}, got {self.dataset!r}")
        if self.preset not in ("bkan", "bayes-mlp"):
            raise ConfigError(f"preset must be 'bkan' or 'bayes-mlp', got {self.preset!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.mc_samples < 1 or self.bootstrap < 1:
            raise ConfigError("mc_samples and bootstrap must be positive")
        if not 0.0 < self.ci_level <= 1.0:
            raise ConfigError("ci_level must lie in (0, 1]")
        self.seed_list
        self.model_spec(1)
        self.train_config()
        if need_data:
            if not self.data:
                raise ConfigError("no data file given (set [data] data or pass --data)")
            if not Path(self.data).is_file():
                raise ConfigError(f"data file not found: {self.data}")

    # file round trip --------------------------------------------------------

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, keys in self.SECTIONS.items():
            parser[section] = {key: repr(v) if isinstance(v := getattr(self, key), float) else str(v) for key in keys}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        cfg = cls()
        for section in parser.sections():
            if section not in cls.SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser[section].items():
                if key not in cls.SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                cfg.set(key, value)
        return cfg
