"""Run configuration read from a TOML file.

Every key is optional; an empty file reproduces the reference setup on
synthetic data. Unknown keys and wrong types are rejected with the
dotted name of the offending field.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import BatterySpec, InvalidArgumentError
from .forecast import SarimaOrders
from .scenario import QUANTITIES
from .sim import CASE_NAMES, CaseConfig, MarketParams
from .synth import SynthSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(InvalidArgumentError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class RunConfig:
    data_source: str = "synthetic"
    data_dir: Path | None = None
    train_days: int | None = None
    eval_days: int = 28
    capacity: float = 5.0
    eta: float = 0.9
    lower: float = 0.1
    upper: float = 0.9
    initial: float = 0.5
    alpha: float = 0.4
    beta: float = 0.05
    c_max_per_unit: float = 2.0
    n_raw: int = 50
    k_preserve: int = 5
    orders: dict = field(default_factory=lambda: {q: SarimaOrders() for q in QUANTITIES})
    seed: int = 0
    cases: tuple = (1, 2, 3)
    out: Path = Path("out")
    synth_units: int = 6
    synth_days: int = 210

    def __post_init__(self):
        checks = [
            ("data.source", self.data_source in ("synthetic", "files"), "must be 'synthetic' or 'files'"),
            ("data.dir", self.data_source != "files" or self.data_dir is not None,
             "required when data.source = 'files'"),
            ("data.eval_days", self.eval_days >= 1, "must be at least 1"),
            ("data.train_days", self.train_days is None or self.train_days >= 31, "must be at least 31"),
            ("battery.capacity", self.capacity > 0, "must be positive"),
            ("battery.eta", 0 < self.eta <= 1, "must lie in (0, 1]"),
            ("battery.lower", 0 <= self.lower < self.upper <= 1, "bounds must satisfy 0 <= lower < upper <= 1"),
            ("battery.initial", self.lower <= self.initial <= self.upper, "must lie within [lower, upper]"),
            ("market.alpha", self.alpha >= 0, "must be non-negative"),
            ("market.beta", self.beta >= 0, "must be non-negative"),
            ("market.c_max_per_unit", self.c_max_per_unit > 0, "must be positive"),
            ("scenarios.k_preserve", self.n_raw >= self.k_preserve >= 1, "must satisfy n_raw >= k_preserve >= 1"),
            ("run.cases", bool(self.cases) and all(c in CASE_NAMES for c in self.cases),
             f"must be a non-empty subset of {sorted(CASE_NAMES)}"),
            ("synth.n_units", self.synth_units >= 1, "must be at least 1"),
            ("synth.n_days", self.synth_days >= 40, "must be at least 40"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, msg)

    def battery(self) -> BatterySpec:
        return BatterySpec.from_capacity(self.capacity, self.eta, self.lower, self.upper, self.initial)

    def market(self) -> MarketParams:
        return MarketParams(self.alpha, self.beta, self.c_max_per_unit)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(seed=self.seed, n_units=self.synth_units, n_days=self.synth_days,
                         capacity=self.capacity, eta=self.eta)

    def case_configs(self) -> list[CaseConfig]:
        return [CaseConfig(c, self.n_raw, self.k_preserve, self.seed, dict(self.orders)) for c in self.cases]

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


# section -> key -> (RunConfig attribute, expected python types)
SCHEMA = {
    "data": {
        "source": ("data_source", (str,)),
        "dir": ("data_dir", (str,)),
        "train_days": ("train_days", (int,)),
        "eval_days": ("eval_days", (int,)),
    },
    "battery": {
        "capacity": ("capacity", (int, float)),
        "eta": ("eta", (int, float)),
        "lower": ("lower", (int, float)),
        "upper": ("upper", (int, float)),
        "initial": ("initial", (int, float)),
    },
    "market": {
        "alpha": ("alpha", (int, float)),
        "beta": ("beta", (int, float)),
        "c_max_per_unit": ("c_max_per_unit", (int, float)),
    },
    "scenarios": {
        "n_raw": ("n_raw", (int,)),
        "k_preserve": ("k_preserve", (int,)),
    },
    "sarima": {q: (q, (str,)) for q in QUANTITIES},
    "run": {
        "seed": ("seed", (int,)),
        "cases": ("cases", (list,)),
        "out": ("out", (str,)),
    },
    "synth": {
        "n_units": ("synth_units", (int,)),
        "n_days": ("synth_days", (int,)),
    },
}


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    values = {}
    orders = {q: SarimaOrders() for q in QUANTITIES}
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(section, "must be a table")
        for key, raw in body.items():
            name = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(name, "unknown key")
            attr, types = SCHEMA[section][key]
            if isinstance(raw, bool) or not isinstance(raw, types):
                raise ConfigError(name, f"expected {' or '.join(t.__name__ for t in types)}, got {type(raw).__name__}")
            if section == "sarima":
                try:
                    orders[attr] = SarimaOrders.parse(raw)
                except InvalidArgumentError as exc:
                    raise ConfigError(name, str(exc)) from None
            elif attr == "cases":
                if not all(isinstance(c, int) and not isinstance(c, bool) for c in raw):
                    raise ConfigError(name, "expected a list of integers")
                values[attr] = tuple(raw)
            elif attr in ("data_dir", "out"):
                p = Path(raw)
                values[attr] = p if p.is_absolute() else base_dir / p
            elif types == (int, float):
                values[attr] = float(raw)
            else:
                values[attr] = raw
    return RunConfig(orders=orders, **values)


def load_config(path) -> RunConfig:
    """Read a TOML file; relative paths inside it resolve against its directory."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        with p.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(p), f"TOML syntax error: {exc}") from None
    return parse_config(doc, p.parent)
