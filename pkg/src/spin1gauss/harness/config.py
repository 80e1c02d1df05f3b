"""Experiment configuration loaded from JSON with units in the field names."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..magnetics import MU_B_RAD_PER_S_MG, FieldModel
from ..state import EnsembleSpec, LightSpec

US = 1e-6


class ConfigError(ValueError):
    pass


def _from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        sub = _NESTED.get((cls.__name__, f.name))
        kwargs[f.name] = _from_dict(sub, value) if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


@dataclass(frozen=True)
class EnsembleConfig:
    n_atoms: float = 6.17e6
    n_atoms_var: float = 0.0
    # axis label ("+y") or single-atom mean 8-vector
    pump: str | tuple = "+y"

    def __post_init__(self):
        object.__setattr__(self, "pump", _tuplify(self.pump))
        if self.n_atoms <= 0:
            raise ConfigError("n_atoms must be positive")
        if self.n_atoms_var < 0:
            raise ConfigError("n_atoms_var must be non-negative")


@dataclass(frozen=True)
class LightConfig:
    photons: float = 7.2e6
    pulse_duration_us: float = 1.0

    def __post_init__(self):
        if self.photons <= 0:
            raise ConfigError("photons must be positive")
        if self.pulse_duration_us <= 0:
            raise ConfigError("pulse_duration_us must be positive")


@dataclass(frozen=True)
class CouplingConfig:
    g1_rad: float = 0.0
    g2_rad: float = 0.0
    eta: float = 0.0
    readd_fraction: float = 1.0
    light_decoherence: bool = False

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if not 0 <= self.readd_fraction <= 1:
            raise ConfigError("readd_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class FieldConfig:
    b_mean_mG: tuple = (0.0, 0.0, 0.0)
    b_cov_mG2: tuple = ((0.0, 0.0, 0.0),) * 3
    coherence_time_us: float | None = None
    grad_parallel_mG_per_mm: float | None = None
    grad_perp_mG_per_mm: tuple | None = None
    cloud_width_mm: float | None = None
    g_f: float = -0.5
    # externally quoted horizon, carried into the output metadata for comparison
    tau_gauss_reference_us: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "b_mean_mG", _tuplify(self.b_mean_mG))
        object.__setattr__(self, "b_cov_mG2", _tuplify(self.b_cov_mG2))
        object.__setattr__(self, "grad_perp_mG_per_mm", _tuplify(self.grad_perp_mG_per_mm))
        if np.shape(self.b_mean_mG) != (3,):
            raise ConfigError("b_mean_mG must have 3 components")
        if np.shape(self.b_cov_mG2) != (3, 3):
            raise ConfigError("b_cov_mG2 must be 3x3")

    def model(self, field_noise: bool = True) -> FieldModel:
        cov = self.b_cov_mG2 if field_noise else ((0.0,) * 3,) * 3
        try:
            return FieldModel(
                b_mean=self.b_mean_mG,
                b_cov=cov,
                gyro=self.g_f * MU_B_RAD_PER_S_MG,
                coherence_time=None if self.coherence_time_us is None else self.coherence_time_us * US,
                grad_parallel=self.grad_parallel_mG_per_mm,
                cloud_width=self.cloud_width_mm,
                grad_perp=self.grad_perp_mG_per_mm,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ScheduleConfig:
    """Pulse timing.

    ``"single"``: one h pulse every ``period_us``. ``"alternating"``: an h
    pulse and a v pulse ``pair_gap_us`` later (start to start), pairs every
    ``pair_period_us``.
    """

    strategy: str = "single"
    duration_us: float = 1000.0
    start_us: float = 0.0
    period_us: float = 10.0
    pair_gap_us: float = 3.0
    pair_period_us: float = 20.0

    def __post_init__(self):
        if self.strategy not in ("single", "alternating"):
            raise ConfigError(f"unknown schedule strategy {self.strategy!r}")
        if self.duration_us <= 0:
            raise ConfigError("duration_us must be positive")
        if self.start_us < 0:
            raise ConfigError("start_us must be non-negative")

    def pulse_times(self, pulse_duration_us: float) -> list[tuple[float, str]]:
        """``(arrival time in s, polarization)`` for every pulse; checks for overlap."""
        out = []
        if self.strategy == "single":
            if self.period_us < pulse_duration_us:
                raise ConfigError("pulses overlap: period_us shorter than the pulse")
            t = self.start_us
            while t + pulse_duration_us <= self.duration_us + 1e-9:
                out.append((t * US, "h"))
                t += self.period_us
        else:
            if self.pair_gap_us < pulse_duration_us or self.pair_period_us < self.pair_gap_us + pulse_duration_us:
                raise ConfigError("pulses overlap in the alternating schedule")
            t = self.start_us
            while t + pulse_duration_us <= self.duration_us + 1e-9:
                out.append((t * US, "h"))
                if t + self.pair_gap_us + pulse_duration_us <= self.duration_us + 1e-9:
                    out.append(((t + self.pair_gap_us) * US, "v"))
                t += self.pair_period_us
        return out


@dataclass(frozen=True)
class SubstepConfig:
    pulse: int = 50
    dark: int = 100
    scheme: str = "midpoint"
    # double every count until reported outputs change by less than rtol
    refine: bool = False
    rtol: float = 1e-4
    max_doublings: int = 4

    def __post_init__(self):
        if self.pulse < 1 or self.dark < 1:
            raise ConfigError("substep counts must be at least 1")
        if self.scheme not in ("midpoint", "euler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")

    def scaled(self, factor: int) -> "SubstepConfig":
        return dataclasses.replace(self, pulse=self.pulse * factor, dark=self.dark * factor)


@dataclass(frozen=True)
class Toggles:
    g2: bool = True
    field_noise: bool = True
    atom_number_noise: bool = True
    condition: bool = False
    # keep measured pulse blocks in the state (pulse-pulse correlation studies)
    retain_pulses: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    ensemble: EnsembleConfig = dataclasses.field(default_factory=EnsembleConfig)
    light: LightConfig = dataclasses.field(default_factory=LightConfig)
    coupling: CouplingConfig = dataclasses.field(default_factory=CouplingConfig)
    field: FieldConfig = dataclasses.field(default_factory=FieldConfig)
    schedule: ScheduleConfig = dataclasses.field(default_factory=ScheduleConfig)
    substeps: SubstepConfig = dataclasses.field(default_factory=SubstepConfig)
    toggles: Toggles = dataclasses.field(default_factory=Toggles)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _from_dict(cls, data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **sections) -> "ExperimentConfig":
        """Shallow update; ``cfg.replace(toggles={"g2": False})`` merges into a section."""
        updates = {}
        for key, value in sections.items():
            current = getattr(self, key)
            if isinstance(value, dict) and dataclasses.is_dataclass(current):
                value = dataclasses.replace(current, **value)
            updates[key] = value
        return dataclasses.replace(self, **updates)

    def with_path(self, path: str, value) -> "ExperimentConfig":
        """Set a dotted parameter such as ``"field.coherence_time_us"``."""
        section, _, key = path.partition(".")
        if not key:
            return dataclasses.replace(self, **{section: value})
        current = getattr(self, section, None)
        if current is None or not dataclasses.is_dataclass(current):
            raise ConfigError(f"unknown config section {section!r}")
        if key not in {f.name for f in dataclasses.fields(current)}:
            raise ConfigError(f"unknown parameter {path!r}")
        return self.replace(**{section: {key: value}})

    # derived objects used by the runner

    def ensemble_spec(self) -> EnsembleSpec:
        var = self.ensemble.n_atoms_var if self.toggles.atom_number_noise else 0.0
        return EnsembleSpec(self.ensemble.n_atoms, var, self.ensemble.pump)

    def light_spec(self, polarization: str) -> LightSpec:
        return LightSpec(self.light.photons, polarization)

    def field_model(self) -> FieldModel:
        return self.field.model(self.toggles.field_noise)

    @property
    def g2(self) -> float:
        return self.coupling.g2_rad if self.toggles.g2 else 0.0


_NESTED = {
    ("ExperimentConfig", "ensemble"): EnsembleConfig,
    ("ExperimentConfig", "light"): LightConfig,
    ("ExperimentConfig", "coupling"): CouplingConfig,
    ("ExperimentConfig", "field"): FieldConfig,
    ("ExperimentConfig", "schedule"): ScheduleConfig,
    ("ExperimentConfig", "substeps"): SubstepConfig,
    ("ExperimentConfig", "toggles"): Toggles,
}
