"""Experiment configuration: a versioned JSON document validated up front.

Configs round-trip losslessly through their file form; the canonical JSON
serialization (sorted keys) also defines the config hash recorded in run
manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .dynamics import MixedKernel, Schedule
from .fidelity import RegionSpec, default_two_point_region
from .lattice import Lattice, Lattice1D, Lattice2D

SCHEMA_VERSION = 1

INITIAL_PATTERNS = ("all_plus", "all_minus", "single_minus", "random_in_sector")


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class InitialState:
    """Initial condition: a named pattern, plus the sector for random draws."""

    pattern: str = "single_minus"
    sector: int = -1  # used by random_in_sector only

    def validate(self, path="initial_state"):
        if self.pattern not in INITIAL_PATTERNS:
            raise ConfigError(f"{path}.pattern", f"must be one of {INITIAL_PATTERNS}")
        if self.sector not in (1, -1):
            raise ConfigError(f"{path}.sector", "must be +1 or -1")


@dataclass(frozen=True)
class FidelityPlan:
    """Which marginal-fidelity histograms to accumulate during runs."""

    enabled: bool = False
    radii: tuple[int, ...] = (3,)
    separation: str | int = "max"  # base-point separation |i-j|; "max" = L/2
    one_point: bool = False
    keep_trajectory_counts: bool = True

    def validate(self, path="measurements.fidelity"):
        if not all(isinstance(r, int) and r >= 0 for r in self.radii):
            raise ConfigError(f"{path}.radii", "radii must be non-negative integers")
        if isinstance(self.separation, str) and self.separation != "max":
            raise ConfigError(f"{path}.separation", "must be an integer or 'max'")

    def separation_for(self, lattice: Lattice) -> int:
        if self.separation == "max":
            return (lattice.L if lattice.dimension == 1 else lattice.Lx) // 2
        return int(self.separation)

    def region_for(self, lattice: Lattice, R: int) -> RegionSpec:
        sep = self.separation_for(lattice)
        if self.one_point:
            if lattice.dimension == 1:
                return RegionSpec(1, 0, None, R)
            return RegionSpec(2, 0, None, (R, R))
        if self.separation == "max":
            return default_two_point_region(lattice, R)
        if lattice.dimension == 1:
            return RegionSpec(1, 0, sep, R)
        return RegionSpec(2, 0, lattice.site(sep, 0), (R, R))


@dataclass(frozen=True)
class MeasurementPlan:
    observables: tuple[str, ...] = ("n_minus",)
    fidelity: FidelityPlan = field(default_factory=FidelityPlan)
    snapshot_interval: int = 0  # archive every k-th sample; 0 disables

    def validate(self, path="measurements"):
        self.fidelity.validate(f"{path}.fidelity")
        if self.snapshot_interval < 0:
            raise ConfigError(f"{path}.snapshot_interval", "must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a simulation campaign.

    The cells of the campaign are the (L, alpha) pairs; each cell runs
    n_trajectories independent streams derived from master_seed.
    """

    dimension: int
    lattice_sizes: tuple[int, ...]
    alphas: tuple[float, ...]
    toom_variant: str | None = None
    initial_state: InitialState = field(default_factory=InitialState)
    sweeps_total: int = 10_000
    burn_in_sweeps: int = 5_000
    sample_interval_sweeps: int = 10
    master_seed: int = 2024
    n_trajectories: int = 8
    measurements: MeasurementPlan = field(default_factory=MeasurementPlan)
    schema_version: int = SCHEMA_VERSION

    # -- derived pieces ------------------------------------------------------

    def lattice_for(self, L: int) -> Lattice:
        return Lattice1D(L) if self.dimension == 1 else Lattice2D(L, L)

    def kernel_for(self, alpha: float) -> MixedKernel:
        return MixedKernel(self.dimension, alpha, self.toom_variant)

    def schedule(self) -> Schedule:
        return Schedule(self.sweeps_total, self.burn_in_sweeps, self.sample_interval_sweeps)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}")
        if self.dimension not in (1, 2):
            raise ConfigError("dimension", "must be 1 or 2")
        if not self.lattice_sizes:
            raise ConfigError("lattice_sizes", "must not be empty")
        for L in self.lattice_sizes:
            if self.dimension == 1 and L < 3:
                raise ConfigError("lattice_sizes", f"1d sizes must be >= 3, got {L}")
            if self.dimension == 2 and L < 3:
                raise ConfigError("lattice_sizes", f"2d sizes must be >= 3, got {L}")
        if not self.alphas:
            raise ConfigError("alphas", "must not be empty")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ConfigError("alphas", f"alpha {a} outside [0, 1]")
        if self.dimension == 2 and self.toom_variant not in ("strict", "chill"):
            raise ConfigError("toom_variant", "2d runs need 'strict' or 'chill'")
        if self.dimension == 1 and self.toom_variant is not None:
            raise ConfigError("toom_variant", "only applies to dimension 2")
        self.initial_state.validate()
        if self.initial_state.pattern == "all_minus" and self.dimension == 1:
            pass  # legal but decays immediately; allowed
        if self.burn_in_sweeps >= self.sweeps_total:
            raise ConfigError("burn_in_sweeps", "must be smaller than sweeps_total")
        if self.burn_in_sweeps < 0:
            raise ConfigError("burn_in_sweeps", "must be >= 0")
        if self.sample_interval_sweeps < 1:
            raise ConfigError("sample_interval_sweeps", "sampling cadence is at least 1 sweep")
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories", "must be >= 1")
        self.measurements.validate()
        for name in self.measurements.observables:
            from .observables import OBSERVABLES

            if name not in OBSERVABLES:
                raise ConfigError("measurements.observables", f"unknown observable {name!r}")
            if self.dimension == 1 and name in ("active_density", "dw_density"):
                raise ConfigError("measurements.observables", f"{name} needs dimension 2")
        if self.measurements.fidelity.enabled:
            for L in self.lattice_sizes:
                lattice = self.lattice_for(L)
                for R in self.measurements.fidelity.radii:
                    try:
                        self.measurements.fidelity.region_for(lattice, R).validate(lattice)
                    except ValueError as exc:
                        raise ConfigError(
                            "measurements.fidelity", f"L={L}, R={R}: {exc}"
                        ) from exc

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        def conv(obj):
            if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
                return {k: conv(v) for k, v in dataclasses.asdict(obj).items()}
            if isinstance(obj, tuple):
                return [conv(v) for v in obj]
            return obj

        return conv(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        init = d.pop("initial_state", {})
        meas = d.pop("measurements", {})
        fid = dict(meas.pop("fidelity", {})) if meas else {}
        if "radii" in fid:
            fid["radii"] = tuple(fid["radii"])
        cfg = cls(
            dimension=d["dimension"],
            lattice_sizes=tuple(d["lattice_sizes"]),
            alphas=tuple(d["alphas"]),
            toom_variant=d.get("toom_variant"),
            initial_state=InitialState(**init) if init else InitialState(),
            sweeps_total=d.get("sweeps_total", 10_000),
            burn_in_sweeps=d.get("burn_in_sweeps", 5_000),
            sample_interval_sweeps=d.get("sample_interval_sweeps", 10),
            master_seed=d.get("master_seed", 2024),
            n_trajectories=d.get("n_trajectories", 8),
            measurements=MeasurementPlan(
                observables=tuple(meas.get("observables", ("n_minus",))),
                fidelity=FidelityPlan(**fid) if fid else FidelityPlan(),
                snapshot_interval=meas.get("snapshot_interval", 0),
            )
            if meas
            else MeasurementPlan(),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))
