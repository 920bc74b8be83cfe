"""Per-snapshot scalar observables and stationary-state statistics.

Observables are plain functions of a configuration. Series statistics use
batch means with automatic batch doubling so that standard errors stay
honest in the presence of autocorrelation; magnetization is stored
normalized to [-1, 1] throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import Lattice, Lattice2D, SpinConfig

__all__ = [
    "minus_density",
    "magnetization",
    "active_density",
    "domain_wall_density",
    "MomentAccumulator",
    "binder_ratio",
    "ObservableSeries",
    "SeriesSink",
    "OBSERVABLES",
]


def minus_density(config: SpinConfig) -> float:
    """Fraction of minus spins, n_minus/N, in [0, 1]."""
    return config.n_minus() / config.n


def magnetization(config: SpinConfig) -> float:
    """Normalized magnetization (1/N) sum_r X_r, in [-1, 1]."""
    return 1.0 - 2.0 * config.n_minus() / config.n


def active_density(config: SpinConfig, lattice: Lattice2D) -> float:
    """Fraction of 2x2 plaquettes that are neither all-plus nor all-minus."""
    if config.n != lattice.n_sites:
        raise ValueError("config size does not match lattice")
    spins = config.to_spins()
    return _kernels.active_plaquette_count_2d(spins, lattice.Lx, lattice.Ly) / lattice.n_sites


def domain_wall_density(config: SpinConfig, lattice: Lattice2D) -> float:
    """Unsatisfied nearest-neighbor bonds over the 2*Lx*Ly torus bonds."""
    if config.n != lattice.n_sites:
        raise ValueError("config size does not match lattice")
    spins = config.to_spins()
    return _kernels.domain_wall_count_2d(spins, lattice.Lx, lattice.Ly) / (
        2 * lattice.n_sites
    )


# raw-array versions used by trajectory sinks --------------------------------


def _nm(spins: np.ndarray, lattice: Lattice) -> float:
    return float(spins.sum()) / spins.shape[0]


_REGISTRY = {
    "n_minus": lambda s, lat: _nm(s, lat),
    "m": lambda s, lat: 1.0 - 2.0 * _nm(s, lat),
    "abs_m": lambda s, lat: abs(1.0 - 2.0 * _nm(s, lat)),
    "m2": lambda s, lat: (1.0 - 2.0 * _nm(s, lat)) ** 2,
    "m4": lambda s, lat: (1.0 - 2.0 * _nm(s, lat)) ** 4,
    "active_density": lambda s, lat: _kernels.active_plaquette_count_2d(
        s, lat.Lx, lat.Ly
    )
    / lat.n_sites,
    "dw_density": lambda s, lat: _kernels.domain_wall_count_2d(s, lat.Lx, lat.Ly)
    / (2 * lat.n_sites),
}

OBSERVABLES = tuple(sorted(_REGISTRY))
_2D_ONLY = {"active_density", "dw_density"}


@dataclass
class MomentAccumulator:
    """Running sums of m^2, m^4, |m| for Binder-ratio extraction.

    Merging accumulators is plain addition, so per-trajectory instances can
    be combined in any order.
    """

    sum_m2: float = 0.0
    sum_m4: float = 0.0
    sum_abs_m: float = 0.0
    count: int = 0

    def add(self, m: float) -> None:
        m2 = m * m
        self.sum_m2 += m2
        self.sum_m4 += m2 * m2
        self.sum_abs_m += abs(m)
        self.count += 1

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(
            self.sum_m2 + other.sum_m2,
            self.sum_m4 + other.sum_m4,
            self.sum_abs_m + other.sum_abs_m,
            self.count + other.count,
        )

    @property
    def mean_m2(self) -> float:
        self._check()
        return self.sum_m2 / self.count

    @property
    def mean_m4(self) -> float:
        self._check()
        return self.sum_m4 / self.count

    @property
    def mean_abs_m(self) -> float:
        self._check()
        return self.sum_abs_m / self.count

    def _check(self):
        if self.count < 1:
            raise ValueError("empty accumulator")


def binder_ratio(acc: MomentAccumulator) -> float:
    """1 - <m^4>/(3 <m^2>^2); 2/3 deep in an ordered phase, 0 for Gaussian m."""
    m2 = acc.mean_m2
    if m2 == 0.0:
        raise ZeroDivisionError("binder_ratio undefined: <m^2> = 0")
    return 1.0 - acc.mean_m4 / (3.0 * m2 * m2)


def batch_means_error(values: np.ndarray, min_batches: int = 16) -> tuple[float, float]:
    """(mean, std_error) by batch means with automatic batch doubling.

    The batch size doubles until the lag-1 autocorrelation of the batch
    means drops below 0.1 (or too few batches remain), which keeps the
    error estimate honest for autocorrelated series.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise ValueError("empty series")
    mean = float(values.mean())
    if n == 1:
        return mean, 0.0
    batch = 1
    while True:
        n_batches = max(n // batch, 2)
        batch_eff = n // n_batches
        bm = values[: n_batches * batch_eff].reshape(n_batches, batch_eff).mean(axis=1)
        if n_batches <= max(min_batches, 2):
            break
        centered = bm - bm.mean()
        denom = float(centered @ centered)
        if denom == 0.0:
            break
        rho1 = float(centered[:-1] @ centered[1:]) / denom
        if rho1 < 0.1:
            break
        batch *= 2
    se = float(bm.std(ddof=1) / np.sqrt(bm.shape[0]))
    return mean, se


@dataclass
class ObservableSeries:
    """A named sample series with autocorrelation-aware summary statistics."""

    name: str
    sweeps: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def append(self, sweep_index: int, value: float) -> None:
        self.sweeps.append(sweep_index)
        self.values.append(value)

    def finalize(self) -> tuple[float, float]:
        """(mean, std_error) over the recorded (post-burn-in) samples."""
        return batch_means_error(np.asarray(self.values))

    def __len__(self) -> int:
        return len(self.values)


class SeriesSink:
    """Trajectory sink recording a set of named observables per snapshot."""

    def __init__(self, names: tuple[str, ...], lattice: Lattice):
        unknown = set(names) - set(_REGISTRY)
        if unknown:
            raise ValueError(f"unknown observables: {sorted(unknown)}")
        if lattice.dimension == 1 and set(names) & _2D_ONLY:
            raise ValueError("active_density/dw_density need a 2d lattice")
        self.lattice = lattice
        self.series = {name: ObservableSeries(name) for name in names}
        self.moments = MomentAccumulator()
        self._track_moments = bool({"m2", "m4", "abs_m"} & set(names))

    def accept(self, sweep_index: int, spins: np.ndarray) -> None:
        for name, series in self.series.items():
            series.append(sweep_index, float(_REGISTRY[name](spins, self.lattice)))
        if self._track_moments:
            self.moments.add(1.0 - 2.0 * float(spins.sum()) / spins.shape[0])
