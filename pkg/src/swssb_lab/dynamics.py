"""Stochastic update kernels and the trajectory runner.

Two sub-rules exist per dimension. In 1d, the absorbing rule flips sites
(r-1, r) whenever X_r = -1, so errors hop left and adjacent pairs
annihilate; the SWSSB rule scrambles the triplet centered at r uniformly
within its parity class, keeping (+++) frozen. In 2d, the erosion rule is a
pair-flip variant of Toom's rule (a site anti-aligned with both its north
and east neighbors flips together with one Moore partner), and the SWSSB
rule scrambles the 2x2 plaquette anchored at r within its parity class,
keeping (++++) and (----) frozen.

A mixed kernel applies the SWSSB sub-rule with probability alpha at every
elementary update; one sweep is N = n_sites elementary updates at uniformly
random sites. All updates flip spins in pairs (or scramble within a parity
class), so the global Z2 charge is conserved trajectory by trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import _kernels
from .lattice import (
    Lattice,
    Lattice1D,
    Lattice2D,
    MOORE_OFFSETS,
    RngStream,
    SpinConfig,
)

__all__ = [
    "MixedKernel",
    "Schedule",
    "PairFlipMove",
    "step_absorbing_1d",
    "step_swssb_triplet",
    "step_swssb_plaquette",
    "enumerate_pair_flips",
    "step_toom_pair",
    "sweep",
    "run_trajectory",
    "TrajectoryResult",
    "TrajectoryError",
    "SnapshotArchive",
]

TRIPLET_SETS = {0: tuple(int(x) for x in _kernels.TRIPLET_EVEN),
                1: tuple(int(x) for x in _kernels.TRIPLET_ODD)}
PLAQUETTE_SETS = {0: tuple(int(x) for x in _kernels.PLAQ_EVEN),
                  1: tuple(int(x) for x in _kernels.PLAQ_ODD)}


@dataclass(frozen=True)
class MixedKernel:
    """Interpolated update rule: SWSSB sub-rule with probability alpha.

    toom_variant selects the 2d erosion rule ("strict" accepts only
    domain-wall-shortening pair flips, "chill" also accepts neutral ones)
    and must be given exactly for dimension 2.
    """

    dimension: int
    alpha: float
    toom_variant: str | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.dimension == 2:
            if self.toom_variant not in ("strict", "chill"):
                raise ValueError("2d kernels need toom_variant 'strict' or 'chill'")
        elif self.toom_variant is not None:
            raise ValueError("toom_variant only applies to dimension 2")


@dataclass(frozen=True)
class Schedule:
    """Run length bookkeeping, in sweeps (N elementary updates each).

    Samples are emitted at sweeps burn_in + k*interval, k = 1..n_samples,
    and the run always executes sweeps_total sweeps.
    """

    sweeps_total: int
    burn_in_sweeps: int
    sample_interval_sweeps: int

    def __post_init__(self):
        if self.sweeps_total < 1:
            raise ValueError("sweeps_total must be >= 1")
        if not 0 <= self.burn_in_sweeps < self.sweeps_total:
            raise ValueError("need 0 <= burn_in_sweeps < sweeps_total")
        if self.sample_interval_sweeps < 1:
            raise ValueError("sample_interval_sweeps must be >= 1")

    @property
    def n_samples(self) -> int:
        return (self.sweeps_total - self.burn_in_sweeps) // self.sample_interval_sweeps

    def sample_sweeps(self) -> np.ndarray:
        k = np.arange(1, self.n_samples + 1, dtype=np.int64)
        return self.burn_in_sweeps + k * self.sample_interval_sweeps


@dataclass(frozen=True)
class PairFlipMove:
    """A candidate pair flip: target site, Moore partner, domain-wall change."""

    target: int
    partner: int
    delta_dw: int


# ---------------------------------------------------------------------------
# single-update operations (reference semantics, exact-oracle building blocks)
# ---------------------------------------------------------------------------


def step_absorbing_1d(config: SpinConfig, r: int) -> SpinConfig:
    """Absorbing-rule update at site r: flip (r-1, r) iff X_r = -1."""
    out = config.copy()
    if out.get(r):
        out.flip(r)
        out.flip((r - 1) % out.n)
    return out


def _read_local(config: SpinConfig, sites) -> int:
    pat = 0
    for k, s in enumerate(sites):
        pat |= config.get(s) << k
    return pat


def _write_local(config: SpinConfig, sites, pat: int) -> None:
    for k, s in enumerate(sites):
        cur = config.get(s)
        new = (pat >> k) & 1
        if cur != new:
            config.flip(s)


def step_swssb_triplet(
    config: SpinConfig, r: int, rng: np.random.Generator
) -> SpinConfig:
    """Scramble the triplet (r-1, r, r+1) uniformly within its parity class.

    (+++) is frozen; otherwise the new local pattern is drawn uniformly from
    the same-parity patterns excluding (+++), the current one included.
    """
    lat = Lattice1D(config.n)
    sites = lat.triplet(r)
    pat = _read_local(config, sites)
    if pat == 0:
        return config.copy()
    choices = TRIPLET_SETS[bin(pat).count("1") % 2]
    new = choices[rng.integers(0, len(choices))]
    out = config.copy()
    _write_local(out, sites, new)
    return out


def step_swssb_plaquette(
    config: SpinConfig, lattice: Lattice2D, r: int, rng: np.random.Generator
) -> SpinConfig:
    """Scramble the 2x2 plaquette anchored at r within its parity class."""
    sites = lattice.plaquette(r)
    pat = _read_local(config, sites)
    if pat in (0, 15):
        return config.copy()
    choices = PLAQUETTE_SETS[bin(pat).count("1") % 2]
    new = choices[rng.integers(0, len(choices))]
    out = config.copy()
    _write_local(out, sites, new)
    return out


def is_toom_unstable(config: SpinConfig, lattice: Lattice2D, r: int) -> bool:
    """True when site r anti-aligns with both its north and east neighbors."""
    e, n, _, _ = lattice.nearest_neighbors(r)
    s = config.get(r)
    return s != config.get(n) and s != config.get(e)


def enumerate_pair_flips(
    config: SpinConfig, lattice: Lattice2D, r: int
) -> tuple[list[PairFlipMove], list[PairFlipMove]]:
    """Candidate pair flips for a Toom-unstable site r.

    Returns (PF_strict, PF_chill): moves pairing r with each Moore neighbor
    whose flip lowers (strict) or does not raise (chill) the total
    domain-wall length. delta_dw is computed from the bonds around the pair
    only. Raises ValueError on a Toom-stable site.
    """
    if not is_toom_unstable(config, lattice, r):
        raise ValueError(f"site {r} is not Toom-unstable")
    spins = config.to_spins()
    deltas = _kernels.toom_move_deltas(spins, lattice.Lx, lattice.Ly, r)
    x, y = lattice.coords(r)
    strict: list[PairFlipMove] = []
    chill: list[PairFlipMove] = []
    for k, (dx, dy) in enumerate(MOORE_OFFSETS):
        move = PairFlipMove(r, lattice.site(x + dx, y + dy), int(deltas[k]))
        if move.delta_dw < 0:
            strict.append(move)
        if move.delta_dw <= 0:
            chill.append(move)
    return strict, chill


def step_toom_pair(
    config: SpinConfig,
    lattice: Lattice2D,
    r: int,
    variant: str,
    rng: np.random.Generator,
) -> SpinConfig:
    """Pair-flip Toom update at site r (uniform choice over admissible moves)."""
    if variant not in ("strict", "chill"):
        raise ValueError("variant must be 'strict' or 'chill'")
    if not is_toom_unstable(config, lattice, r):
        return config.copy()
    strict, chill = enumerate_pair_flips(config, lattice, r)
    moves = strict if variant == "strict" else chill
    if not moves:
        return config.copy()
    move = moves[rng.integers(0, len(moves))]
    out = config.copy()
    out.flip(move.target)
    out.flip(move.partner)
    return out


# ---------------------------------------------------------------------------
# sweeps and trajectories (compiled fast path)
# ---------------------------------------------------------------------------


def _check_geometry(config: SpinConfig, lattice: Lattice, kernel: MixedKernel):
    if config.n != lattice.n_sites:
        raise ValueError("config size does not match lattice")
    if kernel.dimension != lattice.dimension:
        raise ValueError("kernel dimension does not match lattice")


def sweep(
    config: SpinConfig,
    lattice: Lattice,
    kernel: MixedKernel,
    state: np.ndarray,
    n_sweeps: int = 1,
) -> SpinConfig:
    """Advance a configuration by n_sweeps sweeps; the RNG state mutates in place.

    ``state`` is the uint64[4] array from RngStream.kernel_state().
    """
    _check_geometry(config, lattice, kernel)
    spins = config.to_spins()
    if lattice.dimension == 1:
        _kernels.sweep_1d(spins, kernel.alpha, n_sweeps, state)
    else:
        _kernels.sweep_2d(
            spins,
            lattice.Lx,
            lattice.Ly,
            kernel.alpha,
            kernel.toom_variant == "strict",
            n_sweeps,
            state,
        )
    return SpinConfig.from_spins(spins)


class SnapshotSink(Protocol):
    """Consumer of post-burn-in snapshots during a trajectory."""

    def accept(self, sweep_index: int, spins: np.ndarray) -> None:
        """Receive the raw uint8 minus-mask at a sample point (read-only view)."""
        ...


@dataclass
class SnapshotArchive:
    """Sink that stores every k-th sample as a packed SpinConfig."""

    every: int = 1
    sweeps: list[int] = field(default_factory=list)
    configs: list[SpinConfig] = field(default_factory=list)
    _seen: int = 0

    def accept(self, sweep_index: int, spins: np.ndarray) -> None:
        if self._seen % self.every == 0:
            self.sweeps.append(sweep_index)
            self.configs.append(SpinConfig.from_spins(spins))
        self._seen += 1


@dataclass
class TrajectoryResult:
    """Summary of one trajectory: final state plus whatever the sinks kept."""

    final_config: SpinConfig
    n_samples: int
    sinks: tuple


class TrajectoryError(RuntimeError):
    """Sink failure wrapped with trajectory coordinates."""

    def __init__(self, message: str, sweep_index: int, stream: RngStream | None):
        super().__init__(message)
        self.sweep_index = sweep_index
        self.stream = stream


def run_trajectory(
    init: SpinConfig,
    lattice: Lattice,
    kernel: MixedKernel,
    schedule: Schedule,
    rng: RngStream,
    sinks: tuple = (),
) -> TrajectoryResult:
    """Run one trajectory, feeding post-burn-in snapshots to the sinks.

    The kernel RNG state derives from (rng.master_seed, rng.stream_id), so
    reruns with the same arguments reproduce the snapshot sequence exactly.
    """
    _check_geometry(init, lattice, kernel)
    spins = init.to_spins()
    state = rng.kernel_state()
    strict = kernel.toom_variant == "strict"

    def advance(n_sweeps: int):
        if n_sweeps <= 0:
            return
        if lattice.dimension == 1:
            _kernels.sweep_1d(spins, kernel.alpha, n_sweeps, state)
        else:
            _kernels.sweep_2d(
                spins, lattice.Lx, lattice.Ly, kernel.alpha, strict, n_sweeps, state
            )

    advance(schedule.burn_in_sweeps)
    sweep_now = schedule.burn_in_sweeps
    n_samples = schedule.n_samples
    for _ in range(n_samples):
        advance(schedule.sample_interval_sweeps)
        sweep_now += schedule.sample_interval_sweeps
        for sink in sinks:
            try:
                sink.accept(sweep_now, spins)
            except Exception as exc:
                raise TrajectoryError(
                    f"sink {type(sink).__name__} failed at sweep {sweep_now}: {exc}",
                    sweep_now,
                    rng,
                ) from exc
    advance(schedule.sweeps_total - sweep_now)
    return TrajectoryResult(SpinConfig.from_spins(spins), n_samples, tuple(sinks))
