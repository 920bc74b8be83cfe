"""Lattice geometry, bit-packed spin configurations, parity sectors, RNG streams.

Spins take values X_r = +1/-1 on a periodic 1d ring or 2d torus. A
configuration stores one bit per site in little-endian uint64 words:
bit r set means X_r = -1 ("minus spin" / error), bit clear means X_r = +1.
The site order is row-major for 2d lattices (r = y*Lx + x).

The global Z2 charge of a configuration is the product of all spins,
tracked here as a parity sector: +1 when the number of minus spins is
even, -1 when odd. All dynamics in this package conserve it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpinConfig",
    "Lattice1D",
    "Lattice2D",
    "ParitySector",
    "RngStream",
    "parity",
    "flip_pair",
    "random_config_in_sector",
]

_MASK64 = (1 << 64) - 1


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a uint8 0/1 array into little-endian uint64 words (bit k = site k)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    n = bits.shape[0]
    packed = np.packbits(bits, bitorder="little")
    n_words = max(1, (n + 63) // 64)
    buf = np.zeros(n_words * 8, dtype=np.uint8)
    buf[: packed.shape[0]] = packed
    return buf.view(np.uint64)


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a uint8 0/1 array of length n."""
    return np.unpackbits(words.view(np.uint8), count=n, bitorder="little")


class SpinConfig:
    """Bit-packed +-1 spin configuration on ``n`` sites.

    ``words`` holds the minus-spin mask, little-endian. Mutable only through
    :meth:`flip`; a configuration belongs to a single trajectory and is never
    shared across threads.
    """

    __slots__ = ("words", "n")

    def __init__(self, words: np.ndarray, n: int):
        words = np.asarray(words, dtype=np.uint64)
        if words.shape[0] != max(1, (n + 63) // 64):
            raise ValueError(f"expected {max(1, (n + 63) // 64)} words for n={n}")
        self.words = words
        self.n = int(n)

    # -- constructors -------------------------------------------------------

    @classmethod
    def all_plus(cls, n: int) -> "SpinConfig":
        return cls(np.zeros(max(1, (n + 63) // 64), dtype=np.uint64), n)

    @classmethod
    def all_minus(cls, n: int) -> "SpinConfig":
        c = cls.all_plus(n)
        bits = np.ones(n, dtype=np.uint8)
        c.words = pack_bits(bits)
        return c

    @classmethod
    def single_minus(cls, n: int, r: int = 0) -> "SpinConfig":
        c = cls.all_plus(n)
        c.flip(r)
        return c

    @classmethod
    def from_spins(cls, bits: np.ndarray) -> "SpinConfig":
        """Build from a uint8 0/1 minus-mask array."""
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(pack_bits(bits), bits.shape[0])

    @classmethod
    def from_index(cls, n: int, index: int) -> "SpinConfig":
        """Build from an integer whose bit k is the minus flag of site k (n <= 63)."""
        if n > 63:
            raise ValueError("from_index supports n <= 63")
        if not 0 <= index < (1 << n):
            raise ValueError(f"index {index} out of range for n={n}")
        return cls(np.array([index], dtype=np.uint64), n)

    # -- accessors ----------------------------------------------------------

    def get(self, r: int) -> int:
        """Minus flag of site r (1 means X_r = -1)."""
        self._check_site(r)
        return int((self.words[r >> 6] >> np.uint64(r & 63)) & np.uint64(1))

    def flip(self, r: int) -> None:
        """Negate the spin at site r in place. Applied twice it is the identity."""
        self._check_site(r)
        self.words[r >> 6] ^= np.uint64(1) << np.uint64(r & 63)

    def to_spins(self) -> np.ndarray:
        """Unpack to a uint8 0/1 minus-mask array of length n."""
        return unpack_bits(self.words, self.n)

    def to_index(self) -> int:
        """Integer key (bit k = minus flag of site k); requires n <= 63."""
        if self.n > 63:
            raise ValueError("to_index supports n <= 63")
        return int(self.words[0])

    def n_minus(self) -> int:
        """Number of minus spins."""
        return int(np.bitwise_count(self.words).sum())

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.words.copy(), self.n)

    def _check_site(self, r: int) -> None:
        if not 0 <= r < self.n:
            raise ValueError(f"site {r} out of range for n={self.n}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpinConfig)
            and self.n == other.n
            and bool(np.array_equal(self.words, other.words))
        )

    def __hash__(self):
        return hash((self.n, self.words.tobytes()))

    def __repr__(self):
        if self.n <= 64:
            s = "".join("-" if b else "+" for b in self.to_spins())
            return f"SpinConfig({s})"
        return f"SpinConfig(n={self.n}, n_minus={self.n_minus()})"


@dataclass(frozen=True)
class Lattice1D:
    """Periodic ring of L sites."""

    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")

    @property
    def n_sites(self) -> int:
        return self.L

    @property
    def dimension(self) -> int:
        return 1

    def neighbors(self, r: int) -> tuple[int, int]:
        """(left, right) neighbor indices, wrapping modulo L."""
        return ((r - 1) % self.L, (r + 1) % self.L)

    def triplet(self, r: int) -> tuple[int, int, int]:
        """Sites (r-1, r, r+1) with wraparound; the scramble unit centered at r."""
        return ((r - 1) % self.L, r, (r + 1) % self.L)


# Moore neighborhood offsets (dx, dy), E first then counterclockwise.
MOORE_OFFSETS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True)
class Lattice2D:
    """Periodic torus of Lx x Ly sites, row-major indexing r = y*Lx + x."""

    Lx: int
    Ly: int

    def __post_init__(self):
        if self.Lx < 3 or self.Ly < 3:
            raise ValueError("2d lattices need Lx, Ly >= 3")

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    @property
    def dimension(self) -> int:
        return 2

    def site(self, x: int, y: int) -> int:
        return (y % self.Ly) * self.Lx + (x % self.Lx)

    def coords(self, r: int) -> tuple[int, int]:
        return (r % self.Lx, r // self.Lx)

    def nearest_neighbors(self, r: int) -> tuple[int, int, int, int]:
        """(E, N, W, S) neighbor indices with wraparound."""
        x, y = self.coords(r)
        return (
            self.site(x + 1, y),
            self.site(x, y + 1),
            self.site(x - 1, y),
            self.site(x, y - 1),
        )

    def moore_neighbors(self, r: int) -> tuple[int, ...]:
        """The 8 surrounding sites, order fixed by MOORE_OFFSETS."""
        x, y = self.coords(r)
        return tuple(self.site(x + dx, y + dy) for dx, dy in MOORE_OFFSETS)

    def plaquette(self, r: int) -> tuple[int, int, int, int]:
        """The 2x2 plaquette anchored at its lower-left site r.

        Site order (lower-left, lower-right, upper-left, upper-right) defines
        the local bit layout used by the plaquette update rule.
        """
        x, y = self.coords(r)
        return (
            self.site(x, y),
            self.site(x + 1, y),
            self.site(x, y + 1),
            self.site(x + 1, y + 1),
        )


Lattice = Lattice1D | Lattice2D


@dataclass(frozen=True)
class ParitySector:
    """Global Z2 charge sector: sign = product of all spins (+1 or -1)."""

    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sector sign must be +1 or -1")


EVEN = ParitySector(1)
ODD = ParitySector(-1)


def parity(config: SpinConfig) -> ParitySector:
    """Sector of a configuration: +1 for an even number of minus spins."""
    return EVEN if config.n_minus() % 2 == 0 else ODD


def flip_pair(config: SpinConfig, r: int, r2: int) -> SpinConfig:
    """Return a copy of ``config`` with the spins at r and r2 negated.

    The elementary charge-conserving move: flipping two spins preserves the
    parity sector. Raises ValueError for r == r2 or out-of-range sites.
    """
    if r == r2:
        raise ValueError("flip_pair requires two distinct sites")
    out = config.copy()
    out.flip(r)
    out.flip(r2)
    return out


# ---------------------------------------------------------------------------
# deterministic random-number streams
# ---------------------------------------------------------------------------

_GAMMA = 0x9E3779B97F4A7C15  # splitmix64 increment


def _splitmix64(z: int) -> int:
    z = z & _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """Reproducible per-trajectory randomness.

    Identical (master_seed, stream_id) reproduce a trajectory bit-for-bit;
    distinct stream_ids give statistically independent streams. Child states
    are derived with a splittable splitmix64 mix, so parallel trajectories
    never share state.
    """

    master_seed: int
    stream_id: int = 0

    def kernel_state(self, channel: int = 0) -> np.ndarray:
        """xoshiro256** state (uint64[4]) feeding the compiled sweep kernels."""
        z = (
            self.master_seed
            + self.stream_id * _GAMMA
            + channel * 0xD1342543DE82EF95
        ) & _MASK64
        out = np.empty(4, dtype=np.uint64)
        for i in range(4):
            z = (z + _GAMMA) & _MASK64
            out[i] = _splitmix64(z)
        if not out.any():  # all-zero is the one invalid xoshiro state
            out[0] = 1
        return out

    def numpy_rng(self, channel: int = 1) -> np.random.Generator:
        """numpy Generator for non-kernel sampling (initial states, bootstrap)."""
        ss = np.random.SeedSequence(
            entropy=self.master_seed & _MASK64,
            spawn_key=(self.stream_id & _MASK64, channel),
        )
        return np.random.default_rng(ss)


def random_config_in_sector(
    lattice: Lattice, sector: ParitySector, rng: RngStream | np.random.Generator
) -> SpinConfig:
    """Uniform random configuration with the requested parity, by rejection.

    A uniform bitstring lands in either sector with probability 1/2, so the
    expected number of draws is <= 2.
    """
    gen = rng.numpy_rng() if isinstance(rng, RngStream) else rng
    n = lattice.n_sites
    while True:
        bits = gen.integers(0, 2, size=n, dtype=np.uint8)
        if int(bits.sum()) % 2 == (0 if sector.sign == 1 else 1):
            return SpinConfig.from_spins(bits)
