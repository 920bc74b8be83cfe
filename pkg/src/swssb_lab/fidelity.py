"""Marginal fidelity correlators estimated from configuration snapshots.

For a classical (X-basis diagonal) state the fidelity correlator reduces to
a Bhattacharyya sum: F = sum_x sqrt(p(x) p(x')) where x' is x with the
inserted charged operators applied, i.e. the spins at the insertion points
flipped. The marginal radius-R version evaluates the same sum on the
empirical distribution of the region made of radius-R blocks around the
insertion points, which is estimable from O(2^|region|) snapshots instead
of exponentially many.

Pattern keys pack region bits little-endian in row-major site order: for a
two-point region the block around i comes first, then the block around j,
each ordered left-to-right (1d) or row-major (2d). The flip map toggles the
bit at each block center.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import Lattice, Lattice1D, Lattice2D, SpinConfig

__all__ = [
    "RegionSpec",
    "MarginalHistogram",
    "HistogramSink",
    "bhattacharyya_flip",
    "marginal_one_point_fidelity",
    "marginal_two_point_fidelity",
    "marginal_fidelity",
    "translation_average",
    "TranslationAverage",
    "factorization_gap",
    "write_histogram_archive",
    "read_histogram_archive",
    "InsufficientDataError",
]

MAX_REGION_BITS = 26  # dense count arrays stay under ~0.5 GB


class InsufficientDataError(ValueError):
    """Raised when an estimator is asked to run on too few snapshots."""


def _ring_distance(i: int, j: int, L: int) -> int:
    d = abs(i - j) % L
    return min(d, L - d)


@dataclass(frozen=True)
class RegionSpec:
    """Insertion points and radii defining a marginal-fidelity region.

    One-point regions (j is None) cover the radius-R block around i.
    Two-point regions cover two disjoint blocks around i and j. In 2d the
    radii (Rx, Ry) give (2Rx+1) x (2Ry+1) blocks; in 1d R gives 2R+1 sites.
    """

    dimension: int
    i: int
    j: int | None
    R: int | tuple[int, int]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.dimension == 1 and not isinstance(self.R, int):
            raise ValueError("1d regions take a single integer radius")
        if self.dimension == 2:
            if not (isinstance(self.R, tuple) and len(self.R) == 2):
                raise ValueError("2d regions take a radius pair (Rx, Ry)")

    @property
    def two_point(self) -> bool:
        return self.j is not None

    def block_width(self, lattice: Lattice) -> int:
        if self.dimension == 1:
            return min(2 * self.R + 1, lattice.L)
        rx, ry = self.R
        return (2 * rx + 1) * (2 * ry + 1)

    def _block_sites_1d(self, lattice: Lattice1D, center: int) -> list[int]:
        w = min(2 * self.R + 1, lattice.L)
        return [(center - self.R + k) % lattice.L for k in range(w)]

    def _block_sites_2d(self, lattice: Lattice2D, center: int) -> list[int]:
        rx, ry = self.R
        cx, cy = lattice.coords(center)
        return [
            lattice.site(cx + dx, cy + dy)
            for dy in range(-ry, ry + 1)
            for dx in range(-rx, rx + 1)
        ]

    def sites(self, lattice: Lattice) -> np.ndarray:
        """Region site indices in pattern-key order (block i, then block j)."""
        self.validate(lattice)
        if self.dimension == 1:
            out = self._block_sites_1d(lattice, self.i)
            if self.two_point:
                out = out + self._block_sites_1d(lattice, self.j)
        else:
            out = self._block_sites_2d(lattice, self.i)
            if self.two_point:
                out = out + self._block_sites_2d(lattice, self.j)
        return np.asarray(out, dtype=np.int64)

    def flip_positions(self) -> tuple[int, ...]:
        """Key-bit positions of the insertion points (the block centers)."""
        if self.dimension == 1:
            w = 2 * self.R + 1
            center = self.R
        else:
            rx, ry = self.R
            w = (2 * rx + 1) * (2 * ry + 1)
            center = ry * (2 * rx + 1) + rx
        if self.two_point:
            return (center, w + center)
        return (center,)

    def flip_mask(self) -> int:
        mask = 0
        for p in self.flip_positions():
            mask |= 1 << p
        return mask

    def width(self, lattice: Lattice) -> int:
        return (2 if self.two_point else 1) * self.block_width(lattice)

    def validate(self, lattice: Lattice) -> None:
        if lattice.dimension != self.dimension:
            raise ValueError("region dimension does not match lattice")
        if self.dimension == 1:
            L = lattice.L
            if self.R < 0:
                raise ValueError("radius must be >= 0")
            if self.two_point:
                if 2 * self.R + 1 > L:
                    raise ValueError(f"radius {self.R} too large for L={L}")
                if _ring_distance(self.i, self.j, L) <= 2 * self.R:
                    raise ValueError(
                        f"blocks overlap: ring distance |i-j| must exceed 2R={2 * self.R}"
                    )
            elif self.R > L // 2:
                raise ValueError(f"one-point radius {self.R} exceeds L//2 = {L // 2}")
        else:
            rx, ry = self.R
            if rx < 0 or ry < 0 or 2 * rx + 1 > lattice.Lx or 2 * ry + 1 > lattice.Ly:
                raise ValueError(f"radii {self.R} too large for {lattice}")
            if self.two_point:
                ix, iy = lattice.coords(self.i)
                jx, jy = lattice.coords(self.j)
                if (
                    _ring_distance(ix, jx, lattice.Lx) <= 2 * rx
                    and _ring_distance(iy, jy, lattice.Ly) <= 2 * ry
                ):
                    raise ValueError("blocks overlap: separation too small for radii")
        if self.width(lattice) > MAX_REGION_BITS:
            raise ValueError(
                f"region of {self.width(lattice)} sites exceeds the "
                f"{MAX_REGION_BITS}-bit histogram limit"
            )

    def translate_table(self, lattice: Lattice) -> np.ndarray:
        """Site tables for the region translated to every base point.

        Row t gives the absolute site indices when i (and j, at fixed
        separation) is shifted by translation t; used for translation
        averaging over a translation-invariant ensemble.
        """
        base = self.sites(lattice)
        if self.dimension == 1:
            L = lattice.L
            return (base[None, :] + np.arange(L)[:, None]) % L
        lx, ly = lattice.Lx, lattice.Ly
        bx = base % lx
        by = base // lx
        shifts = np.arange(lattice.n_sites)
        sx = shifts % lx
        sy = shifts // lx
        return ((by[None, :] + sy[:, None]) % ly) * lx + (bx[None, :] + sx[:, None]) % lx


def default_two_point_region(lattice: Lattice, R) -> RegionSpec:
    """Maximal-separation two-point region: j = i + L/2 along the x axis."""
    if lattice.dimension == 1:
        return RegionSpec(1, 0, lattice.L // 2, int(R))
    rx, ry = R if isinstance(R, tuple) else (int(R), int(R))
    return RegionSpec(2, 0, lattice.site(lattice.Lx // 2, 0), (rx, ry))


@dataclass
class MarginalHistogram:
    """Empirical distribution of region-restricted bit patterns.

    counts is dense over the 2^width pattern space; merging histograms of
    the same region is count-wise addition.
    """

    region: RegionSpec
    lattice: Lattice
    counts: np.ndarray
    total: int = 0

    @classmethod
    def empty(cls, region: RegionSpec, lattice: Lattice) -> "MarginalHistogram":
        region.validate(lattice)
        return cls(region, lattice, np.zeros(1 << region.width(lattice), dtype=np.int64))

    def accumulate(self, snapshot: SpinConfig) -> None:
        """Count the region pattern of one snapshot (no translation averaging)."""
        if snapshot.n != self.lattice.n_sites:
            raise ValueError("snapshot geometry does not match region lattice")
        sites = self.region.sites(self.lattice)
        spins = snapshot.to_spins()
        key = 0
        for k, s in enumerate(sites):
            key |= int(spins[s]) << k
        self.counts[key] += 1
        self.total += 1

    def accumulate_keys(self, keys: np.ndarray) -> None:
        _kernels.accumulate_keys(keys, self.counts)
        self.total += keys.shape[0]

    def merge(self, other: "MarginalHistogram") -> "MarginalHistogram":
        if other.counts.shape != self.counts.shape or other.region != self.region:
            raise ValueError("cannot merge histograms over different regions")
        return MarginalHistogram(
            self.region, self.lattice, self.counts + other.counts, self.total + other.total
        )

    def probabilities(self) -> np.ndarray:
        if self.total <= 0:
            raise InsufficientDataError("histogram is empty")
        return self.counts / self.total

    def support_coverage(self) -> float:
        """Observed patterns over pattern-space size; small values flag undersampling."""
        return float(np.count_nonzero(self.counts)) / self.counts.shape[0]


class HistogramSink:
    """Trajectory sink accumulating translation-averaged region patterns.

    Every snapshot contributes one pattern per translation of the region, so
    the histogram pools all base points of a translation-invariant ensemble.
    Optionally keeps per-snapshot keys for snapshot-level bootstrap.
    """

    def __init__(
        self,
        region: RegionSpec,
        lattice: Lattice,
        keep_keys: bool = False,
        translation_average: bool = True,
    ):
        region.validate(lattice)
        self.hist = MarginalHistogram.empty(region, lattice)
        if translation_average:
            self._table = np.ascontiguousarray(region.translate_table(lattice))
        else:
            self._table = np.ascontiguousarray(region.sites(lattice)[None, :])
        self._buf = np.empty(self._table.shape[0], dtype=np.uint64)
        self.keep_keys = keep_keys
        self.keys: list[np.ndarray] = []

    def accept(self, sweep_index: int, spins: np.ndarray) -> None:
        _kernels.extract_keys(spins, self._table, self._buf)
        self.hist.accumulate_keys(self._buf)
        if self.keep_keys:
            self.keys.append(self._buf.copy())


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def bhattacharyya_flip(probs: np.ndarray, flip_mask: int) -> float:
    """sum_x sqrt(p(x) p(x ^ flip_mask)); in [0, 1], 1 iff p is flip-invariant."""
    idx = np.arange(probs.shape[0], dtype=np.int64) ^ flip_mask
    return float(np.sqrt(probs * probs[idx]).sum())


def marginal_two_point_fidelity(hist: MarginalHistogram) -> float:
    """Plug-in two-point marginal fidelity from an empirical histogram.

    The plug-in estimator is biased at small sample counts; check
    hist.support_coverage() when the value is of order the bias scale.
    """
    if not hist.region.two_point:
        raise ValueError("two-point fidelity needs a two-point region")
    return bhattacharyya_flip(hist.probabilities(), hist.region.flip_mask())


def marginal_one_point_fidelity(hist: MarginalHistogram) -> float:
    """Plug-in one-point marginal fidelity from an empirical histogram."""
    if hist.region.two_point:
        raise ValueError("one-point fidelity needs a one-point region")
    return bhattacharyya_flip(hist.probabilities(), hist.region.flip_mask())


def marginal_fidelity(hist: MarginalHistogram) -> float:
    if hist.region.two_point:
        return marginal_two_point_fidelity(hist)
    return marginal_one_point_fidelity(hist)


@dataclass(frozen=True)
class TranslationAverage:
    """Translation-averaged estimate with a bootstrap confidence interval."""

    mean: float
    ci_lo: float
    ci_hi: float
    n_snapshots: int
    support_coverage: float


def translation_average(
    snapshots,
    lattice: Lattice,
    separation: int,
    R,
    *,
    one_point: bool = False,
    n_bootstrap: int = 200,
    confidence: float = 0.95,
    seed: int = 0,
) -> TranslationAverage:
    """Two-point (or one-point) marginal fidelity averaged over base points i.

    Resamples whole snapshots (never sites) for the bootstrap and returns a
    basic bootstrap interval, which keeps coverage sane when the estimator
    sits against the F = 1 boundary. Needs at least 2 snapshots.
    """
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise InsufficientDataError("translation_average needs at least 2 snapshots")
    if lattice.dimension == 1:
        region = RegionSpec(1, 0, None if one_point else separation % lattice.L, int(R))
    else:
        rx, ry = R if isinstance(R, tuple) else (int(R), int(R))
        j = None if one_point else lattice.site(separation, 0)
        region = RegionSpec(2, 0, j, (rx, ry))
    region.validate(lattice)
    table = np.ascontiguousarray(region.translate_table(lattice))
    n_t = table.shape[0]
    keys = np.empty((len(snaps), n_t), dtype=np.uint64)
    for s_idx, snap in enumerate(snaps):
        spins = snap.to_spins() if isinstance(snap, SpinConfig) else np.asarray(snap, np.uint8)
        _kernels.extract_keys(spins, table, keys[s_idx])

    size = 1 << region.width(lattice)
    flip = region.flip_mask()

    def estimate(rows: np.ndarray) -> float:
        counts = np.bincount(keys[rows].ravel(), minlength=size)
        probs = counts / counts.sum()
        return bhattacharyya_flip(probs, flip)

    all_rows = np.arange(len(snaps))
    point = estimate(all_rows)
    rng = np.random.default_rng(seed)
    reps = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        reps[b] = estimate(rng.integers(0, len(snaps), size=len(snaps)))
    lo_q, hi_q = np.quantile(reps, [(1 - confidence) / 2, (1 + confidence) / 2])
    # basic (reverse-percentile) interval: reflects bootstrap bias around the point
    ci_lo, ci_hi = 2 * point - hi_q, 2 * point - lo_q
    counts = np.bincount(keys.ravel(), minlength=size)
    coverage = float(np.count_nonzero(counts)) / size
    return TranslationAverage(point, float(ci_lo), float(ci_hi), len(snaps), coverage)


def factorization_gap(
    hist_ij: MarginalHistogram,
    hist_i: MarginalHistogram,
    hist_j: MarginalHistogram,
) -> float:
    """|F_ij - F_i * F_j|: deviation of the two-point correlator from factorizing."""
    if not hist_ij.region.two_point or hist_i.region.two_point or hist_j.region.two_point:
        raise ValueError("need one two-point and two one-point histograms")
    return abs(
        marginal_two_point_fidelity(hist_ij)
        - marginal_one_point_fidelity(hist_i) * marginal_one_point_fidelity(hist_j)
    )


# ---------------------------------------------------------------------------
# histogram archive (binary, little-endian)
# ---------------------------------------------------------------------------

_MAGIC = b"SWMH"
_VERSION = 1


def _region_to_json(region: RegionSpec) -> dict:
    return {
        "dimension": region.dimension,
        "i": region.i,
        "j": region.j,
        "R": list(region.R) if isinstance(region.R, tuple) else region.R,
    }


def _region_from_json(d: dict) -> RegionSpec:
    R = tuple(d["R"]) if isinstance(d["R"], list) else d["R"]
    return RegionSpec(d["dimension"], d["i"], d["j"], R)


def _lattice_to_json(lattice: Lattice) -> dict:
    if lattice.dimension == 1:
        return {"dimension": 1, "L": lattice.L}
    return {"dimension": 2, "Lx": lattice.Lx, "Ly": lattice.Ly}


def _lattice_from_json(d: dict) -> Lattice:
    if d["dimension"] == 1:
        return Lattice1D(d["L"])
    return Lattice2D(d["Lx"], d["Ly"])


def write_histogram_archive(path, hist: MarginalHistogram, metadata: dict | None = None):
    """Binary archive: magic, version, JSON header, sorted (pattern, count) pairs.

    Layout (all little-endian): 4-byte magic "SWMH", uint32 version, uint32
    header length, UTF-8 JSON header, uint64 pair count, then pairs of
    (uint64 pattern, uint64 count) sorted by pattern.
    """
    header = {
        "region": _region_to_json(hist.region),
        "lattice": _lattice_to_json(hist.lattice),
        "total": hist.total,
        "metadata": metadata or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    nz = np.flatnonzero(hist.counts)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(hdr)))
        fh.write(hdr)
        fh.write(struct.pack("<Q", nz.shape[0]))
        pairs = np.empty((nz.shape[0], 2), dtype="<u8")
        pairs[:, 0] = nz
        pairs[:, 1] = hist.counts[nz]
        fh.write(pairs.tobytes())


def read_histogram_archive(path) -> tuple[MarginalHistogram, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise ValueError(f"{path}: not a histogram archive")
    version, hdr_len = struct.unpack("<II", buf.read(8))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported archive version {version}")
    header = json.loads(buf.read(hdr_len).decode("utf-8"))
    region = _region_from_json(header["region"])
    lattice = _lattice_from_json(header["lattice"])
    (n_pairs,) = struct.unpack("<Q", buf.read(8))
    pairs = np.frombuffer(buf.read(n_pairs * 16), dtype="<u8").reshape(n_pairs, 2)
    hist = MarginalHistogram.empty(region, lattice)
    hist.counts[pairs[:, 0].astype(np.int64)] = pairs[:, 1].astype(np.int64)
    hist.total = int(header["total"])
    return hist, header["metadata"]


def histogram_to_json(hist: MarginalHistogram, max_patterns: int = 4096) -> dict:
    """JSON export for small histograms (nonzero patterns only)."""
    nz = np.flatnonzero(hist.counts)
    if nz.shape[0] > max_patterns:
        raise ValueError(f"histogram has {nz.shape[0]} patterns; too large for JSON export")
    return {
        "region": _region_to_json(hist.region),
        "lattice": _lattice_to_json(hist.lattice),
        "total": hist.total,
        "counts": {int(k): int(hist.counts[k]) for k in nz},
    }
