"""Brute-force ground truth at small system size.

Provides exact Markov generators for the mixed kernels, their steady-state
spaces, connectivity classes of configuration space under the scramble
rules, exact marginal fidelities, information quantities, and a family of
closed-form reference states. Everything here is an independent oracle for
the sampled estimators: distributions are represented either densely (a
2^N probability vector) or by explicit sparse support, and marginals are
computed by direct summation.

Configuration indices follow the packed-bit convention of SpinConfig:
bit r of the index is the minus flag of site r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from . import _kernels
from .dynamics import MixedKernel
from .fidelity import RegionSpec, bhattacharyya_flip
from .lattice import Lattice, Lattice1D, Lattice2D

__all__ = [
    "DENSE_STATE_CAP",
    "GENERATOR_CAP",
    "ExactDistribution",
    "StateFamily",
    "build_state",
    "SparseGenerator",
    "build_generator",
    "SteadyStateResult",
    "steady_states",
    "subspace_max_angle",
    "ConnectivityResult",
    "connectivity_classes",
    "verify_double_stochastic",
    "exact_marginal_fidelity",
    "mutual_information",
    "conditional_mutual_information",
    "one_point_cmi_split",
    "annulus_cmi_split",
    "gibbs_one_point_fidelity",
    "gibbs_transfer_fidelity",
    "rho_w_one_point",
    "rho_w_two_point",
    "partially_dead_marginal_probs",
    "partially_dead_two_point",
    "partially_dead_true_two_point",
    "wandering_cluster_one_point_asymptotic",
    "random_strongly_symmetric",
    "random_weakly_symmetric",
    "ResourceLimitError",
    "NullSpaceAmbiguityError",
]

DENSE_STATE_CAP = 20  # 2^20 probability entries
GENERATOR_CAP = 16  # 2^16 x 2^16 sparse generators


class ResourceLimitError(ValueError):
    """System size exceeds the configured brute-force cap."""


class NullSpaceAmbiguityError(RuntimeError):
    """Singular values sit too close to the rank threshold to call."""


def _require(cond: bool, message: str):
    if not cond:
        raise ResourceLimitError(message)


def parity_bits(n_bits: int) -> np.ndarray:
    """Parity (0 even, 1 odd) of every n_bits-bit configuration index."""
    idx = np.arange(1 << n_bits, dtype=np.uint64)
    return (np.bitwise_count(idx) & 1).astype(np.uint8)


class ExactDistribution:
    """Exact probability distribution over configurations.

    Dense mode stores the full 2^N vector (N <= DENSE_STATE_CAP); sparse
    mode stores explicit support configurations and their probabilities,
    which covers the closed-form families at any N <= 63.
    """

    def __init__(
        self,
        lattice: Lattice,
        probs: np.ndarray | None = None,
        support: np.ndarray | None = None,
        support_probs: np.ndarray | None = None,
    ):
        self.lattice = lattice
        n = lattice.n_sites
        if probs is not None:
            _require(
                n <= DENSE_STATE_CAP,
                f"dense distributions capped at N={DENSE_STATE_CAP}, got {n}",
            )
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (1 << n,):
                raise ValueError(f"need 2^{n} probabilities")
            self.probs = probs
            self.support = None
            self.support_probs = None
        else:
            if n > 63:
                raise ResourceLimitError("sparse distributions capped at N=63")
            order = np.argsort(support)
            self.probs = None
            self.support = np.asarray(support, dtype=np.uint64)[order]
            self.support_probs = np.asarray(support_probs, dtype=float)[order]
        total = self._total()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if self._min() < -1e-15:
            raise ValueError("negative probability")

    def _total(self) -> float:
        v = self.probs if self.probs is not None else self.support_probs
        return float(v.sum())

    def _min(self) -> float:
        v = self.probs if self.probs is not None else self.support_probs
        return float(v.min())

    @property
    def is_dense(self) -> bool:
        return self.probs is not None

    def dense(self) -> np.ndarray:
        """Full 2^N vector (materializes sparse support; respects the cap)."""
        if self.is_dense:
            return self.probs
        n = self.lattice.n_sites
        _require(n <= DENSE_STATE_CAP, f"cannot densify N={n}")
        out = np.zeros(1 << n)
        np.add.at(out, self.support.astype(np.int64), self.support_probs)
        return out

    def marginal(self, sites) -> np.ndarray:
        """Exact marginal over the given sites, little-endian pattern order."""
        sites = np.asarray(sites, dtype=np.int64)
        w = sites.shape[0]
        if self.is_dense:
            idx = np.arange(self.probs.shape[0], dtype=np.int64)
            weights = self.probs
        else:
            idx = self.support.astype(np.int64)
            weights = self.support_probs
        keys = np.zeros(idx.shape[0], dtype=np.int64)
        for k, s in enumerate(sites):
            keys |= ((idx >> int(s)) & 1) << k
        return np.bincount(keys, weights=weights, minlength=1 << w)


@dataclass(frozen=True)
class StateFamily:
    """Named closed-form reference state.

    kinds: rho0, rho0_minus, rhoW, rho_plus (even sector minus the all-plus
    state), rho_minus (odd sector), classical_memory, partially_dead(s),
    gibbs_1d(beta), wandering_cluster(a_n as ((n, weight), ...)).
    """

    kind: str
    s: float | None = None
    beta: float | None = None
    a_n: tuple[tuple[int, float], ...] | None = None


def _uniform_sector(lattice: Lattice, odd: bool, exclude: tuple[int, ...] = ()) -> ExactDistribution:
    n = lattice.n_sites
    _require(n <= DENSE_STATE_CAP, f"sector state needs dense vector, N={n} over cap")
    par = parity_bits(n)
    mask = par == (1 if odd else 0)
    for e in exclude:
        mask[e] = False
    probs = mask.astype(float)
    return ExactDistribution(lattice, probs / probs.sum())


def build_state(lattice: Lattice, family: StateFamily) -> ExactDistribution:
    """Construct the exact probability vector of a named state family."""
    n = lattice.n_sites
    kind = family.kind
    if kind == "rho0":
        return ExactDistribution(
            lattice, support=np.array([0], np.uint64), support_probs=np.array([1.0])
        )
    if kind == "rho0_minus":
        all_minus = (1 << n) - 1
        return ExactDistribution(
            lattice, support=np.array([all_minus], np.uint64), support_probs=np.array([1.0])
        )
    if kind == "rhoW":
        support = np.array([1 << r for r in range(n)], np.uint64)
        return ExactDistribution(lattice, support=support, support_probs=np.full(n, 1.0 / n))
    if kind == "classical_memory":
        all_minus = (1 << n) - 1
        return ExactDistribution(
            lattice,
            support=np.array([0, all_minus], np.uint64),
            support_probs=np.array([0.5, 0.5]),
        )
    if kind == "rho_plus":
        return _uniform_sector(lattice, odd=False, exclude=(0,))
    if kind == "rho_minus":
        return _uniform_sector(lattice, odd=True)
    if kind == "partially_dead":
        s = family.s
        if s is None or not 0.0 <= s <= 1.0:
            raise ValueError("partially_dead needs survival probability s in [0, 1]")
        par = parity_bits(n)
        _require(n <= DENSE_STATE_CAP, f"partially_dead needs dense vector, N={n} over cap")
        probs = np.zeros(1 << n)
        even = np.flatnonzero(par == 0)
        probs[even] = s / (even.shape[0] - 1)
        probs[0] = 1.0 - s
        return ExactDistribution(lattice, probs)
    if kind == "gibbs_1d":
        beta = family.beta
        if beta is None or beta < 0 or not math.isfinite(beta):
            raise ValueError("gibbs_1d needs finite beta >= 0")
        if lattice.dimension != 1:
            raise ValueError("gibbs_1d needs a 1d lattice")
        return ExactDistribution(lattice, _gibbs_probs(beta, lattice.L))
    if kind == "wandering_cluster":
        if lattice.dimension != 1:
            raise ValueError("wandering_cluster needs a 1d lattice")
        if not family.a_n:
            raise ValueError("wandering_cluster needs a_n weights")
        total = sum(w for _, w in family.a_n)
        if abs(total - 1.0) > 1e-12:
            raise ValueError("wandering_cluster weights must sum to 1")
        L = lattice.L
        acc: dict[int, float] = {}
        for size, weight in family.a_n:
            if not 1 <= size < L:
                raise ValueError(f"cluster size {size} out of range for L={L}")
            for r in range(L):
                start = (r - (size - 1) // 2) % L
                cfg = 0
                for k in range(size):
                    cfg |= 1 << ((start + k) % L)
                acc[cfg] = acc.get(cfg, 0.0) + weight / L
        support = np.fromiter(acc.keys(), dtype=np.uint64, count=len(acc))
        probs = np.fromiter(acc.values(), dtype=float, count=len(acc))
        return ExactDistribution(lattice, support=support, support_probs=probs)
    raise ValueError(f"unknown state family kind: {kind}")


def _gibbs_probs(beta: float, L: int) -> np.ndarray:
    """Ferromagnetic nearest-neighbor Ising weights exp(beta * sum_r x_r x_{r+1})."""
    _require(L <= DENSE_STATE_CAP, f"Gibbs enumeration capped at L={DENSE_STATE_CAP}")
    idx = np.arange(1 << L, dtype=np.uint64)
    shifted = ((idx >> np.uint64(1)) | ((idx & np.uint64(1)) << np.uint64(L - 1)))
    unsat = np.bitwise_count(idx ^ shifted).astype(np.int64)  # broken bonds
    energy = L - 2 * unsat  # sum of x_r x_{r+1}
    w = np.exp(beta * energy.astype(float))
    return w / w.sum()


# ---------------------------------------------------------------------------
# generators and steady states
# ---------------------------------------------------------------------------


@dataclass
class SparseGenerator:
    """Classical Markov generator of one sweep-normalized mixed kernel.

    matrix[y, x] is the rate x -> y (columns are source states); diagonals
    hold minus the column rate sums, so columns sum to zero and transitions
    connect equal-parity states only.
    """

    lattice: Lattice
    kernel: MixedKernel
    matrix: scipy.sparse.csr_matrix

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


def _scramble_tables(lattice: Lattice):
    """Scramble-unit site groups and scattered target patterns for the lattice."""
    if lattice.dimension == 1:
        groups = np.array([list(Lattice1D(lattice.L).triplet(r)) for r in range(lattice.L)],
                          dtype=np.int64)
        even_t = _kernels.TRIPLET_EVEN
        odd_t = _kernels.TRIPLET_ODD
        frozen = np.zeros(8, dtype=np.bool_)
        frozen[0] = True
    else:
        groups = np.array([list(lattice.plaquette(r)) for r in range(lattice.n_sites)],
                          dtype=np.int64)
        even_t = _kernels.PLAQ_EVEN
        odd_t = _kernels.PLAQ_ODD
        frozen = np.zeros(16, dtype=np.bool_)
        frozen[0] = True
        frozen[15] = True
    g = groups.shape[1]
    masks = np.zeros(groups.shape[0], dtype=np.int64)
    scatter_even = np.zeros((groups.shape[0], even_t.shape[0]), dtype=np.int64)
    scatter_odd = np.zeros((groups.shape[0], odd_t.shape[0]), dtype=np.int64)
    for gi in range(groups.shape[0]):
        for k in range(g):
            masks[gi] |= 1 << groups[gi, k]
        for t, pat in enumerate(even_t):
            scatter_even[gi, t] = _scatter(int(pat), groups[gi])
        for t, pat in enumerate(odd_t):
            scatter_odd[gi, t] = _scatter(int(pat), groups[gi])
    return groups, masks, scatter_even, scatter_odd, frozen


def _scatter(pattern: int, sites) -> int:
    out = 0
    for k, s in enumerate(sites):
        if (pattern >> k) & 1:
            out |= 1 << int(s)
    return out


def build_generator(lattice: Lattice, kernel: MixedKernel) -> SparseGenerator:
    """Exact generator of the mixed kernel; one time unit is one sweep.

    Enumerates every (site choice x rule choice x scramble outcome)
    elementary update with its exact rate. Self-loops never enter; the
    diagonal is fixed by probability conservation.
    """
    n = lattice.n_sites
    _require(n <= GENERATOR_CAP, f"generators capped at N={GENERATOR_CAP}, got {n}")
    if kernel.dimension != lattice.dimension:
        raise ValueError("kernel dimension does not match lattice")
    n_states = 1 << n
    alpha = kernel.alpha
    idx = np.arange(n_states, dtype=np.int64)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    if alpha < 1.0 and lattice.dimension == 1:
        # absorbing rule: flip (r-1, r) where bit r is set
        for r in range(n):
            flip = (1 << r) | (1 << ((r - 1) % n))
            src = idx[(idx >> r) & 1 == 1]
            rows.append(src ^ flip)
            cols.append(src)
            vals.append(np.full(src.shape[0], 1.0 - alpha))
    if alpha < 1.0 and lattice.dimension == 2:
        r_, c_, v_ = _kernels.toom_rate_entries(
            lattice.Lx, lattice.Ly, kernel.toom_variant == "strict"
        )
        rows.append(r_)
        cols.append(c_)
        vals.append(np.asarray(v_) * (1.0 - alpha))
    if alpha > 0.0:
        groups, masks, sc_even, sc_odd, frozen = _scramble_tables(lattice)
        g = groups.shape[1]
        for gi in range(groups.shape[0]):
            pat = np.zeros(n_states, dtype=np.int64)
            for k in range(g):
                pat |= ((idx >> groups[gi, k]) & 1) << k
            par = (np.bitwise_count(pat.astype(np.uint64)) & 1).astype(np.int64)
            live = ~frozen[pat]
            for sector, scatter in ((0, sc_even[gi]), (1, sc_odd[gi])):
                src = idx[live & (par == sector)]
                rate = alpha / scatter.shape[0]
                for target_bits in scatter:
                    dest = (src & ~masks[gi]) | target_bits
                    keep = dest != src  # self-loops never enter the generator
                    rows.append(dest[keep])
                    cols.append(src[keep])
                    vals.append(np.full(int(keep.sum()), rate))

    if rows:
        r_all = np.concatenate(rows)
        c_all = np.concatenate(cols)
        v_all = np.concatenate(vals)
    else:
        r_all = np.empty(0, np.int64)
        c_all = np.empty(0, np.int64)
        v_all = np.empty(0, float)
    mat = scipy.sparse.coo_matrix((v_all, (r_all, c_all)), shape=(n_states, n_states)).tocsr()
    out_rate = np.asarray(mat.sum(axis=0)).ravel()
    mat = (mat - scipy.sparse.diags(out_rate)).tocsr()
    return SparseGenerator(lattice, kernel, mat)


@dataclass
class SteadyStateResult:
    """Null space of a generator with explicit rank diagnostics."""

    dimension: int
    basis: np.ndarray  # orthonormal columns spanning the kernel
    singular_values: np.ndarray
    threshold: float
    gap: float  # smallest kept / largest zeroed singular value ratio
    ambiguous: bool
    probability_vectors: list[np.ndarray] = field(default_factory=list)


def steady_states(
    gen: SparseGenerator, rel_tol: float = 1e-9, dense_cap: int = 4096
) -> SteadyStateResult:
    """Orthonormal basis of the generator kernel by SVD thresholding.

    Singular values below rel_tol * s_max count as zero. If any singular
    value falls within a factor 100 of the threshold the rank is flagged
    ambiguous (and an error raised) rather than silently resolved.
    """
    n = gen.n_states
    _require(n <= dense_cap, f"dense null space capped at {dense_cap} states, got {n}")
    M = gen.matrix.toarray()
    _, s, Vt = np.linalg.svd(M)
    s_max = s[0] if s.shape[0] else 1.0
    threshold = rel_tol * s_max
    zero = s <= threshold
    dim = int(zero.sum())
    near = (s > threshold / 100) & (s < threshold * 100)
    ambiguous = bool(near.any())
    largest_zero = float(s[zero].max()) if dim else 0.0
    smallest_kept = float(s[~zero].min()) if dim < s.shape[0] else np.inf
    gap = smallest_kept / largest_zero if largest_zero > 0 else np.inf
    basis = Vt[s.shape[0] - dim:].T if dim else np.empty((n, 0))
    prob_vectors = []
    for k in range(basis.shape[1]):
        v = basis[:, k]
        v = np.where(np.abs(v) < 1e-14, 0.0, v)
        if np.all(v >= 0) or np.all(v <= 0):
            total = v.sum()
            if total != 0:
                prob_vectors.append(v / total)
    result = SteadyStateResult(dim, basis, s, threshold, gap, ambiguous, prob_vectors)
    if ambiguous:
        raise NullSpaceAmbiguityError(
            f"singular values near threshold {threshold:.3e}: "
            f"{s[near]}; rank call unsafe"
        )
    return result


def subspace_max_angle(basis: np.ndarray, targets) -> float:
    """Largest principal angle (radians) between computed and target spans."""
    T = np.column_stack([np.asarray(t, dtype=float) for t in targets])
    angles = scipy.linalg.subspace_angles(basis, T)
    return float(angles.max()) if angles.size else 0.0


# ---------------------------------------------------------------------------
# connectivity classes and rate symmetry
# ---------------------------------------------------------------------------

_RULE_KERNELS = {
    "triplet": lambda: MixedKernel(1, 1.0),
    "absorbing": lambda: MixedKernel(1, 0.0),
    "plaquette": lambda: MixedKernel(2, 1.0, "strict"),
    "toom_strict": lambda: MixedKernel(2, 0.0, "strict"),
    "toom_chill": lambda: MixedKernel(2, 0.0, "chill"),
}


@dataclass
class ConnectivityResult:
    """Partition of configuration space under a scramble rule."""

    labels: np.ndarray  # class representative per configuration index
    class_sizes: dict[int, int]

    @property
    def n_classes(self) -> int:
        return len(self.class_sizes)

    def classes(self) -> list[np.ndarray]:
        reps = sorted(self.class_sizes)
        return [np.flatnonzero(self.labels == rep) for rep in reps]


def connectivity_classes(lattice: Lattice, rule: str = None) -> ConnectivityResult:
    """Union-find partition over all nonzero transitions of the SWSSB rule."""
    if rule is None:
        rule = "triplet" if lattice.dimension == 1 else "plaquette"
    if rule not in ("triplet", "plaquette"):
        raise ValueError("connectivity is defined for the scramble rules only")
    n = lattice.n_sites
    _require(n <= GENERATOR_CAP, f"connectivity capped at N={GENERATOR_CAP}, got {n}")
    groups, masks, sc_even, sc_odd, frozen = _scramble_tables(lattice)
    labels = _kernels.scramble_class_labels(n, groups, masks, sc_even, sc_odd, frozen)
    reps, counts = np.unique(labels, return_counts=True)
    return ConnectivityResult(labels, {int(r): int(c) for r, c in zip(reps, counts)})


def verify_double_stochastic(lattice: Lattice, rule: str) -> tuple[bool, float]:
    """Check rate(S -> S') == rate(S' -> S) for every pair under the rule.

    Returns (symmetric within 1e-12, worst asymmetry). The scramble rules
    pass; the absorbing/erosion rules are irreversible and fail.
    """
    if rule not in _RULE_KERNELS:
        raise ValueError(f"unknown rule {rule!r}; choose from {sorted(_RULE_KERNELS)}")
    gen = build_generator(lattice, _RULE_KERNELS[rule]())
    diff = (gen.matrix - gen.matrix.T).tocoo()
    worst = float(np.abs(diff.data).max()) if diff.nnz else 0.0
    return worst < 1e-12, worst


# ---------------------------------------------------------------------------
# exact fidelities and information quantities
# ---------------------------------------------------------------------------


def exact_marginal_fidelity(dist: ExactDistribution, region: RegionSpec) -> float:
    """Marginal fidelity of an exact distribution: exact marginal, then
    the Bhattacharyya sum under the insertion-point flip map."""
    region.validate(dist.lattice)
    probs = dist.marginal(region.sites(dist.lattice))
    return bhattacharyya_flip(probs, region.flip_mask())


def _entropy(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-(p * np.log(p)).sum())


def mutual_information(dist: ExactDistribution, region_a, region_c) -> float:
    """Shannon mutual information I(A:C) in nats from exact marginals."""
    a = np.asarray(region_a, dtype=np.int64)
    c = np.asarray(region_c, dtype=np.int64)
    if np.intersect1d(a, c).size:
        raise ValueError("regions must be disjoint")
    h_a = _entropy(dist.marginal(a))
    h_c = _entropy(dist.marginal(c))
    h_ac = _entropy(dist.marginal(np.concatenate([a, c])))
    return max(h_a + h_c - h_ac, 0.0)


def conditional_mutual_information(dist: ExactDistribution, region_a, region_b, region_c) -> float:
    """I(A:C|B) = H(AB) + H(BC) - H(B) - H(ABC), in nats."""
    a = np.asarray(region_a, dtype=np.int64)
    b = np.asarray(region_b, dtype=np.int64)
    c = np.asarray(region_c, dtype=np.int64)
    for x, y in ((a, b), (a, c), (b, c)):
        if np.intersect1d(x, y).size:
            raise ValueError("regions must be pairwise disjoint")
    if b.size == 0:
        return mutual_information(dist, a, c)
    h_ab = _entropy(dist.marginal(np.concatenate([a, b])))
    h_bc = _entropy(dist.marginal(np.concatenate([b, c])))
    h_b = _entropy(dist.marginal(b))
    h_abc = _entropy(dist.marginal(np.concatenate([a, b, c])))
    return max(h_ab + h_bc - h_b - h_abc, 0.0)


def one_point_cmi_split(lattice: Lattice, i: int, R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split for the CMI bound on the radius-R one-point fidelity.

    A is the insertion site, B the rest of the radius-R block (the buffer
    inside the traced-in region), C everything else, so that A u B is
    exactly the region the marginal fidelity keeps.
    """
    region = RegionSpec(lattice.dimension, i, None, R)
    block = region.sites(lattice)
    a = np.array([i], dtype=np.int64)
    b = np.setdiff1d(block, a)
    c = np.setdiff1d(np.arange(lattice.n_sites, dtype=np.int64), block)
    return a, b, c


def annulus_cmi_split(lattice: Lattice, i: int, R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Alternative split: A = radius-R block, B = annulus out to 2R, C = rest."""
    inner = RegionSpec(lattice.dimension, i, None, R).sites(lattice)
    if lattice.dimension == 1:
        outer_R = min(2 * R, lattice.L // 2)
    else:
        outer_R = (min(2 * R[0], (lattice.Lx - 1) // 2), min(2 * R[1], (lattice.Ly - 1) // 2))
    outer = RegionSpec(lattice.dimension, i, None, outer_R).sites(lattice)
    b = np.setdiff1d(outer, inner)
    c = np.setdiff1d(np.arange(lattice.n_sites, dtype=np.int64), outer)
    return inner, b, c


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def rho_w_one_point(L: int, R: int) -> float:
    """One-point marginal fidelity of the single-error ensemble: 2 sqrt(L-2R-1)/L."""
    return 2.0 * math.sqrt(L - 2 * R - 1) / L


def rho_w_two_point(L: int) -> float:
    """Two-point marginal fidelity of the single-error ensemble: 2/L for any R."""
    return 2.0 / L


def partially_dead_marginal_probs(L: int, R: int, s: float) -> tuple[float, float]:
    """(p_0, p_other) of the partially dead state's two-block marginal.

    The region holds m = 2(2R+1) sites; every nonzero local pattern has
    2^(L-m-1) even-parity completions while the zero pattern loses the
    all-plus configuration, out of 2^(L-1) - 1 states carrying weight s.
    """
    m = 2 * (2 * R + 1)
    if m >= L:
        raise ValueError("region must be smaller than the ring")
    n_even_minus = float(2 ** (L - 1) - 1)
    completions = float(2 ** (L - m - 1))
    p0 = (1.0 - s) + s * (completions - 1.0) / n_even_minus
    px = s * completions / n_even_minus
    return p0, px


def partially_dead_two_point(L: int, R: int, s: float) -> float:
    """Closed-form radius-R two-point marginal fidelity of s*rho_- + (1-s)*rho_0.

    2 sqrt(p_0 p_x) from the zero pattern exchanging with the
    insertion-point pattern, plus (2^m - 2) p_x from the remaining patterns
    mapping among themselves.
    """
    m = 2 * (2 * R + 1)
    p0, px = partially_dead_marginal_probs(L, R, s)
    return 2.0 * math.sqrt(p0 * px) + (2**m - 2) * px


def partially_dead_true_two_point(L: int, s: float) -> float:
    """Full (radius-free) two-point fidelity of the partially dead state."""
    n_even_minus = float(2 ** (L - 1) - 1)
    return 2.0 * math.sqrt(s * (1.0 - s) / n_even_minus) + s * (n_even_minus - 1.0) / n_even_minus


def wandering_cluster_one_point_asymptotic(L: int, R: int, a_n: dict[int, float]) -> float:
    """Leading-order one-point marginal fidelity of a wandering error cluster.

    2 sqrt((1 - (2R + <n>)/L) a_1 / L), accurate to O(1/L); the all-plus
    pattern exchanges with the lone single-site cluster at the center.
    """
    mean_n = sum(n * w for n, w in a_n.items())
    a1 = a_n.get(1, 0.0)
    return 2.0 * math.sqrt((1.0 - (2 * R + mean_n) / L) * a1 / L)


def gibbs_transfer_fidelity(beta: float, L: int) -> float:
    """Transfer-matrix one-point fidelity of the 1d Gibbs chain, any R >= 1.

    Flipping spin i cancels its two bond weights, so F equals the partition
    function with those bonds removed over the full one:
    cosh(beta)^-2 / (1 + tanh(beta)^L).
    """
    return math.cosh(beta) ** -2 / (1.0 + math.tanh(beta) ** L)


def gibbs_one_point_fidelity(beta: float, L: int, R: int = 1, method: str = "auto") -> float:
    """Exact radius-R one-point fidelity of the ferromagnetic Gibbs chain.

    R = 0 gives 1 (the single-site marginal is flip-symmetric); any R >= 1
    gives the R-independent value, by enumeration for small L or the
    transfer matrix otherwise. The two paths agree to 1e-10.
    """
    if beta < 0 or not math.isfinite(beta):
        raise ValueError("beta must be finite and >= 0")
    if R == 0:
        return 1.0
    if method == "auto":
        method = "enumerate" if L <= GENERATOR_CAP else "transfer"
    if method == "transfer":
        return gibbs_transfer_fidelity(beta, L)
    if method != "enumerate":
        raise ValueError("method must be 'auto', 'enumerate', or 'transfer'")
    probs = _gibbs_probs(beta, L)
    idx = np.arange(probs.shape[0], dtype=np.int64)
    return float(np.sqrt(probs * probs[idx ^ 1]).sum())  # flip site 0


# ---------------------------------------------------------------------------
# randomized symmetric states for the bound suite
# ---------------------------------------------------------------------------


def random_strongly_symmetric(
    lattice: Lattice, rng: np.random.Generator, odd: bool | None = None, sparsity: float = 0.0
) -> ExactDistribution:
    """Random distribution supported on a single parity sector."""
    n = lattice.n_sites
    par = parity_bits(n)
    if odd is None:
        odd = bool(rng.integers(0, 2))
    probs = np.where(par == (1 if odd else 0), rng.exponential(1.0, 1 << n), 0.0)
    if sparsity > 0:
        probs *= rng.random(1 << n) >= sparsity
    if probs.sum() == 0:
        probs[np.flatnonzero(par == (1 if odd else 0))[0]] = 1.0
    return ExactDistribution(lattice, probs / probs.sum())


def random_weakly_symmetric(
    lattice: Lattice, rng: np.random.Generator, sparsity: float = 0.0
) -> ExactDistribution:
    """Random distribution invariant under the global spin flip."""
    n = lattice.n_sites
    probs = rng.exponential(1.0, 1 << n)
    if sparsity > 0:
        probs *= rng.random(1 << n) >= sparsity
    probs = probs + probs[::-1]  # global flip maps index x to 2^n - 1 - x
    if probs.sum() == 0:
        probs[0] = probs[-1] = 1.0
    return ExactDistribution(lattice, probs / probs.sum())
