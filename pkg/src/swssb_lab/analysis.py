"""Post-processing: finite-size-scaling collapse, Binder crossings, intercept
fits, and the mean-field rate-balance estimate of the critical mixing.

The collapse quality function follows the standard master-curve residual:
rescale every point to (x, y) = ((alpha - alpha_c) L^(1/nu), O L^(beta/nu)),
then measure each point's deviation from a local linear fit through the
bracketing points of the other system sizes, normalized by the combined
uncertainty. A perfect collapse with honest error bars gives quality ~ 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.interpolate
import scipy.optimize

__all__ = [
    "ScalingRecord",
    "ScalingDataset",
    "CollapseResult",
    "data_collapse",
    "collapse_quality",
    "BinderCrossing",
    "binder_crossing",
    "MInfinityFit",
    "m_infinity_fit",
    "RateProcess",
    "RateBalanceSpec",
    "paper_rate_balance",
    "meanfield_alpha_c",
    "NoCrossingError",
    "NoRootError",
]


class NoCrossingError(ValueError):
    """Binder curves never cross inside the sampled window."""


class NoRootError(ValueError):
    """The rate balance has no root in [0, 1]."""


@dataclass(frozen=True)
class ScalingRecord:
    alpha: float
    L: int
    observable: str
    mean: float
    std_error: float


@dataclass
class ScalingDataset:
    """(alpha, L, observable, mean, std_error) records feeding the analyses."""

    records: list[ScalingRecord] = field(default_factory=list)

    def add(self, alpha, L, observable, mean, std_error):
        self.records.append(ScalingRecord(float(alpha), int(L), observable, float(mean), float(std_error)))

    def select(self, observable: str, alpha_window: tuple[float, float] | None = None):
        recs = [r for r in self.records if r.observable == observable]
        if alpha_window is not None:
            lo, hi = alpha_window
            recs = [r for r in recs if lo - 1e-12 <= r.alpha <= hi + 1e-12]
        return recs

    def sizes(self, observable: str) -> list[int]:
        return sorted({r.L for r in self.records if r.observable == observable})

    def validate_for_collapse(self, observable: str, alpha_window=None):
        recs = self.select(observable, alpha_window)
        sizes = {r.L for r in recs}
        alphas = {r.alpha for r in recs}
        if len(sizes) < 2 or len(alphas) < 3:
            raise ValueError(
                f"collapse needs >= 2 sizes and >= 3 alphas, got {len(sizes)}/{len(alphas)}"
            )
        if any(r.std_error <= 0 for r in recs):
            raise ValueError("collapse needs strictly positive errors")
        return recs


@dataclass
class CollapseResult:
    alpha_c: float
    beta_over_nu: float
    one_over_nu: float
    quality: float
    converged: bool
    covariance: np.ndarray | None = None
    n_points: int = 0


def collapse_quality(recs, alpha_c: float, beta_over_nu: float, one_over_nu: float) -> float:
    """Master-curve residual of the rescaled data (Houdayer-Hartmann style).

    For each rescaled point, the master curve is the inverse-variance
    weighted linear fit through the nearest bracketing points drawn from the
    other system sizes; points without a bracket are skipped.
    """
    x = np.array([(r.alpha - alpha_c) * r.L**one_over_nu for r in recs])
    y = np.array([r.mean * r.L**beta_over_nu for r in recs])
    dy = np.array([r.std_error * r.L**beta_over_nu for r in recs])
    L = np.array([r.L for r in recs])
    order = np.argsort(x)
    x, y, dy, L = x[order], y[order], dy[order], L[order]
    total = 0.0
    used = 0
    for i in range(x.shape[0]):
        others = L != L[i]
        xo, yo, dyo = x[others], y[others], dy[others]
        below = xo < x[i]
        above = xo > x[i]
        if not below.any() or not above.any():
            continue
        i_lo = np.argmax(xo[below])
        i_hi = np.argmin(xo[above])
        sel_x = np.array([xo[below][i_lo], xo[above][i_hi]])
        sel_y = np.array([yo[below][i_lo], yo[above][i_hi]])
        sel_dy = np.array([dyo[below][i_lo], dyo[above][i_hi]])
        # weighted linear interpolation through the two bracketing points
        x0, x1 = sel_x
        y0, y1 = sel_y
        t = (x[i] - x0) / (x1 - x0)
        y_hat = (1 - t) * y0 + t * y1
        var_hat = ((1 - t) * sel_dy[0]) ** 2 + (t * sel_dy[1]) ** 2
        total += (y[i] - y_hat) ** 2 / (dy[i] ** 2 + var_hat)
        used += 1
    if used == 0:
        return np.inf
    return total / used


def data_collapse(
    ds: ScalingDataset,
    observable: str,
    alpha_window: tuple[float, float] | None = None,
    starts: tuple[tuple[float, float, float], ...] | None = None,
) -> CollapseResult:
    """Fit (alpha_c, beta/nu, 1/nu) minimizing the collapse quality.

    Multi-start Nelder-Mead over a deterministic grid of initial guesses;
    alpha_c is constrained to the sampled window. Non-convergence is
    reported on the result, keeping the best point found.
    """
    recs = ds.validate_for_collapse(observable, alpha_window)
    alphas = sorted({r.alpha for r in recs})
    a_lo, a_hi = alphas[0], alphas[-1]

    if starts is None:
        grid_a = np.linspace(a_lo + 0.1 * (a_hi - a_lo), a_hi - 0.1 * (a_hi - a_lo), 5)
        starts = tuple(
            (a, b, n)
            for a in grid_a
            for b in (0.3, 0.5, 0.8)
            for n in (0.54, 0.8, 1.2)
        )

    def objective(p):
        a, b, n = p
        if not (a_lo <= a <= a_hi) or not (0.0 < b < 3.0) or not (0.05 < n < 4.0):
            return 1e12
        return collapse_quality(recs, a, b, n)

    best = None
    best_ok = False
    for p0 in starts:
        res = scipy.optimize.minimize(
            objective, p0, method="Nelder-Mead",
            options={"xatol": 1e-5, "fatol": 1e-8, "maxiter": 2000},
        )
        if best is None or res.fun < best.fun:
            best = res
            best_ok = bool(res.success)
    return CollapseResult(
        alpha_c=float(best.x[0]),
        beta_over_nu=float(best.x[1]),
        one_over_nu=float(best.x[2]),
        quality=float(best.fun),
        converged=best_ok,
        n_points=len(recs),
    )


@dataclass
class BinderCrossing:
    alpha_m: float
    spread: float
    pair_crossings: dict[tuple[int, int], float]


def binder_crossing(ds: ScalingDataset, L_pairs=None, observable: str = "binder") -> BinderCrossing:
    """Locate the Binder-ratio crossing from monotone-cubic interpolants.

    Solves each size pair's crossing inside the shared sampled window
    (never extrapolating) and returns the mean and spread across pairs.
    """
    recs = ds.select(observable)
    sizes = sorted({r.L for r in recs})
    if len(sizes) < 2:
        raise ValueError("binder_crossing needs at least 2 system sizes")
    curves = {}
    for L in sizes:
        pts = sorted((r.alpha, r.mean) for r in recs if r.L == L)
        if len(pts) < 3:
            raise ValueError(f"need >= 3 alphas per size, got {len(pts)} for L={L}")
        a = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        curves[L] = (a, scipy.interpolate.PchipInterpolator(a, v))
    if L_pairs is None:
        L_pairs = [(a, b) for i, a in enumerate(sizes) for b in sizes[i + 1:]]
    crossings = {}
    for la, lb in L_pairs:
        xa, fa = curves[la]
        xb, fb = curves[lb]
        lo = max(xa.min(), xb.min())
        hi = min(xa.max(), xb.max())
        diff = lambda x: fa(x) - fb(x)  # noqa: E731
        grid = np.linspace(lo, hi, 201)
        vals = diff(grid)
        sign_change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
        if sign_change.size == 0:
            raise NoCrossingError(f"curves L={la} and L={lb} do not cross in [{lo}, {hi}]")
        k = sign_change[0]
        root = scipy.optimize.brentq(diff, grid[k], grid[k + 1], xtol=1e-10)
        crossings[(la, lb)] = float(root)
    values = np.array(list(crossings.values()))
    return BinderCrossing(float(values.mean()), float(values.std()), crossings)


@dataclass
class MInfinityFit:
    alpha: float
    m_inf: float
    c: float
    m_inf_error: float
    residuals: np.ndarray


def m_infinity_fit(ds: ScalingDataset, observable: str = "abs_m") -> dict[float, MInfinityFit]:
    """Weighted least squares of <|m|> = m_inf - c / L^2, per alpha."""
    out: dict[float, MInfinityFit] = {}
    recs = ds.select(observable)
    for alpha in sorted({r.alpha for r in recs}):
        pts = [r for r in recs if r.alpha == alpha]
        if len(pts) < 3:
            raise ValueError(f"m_infinity_fit needs >= 3 sizes per alpha, got {len(pts)}")
        x = np.array([1.0 / r.L**2 for r in pts])
        y = np.array([r.mean for r in pts])
        w = np.array([1.0 / max(r.std_error, 1e-12) for r in pts])
        A = np.column_stack([np.ones_like(x), -x]) * w[:, None]
        b = y * w
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        cov = np.linalg.inv(A.T @ A)
        resid = y - (coef[0] - coef[1] * x)
        out[alpha] = MInfinityFit(
            alpha=float(alpha),
            m_inf=float(coef[0]),
            c=float(coef[1]),
            m_inf_error=float(np.sqrt(cov[0, 0])),
            residuals=resid,
        )
    return out


# ---------------------------------------------------------------------------
# mean-field rate balance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateProcess:
    """One process in the escape/collapse bookkeeping of a three-error bubble.

    rate_coeff multiplies alpha (swssb=True) or 1-alpha (swssb=False);
    distance marks escape processes by how far the freed error lands from
    the remaining bubble (None for expansion/collapse entries).
    """

    label: str
    kind: str  # "escape" | "collapse"
    multiplicity: int
    rate_coeff: Fraction
    swssb: bool
    distance: int | None = None

    def __post_init__(self):
        if self.kind not in ("escape", "collapse"):
            raise ValueError("kind must be 'escape' or 'collapse'")
        if self.multiplicity < 0 or self.rate_coeff < 0:
            raise ValueError("multiplicities and rates must be non-negative")


@dataclass(frozen=True)
class RateBalanceSpec:
    """Process table plus the distance weighting of escape events."""

    processes: tuple[RateProcess, ...]
    distance_weighting: str = "uniform"  # or "half_near"

    def __post_init__(self):
        if self.distance_weighting not in ("uniform", "half_near"):
            raise ValueError("distance_weighting must be 'uniform' or 'half_near'")


def paper_rate_balance(distance_weighting: str = "uniform") -> RateBalanceSpec:
    """Bookkeeping for the size-three error bubble (++---++).

    The erosion rule moves the left error out one site (escape) and
    collapses the bubble from the two right errors; the scramble rule
    collapses the central three-error triple with probability 3/4, while
    the two edge triples each emit a dangerous outcome at 1/4 per pattern
    (hop to distance one, hop to distance two, expansion) and the two
    two-error triples each emit two distance-one escapes at 1/3.
    """
    q = Fraction(1, 4)
    t = Fraction(1, 3)
    processes = (
        RateProcess("erosion_hop_out", "escape", 1, Fraction(1), False, distance=1),
        RateProcess("erosion_collapse", "collapse", 2, Fraction(1), False),
        RateProcess("scramble_center_collapse", "collapse", 1, Fraction(3, 4), True),
        RateProcess("scramble_edge_hop_near", "escape", 2, q, True, distance=1),
        RateProcess("scramble_edge_hop_far", "escape", 2, q, True, distance=2),
        RateProcess("scramble_edge_expand", "escape", 2, q, True, distance=None),
        RateProcess("scramble_pair_escape", "escape", 4, t, True, distance=1),
    )
    return RateBalanceSpec(processes, distance_weighting)


def meanfield_alpha_c(spec: RateBalanceSpec | None = None) -> Fraction:
    """Exact rational root of escape rate = collapse rate, linear in alpha.

    Under half_near weighting, distance-one escapes count half (they are
    easily reabsorbed). Raises NoRootError when the balance has no root in
    [0, 1].
    """
    if spec is None:
        spec = paper_rate_balance()
    # balance = A * alpha + B * (1 - alpha), escape minus collapse
    A = Fraction(0)
    B = Fraction(0)
    for p in spec.processes:
        weight = Fraction(p.multiplicity) * p.rate_coeff
        if (
            spec.distance_weighting == "half_near"
            and p.kind == "escape"
            and p.distance == 1
        ):
            weight = weight / 2
        signed = weight if p.kind == "escape" else -weight
        if p.swssb:
            A += signed
        else:
            B += signed
    # A*alpha + B*(1-alpha) = 0  =>  alpha = B / (B - A)
    if A == B:
        raise NoRootError("balance is constant in alpha")
    alpha = B / (B - A)
    if not 0 <= alpha <= 1:
        raise NoRootError(f"balance root {alpha} lies outside [0, 1]")
    return alpha
