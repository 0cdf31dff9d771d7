"""Single-site potential laws and the effective quantities they induce.

For a mean-zero law of the potential ``v`` supported in [-1, 1] and a
disorder strength ``lam > 0``, every energy E outside the scaled support
``lam*[v_minus, v_plus]`` yields a reciprocal inverse moment

    h(E, lam) = 1 / E_v[ 1/(E - lam*v) ],

the harmonic average of the shifted variable ``E - lam*v``.  Where |h| < 2
the free dynamics is elliptic with phase ``k = arccos(h/2)``, and the spread
of ``1/(E - lam*v)`` around ``1/h``,

    sigma2_eff = Var_v[ 1/(E - lam*v) ],

sets the growth constant

    gamma = h^4 * sigma2_eff / (2 * (4 - h^2))

of the transfer-matrix products.  The energy window

    I(lam) = { E outside lam*[v_minus, v_plus] : |h| < 2 }

consists of at most two intervals; its sub-window

    J(lam, C) = { E in I(lam) : gamma / C <= 1/2 }

separates singular continuous from pure point behaviour at growth rate
dimension 2.  All of these are computed here from closed forms where the law
admits one (two-point, uniform, triangular) and from exact weighted sums or
adaptive quadrature otherwise, with bisection for the window endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DistributionError, DomainError

# Energies are never evaluated closer than this to the scaled support edge:
# the inverse moment may diverge there and h tends to its edge limit.
EDGE_MARGIN = 1e-9

_ATOL_WEIGHTS = 1e-12
_BISECT_TOL_I = 1e-10
_BISECT_TOL_J = 1e-8


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialDistribution:
    """A single-site law: two-point, uniform, triangular or finite discrete.

    ``atoms`` is the (value, weight) table for discrete kinds; continuous
    kinds carry an analytic density on [-1, 1].
    """

    kind: str
    v_minus: float
    v_plus: float
    sigma2: float
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("bernoulli", "uniform", "triangular", "discrete"):
            raise DistributionError(f"unknown distribution kind {self.kind!r}")
        if not (-1.0 <= self.v_minus < 0.0 < self.v_plus <= 1.0):
            raise DistributionError(
                f"support [{self.v_minus}, {self.v_plus}] must straddle 0 inside [-1, 1]"
            )
        if not (0.0 < self.sigma2 <= 1.0):
            raise DistributionError(f"variance {self.sigma2} outside (0, 1]")
        if self.kind in ("bernoulli", "discrete"):
            if not self.atoms:
                raise DistributionError("discrete law needs atoms")
            w = math.fsum(wt for _, wt in self.atoms)
            if abs(w - 1.0) > _ATOL_WEIGHTS:
                raise DistributionError(f"atom weights sum to {w}, not 1")
            if any(wt <= 0.0 for _, wt in self.atoms):
                raise DistributionError("atom weights must be positive")
            if any(not (-1.0 <= v <= 1.0) for v, _ in self.atoms):
                raise DistributionError("atom values must lie in [-1, 1]")
            mean = math.fsum(v * wt for v, wt in self.atoms)
            if abs(mean) > _ATOL_WEIGHTS:
                raise DistributionError(f"law has mean {mean}, not 0")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def bernoulli() -> "PotentialDistribution":
        """Symmetric two-point law on {-1, +1}."""
        return PotentialDistribution(
            kind="bernoulli", v_minus=-1.0, v_plus=1.0, sigma2=1.0,
            atoms=((-1.0, 0.5), (1.0, 0.5)),
        )

    @staticmethod
    def uniform() -> "PotentialDistribution":
        """Uniform law on [-1, 1], variance 1/3."""
        return PotentialDistribution(
            kind="uniform", v_minus=-1.0, v_plus=1.0, sigma2=1.0 / 3.0,
        )

    @staticmethod
    def triangular() -> "PotentialDistribution":
        """Symmetric triangular law with density 1 - |v| on [-1, 1], variance 1/6."""
        return PotentialDistribution(
            kind="triangular", v_minus=-1.0, v_plus=1.0, sigma2=1.0 / 6.0,
        )

    @staticmethod
    def discrete(atoms) -> "PotentialDistribution":
        """Finite mean-zero law from a (value, weight) table."""
        atoms = tuple((float(v), float(w)) for v, w in atoms)
        values = [v for v, _ in atoms]
        var = math.fsum(v * v * w for v, w in atoms)
        return PotentialDistribution(
            kind="discrete", v_minus=min(values), v_plus=max(values),
            sigma2=var, atoms=atoms,
        )

    # -- helpers -----------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("bernoulli", "discrete")

    def density(self, v: float) -> float:
        """Lebesgue density for the continuous kinds."""
        if self.kind == "uniform":
            return 0.5 if -1.0 <= v <= 1.0 else 0.0
        if self.kind == "triangular":
            return max(0.0, 1.0 - abs(v))
        raise DistributionError(f"{self.kind} law has no density")

    def support_components(self, lam: float) -> list[tuple[float, float]]:
        """Connected components of lam * supp(law), as closed intervals."""
        if self.is_discrete:
            pts = sorted(lam * v for v, _ in self.atoms)
            return [(p, p) for p in pts]
        return [(lam * self.v_minus, lam * self.v_plus)]


def sample(dist: PotentialDistribution, rng: np.random.Generator, size=None):
    """Draw from the law; a scalar for ``size=None``, else an ndarray."""
    if dist.kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=size)
    if dist.kind == "triangular":
        return rng.triangular(-1.0, 0.0, 1.0, size=size)
    values = np.array([v for v, _ in dist.atoms])
    weights = np.array([w for _, w in dist.atoms])
    out = rng.choice(values, size=size, p=weights)
    return out


# ---------------------------------------------------------------------------
# inverse moments
# ---------------------------------------------------------------------------

def _check_outside_support(dist: PotentialDistribution, E: float, lam: float):
    if lam < 0.0:
        raise DomainError("disorder strength must be >= 0", reason="lambda")
    if lam == 0.0:
        if E == 0.0:
            raise DomainError("E = 0 with lam = 0 is singular", reason="inside_support")
        return
    lo, hi = lam * dist.v_minus, lam * dist.v_plus
    margin = EDGE_MARGIN * max(1.0, lam)
    if lo - margin < E < hi + margin:
        # inside the closed scaled-support hull: denominators change sign
        # (or the evaluation sits within the edge margin where the moment
        # may diverge), except in gaps of a discrete law handled below
        if dist.is_discrete and all(abs(E - lam * v) >= margin for v, _ in dist.atoms):
            return  # inside a gap of the support: moments are finite
        raise DomainError(
            f"E = {E} lies in the scaled support region [{lo}, {hi}]",
            reason="inside_support",
        )


def inverse_moment(dist: PotentialDistribution, E: float, lam: float) -> float:
    """E_v[ 1/(E - lam*v) ], by closed form or exact weighted sum.

    Outside the scaled support this is finite and strictly decreasing in E on
    every component of the complement; it may legitimately vanish inside a
    support gap, in which case h = 1/inverse_moment is an infinity.
    """
    _check_outside_support(dist, E, lam)
    if lam == 0.0:
        return 1.0 / E
    if dist.is_discrete:
        return math.fsum(w / (E - lam * v) for v, w in dist.atoms)
    if dist.kind == "uniform":
        return math.log((E + lam) / (E - lam)) / (2.0 * lam)
    # triangular, density 1 - |v|
    x = lam / E
    return ((1.0 + x) * math.log1p(x) + (1.0 - x) * math.log1p(-x)) / (lam * x)


def second_inverse_moment(dist: PotentialDistribution, E: float, lam: float) -> float:
    """E_v[ 1/(E - lam*v)^2 ]."""
    _check_outside_support(dist, E, lam)
    if lam == 0.0:
        return 1.0 / (E * E)
    if dist.is_discrete:
        return math.fsum(w / (E - lam * v) ** 2 for v, w in dist.atoms)
    if dist.kind == "uniform":
        return 1.0 / (E * E - lam * lam)
    return math.log(E * E / (E * E - lam * lam)) / (lam * lam)


def inverse_moment_quadrature(dist: PotentialDistribution, E: float, lam: float,
                              power: int = 1) -> float:
    """Adaptive Gauss-Kronrod evaluation of E_v[ 1/(E - lam*v)^power ].

    Cross-check route for the continuous closed forms, and the general path
    for laws given only by a density.
    """
    _check_outside_support(dist, E, lam)
    val, _ = integrate.quad(
        lambda v: dist.density(v) / (E - lam * v) ** power,
        dist.v_minus, dist.v_plus, epsabs=0.0, epsrel=1e-10, limit=200,
    )
    return val


# ---------------------------------------------------------------------------
# effective quantities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveQuantities:
    """The (E, lam)-derived scalars driving the transfer-matrix dynamics."""

    E: float
    lam: float
    h: float            # harmonic average, the effective band energy 2 cos k
    sigma2_eff: float   # variance of 1/(E - lam*v)
    gamma: float        # growth constant h^4 sigma2_eff / (2 (4 - h^2))
    k: float            # phase in (0, pi) with 2 cos k = h

    @property
    def sin_k(self) -> float:
        return math.sin(self.k)


def effective_quantities(dist: PotentialDistribution, E: float, lam: float) -> EffectiveQuantities:
    """Compute h, sigma2_eff, gamma and k for an energy in the valid window.

    Raises DomainError with reason ``inside_support`` or ``h_too_large`` when
    E is not in I(lam).  lam = 0 is the analytic degenerate limit: h = E,
    sigma2_eff = gamma = 0, valid for |E| < 2.
    """
    if lam == 0.0:
        if abs(E) >= 2.0:
            raise DomainError(f"|h| = |E| = {abs(E)} >= 2", reason="h_too_large")
        k = math.acos(E / 2.0)
        return EffectiveQuantities(E=E, lam=lam, h=E, sigma2_eff=0.0, gamma=0.0, k=k)
    margin = EDGE_MARGIN * max(1.0, lam)
    if lam * dist.v_minus - margin < E < lam * dist.v_plus + margin:
        # the window excludes the whole scaled-support hull, including gaps
        # of a discrete law where the moments themselves are finite
        raise DomainError(f"E = {E} lies in the scaled support hull",
                          reason="inside_support")
    m1 = inverse_moment(dist, E, lam)
    if m1 == 0.0:
        raise DomainError("inverse moment vanishes: h is infinite", reason="h_too_large")
    h = 1.0 / m1
    if abs(h) >= 2.0:
        raise DomainError(f"|h| = {abs(h)} >= 2: E outside I(lambda)", reason="h_too_large")
    m2 = second_inverse_moment(dist, E, lam)
    sigma2_eff = max(0.0, m2 - m1 * m1)
    gamma = h ** 4 * sigma2_eff / (2.0 * (4.0 - h * h))
    k = math.acos(h / 2.0)
    return EffectiveQuantities(E=E, lam=lam, h=h, sigma2_eff=sigma2_eff, gamma=gamma, k=k)


# ---------------------------------------------------------------------------
# interval sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, x: float) -> bool:
        if self.lo < x < self.hi:
            return True
        if x == self.lo and self.lo_closed:
            return True
        if x == self.hi and self.hi_closed:
            return True
        return False

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class IntervalSet:
    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        for a, b in zip(self.intervals, self.intervals[1:]):
            if not a.hi <= b.lo:
                raise DomainError("intervals overlap or are unsorted")

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x: float) -> bool:
        return any(iv.contains(x) for iv in self.intervals)

    @property
    def total_length(self) -> float:
        return sum(iv.length for iv in self.intervals)


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    """Root of a function with f(lo), f(hi) of opposite sign (monotone use)."""
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def i_lambda(dist: PotentialDistribution, lam: float) -> IntervalSet:
    """The valid energy window I(lam): outside the scaled support, |h| < 2.

    The window consists of at most two open intervals hugging the scaled
    support; either may be empty at large disorder.  Working with the inverse
    moment m (strictly decreasing per component of the complement, |h| < 2
    iff |m| > 1/2) avoids the poles of h entirely.
    """
    if lam <= 0.0:
        raise DomainError("i_lambda needs lam > 0", reason="lambda")
    margin = EDGE_MARGIN * max(1.0, lam)
    out = []

    # right component (lam*v_plus, c_lambda): m decreases from its edge value
    # to 0+, so the window is nonempty iff m > 1/2 just outside the edge.
    lo = lam * dist.v_plus + margin
    hi = 2.0 + lam * dist.v_plus + 1.0
    if inverse_moment(dist, lo, lam) > 0.5:
        c = _bisect(lambda e: inverse_moment(dist, e, lam) - 0.5, lo, hi, _BISECT_TOL_I)
        out.append(Interval(lam * dist.v_plus, c, lo_closed=False, hi_closed=False))

    # left component (c'_lambda, lam*v_minus): mirror with m < -1/2.
    hi_l = lam * dist.v_minus - margin
    lo_l = -(2.0 + lam * abs(dist.v_minus) + 1.0)
    if inverse_moment(dist, hi_l, lam) < -0.5:
        c = _bisect(lambda e: inverse_moment(dist, e, lam) + 0.5, lo_l, hi_l, _BISECT_TOL_I)
        out.append(Interval(c, lam * dist.v_minus, lo_closed=False, hi_closed=False))

    out.sort(key=lambda iv: iv.lo)
    return IntervalSet(tuple(out))


def j_lambda(dist: PotentialDistribution, lam: float, C: float) -> IntervalSet:
    """The sub-window J = { E in I(lam) : gamma <= C/2 }.

    gamma diverges at the outer edges of I(lam), so J never touches them;
    crossings gamma = C/2 are located by scan plus bisection.
    """
    if C <= 0.0:
        raise DomainError("j_lambda needs C > 0", reason="C")
    window = i_lambda(dist, lam)
    half = 0.5 * C
    out = []
    for iv in window.intervals:
        inset = max(1e-12 * max(1.0, abs(iv.lo), abs(iv.hi)), EDGE_MARGIN * max(1.0, lam))
        grid = np.linspace(iv.lo + inset, iv.hi - inset, 2001)
        vals = np.array([effective_quantities(dist, float(e), lam).gamma for e in grid])
        below = vals <= half

        def gamma_minus(e):
            return effective_quantities(dist, float(e), lam).gamma - half

        i = 0
        n = len(grid)
        while i < n:
            if not below[i]:
                i += 1
                continue
            j = i
            while j + 1 < n and below[j + 1]:
                j += 1
            # endpoints: refine by bisection against the neighbouring grid
            # point unless the run touches the window boundary
            if i == 0:
                lo, lo_closed = iv.lo, False
            else:
                lo, lo_closed = _bisect(gamma_minus, grid[i - 1], grid[i], _BISECT_TOL_J), True
            if j == n - 1:
                hi, hi_closed = iv.hi, False
            else:
                hi, hi_closed = _bisect(gamma_minus, grid[j], grid[j + 1], _BISECT_TOL_J), True
            if lo < hi:
                out.append(Interval(float(lo), float(hi),
                                    lo_closed=lo_closed, hi_closed=hi_closed))
            i = j + 1
    out.sort(key=lambda iv: iv.lo)
    return IntervalSet(tuple(out))
