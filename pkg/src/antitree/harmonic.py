"""Moment laws of the shell harmonic mean, checked three ways.

For i.i.d. variables X_j in a sign-definite interval [a, b] the harmonic
mean M_n = n / sum(1/X_j) concentrates around the harmonic average
h = 1/E(1/X) with explicit envelopes driven by sigma2 = Var(1/X):

    0 < E(M_n - h) <= b h^2 sigma2 / n,      E(M_n - h) = h^3 sigma2/n + O(n^-2)
    a^2 h^2 sigma2/n <= E((M_n - h)^2) <= b^2 h^2 sigma2/n,
    E((M_n - h)^2) = h^4 sigma2/n + O(n^-2),
    |E((M_n - h)^3)| = O(n^-2),
    E((M_n - h)^{2m}) <= (2m)!/(2^m m!) * h^{2m} b^{2m} / (a^{2m} n^m).

Here X_j = E - lam*v_j, so a = |E - lam*v_plus| and b = |E - lam*v_minus|
when E is above the scaled support (mirrored below).  The module computes
the theoretical envelopes, exact moments for discrete laws by multiset
enumeration, and Monte Carlo estimates with jackknife errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import _multinomial_counts
from .errors import DomainError, SizeLimitError
from .potentials import (
    PotentialDistribution,
    inverse_moment,
    inverse_moment_quadrature,
    second_inverse_moment,
)
from .streams import seed_stream

_DOM_MOMENT = 5
_ENUM_GUARD = 10 ** 7


@dataclass(frozen=True)
class MomentBounds:
    """Envelope values for the moments of M_n - h at sample count n."""

    n: int
    h: float
    sigma2: float          # Var(1/X)
    a: float               # min |X|
    b: float               # max |X|
    first_upper: float     # bound on |E(M_n - h)|
    first_asym: float      # signed target of n * E(M_n - h): h^3 sigma2
    second_lo: float
    second_hi: float
    second_asym: float     # target of n * E((M_n - h)^2): h^4 sigma2
    sign: float            # +1 above the support, -1 below

    def even_envelope(self, m: int) -> float:
        """Upper bound for E((M_n - h)^{2m})."""
        if m < 1:
            raise DomainError("need m >= 1")
        coeff = math.factorial(2 * m) / (2 ** m * math.factorial(m))
        return coeff * (self.h * self.b / self.a) ** (2 * m) / self.n ** m


def _sign_region(dist: PotentialDistribution, E: float, lam: float) -> float:
    if lam == 0.0:
        return 1.0 if E > 0 else -1.0
    if E > lam * dist.v_plus:
        return 1.0
    if E < lam * dist.v_minus:
        return -1.0
    if dist.is_discrete and all(E != lam * v for v, _ in dist.atoms):
        raise DomainError("E inside the support hull: X changes sign",
                          reason="inside_support")
    raise DomainError("E inside the scaled support", reason="inside_support")


def moment_bounds(dist: PotentialDistribution, E: float, lam: float, n: int) -> MomentBounds:
    """Theoretical moment envelopes for the shell harmonic mean at size n."""
    if n < 1:
        raise DomainError("need n >= 1")
    sign = _sign_region(dist, E, lam)
    lo = abs(E - lam * dist.v_plus)
    hi = abs(E - lam * dist.v_minus)
    a, b = min(lo, hi), max(lo, hi)
    m1 = inverse_moment(dist, E, lam)
    m2 = second_inverse_moment(dist, E, lam)
    sigma2 = max(0.0, m2 - m1 * m1)
    h = 1.0 / m1
    h2 = h * h
    return MomentBounds(
        n=n, h=h, sigma2=sigma2, a=a, b=b,
        first_upper=b * h2 * sigma2 / n,
        first_asym=h * h2 * sigma2,
        second_lo=a * a * h2 * sigma2 / n,
        second_hi=b * b * h2 * sigma2 / n,
        second_asym=h2 * h2 * sigma2,
        sign=sign,
    )


def sigma3(dist: PotentialDistribution, E: float, lam: float) -> float:
    """Third centered moment of 1/X, reported informationally."""
    m1 = inverse_moment(dist, E, lam)
    if dist.is_discrete:
        return math.fsum(w * (1.0 / (E - lam * v) - m1) ** 3 for v, w in dist.atoms)
    if lam == 0.0:
        return 0.0
    m3 = inverse_moment_quadrature(dist, E, lam, power=3)
    m2 = second_inverse_moment(dist, E, lam)
    return m3 - 3.0 * m1 * m2 + 2.0 * m1 ** 3


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def _compositions(total: int, parts: int):
    """Weak compositions of ``total`` into ``parts`` nonnegative integers."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_moments(dist: PotentialDistribution, E: float, lam: float, n: int) -> dict:
    """Exact E((M_n - h)^j), j = 1..3, for a discrete law.

    The harmonic mean is symmetric in the draws, so outcomes compress to
    atom multiplicity vectors with multinomial weights.
    """
    if not dist.is_discrete:
        raise DomainError("exact enumeration needs a discrete law")
    k = len(dist.atoms)
    if k ** n > _ENUM_GUARD:
        raise SizeLimitError(f"{k}^{n} outcome tuples exceed the enumeration guard")
    _sign_region(dist, E, lam)
    rates = [1.0 / (E - lam * v) for v, _ in dist.atoms]
    weights = [w for _, w in dist.atoms]
    h = 1.0 / inverse_moment(dist, E, lam)
    acc = [0.0, 0.0, 0.0]
    for counts in _compositions(n, k):
        log_w = math.lgamma(n + 1)
        inv_sum = 0.0
        for c, w, r in zip(counts, weights, rates):
            log_w += c * math.log(w) - math.lgamma(c + 1)
            inv_sum += c * r
        m_val = n / inv_sum
        weight = math.exp(log_w)
        dev = m_val - h
        acc[0] += weight * dev
        acc[1] += weight * dev * dev
        acc[2] += weight * dev * dev * dev
    return {"n": n, "h": h, "m1": acc[0], "m2": acc[1], "m3": acc[2]}


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    """Monte Carlo moments of M_n - h with jackknife errors and envelopes."""

    n: int
    trials: int
    h: float
    m1: float
    m1_stderr: float
    m2: float
    m2_stderr: float
    m3: float
    m3_stderr: float
    bounds: MomentBounds
    sigma3: float
    exact: dict | None = None
    flags: dict = field(default_factory=dict)


def _jackknife(values: np.ndarray, block: int = 100) -> tuple[float, float]:
    """Mean and leave-one-block-out jackknife standard error."""
    T = len(values)
    nb = max(2, T // block)
    usable = nb * (T // nb)
    blocks = values[:usable].reshape(nb, -1)
    total = blocks.sum()
    mean = total / usable
    per = blocks.shape[1]
    loo = (total - blocks.sum(axis=1)) / (usable - per)
    se = math.sqrt((nb - 1) / nb * float(((loo - loo.mean()) ** 2).sum()))
    return float(mean), se


def mc_moments(dist: PotentialDistribution, E: float, lam: float, n: int,
               trials: int, seed: int, *, exact_if_feasible: bool = True) -> MomentReport:
    """Sample `trials` harmonic means of size n and report centered moments."""
    if trials < 10 ** 3:
        raise DomainError("need at least 1000 trials")
    bounds = moment_bounds(dist, E, lam, n)
    h = bounds.h
    gen = seed_stream(seed, _DOM_MOMENT, n)
    if dist.is_discrete:
        probs = np.array([w for _, w in dist.atoms])
        rates = np.array([1.0 / (E - lam * v) for v, _ in dist.atoms])
        counts = _multinomial_counts(gen, np.full(trials, n, dtype=np.int64), probs)
        M = n / (counts @ rates)
    else:
        M = np.empty(trials)
        chunk = max(1, (4 << 20) // max(1, n))
        from .potentials import sample as draw
        for t0 in range(0, trials, chunk):
            t1 = min(trials, t0 + chunk)
            v = draw(dist, gen, size=(t1 - t0, n))
            M[t0:t1] = n / np.sum(1.0 / (E - lam * v), axis=1)
    dev = M - h
    m1, se1 = _jackknife(dev)
    m2, se2 = _jackknife(dev * dev)
    m3, se3 = _jackknife(dev ** 3)
    exact = None
    if exact_if_feasible and dist.is_discrete and len(dist.atoms) ** n <= _ENUM_GUARD:
        exact = enumerate_moments(dist, E, lam, n)
    flags = {
        "first_moment_positive": bounds.sign * m1 > 0.0,
        "first_within_bound": abs(m1) <= bounds.first_upper + 3.0 * se1,
        "second_in_envelope": (bounds.second_lo - 3.0 * se2 <= m2 <= bounds.second_hi + 3.0 * se2),
    }
    return MomentReport(
        n=n, trials=trials, h=h, m1=m1, m1_stderr=se1, m2=m2, m2_stderr=se2,
        m3=m3, m3_stderr=se3, bounds=bounds, sigma3=sigma3(dist, E, lam),
        exact=exact, flags=flags,
    )
