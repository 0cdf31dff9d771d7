"""Shell-by-shell transfer dynamics in log-scaled form.

A shell of size s with sampled potentials v_1..v_s enters the dynamics only
through the harmonic entry

    a = [ (1/s) * sum_j 1/(E - lam*v_j) ]^(-1),

the 2x2 step matrix ((a, -1), (1, 0)) acting on (u_n, u_{n-1}).  Inside the
valid energy window the step conjugates to shear times rotation,

    ((1, x), (0, 1)) * ((cos k, -sin k), (sin k, cos k)),   x = (a - h)/sin k,

which drives the polar recursion

    R^2 -> R^2 * (1 + x sin(2(theta+k)) + x^2 sin^2(theta+k)),
    cot(theta') = cot(theta+k) + x.

Products over millions of shells reach hundreds of nats, so radii are
accumulated in the log domain and raw solution pairs rescale by exact powers
of two.  Batched drivers vectorize across trials and draw shell statistics
from counter-based streams keyed by (seed, domain, cell, trial, block), so a
trial's randomness is reproducible in any processing order; for discrete
laws a shell of s draws is compressed into its multinomial atom counts, the
sufficient statistic for the harmonic entry.  Subordinate solutions are
extracted by backward propagation, stable because the forward-decaying
direction dominates in reverse; weighted-norm extremes over all solution
directions come from a rank-one updated Cholesky factor of the 2x2 Gram
matrix, whose determinant is a product of diagonals and therefore immune to
the cancellation that makes the raw min/max hopeless at depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDenominatorError,
    DomainError,
    InsufficientTrialsError,
    SingularShellError,
)
from .geometry import GrowthLaw
from .potentials import EffectiveQuantities, PotentialDistribution, effective_quantities, sample
from .streams import seed_stream

LN2 = math.log(2.0)
BLOCK = 8192
# rescale once entries pass 2^256: squares and 2x2 determinants of scaled
# entries then stay far from the 2^1024 overflow boundary
RESCALE_EXP = 256

# stream domains, so the same (seed, cell, trial) never reuses randomness
# across different kinds of passes
_DOM_TRAJ = 1
_DOM_SUB = 2
_DOM_DENSITY = 3


# ---------------------------------------------------------------------------
# scalar shell quantities
# ---------------------------------------------------------------------------

def harmonic_a(E: float, lam: float, potentials) -> float:
    """Reciprocal of the shell average of 1/(E - lam*v).

    Raises SingularShellError when the average vanishes, which is possible
    only when the shifted values change sign (E inside the scaled support
    hull).
    """
    x = E - lam * np.asarray(potentials, dtype=np.float64)
    if np.any(x == 0.0):
        raise DomainError("E - lam*v vanishes on the shell", reason="inside_support")
    mean_inv = float(np.mean(1.0 / x))
    if mean_inv == 0.0:
        raise SingularShellError("shell inverse mean is zero")
    return 1.0 / mean_inv


def psi_norm_sq(E: float, lam: float, potentials) -> float:
    """Squared norm of the normalized shell resolvent vector.

    Equals a^2 * (1/s) * sum 1/(E - lam*v)^2, which is also the E-derivative
    of the harmonic entry; always >= 1 by Cauchy-Schwarz.
    """
    x = E - lam * np.asarray(potentials, dtype=np.float64)
    if np.any(x == 0.0):
        raise DomainError("E - lam*v vanishes on the shell", reason="inside_support")
    mean_inv = float(np.mean(1.0 / x))
    if mean_inv == 0.0:
        raise SingularShellError("shell inverse mean is zero")
    mean_inv2 = float(np.mean(1.0 / (x * x)))
    return mean_inv2 / (mean_inv * mean_inv)


@dataclass(frozen=True)
class ShellSample:
    """One shell's worth of randomness reduced to the transfer inputs."""

    n: int
    a: float
    x: float
    psi_norm_sq: float


def shell_sample(eff: EffectiveQuantities, potentials, n: int = 0) -> ShellSample:
    """Build the per-shell transfer inputs from explicit potentials."""
    a = harmonic_a(eff.E, eff.lam, potentials)
    psq = psi_norm_sq(eff.E, eff.lam, potentials)
    x = (a - eff.h) / eff.sin_k
    return ShellSample(n=n, a=a, x=x, psi_norm_sq=psq)


# ---------------------------------------------------------------------------
# solution pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolutionPair:
    """Two fundamental solutions tracked as scaled columns.

    The true entries are the stored ones times 2**scale_exp.  Columns start
    as (u: 1, 0) and (v: 0, 1); each step matrix has determinant one, so the
    cross-determinant of the true entries stays at its initial value.
    Evaluating it from floats is only meaningful while the columns have not
    collapsed onto a common dominant direction (about 36 nats of growth);
    past that point use ``wronskian_drift``, which measures the same
    invariant in QR form.
    """

    u_cur: float = 1.0
    u_prev: float = 0.0
    v_cur: float = 0.0
    v_prev: float = 1.0
    scale_exp: int = 0
    n: int = 0

    @property
    def log_scale(self) -> float:
        return self.scale_exp * LN2

    def wronskian(self) -> float:
        """u_cur*v_prev - v_cur*u_prev on the true (unscaled) entries."""
        raw = self.u_cur * self.v_prev - self.v_cur * self.u_prev
        return math.ldexp(raw, 2 * self.scale_exp)


def transfer_step(pair: SolutionPair, a: float) -> SolutionPair:
    """Apply the step matrix ((a, -1), (1, 0)) to both columns, rescaling by
    an exact power of two once any entry passes the magnitude guard."""
    u_cur = a * pair.u_cur - pair.u_prev
    v_cur = a * pair.v_cur - pair.v_prev
    u_prev, v_prev = pair.u_cur, pair.v_cur
    m = max(abs(u_cur), abs(v_cur), abs(u_prev), abs(v_prev))
    shift = 0
    if m > 0.0:
        ex = math.frexp(m)[1]
        if ex > RESCALE_EXP:
            shift = ex
            u_cur = math.ldexp(u_cur, -shift)
            v_cur = math.ldexp(v_cur, -shift)
            u_prev = math.ldexp(u_prev, -shift)
            v_prev = math.ldexp(v_prev, -shift)
    return SolutionPair(
        u_cur=u_cur, u_prev=u_prev, v_cur=v_cur, v_prev=v_prev,
        scale_exp=pair.scale_exp + shift, n=pair.n + 1,
    )


def step_matrix(a: float) -> np.ndarray:
    return np.array([[a, -1.0], [1.0, 0.0]])


def conjugation_matrix(k: float) -> np.ndarray:
    """Basis change taking the step matrix to shear times rotation."""
    return np.array([[1.0, -math.cos(k)], [0.0, math.sin(k)]])


def sheared_rotation(x: float, k: float) -> np.ndarray:
    """((1, x), (0, 1)) @ rotation(k): the step in the polar frame."""
    ck, sk = math.cos(k), math.sin(k)
    return np.array([[ck + x * sk, -sk + x * ck], [sk, ck]])


# ---------------------------------------------------------------------------
# polar recursion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrueferState:
    theta: float
    log_r: float = 0.0
    n: int = 0

    def theta_bar(self, k: float) -> float:
        return self.theta + k


def pruefer_step(state: PrueferState, x: float, k: float) -> PrueferState:
    """One polar step: rotate by k, shear by x.

    The log-radius grows by half the log of 1 + x sin(2 tb) + x^2 sin^2(tb),
    a sum of squares hence positive; the angle advances on the branch with
    theta_new - theta_bar in (-pi/2, pi/2], making it continuous in x.
    """
    if not 0.0 < k < math.pi:
        raise DomainError(f"phase k = {k} outside (0, pi)", reason="k")
    tb = state.theta + k
    s = math.sin(tb)
    c = math.cos(tb)
    w1 = c + x * s
    growth = w1 * w1 + s * s
    # branch selection: the new angle solves cot(theta') = cot(tb) + x
    raw = math.atan2(s, w1)
    delta = raw - tb
    delta -= math.pi * math.ceil(delta / math.pi - 0.5)
    return PrueferState(theta=tb + delta, log_r=state.log_r + 0.5 * math.log(growth),
                        n=state.n + 1)


# ---------------------------------------------------------------------------
# sampling of shell statistics
# ---------------------------------------------------------------------------

def _atom_tables(dist: PotentialDistribution, E: float, lam: float):
    vals = np.array([v for v, _ in dist.atoms])
    probs = np.array([w for _, w in dist.atoms])
    x = E - lam * vals
    if np.any(x == 0.0):
        raise DomainError("E - lam*v vanishes at an atom", reason="inside_support")
    return probs, 1.0 / x, 1.0 / (x * x)


def _multinomial_counts(gen: np.random.Generator, n_arr: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Exact multinomial counts for per-row totals, via a binomial chain."""
    k = len(probs)
    counts = np.empty((len(n_arr), k), dtype=np.int64)
    remaining = n_arr.astype(np.int64).copy()
    rem_p = 1.0
    for i in range(k - 1):
        p = min(1.0, probs[i] / rem_p)
        c = gen.binomial(remaining, p)
        counts[:, i] = c
        remaining -= c
        rem_p -= probs[i]
    counts[:, k - 1] = remaining
    return counts


def _shell_stats_block(dist: PotentialDistribution, E: float, lam: float,
                       sizes: np.ndarray, gen: np.random.Generator):
    """Per-shell (mean of 1/(E-lam*v), mean of 1/(E-lam*v)^2) for one trial.

    Discrete laws reduce to multinomial atom counts; continuous laws draw
    every potential and segment-sum.
    """
    s_int = sizes.astype(np.int64)
    if dist.is_discrete:
        probs, r1, r2 = _atom_tables(dist, E, lam)
        counts = _multinomial_counts(gen, s_int, probs)
        sum1 = counts @ r1
        sum2 = counts @ r2
    else:
        total = int(s_int.sum())
        v = sample(dist, gen, size=total)
        r = 1.0 / (E - lam * v)
        ends = np.cumsum(s_int)
        starts = ends - s_int
        sum1 = np.add.reduceat(r, starts)
        sum2 = np.add.reduceat(r * r, starts)
    mean1 = sum1 / sizes
    mean2 = sum2 / sizes
    if np.any(mean1 == 0.0):
        shell = int(np.nonzero(mean1 == 0.0)[0][0])
        raise SingularShellError("sampled shell has vanishing inverse mean", shell=shell)
    return mean1, mean2


def checkpoints_geometric(N: int, count: int = 192) -> np.ndarray:
    """Geometrically spaced shell indices in [1, N], always including N."""
    if N < 1:
        raise DomainError("need N >= 1")
    return np.unique(np.rint(np.geomspace(1.0, float(N), count)).astype(np.int64))


def _checkpoint_sum_inv(law: GrowthLaw, cps: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """sum_{j < c} 1/s_j for each checkpoint c (the shells applied so far)."""
    out = np.empty(len(cps))
    N = int(cps[-1])
    total = 0.0
    for n0 in range(0, N, block):
        n1 = min(N, n0 + block)
        csum = total + np.cumsum(1.0 / law.sizes_block(n0, n1))
        lo = np.searchsorted(cps, n0 + 1, side="left")
        hi = np.searchsorted(cps, n1, side="right")
        for pos in range(lo, hi):
            out[pos] = csum[int(cps[pos]) - n0 - 1]
        total = float(csum[-1])
    return out


# ---------------------------------------------------------------------------
# forward trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    """Polar log-radius along one disorder realization, at checkpoints."""

    E: float
    lam: float
    N: int
    trial: int
    ns: np.ndarray         # checkpoint shell counts
    sum_inv: np.ndarray    # sum of 1/s_j over applied shells, per checkpoint
    log_r: np.ndarray      # log R at each checkpoint
    a_min: float = math.nan
    a_max: float = math.nan

    @property
    def final_log_r(self) -> float:
        return float(self.log_r[-1])

    @property
    def final_sum_inv(self) -> float:
        return float(self.sum_inv[-1])

    @property
    def slope(self) -> float:
        return self.final_log_r / self.final_sum_inv


def _forward_polar_pass(dist, law, eff, N, trial_ids, gen_for, *, block=BLOCK,
                        checkpoint_count=192, theta0=0.0):
    """Shared polar driver, vectorized across trials.

    ``gen_for(trial_slot, block_index)`` supplies the stream for one
    (trial, block) cell; per-trial draws are identical however trials are
    grouped, which keeps sweep outputs independent of scheduling.
    """
    E, lam = eff.E, eff.lam
    h, k, sink = eff.h, eff.k, eff.sin_k
    T = len(trial_ids)
    cps = checkpoints_geometric(N, checkpoint_count)
    cp_suminv = _checkpoint_sum_inv(law, cps, block)
    cp_logr = np.empty((len(cps), T))
    cp_pos = 0
    ck, sk = math.cos(k), math.sin(k)
    c = np.full(T, math.cos(theta0))
    s = np.full(T, math.sin(theta0))
    log_r = np.zeros(T)
    free = (lam == 0.0)
    a_min = np.full(T, math.inf)
    a_max = np.full(T, -math.inf)
    nblocks = (N + block - 1) // block
    for b in range(nblocks):
        n0 = b * block
        n1 = min(N, n0 + block)
        sizes = law.sizes_block(n0, n1)
        if free:
            X = np.zeros((n1 - n0, T))
        else:
            X = np.empty((n1 - n0, T))
            for t in range(T):
                mean1, _ = _shell_stats_block(dist, E, lam, sizes, gen_for(t, b))
                X[:, t] = (1.0 / mean1 - h) / sink
            a_blk_min = h + X.min(axis=0) * sink
            a_blk_max = h + X.max(axis=0) * sink
            np.minimum(a_min, a_blk_min, out=a_min)
            np.maximum(a_max, a_blk_max, out=a_max)
        for i in range(n1 - n0):
            crot = c * ck - s * sk
            srot = c * sk + s * ck
            w1 = crot + X[i] * srot
            growth = w1 * w1 + srot * srot
            log_r += 0.5 * np.log(growth)
            r = np.sqrt(growth)
            c = w1 / r
            s = srot / r
            if cp_pos < len(cps) and n0 + i + 1 == cps[cp_pos]:
                cp_logr[cp_pos] = log_r
                cp_pos += 1
    records = []
    for t, trial in enumerate(trial_ids):
        records.append(TrajectoryRecord(
            E=E, lam=lam, N=N, trial=int(trial),
            ns=cps.copy(), sum_inv=cp_suminv.copy(), log_r=cp_logr[:, t].copy(),
            a_min=float(a_min[t]) if not free else math.nan,
            a_max=float(a_max[t]) if not free else math.nan,
        ))
    return records


def run_trajectory(dist: PotentialDistribution, law: GrowthLaw, E: float, lam: float,
                   N: int, stream: np.random.Generator, *, checkpoint_count: int = 192,
                   block: int = BLOCK) -> TrajectoryRecord:
    """Evolve one realization for N shells, drawing from the caller's stream."""
    eff = effective_quantities(dist, E, lam)
    recs = _forward_polar_pass(dist, law, eff, N, [0], lambda t, b: stream,
                               block=block, checkpoint_count=checkpoint_count)
    return recs[0]


def lyapunov_batch(dist: PotentialDistribution, law: GrowthLaw, E: float, lam: float,
                   N: int, trial_ids, seed: int, cell: int = 0, *,
                   checkpoint_count: int = 192, block: int = BLOCK) -> list[TrajectoryRecord]:
    """Forward trajectories for a set of trial ids with keyed streams."""
    eff = effective_quantities(dist, E, lam)
    trial_ids = list(trial_ids)

    def gen_for(t, b):
        return seed_stream(seed, _DOM_TRAJ, cell, trial_ids[t], b)

    return _forward_polar_pass(dist, law, eff, N, trial_ids, gen_for,
                               block=block, checkpoint_count=checkpoint_count)


def lyapunov_estimate(records) -> tuple[float, float]:
    """Ensemble mean and standard error of log R / sum(1/s) over trials."""
    if len(records) < 2:
        raise InsufficientTrialsError("need at least 2 trajectory records")
    slopes = np.array([r.slope for r in records])
    return float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(len(slopes)))


# ---------------------------------------------------------------------------
# subordinacy: weighted-norm extremes and the backward solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubordinacyRecord:
    """Checkpoint diagnostics for the subordinate/dominant split.

    ``log_ratio`` is the log of (minimal / maximal) psi-weighted running
    norm over unit solution directions.  The maximum is the top eigenvalue
    of the weighted Gram matrix of the forward fundamental pair; the
    minimum is evaluated on the backward-propagated solution (normalized to
    unit coefficients in the fundamental basis), whose direction converges
    to the minimizing one.  This split matters: any forward-only evaluation
    in doubles floors near log(eps^2) = -72 because the subordinate
    component is destroyed in the representation of the solution pair,
    while a fixed 64-angle grid floors already near log((pi/128)^2); the
    grid variant is kept as ``log_ratio_grid`` for comparison.  ``log_dom``
    is the absolute log of the maximal weighted norm.  ``log_sub`` is the
    log-amplitude sqrt(w_n^2 + w_{n-1}^2) of the backward solution, defined
    up to one additive constant per trial; both backward quantities are
    contaminated by the dominant solution within a few 1/(2 gamma) units of
    sum(1/s) below N.
    """

    E: float
    lam: float
    N: int
    trial: int
    ns: np.ndarray
    sum_inv: np.ndarray
    log_ratio: np.ndarray
    log_ratio_grid: np.ndarray
    log_sub: np.ndarray
    log_dom: np.ndarray

    @property
    def final_log_ratio(self) -> float:
        return float(self.log_ratio[-1])


def _chol_rank1_update(l11, l21, l22, x1, x2):
    """Rank-one update of a 2x2 lower Cholesky factor (Givens form)."""
    r = np.hypot(l11, x1)
    # before any update l11 = 0 and the first vector has x1 != 0; afterwards
    # l11 > 0, so r > 0 except for all-zero updates, which are no-ops
    safe = r > 0.0
    cg = np.divide(l11, r, out=np.ones_like(r), where=safe)
    sg = np.divide(x1, r, out=np.zeros_like(r), where=safe)
    l21n = cg * l21 + sg * x2
    x2n = cg * x2 - sg * l21
    return r, l21n, np.hypot(l22, x2n)


def _rescale_where(arrays, exps, threshold=RESCALE_EXP):
    """Divide each column by 2^e where its magnitude exponent exceeds the
    threshold; accumulate e into ``exps`` (int64, modified in place)."""
    m = np.abs(arrays[0])
    for arr in arrays[1:]:
        np.maximum(m, np.abs(arr), out=m)
    ex = np.frexp(m)[1].astype(np.int64)
    sh = np.where(ex > threshold, ex, 0)
    if sh.any():
        f = np.ldexp(1.0, -sh)
        for arr in arrays:
            arr *= f
        exps += sh
    return exps


def subordinacy_batch(dist: PotentialDistribution, law: GrowthLaw, E: float, lam: float,
                      N: int, trial_ids, seed: int, cell: int = 0, *,
                      checkpoint_count: int = 192, block: int = BLOCK,
                      with_gram: bool = True, grid_angles: int = 64) -> list[SubordinacyRecord]:
    """Two-pass subordinacy diagnostics on shared randomness.

    Forward: evolve the fundamental pair (u: 1, 0 and v: 0, 1 seeds),
    accumulate the psi-weighted Gram factor over applied shells, record
    eigen-extreme ratios.  Backward: propagation from the seed (0, 1) at
    shell N isolates the forward-decaying solution wherever the dominant
    contamination is small.  Both passes regenerate identical shell draws
    from (trial, block)-keyed streams.
    """
    eff = effective_quantities(dist, E, lam)
    trial_ids = list(trial_ids)
    T = len(trial_ids)
    cps = checkpoints_geometric(N, checkpoint_count)
    cp_index = {int(n): i for i, n in enumerate(cps)}
    ncp = len(cps)
    cp_suminv = _checkpoint_sum_inv(law, cps, block)
    free = (lam == 0.0)

    def stats_block(t, b, sizes):
        if free:
            m1 = np.full(len(sizes), 1.0 / E)
            return m1, m1 * m1
        gen = seed_stream(seed, _DOM_SUB, cell, trial_ids[t], b)
        return _shell_stats_block(dist, E, lam, sizes, gen)

    nblocks = (N + block - 1) // block
    cp_logmax = np.full((ncp, T), math.nan)
    cp_ratio_grid = np.full((ncp, T), math.nan)
    angles = np.linspace(0.0, math.pi, grid_angles, endpoint=False)
    cth = np.cos(angles)[:, None]
    sth = np.sin(angles)[:, None]

    if with_gram:
        u_cur = np.ones(T); u_prev = np.zeros(T)
        v_cur = np.zeros(T); v_prev = np.ones(T)
        pair_exp = np.zeros(T, dtype=np.int64)
        l11 = np.zeros(T); l21 = np.zeros(T); l22 = np.zeros(T)
        gram_exp = np.zeros(T, dtype=np.int64)
        for b in range(nblocks):
            n0 = b * block
            n1 = min(N, n0 + block)
            sizes = law.sizes_block(n0, n1)
            A = np.empty((n1 - n0, T))
            W = np.empty((n1 - n0, T))
            for t in range(T):
                m1, m2 = stats_block(t, b, sizes)
                A[:, t] = 1.0 / m1
                W[:, t] = m2 / (m1 * m1)
            for i in range(n1 - n0):
                # Gram gains the current direction (u_n, v_n), then the pair
                # advances; a checkpoint at c therefore covers shells < c
                sw = np.sqrt(W[i])
                unit = np.ldexp(1.0, pair_exp - gram_exp)
                l11, l21, l22 = _chol_rank1_update(
                    l11, l21, l22, sw * u_cur * unit, sw * v_cur * unit)
                ai = A[i]
                u_cur, u_prev = ai * u_cur - u_prev, u_cur
                v_cur, v_prev = ai * v_cur - v_prev, v_cur
                n_applied = n0 + i + 1
                if (n_applied & 63) == 0 or n_applied == n1:
                    pair_exp = _rescale_where([u_cur, u_prev, v_cur, v_prev], pair_exp)
                    gram_exp = _rescale_where([l11, l21, l22], gram_exp)
                ci = cp_index.get(n_applied)
                if ci is not None:
                    g11 = l11 * l11
                    g12 = l11 * l21
                    g22 = l21 * l21 + l22 * l22
                    half_tr = 0.5 * (g11 + g22)
                    disc = np.sqrt((0.5 * (g11 - g22)) ** 2 + g12 * g12)
                    with np.errstate(divide="ignore"):
                        cp_logmax[ci] = np.log(half_tr + disc) + 2.0 * gram_exp * LN2
                        q1 = cth * l11 + sth * l21
                        q2 = sth * l22
                        vals = q1 * q1 + q2 * q2
                        cp_ratio_grid[ci] = np.log(vals.min(axis=0)) - np.log(vals.max(axis=0))

    # backward pass: seed (w_N, w_{N-1}) = (0, 1), recursion
    # w_{m-1} = a_m w_m - w_{m+1} for m = N-1 .. 0.  Alongside the amplitude
    # we accumulate the psi-weighted suffix norm sum_{k >= c} w_k^2 psi_k^2;
    # prefixes follow from the total by a log-domain subtraction, and the
    # final state (w_0, w_{-1}) gives the coefficients of w in the (u, v)
    # basis for unit normalization.
    cp_sub = np.full((ncp, T), math.nan)
    cp_logsfx = np.full((ncp, T), -math.inf)
    w_hi = np.zeros(T)   # w_{m+1}
    w_mid = np.ones(T)   # w_m
    back_exp = np.zeros(T, dtype=np.int64)
    sfx = np.zeros(T)    # suffix sum in units 2^(2 back_exp)
    for b in range(nblocks - 1, -1, -1):
        n0 = b * block
        n1 = min(N, n0 + block)
        sizes = law.sizes_block(n0, n1)
        A = np.empty((n1 - n0, T))
        W = np.empty((n1 - n0, T))
        for t in range(T):
            m1, m2 = stats_block(t, b, sizes)
            A[:, t] = 1.0 / m1
            W[:, t] = m2 / (m1 * m1)
        for i in range(n1 - n0 - 1, -1, -1):
            m = n0 + i
            ci = cp_index.get(m + 1)
            if ci is not None:
                # entering iteration m the state holds (w_{m+1}, w_m) and
                # sfx covers exactly the shells k >= m+1
                with np.errstate(divide="ignore"):
                    cp_sub[ci] = 0.5 * np.log(w_hi * w_hi + w_mid * w_mid) + back_exp * LN2
                    cp_logsfx[ci] = np.log(sfx) + 2.0 * back_exp * LN2
            sfx += W[i] * w_mid * w_mid
            w_hi, w_mid = w_mid, A[i] * w_mid - w_hi
            if (m & 63) == 0:
                old = back_exp.copy()
                back_exp = _rescale_where([w_hi, w_mid], back_exp)
                sfx = np.ldexp(sfx, 2 * (old - back_exp))
    with np.errstate(divide="ignore"):
        log_total = np.log(sfx) + 2.0 * back_exp * LN2
        log_coef = np.log(w_hi * w_hi + w_mid * w_mid) + 2.0 * back_exp * LN2

    # prefix(c) = total - suffix(c); stable because the backward solution is
    # largest at small shells, so the suffix is the minor part at large c
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.exp(cp_logsfx - log_total[None, :])
        log_prefix = log_total[None, :] + np.log1p(-np.minimum(rel, 1.0))
        cp_ratio = log_prefix - log_coef[None, :] - cp_logmax

    records = []
    for t, trial in enumerate(trial_ids):
        records.append(SubordinacyRecord(
            E=E, lam=lam, N=N, trial=int(trial), ns=cps.copy(),
            sum_inv=cp_suminv.copy(), log_ratio=cp_ratio[:, t].copy(),
            log_ratio_grid=cp_ratio_grid[:, t].copy(), log_sub=cp_sub[:, t].copy(),
            log_dom=cp_logmax[:, t].copy(),
        ))
    return records


def subordinacy_ratio(dist: PotentialDistribution, law: GrowthLaw, E: float, lam: float,
                      N: int, seed: int, *, trial: int = 0,
                      checkpoint_count: int = 192) -> SubordinacyRecord:
    """Single-trial subordinacy diagnostics (see subordinacy_batch)."""
    return subordinacy_batch(dist, law, E, lam, N, [trial], seed,
                             checkpoint_count=checkpoint_count)[0]


# ---------------------------------------------------------------------------
# spectral-density window averages
# ---------------------------------------------------------------------------

def dirichlet_window_average(dist, lam: float, law: GrowthLaw, energies, N: int,
                             trials: int, seed: int, halfwidth: float, *,
                             energy_ids=None, window_start: int | None = None,
                             block: int = BLOCK) -> np.ndarray:
    """Window average of 1/(u_n^2 + u_{n-1}^2) for the Dirichlet solution.

    For each grid energy the trials are spread over midpoint offsets in
    [-halfwidth, halfwidth]: the limit defining the density holds weakly in
    the energy variable, so pointwise evaluation needs a narrow
    mollification (at isolated resonant phases, such as the free case at
    E = 1 where the transfer phase is pi/3, the unmollified time average has
    a genuinely different limit).  Returns the mean over the window
    [window_start, N] and over trials, one value per energy, not yet divided
    by pi.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if trials < 1:
        raise DomainError("need trials >= 1")
    if energy_ids is None:
        energy_ids = list(range(len(energies)))
    offs = halfwidth * ((2.0 * np.arange(trials) + 1.0) / trials - 1.0)
    cols = (energies[:, None] + offs[None, :]).ravel()
    ncol = len(cols)
    u = np.ones(ncol)
    p = np.zeros(ncol)
    col_exp = np.zeros(ncol, dtype=np.int64)
    acc = np.zeros(ncol)
    count = 0
    w0 = N // 2 if window_start is None else window_start
    free = (lam == 0.0)
    nblocks = (N + block - 1) // block
    for b in range(nblocks):
        n0 = b * block
        n1 = min(N, n0 + block)
        sizes = law.sizes_block(n0, n1)
        if not free:
            A = np.empty((n1 - n0, ncol))
            for j in range(ncol):
                ei, ti = divmod(j, trials)
                m1, _ = _shell_stats_block(dist, float(cols[j]), lam, sizes,
                                           seed_stream(seed, _DOM_DENSITY, energy_ids[ei], ti, b))
                A[:, j] = 1.0 / m1
        for i in range(n1 - n0):
            a_row = cols if free else A[i]
            u, p = a_row * u - p, u
            if n0 + i + 1 >= w0:
                acc += np.ldexp(1.0 / (u * u + p * p), -2 * col_exp)
                count += 1
            if (n0 + i + 1) & 63 == 0:
                col_exp = _rescale_where([u, p], col_exp)
    if count == 0:
        raise DomainError("empty averaging window")
    vals = (acc / count).reshape(len(energies), trials)
    return vals.mean(axis=1)


# ---------------------------------------------------------------------------
# truncated m-function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylPoint:
    """Boundary Green's function of the N-shell truncation at spectral
    parameter z with boundary condition beta."""

    z: complex
    beta: float
    N: int
    m: complex


def m_function(z: complex, N: int, beta: float, *, dist: PotentialDistribution | None = None,
               lam: float = 0.0, law: GrowthLaw | None = None,
               stream: np.random.Generator | None = None) -> WeylPoint:
    """m = (beta*v_N + v_{N+1}) / (beta*u_N + u_{N+1}) from the fundamental
    complex solution pair; the common power-of-two rescale cancels in the
    ratio.  Herglotz: Im z > 0 forces Im m > 0."""
    z = complex(z)
    if z.imag < 0.0:
        raise DomainError("need Im z >= 0", reason="z")
    random_shells = dist is not None and lam != 0.0
    if random_shells and stream is None:
        raise DomainError("random potentials need a stream", reason="stream")
    if law is None:
        law = GrowthLaw.uniform_power(1.0, 1.0)
    u_cur, u_prev = 1.0 + 0.0j, 0.0 + 0.0j   # (u_0, u_{-1})
    v_cur, v_prev = 0.0 + 0.0j, 1.0 + 0.0j
    for n in range(N + 1):
        if random_shells:
            v = sample(dist, stream, size=law.size(n))
            mean_inv = complex(np.mean(1.0 / (z - lam * v)))
            if mean_inv == 0.0:
                raise SingularShellError("shell inverse mean is zero", shell=n)
            a = 1.0 / mean_inv
        else:
            a = z
        u_cur, u_prev = a * u_cur - u_prev, u_cur
        v_cur, v_prev = a * v_cur - v_prev, v_cur
        m = max(abs(u_cur), abs(v_cur), abs(u_prev), abs(v_prev))
        if m > 0.0 and math.frexp(m)[1] > RESCALE_EXP:
            f = math.ldexp(1.0, -math.frexp(m)[1])
            u_cur *= f; u_prev *= f; v_cur *= f; v_prev *= f
    num = beta * v_prev + v_cur   # after the loop *_prev sits at N, *_cur at N+1
    den = beta * u_prev + u_cur
    if den == 0.0:
        raise DegenerateDenominatorError(f"boundary denominator vanished at z = {z}")
    return WeylPoint(z=z, beta=float(beta), N=N, m=num / den)


# ---------------------------------------------------------------------------
# determinant drift of long products
# ---------------------------------------------------------------------------

def wronskian_drift(k: float, n_steps: int, seed: int, x_bound: float = 1.0) -> float:
    """Worst accumulated log|det| of a random transfer product, in QR form.

    Every exact step has determinant one.  The raw cross-difference of two
    propagated columns cancels below machine precision once the product is
    hyperbolic, so the determinant residue is tracked on the QR factor,
    where it is a product of triangular diagonals: per step B = T Q has
    |det B| = 1 and its Givens factorization exposes log|det| = log(r * r22)
    stably.  Returns max over the run of |sum of per-step log dets|.
    """
    gen = seed_stream(seed, 0xD, 0, 0, 0)
    q00, q01, q10, q11 = 1.0, 0.0, 0.0, 1.0
    ck2 = 2.0 * math.cos(k)
    sk = math.sin(k)
    drift = 0.0
    worst = 0.0
    chunk = 1 << 16
    done = 0
    while done < n_steps:
        mlen = min(chunk, n_steps - done)
        xs = gen.uniform(-x_bound, x_bound, size=mlen)
        for x in xs:
            a = ck2 + x * sk
            b00 = a * q00 - q10
            b01 = a * q01 - q11
            b10 = q00
            b11 = q01
            r = math.hypot(b00, b10)
            cg = b00 / r
            sg = b10 / r
            r11 = cg * b11 - sg * b01
            drift += math.log(abs(r * r11))
            if abs(drift) > worst:
                worst = abs(drift)
            # next Q = Givens(cg, sg)^T, the orthogonal factor of B
            q00, q10 = cg, sg
            q01, q11 = -sg, cg
        done += mlen
    return worst
