"""Transfer dynamics: shell entries, polar steps, trajectories, m-function."""

import math

import numpy as np
import pytest

from antitree import (
    DegenerateDenominatorError,
    DomainError,
    GrowthLaw,
    InsufficientTrialsError,
    PotentialDistribution,
    PrueferState,
    SingularShellError,
    SolutionPair,
    TrajectoryRecord,
    effective_quantities,
    harmonic_a,
    lyapunov_batch,
    lyapunov_estimate,
    m_function,
    pruefer_step,
    psi_norm_sq,
    run_trajectory,
    seed_stream,
    shell_sample,
    subordinacy_batch,
    transfer_step,
    wronskian_drift,
)
import antitree.engine as eng

BERN = PotentialDistribution.bernoulli()
EFF = effective_quantities(BERN, 2.0, 1.0)


# ---------------------------------------------------------------------------
# shell entries
# ---------------------------------------------------------------------------

def test_harmonic_entry_values():
    assert harmonic_a(2.0, 1.0, [1.0, -1.0]) == pytest.approx(1.5, abs=1e-15)
    assert harmonic_a(2.0, 1.0, [1.0]) == pytest.approx(1.0, abs=1e-15)
    assert harmonic_a(2.0, 0.0, [0.3, -0.7, 0.1]) == pytest.approx(2.0, abs=1e-15)


def test_harmonic_entry_singular_shell():
    # mixed signs with cancelling reciprocals: 1/(0+1) + 1/(0-1) = 0
    with pytest.raises(SingularShellError):
        harmonic_a(0.0, 1.0, [-1.0, 1.0])
    with pytest.raises(DomainError):
        harmonic_a(1.0, 1.0, [1.0, -1.0])  # exact hit E - lam*v = 0


def test_psi_norm_sq_values():
    assert psi_norm_sq(2.0, 1.0, [1.0, -1.0]) == pytest.approx(1.25, abs=1e-12)
    assert psi_norm_sq(2.0, 0.0, [0.5, -0.5]) == pytest.approx(1.0, abs=1e-15)


def test_psi_norm_sq_is_energy_derivative():
    pots = [1.0, -1.0]
    dE = 1e-6
    fd = (harmonic_a(2.0 + dE, 1.0, pots) - harmonic_a(2.0 - dE, 1.0, pots)) / (2 * dE)
    assert psi_norm_sq(2.0, 1.0, pots) == pytest.approx(fd, abs=1e-6)


def test_psi_norm_sq_at_least_one():
    gen = seed_stream(17, 0)
    for _ in range(50):
        pots = gen.uniform(-1, 1, size=7)
        assert psi_norm_sq(2.0, 1.0, pots) >= 1.0


def test_shell_sample_fields():
    smp = shell_sample(EFF, [1.0, -1.0], n=4)
    assert smp.a == pytest.approx(1.5)
    assert smp.x == pytest.approx(0.0, abs=1e-14)   # a equals h here
    assert smp.psi_norm_sq == pytest.approx(1.25)
    assert smp.n == 4


def test_sampled_entries_stay_in_band():
    gen = seed_stream(3, 1)
    E, lam = 2.0, 1.0
    lo, hi = E - lam * BERN.v_plus, E - lam * BERN.v_minus
    for s in (1, 2, 5, 40):
        from antitree.potentials import sample
        pots = sample(BERN, gen, size=s)
        a = harmonic_a(E, lam, pots)
        assert lo - 1e-12 <= a <= hi + 1e-12
        x = (a - EFF.h) / EFF.sin_k
        assert lo / EFF.sin_k - 1e-9 <= x + EFF.h / EFF.sin_k


# ---------------------------------------------------------------------------
# solution pairs
# ---------------------------------------------------------------------------

def test_transfer_step_identity_columns():
    pair = transfer_step(SolutionPair(), 2.0)
    assert (pair.u_cur, pair.u_prev) == (2.0, 1.0)
    assert (pair.v_cur, pair.v_prev) == (-1.0, 0.0)


def test_transfer_step_quarter_rotation():
    pair = transfer_step(SolutionPair(), 0.0)
    assert (pair.u_cur, pair.u_prev) == (0.0, 1.0)
    assert (pair.v_cur, pair.v_prev) == (-1.0, 0.0)


def test_wronskian_preserved_at_shallow_depth():
    gen = seed_stream(11, 0)
    pair = SolutionPair()
    for _ in range(150):
        a = EFF.h + gen.uniform(-0.3, 0.3)
        pair = transfer_step(pair, a)
    assert pair.wronskian() == pytest.approx(1.0, rel=1e-12)


def test_rescaling_keeps_entries_bounded():
    pair = SolutionPair()
    for _ in range(1500):
        pair = transfer_step(pair, 3.0)
    assert pair.scale_exp > 0
    bound = math.ldexp(1.0, eng.RESCALE_EXP + 4)
    assert max(abs(pair.u_cur), abs(pair.v_cur)) < bound
    assert pair.log_scale > 0.0


def test_determinant_drift_long_product():
    assert wronskian_drift(EFF.k, 10 ** 5, seed=2) < 1e-10


# ---------------------------------------------------------------------------
# polar recursion
# ---------------------------------------------------------------------------

def test_pruefer_free_rotation():
    st = PrueferState(theta=0.4)
    nxt = pruefer_step(st, 0.0, EFF.k)
    assert nxt.log_r == pytest.approx(0.0, abs=1e-15)
    assert nxt.theta == pytest.approx(0.4 + EFF.k, abs=1e-12)


def test_pruefer_crossing_angle():
    # theta + k = pi/2: the shear acts on a pure second component
    k = EFF.k
    st = PrueferState(theta=math.pi / 2.0 - k)
    for x in (-0.7, 0.3, 2.0):
        nxt = pruefer_step(st, x, k)
        assert nxt.log_r == pytest.approx(0.5 * math.log1p(x * x), rel=1e-12)


def test_pruefer_branch_window():
    gen = seed_stream(23, 5)
    st = PrueferState(theta=0.1)
    for _ in range(300):
        x = gen.uniform(-2.0, 2.0)
        nxt = pruefer_step(st, x, EFF.k)
        delta = nxt.theta - (st.theta + EFF.k)
        assert -math.pi / 2.0 < delta <= math.pi / 2.0
        st = nxt


def test_pruefer_matches_matrix_product():
    gen = seed_stream(29, 1)
    k = EFF.k
    st = PrueferState(theta=0.3)
    vec = np.array([math.cos(0.3), math.sin(0.3)])
    log_norm = 0.0
    for _ in range(2000):
        x = gen.uniform(-0.5, 0.5)
        st = pruefer_step(st, x, k)
        vec = eng.sheared_rotation(x, k) @ vec
        nv = float(np.linalg.norm(vec))
        log_norm += math.log(nv)
        vec /= nv
    assert st.log_r == pytest.approx(log_norm, abs=1e-9)


def test_conjugation_identity():
    # M T M^{-1} = shear(x) @ rotation(k) with a = h + x sin k
    gen = seed_stream(31, 7)
    for _ in range(25):
        k = gen.uniform(0.2, math.pi - 0.2)
        x = gen.uniform(-3.0, 3.0)
        a = 2.0 * math.cos(k) + x * math.sin(k)
        M = eng.conjugation_matrix(k)
        lhs = M @ eng.step_matrix(a) @ np.linalg.inv(M)
        assert np.abs(lhs - eng.sheared_rotation(x, k)).max() < 1e-12


def test_pruefer_rejects_bad_phase():
    with pytest.raises(DomainError):
        pruefer_step(PrueferState(theta=0.0), 0.1, 0.0)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def test_free_trajectory_is_bounded():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    rec = run_trajectory(BERN, law, 1.0, 0.0, 10 ** 4, seed_stream(1, 4))
    k = math.acos(0.5)
    assert np.max(np.abs(rec.log_r)) <= math.log(2.0 / math.sin(k))


def test_batch_kernel_matches_scalar_steps():
    # one trial, kernel trajectory vs explicit polar steps on the same draws
    law = GrowthLaw.uniform_power(1.5, 1.0)
    N = 500
    rec = lyapunov_batch(BERN, law, 2.0, 1.0, N, [0], seed=77, cell=3)[0]
    sizes = law.sizes_block(0, N)
    gen = seed_stream(77, 1, 3, 0, 0)  # domain=1 (trajectories), block 0
    mean1, _ = eng._shell_stats_block(BERN, 2.0, 1.0, sizes, gen)
    st = PrueferState(theta=0.0)
    for m in mean1:
        x = (1.0 / m - EFF.h) / EFF.sin_k
        st = pruefer_step(st, x, EFF.k)
    assert rec.final_log_r == pytest.approx(st.log_r, rel=1e-10)


def test_trajectories_deterministic_and_chunk_invariant():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    full = lyapunov_batch(BERN, law, 2.0, 1.0, 3000, range(6), seed=5)
    again = lyapunov_batch(BERN, law, 2.0, 1.0, 3000, range(6), seed=5)
    first = lyapunov_batch(BERN, law, 2.0, 1.0, 3000, range(3), seed=5)
    second = lyapunov_batch(BERN, law, 2.0, 1.0, 3000, range(3, 6), seed=5)
    for a, b in zip(full, again):
        assert np.array_equal(a.log_r, b.log_r)
    for a, b in zip(full, first + second):
        assert np.array_equal(a.log_r, b.log_r)


def test_entries_of_trajectories_bounded():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    recs = lyapunov_batch(BERN, law, 2.0, 1.0, 2000, range(4), seed=8)
    for r in recs:
        assert r.a_min >= 2.0 - 1.0 - 1e-12
        assert r.a_max <= 2.0 + 1.0 + 1e-12


def test_one_dimensional_growth_has_positive_rate():
    # constant shells: i.i.d. steps, positive growth exists but the harmonic
    # average formula for the rate does not apply (no value asserted)
    law = GrowthLaw.uniform_power(1.0, 1.0)
    recs = lyapunov_batch(BERN, law, 2.0, 1.0, 10 ** 4, range(4), seed=19)
    for r in recs:
        assert r.final_log_r > 0.0


def test_shell_vector_norm_bound():
    # ||psi|| <= (E + lam v_+)/(E - lam v_+) = 3 at E = 2, lam = 1
    gen = seed_stream(47, 0)
    from antitree.potentials import sample
    for s in (1, 3, 10, 50):
        pots = sample(BERN, gen, size=s)
        assert math.sqrt(psi_norm_sq(2.0, 1.0, pots)) <= 3.0 + 1e-12


def test_single_step_polar_matrix_agreement_random_phase():
    gen = seed_stream(53, 0)
    for _ in range(200):
        k = gen.uniform(0.1, math.pi - 0.1)
        theta = gen.uniform(0.0, 2.0 * math.pi)
        x = gen.uniform(-0.5, 0.5)
        st = pruefer_step(PrueferState(theta=theta), x, k)
        vec = eng.sheared_rotation(x, k) @ np.array([math.cos(theta), math.sin(theta)])
        assert st.log_r == pytest.approx(math.log(np.linalg.norm(vec)), abs=1e-12)


def test_summable_inverse_sizes_keep_radius_bounded():
    # at growth dimension 3 the radius stays bounded in N
    law = GrowthLaw.uniform_power(3.0, 1.0)
    small = lyapunov_batch(BERN, law, 2.0, 1.0, 10 ** 3, range(8), seed=13)
    large = lyapunov_batch(BERN, law, 2.0, 1.0, 10 ** 4, range(8), seed=13)
    for r in small + large:
        assert abs(r.final_log_r) < 10.0


def test_lyapunov_estimate_requires_trials():
    rec = TrajectoryRecord(E=2.0, lam=1.0, N=10, trial=0, ns=np.array([10]),
                           sum_inv=np.array([2.0]), log_r=np.array([0.0]))
    assert rec.slope == 0.0
    with pytest.raises(InsufficientTrialsError):
        lyapunov_estimate([rec])
    mean, se = lyapunov_estimate([rec, rec])
    assert mean == 0.0 and se == 0.0


def test_shell_variable_moments_small():
    # s * E(x) -> h^3 s2 / sin k and s * E(x^2) -> h^4 s2 / sin^2 k
    target1 = EFF.h ** 3 * EFF.sigma2_eff / EFF.sin_k
    target2 = EFF.h ** 4 * EFF.sigma2_eff / EFF.sin_k ** 2
    for s in (100, 1000):
        trials = 20000
        gen = seed_stream(41, s)
        mean1, _ = eng._shell_stats_block(BERN, 2.0, 1.0, np.full(trials, float(s)), gen)
        x = (1.0 / mean1 - EFF.h) / EFF.sin_k
        se1 = s * x.std(ddof=1) / math.sqrt(trials)
        se2 = s * (x ** 2).std(ddof=1) / math.sqrt(trials)
        assert s * x.mean() == pytest.approx(target1, abs=4 * se1)
        assert s * (x ** 2).mean() == pytest.approx(target2, abs=4 * se2 + 2.0 / s)


# ---------------------------------------------------------------------------
# subordinacy diagnostics
# ---------------------------------------------------------------------------

def test_free_case_has_no_subordinate_direction():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    rec = subordinacy_batch(BERN, law, 1.0, 0.0, 5000, [0], seed=3)[0]
    assert np.nanmin(np.exp(rec.log_ratio[8:])) > 0.05


def test_weighted_norm_ratio_tracks_twice_gamma():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    recs = subordinacy_batch(BERN, law, 2.0, 1.0, 10 ** 5, range(3), seed=11)
    slopes = [r.final_log_ratio / r.sum_inv[-1] for r in recs]
    assert np.mean(slopes) == pytest.approx(-2.0 * EFF.gamma, rel=0.30)


def test_fixed_angle_grid_floors_while_exact_ratio_descends():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    rec = subordinacy_batch(BERN, law, 2.0, 1.0, 10 ** 5, [0], seed=11)[0]
    assert rec.log_ratio[-1] < -30.0
    assert rec.log_ratio_grid[-1] > -10.0


def test_gram_ratio_matches_dense_eigensolve_at_small_depth():
    law = GrowthLaw.uniform_power(1.5, 1.0)
    N = 300
    rec = subordinacy_batch(BERN, law, 2.0, 1.0, N, [0], seed=11,
                            checkpoint_count=40)[0]
    sizes = law.sizes_block(0, N)
    gen = seed_stream(11, 2, 0, 0, 0)  # domain=2 (subordinacy)
    m1, m2 = eng._shell_stats_block(BERN, 2.0, 1.0, sizes, gen)
    A, W = 1.0 / m1, m2 / (m1 * m1)
    u, up, v, vp = 1.0, 0.0, 0.0, 1.0
    G = np.zeros((2, 2))
    cp = {int(n): i for i, n in enumerate(rec.ns)}
    for i in range(N):
        G += W[i] * np.outer([u, v], [u, v])
        u, up = A[i] * u - up, u
        v, vp = A[i] * v - vp, v
        ci = cp.get(i + 1)
        if ci is not None and i + 1 >= 16:
            lam_max = np.linalg.eigvalsh(G)[1]
            assert rec.log_dom[ci] == pytest.approx(math.log(lam_max), rel=1e-10)


# ---------------------------------------------------------------------------
# truncated m-function
# ---------------------------------------------------------------------------

def test_free_m_function_fixed_point():
    target = (math.sqrt(5.0) - 1.0) / 2.0
    for beta in (0.0, 1.0, -2.5, 17.0):
        w = m_function(1j, 200, beta)
        assert abs(w.m - target * 1j) < 1e-6


def test_m_function_single_shell_truncation():
    z = 2.7 + 0.3j
    w = m_function(z, 0, 0.0)
    assert w.m == pytest.approx(-1.0 / z)


def test_m_function_boundary_limit_density():
    w = m_function(1.0 + 1e-3j, 20000, 0.0)
    assert w.m.imag == pytest.approx(math.sqrt(3.0) / 2.0, rel=0.02)


def test_m_function_is_herglotz_with_randomness():
    law = GrowthLaw.uniform_power(2.0, 1.0)
    gen = seed_stream(5, 9)
    for z in (0.5 + 0.2j, -1.0 + 1.0j, 2.2 + 0.01j, 1j):
        for beta in (0.0, 3.0, -1.0):
            w = m_function(z, 300, beta, dist=BERN, lam=1.0, law=law, stream=gen)
            assert w.m.imag > 0.0


def test_m_function_degenerate_denominator():
    # at z = 0 the free solution is 4-periodic and u vanishes at odd shells
    with pytest.raises(DegenerateDenominatorError):
        m_function(0.0 + 0.0j, 2, 0.0)
