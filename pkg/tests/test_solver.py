import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbtrust.model import InvalidInput, reward_score
from dbtrust.solver import (
    DEFAULT_CONDITION_THRESHOLD,
    CoefficientMatrix,
    NotWellDefined,
    SolverFailure,
    build_coefficients,
    condition_number,
    distributions,
    estimate_trust,
    is_informative,
    model_marginal,
    project_simplex,
    project_stochastic,
    solve_trust,
    tally_joint,
    tally_labels,
    JointCounts,
)

T_PEER = np.array([[0.9, 0.1], [0.2, 0.8]])
PRIOR = np.array([0.6, 0.4])
T_WORKER = np.array([[0.8, 0.2], [0.3, 0.7]])


# -- independent oracles ----------------------------------------------------------

def forward_distributions(t_i, t_j, prior):
    """Exact joint model with explicit loops: P(y_j) and P(y_i | y_j)."""
    k = len(prior)
    joint = np.zeros((k, k))
    for g in range(k):
        for yj in range(k):
            for yi in range(k):
                joint[yj, yi] += prior[g] * t_j[g, yj] * t_i[g, yi]
    marginal = joint.sum(axis=1)
    return joint / marginal[:, None], marginal


def cond2x2(c):
    """2-norm condition number of a 2x2 matrix from its singular values in closed form."""
    (a, b), (c_, d) = c
    f = a * a + b * b + c_ * c_ + d * d
    det = abs(a * d - b * c_)
    root = np.sqrt(max(f * f - 4 * det * det, 0.0))
    smax, smin = np.sqrt((f + root) / 2), np.sqrt(max((f - root) / 2, 0.0))
    return np.inf if smin == 0 else smax / smin


def simplex_bisection(v, iters=200):
    """Projection onto the simplex by bisection on the threshold theta."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = (lo + hi) / 2
        if np.maximum(v - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - (lo + hi) / 2, 0)


def random_stochastic(rng, k):
    m = rng.dirichlet(np.ones(k), size=k)
    return m / m.sum(axis=1, keepdims=True)


# -- oracle self-checks -----------------------------------------------------------

def test_oracle_forward_conditional_rows_sum_to_one():
    cond, marg = forward_distributions(T_WORKER, T_PEER, PRIOR)
    np.testing.assert_allclose(cond.sum(axis=1), 1, atol=1e-15)
    np.testing.assert_allclose(marg, [0.62, 0.38], atol=1e-15)


def test_oracle_cond2x2_known_values():
    assert cond2x2(np.eye(2)) == pytest.approx(1.0)
    assert cond2x2([[2.0, 0.0], [0.0, 0.5]]) == pytest.approx(4.0)
    assert cond2x2([[1.0, 1.0], [1.0, 1.0]]) == np.inf


def test_oracle_bisection_projection_known_values():
    np.testing.assert_allclose(simplex_bisection([0.6, 0.6]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(simplex_bisection([1.05, -0.05]), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(simplex_bisection([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5], atol=1e-12)


# -- tallies and distributions ----------------------------------------------------

def test_tally_examples():
    assert tally_joint([(0, 0), (1, 1)], 2).counts.tolist() == [[1, 0], [0, 1]]
    c = tally_joint([(0, 0), (0, 0), (1, 0), (1, 1)], 2).counts
    assert c[0].tolist() == [2, 1] and c[1].tolist() == [0, 1]
    pairs = [(0, 0)] * 3 + [(1, 0)] + [(0, 1)] + [(1, 1)] * 3
    jc = tally_joint(pairs, 2)
    assert jc.counts.tolist() == [[3, 1], [1, 3]]
    assert jc.total == 8


def test_tally_rejects_bad_input():
    with pytest.raises(InvalidInput):
        tally_joint([], 2)
    with pytest.raises(InvalidInput):
        tally_joint([(0, 2)], 2)
    with pytest.raises(InvalidInput):
        tally_labels([0, 1], [0], 2)


def test_distribution_examples():
    d = distributions(JointCounts(np.array([[3, 1], [1, 3]])))
    np.testing.assert_allclose(d.marginal, [0.5, 0.5])
    np.testing.assert_allclose(d.conditional, [[0.75, 0.25], [0.25, 0.75]])
    assert d.complete

    d = distributions(JointCounts(np.array([[4, 0], [0, 0]])))
    np.testing.assert_allclose(d.marginal, [1.0, 0.0])
    assert d.support == {0}
    assert not d.complete
    assert np.all(np.isnan(d.conditional[1]))

    d = distributions(JointCounts(np.array([[2, 2], [2, 2]])))
    np.testing.assert_allclose(d.conditional, [[0.5, 0.5], [0.5, 0.5]])


# -- coefficients -----------------------------------------------------------------

def test_coefficients_oracle_peer_is_identity():
    c = build_coefficients(np.eye(2), [0.5, 0.5], [0.5, 0.5])
    np.testing.assert_array_equal(c.c, np.eye(2))


def test_coefficients_derived_example():
    marginal = model_marginal(T_PEER, PRIOR)
    np.testing.assert_allclose(marginal, [0.62, 0.38], atol=1e-15)
    c = build_coefficients(T_PEER, PRIOR, marginal)
    expected = np.array([[T_PEER[g, yj] * PRIOR[g] / marginal[yj] for g in range(2)]
                         for yj in range(2)])
    np.testing.assert_allclose(c.c, expected, atol=1e-15)
    np.testing.assert_allclose(c.c, [[0.870968, 0.129032], [0.157895, 0.842105]], atol=1e-6)
    np.testing.assert_allclose(c.c.sum(axis=1), 1, atol=1e-12)


def test_coefficients_heuristic_peer_equals_prior():
    c = build_coefficients([[0.7, 0.3], [0.7, 0.3]], [0.5, 0.5], [0.7, 0.3])
    np.testing.assert_allclose(c.c, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_coefficients_zero_marginal_not_well_defined():
    with pytest.raises(NotWellDefined):
        build_coefficients(T_PEER, PRIOR, [1.0, 0.0])


# -- informativeness --------------------------------------------------------------

def test_is_informative_examples():
    assert is_informative(CoefficientMatrix(np.eye(2), 1.0), 20)
    same = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert not is_informative(CoefficientMatrix(same, condition_number(same)), 1e6)
    c = np.array([[0.52, 0.48], [0.48, 0.52]])
    assert cond2x2(c) == pytest.approx(25.0, rel=1e-12)
    assert condition_number(c) == pytest.approx(cond2x2(c), rel=1e-10)
    assert not is_informative(CoefficientMatrix(c, condition_number(c)), 20)
    assert is_informative(CoefficientMatrix(c, condition_number(c)), 30)


def test_is_informative_missing_rows():
    c = np.array([[1.0, 0.0], [np.nan, np.nan]])
    assert not is_informative(CoefficientMatrix(c, np.inf), 1e6)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_condition_number_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    c = random_stochastic(rng, 2)
    assert condition_number(c) == pytest.approx(cond2x2(c), rel=1e-8)


@settings(max_examples=300, deadline=None)
@given(k=st.integers(2, 5), seed=st.integers(0, 2**32 - 1))
def test_heuristic_peer_always_rejected(k, seed):
    rng = np.random.default_rng(seed)
    row = rng.dirichlet(np.ones(k))
    row /= row.sum()
    t_j = np.tile(row, (k, 1))
    prior = rng.dirichlet(np.ones(k)) + 0.01
    prior /= prior.sum()
    marginal = model_marginal(t_j, prior)
    if marginal.min() <= 0:
        return
    c = build_coefficients(t_j, prior, marginal)
    np.testing.assert_allclose(c.c, np.tile(prior, (k, 1)), atol=1e-12)
    assert not is_informative(c, DEFAULT_CONDITION_THRESHOLD)


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_binary_criterion(seed):
    # For 2x2 c with probability rows, ||c||_2 <= sqrt(2) and
    # |det c| = |a+b-1| p0 p1 / (m0 m1), so cond <= 1 / (2 |a+b-1| p0 p1).
    # A margin above 1 / (2 * threshold * p0 * p1) therefore guarantees the gate.
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(0.05, 0.95)
    prior = np.array([p0, 1 - p0])
    a, b = rng.uniform(0, 1, 2)
    t_j = np.array([[a, 1 - a], [1 - b, b]])
    marginal = model_marginal(t_j, prior)
    if marginal.min() <= 0:
        return
    c = build_coefficients(t_j, prior, marginal)
    threshold = 1e3
    gap = 1.0 / (2 * threshold * prior[0] * prior[1])
    if abs(a + b - 1) > gap:
        assert is_informative(c, threshold)
    t_flat = np.array([[a, 1 - a], [a, 1 - a]])
    m_flat = model_marginal(t_flat, prior)
    if m_flat.min() > 0:
        assert not is_informative(build_coefficients(t_flat, prior, m_flat), threshold)


# -- solving ----------------------------------------------------------------------

def test_solve_identity_coefficients():
    t = solve_trust(CoefficientMatrix(np.eye(2), 1.0), T_WORKER)
    np.testing.assert_allclose(t, T_WORKER, atol=1e-15)


def test_solve_round_trip_derived_example():
    cond, marginal = forward_distributions(T_WORKER, T_PEER, PRIOR)
    np.testing.assert_allclose(cond, [[0.735484, 0.264516], [0.378947, 0.621053]], atol=1e-6)
    c = build_coefficients(T_PEER, PRIOR, marginal)
    np.testing.assert_allclose(solve_trust(c, cond), T_WORKER, atol=1e-9)


def test_solve_heuristic_rows():
    c = build_coefficients(T_PEER, PRIOR, model_marginal(T_PEER, PRIOR))
    s = np.array([0.35, 0.65])
    # a worker whose reports ignore the truth: P(y_i | y_j) = s for every y_j
    cond, _ = forward_distributions(np.tile(s, (2, 1)), T_PEER, PRIOR)
    np.testing.assert_allclose(cond, np.tile(s, (2, 1)), atol=1e-15)
    t = solve_trust(c, cond)
    np.testing.assert_allclose(t, np.tile(s, (2, 1)), atol=1e-12)
    assert abs(reward_score(t)) <= 1e-9


def test_solve_singular_is_failure():
    same = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(SolverFailure):
        solve_trust(CoefficientMatrix(same, np.inf), T_WORKER)


def test_solve_rejects_missing_rows():
    with pytest.raises(InvalidInput):
        solve_trust(CoefficientMatrix(np.eye(2), 1.0), [[1.0, 0.0], [np.nan, np.nan]])


def test_round_trip_random_instances():
    rng = np.random.default_rng(11)
    for i in range(300):
        k = 2 + i % 3
        prior = rng.dirichlet(np.ones(k) * 2)
        t_i, t_j = random_stochastic(rng, k), random_stochastic(rng, k)
        cond, marginal = forward_distributions(t_i, t_j, prior)
        c = build_coefficients(t_j, prior, marginal)
        if not is_informative(c, 1e4):
            continue
        np.testing.assert_allclose(solve_trust(c, cond), t_i, atol=1e-9)


def test_consistency_error_shrinks_with_shared_tasks():
    k = 2
    errors = {n: [] for n in (1_000, 10_000, 100_000)}
    for seed in range(50):
        rng = np.random.default_rng(seed)
        for n in errors:
            g = rng.choice(k, size=n, p=PRIOR)
            yj = (rng.random(n) >= T_PEER[g, 0]).astype(int)
            yi = (rng.random(n) >= T_WORKER[g, 0]).astype(int)
            raw, _ = estimate_trust(yi, yj, T_PEER, PRIOR)
            errors[n].append(np.abs(raw - T_WORKER).max())
    med = [np.median(errors[n]) for n in sorted(errors)]
    assert med[0] >= med[1] >= med[2]
    assert med[2] < 0.02


def test_estimate_trust_model_marginal_and_errors():
    rng = np.random.default_rng(3)
    n = 50_000
    g = rng.choice(2, size=n, p=PRIOR)
    yj = (rng.random(n) >= T_PEER[g, 0]).astype(int)
    yi = (rng.random(n) >= T_WORKER[g, 0]).astype(int)
    raw, coeffs = estimate_trust(yi, yj, T_PEER, PRIOR, marginal="model")
    np.testing.assert_allclose(coeffs.c.sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(raw, T_WORKER, atol=0.03)
    with pytest.raises(NotWellDefined):
        estimate_trust([0, 1], [0, 0], T_PEER, PRIOR)
    with pytest.raises(InvalidInput):
        estimate_trust(yi, yj, T_PEER, PRIOR, marginal="posterior")


# -- projection -------------------------------------------------------------------

def test_projection_examples():
    np.testing.assert_array_equal(project_stochastic(T_WORKER), T_WORKER)
    np.testing.assert_allclose(project_stochastic([[1.05, -0.05], [0.3, 0.7]])[0], [1, 0])
    np.testing.assert_allclose(project_stochastic([[0.6, 0.6], [0.3, 0.7]])[0], [0.5, 0.5])


@settings(max_examples=300, deadline=None)
@given(k=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_projection_matches_bisection_oracle(k, seed):
    v = np.random.default_rng(seed).normal(0.3, 0.8, size=k)
    np.testing.assert_allclose(project_simplex(v)[0], simplex_bisection(v), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(k=st.integers(2, 5), seed=st.integers(0, 2**32 - 1))
def test_projected_rows_are_valid_and_valid_rows_fixed(k, seed):
    rng = np.random.default_rng(seed)
    raw = random_stochastic(rng, k) + rng.normal(0, 0.1, size=(k, k))
    p = project_stochastic(raw)
    assert p.min() >= 0
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-12)
    valid = random_stochastic(rng, k)
    np.testing.assert_array_equal(project_stochastic(valid), valid)
