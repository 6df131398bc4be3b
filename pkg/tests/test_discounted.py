import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acmdp.core import FiniteMdp, StationaryPolicy, shift_costs
from acmdp.discounted import (
    ConvergenceError,
    check_policy_optimality,
    discounted_policy_values,
    finite_horizon_solve,
    pair_gaps,
    read_solution_json,
    value_iteration,
    verify_dcoe,
    write_solution_json,
)
from acmdp.models import random_mdp, single_state_model

from conftest import brute_discounted, brute_discounted_mp, dyadic_mdp, two_absorbing


def test_finite_horizon_empty():
    v, pols = finite_horizon_solve(random_mdp(0, 3, 2), 0.9, 0)
    assert v.shape == (1, 3) and not v.any() and pols == []


def test_finite_horizon_geometric():
    v, _ = finite_horizon_solve(single_state_model(1.0), 0.5, 3)
    assert v[3, 0] == 1.75


def test_finite_horizon_two_step_brute_force():
    # deterministic 2-state chain: action = next state
    m = FiniteMdp.from_lists([[0, 1], [0, 1]], [[3.0, 1.0], [0.5, 2.0]],
                             [[{0: 1.0}, {1: 1.0}], [{0: 1.0}, {1: 1.0}]])
    alpha = 0.8
    v, pols = finite_horizon_solve(m, alpha, 2)
    for x in range(2):
        best = math.inf
        for a0, a1 in itertools.product(range(2), repeat=2):
            y = a0  # deterministic successor
            best = min(best, m.cost_of(x, a0) + alpha * m.cost_of(y, a1))
        assert v[2, x] == pytest.approx(best, abs=1e-15)
    assert pols[0].choice == (1, 0)


def test_finite_horizon_alpha_one():
    v, _ = finite_horizon_solve(single_state_model(2.0), 1.0, 4)
    assert v[4, 0] == 8.0


def test_vi_geometric_series():
    s = value_iteration(single_state_model(1.0), 0.5)
    assert s.values[0] == pytest.approx(2.0, abs=1e-9)
    assert s.policy.choice == (0,) and s.opt_sets == ((0,),)


def test_vi_zero_cost():
    m = FiniteMdp.from_lists([[0, 1, 2]] * 2, [[0.0] * 3] * 2, [[{0: 1.0}, {1: 1.0}, {0: 0.5, 1: 0.5}]] * 2)
    s = value_iteration(m, 0.9)
    np.testing.assert_array_equal(s.values, 0.0)
    assert s.opt_sets == ((0, 1, 2), (0, 1, 2))


def test_vi_matches_policy_enumeration():
    m = random_mdp(11, 4, 3, sparsity=0.3)
    s = value_iteration(m, 0.9)
    np.testing.assert_allclose(s.values, brute_discounted(m, 0.9), atol=1e-8)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.99, 0.9999, 1 - 1e-7, 1 - 1e-10])
def test_vi_matches_enumeration_across_alpha(alpha):
    m = dyadic_mdp(4, 3, 2)
    s = value_iteration(m, alpha)
    ref, rel = brute_discounted_mp(m, alpha)
    # a DCOE residual r bounds the value error by r / (1 - alpha)
    assert np.abs(s.values - ref).max() <= s.declared_tol / (1 - alpha)
    assert abs(s.scaled_min - (1 - alpha) * ref.min()) <= s.declared_tol
    np.testing.assert_allclose(s.relative, rel, atol=1e-9)


def test_vi_errors():
    m = random_mdp(0, 3, 2)
    with pytest.raises(ValueError):
        value_iteration(m, 1.0)
    with pytest.raises(ValueError):
        value_iteration(m, -0.1)
    with pytest.raises(ConvergenceError) as info:
        value_iteration(m, 0.99, max_iter=1)
    assert info.value.iterations == 1
    assert info.value.last_values.shape == (3,)


def test_vi_infinite_states():
    m = FiniteMdp.from_lists([[0, 1], [0]], [[1.0, 0.0], ["inf"]], [[{0: 1.0}, {1: 1.0}], [{1: 1.0}]])
    s = value_iteration(m, 0.5)
    assert s.values[0] == pytest.approx(2.0) and s.values[1] == math.inf
    assert s.opt_sets[0] == (0,)
    assert verify_dcoe(m, 0.5, s.values, s.declared_tol).passed


def test_periodic_chain_converges():
    cycle = FiniteMdp.from_lists([[0], [0]], [[0.0], [2.0]], [[{1: 1.0}], [{0: 1.0}]])
    alpha = 0.999
    s = value_iteration(cycle, alpha)
    exact = np.array([2 * alpha, 2.0]) / (1 - alpha**2)
    np.testing.assert_allclose(s.values, exact, rtol=1e-9)


def test_multichain_finishes_with_policy_iteration():
    m = two_absorbing()
    for alpha in (0.9999, 1 - 1e-8):
        s = value_iteration(m, alpha)
        assert s.method == "policy_iteration"
        assert s.values[0] == 0.0
        assert s.values[1] == pytest.approx(1 / (1 - alpha), rel=1e-12)
        assert verify_dcoe(m, alpha, s.values, s.declared_tol).passed


def test_policy_values_accurate_near_one():
    rng = np.random.default_rng(0)
    P = rng.random((6, 6))
    P /= P.sum(axis=1, keepdims=True)
    c = rng.random(6)
    for alpha in (0.0, 0.5, 0.99):
        v = discounted_policy_values(P, c, alpha)
        np.testing.assert_allclose(v, np.linalg.solve(np.eye(6) - alpha * P, c), rtol=1e-12)
    # constant cost: exact answer c / (1 - alpha) for any stochastic P
    alpha = 1 - 1e-9
    v = discounted_policy_values(P, np.ones(6), alpha)
    np.testing.assert_allclose(v, 1 / (1 - alpha), rtol=1e-12)


def test_verify_dcoe_exact_and_perturbed():
    m = random_mdp(2, 4, 2)
    alpha = 0.8
    s = value_iteration(m, alpha)
    rep = verify_dcoe(m, alpha, s.values, s.declared_tol)
    assert rep.passed and rep.max_residual <= s.declared_tol
    bumped = s.values.copy()
    bumped[1] += 1.0
    r = verify_dcoe(m, alpha, bumped, 1e-6).residuals
    # the bump at x=1 feeds back through the self-transition mass only
    assert 1 - alpha - 1e-9 <= r[1] <= 1 + 1e-9
    assert r[1] > 0.5 * (1 - alpha)
    assert not verify_dcoe(m, alpha, bumped, 1e-6).passed


def test_verify_dcoe_zero_model():
    m = FiniteMdp.from_lists([[0], [0]], [[0.0], [0.0]], [[{1: 1.0}], [{0: 1.0}]])
    rep = verify_dcoe(m, 0.9, np.zeros(2), 0.0)
    assert rep.max_residual == 0.0 and rep.passed


def test_check_policy_optimality():
    m = FiniteMdp.from_lists([[0, 1]], [[1.0, 2.0]], [[{0: 1.0}, {0: 1.0}]])
    s = value_iteration(m, 0.9)
    assert check_policy_optimality(m, 0.9, s, s.policy)
    assert not check_policy_optimality(m, 0.9, s, StationaryPolicy((1,)))
    assert pair_gaps(m, s)[1] == pytest.approx(1.0, abs=1e-8)
    tie = FiniteMdp.from_lists([[0, 1, 2]], [[1.0] * 3], [[{0: 1.0}] * 3])
    st_ = value_iteration(tie, 0.9)
    for a in range(3):
        assert check_policy_optimality(tie, 0.9, st_, StationaryPolicy((a,)))
    with pytest.raises(ValueError):
        check_policy_optimality(m, 0.5, s, s.policy)


def test_solution_roundtrip(tmp_path):
    m = FiniteMdp.from_lists([[0, 1], [0]], [[1.0, 0.0], ["inf"]], [[{0: 1.0}, {1: 1.0}], [{1: 1.0}]])
    s = value_iteration(m, 0.5)
    p = tmp_path / "s.json"
    write_solution_json(s, p)
    assert "null" in p.read_text()
    back = read_solution_json(p)
    np.testing.assert_array_equal(back.values, s.values)
    assert back.opt_sets == s.opt_sets and back.policy == s.policy
    assert back.declared_tol == s.declared_tol


# -- properties ---------------------------------------------------------------

seeds = st.integers(0, 100_000)
alphas = st.sampled_from([0.0, 0.3, 0.9, 0.99, 0.999, 0.99999])


@given(seeds, alphas)
def test_monotone_iterates(seed, alpha):
    m = random_mdp(seed, 5, 3, sparsity=0.3, unichain=True)
    s = value_iteration(m, alpha, record_history=True)
    assert s.history["min_increment"].min() >= 0.0


@given(seeds, alphas, st.floats(-50, 50))
def test_shift_covariance(seed, alpha, k):
    m = random_mdp(seed, 4, 3, sparsity=0.2, unichain=True)
    a, b = value_iteration(m, alpha), value_iteration(shift_costs(m, k), alpha)
    np.testing.assert_allclose(b.values, a.values + k / (1 - alpha), rtol=1e-10, atol=1e-9)
    assert a.opt_sets == b.opt_sets


@given(seeds, st.sampled_from([0.5, 0.9, 0.95]))
def test_contraction(seed, alpha):
    m = random_mdp(seed, 4, 2, sparsity=0.3)
    s = value_iteration(m, alpha, record_history=True)
    # sup-norm increments of the (shifted) plain iterates shrink by at least alpha
    inc = s.history["sup_increment"]
    assert np.all(inc[1:] <= alpha * inc[:-1] * (1 + 1e-9) + 1e-15)


@given(seeds, alphas)
def test_opt_sets_nonempty_and_policy_inside(seed, alpha):
    m = random_mdp(seed, 5, 4, sparsity=0.4, infinite_cost_fraction=0.2)
    s = value_iteration(m, alpha)
    for x in range(m.num_states):
        assert s.opt_sets[x] and s.policy.choice[x] == s.opt_sets[x][0]
    assert check_policy_optimality(m, alpha, s, s.policy)


@given(seeds, alphas)
def test_values_bounded_below(seed, alpha):
    m = random_mdp(seed, 3, 2, cost_range=(2.0, 5.0))
    s = value_iteration(m, alpha)
    assert np.all(s.values >= 2.0 / (1 - alpha) * (1 - 1e-12))
