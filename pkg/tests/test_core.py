import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from acmdp.core import (
    ABSORBING_ACTION,
    ContinuousModelSpec,
    FiniteMdp,
    GridSpec,
    ModelError,
    NoiseLaw,
    StationaryPolicy,
    discretize,
    dump_model_json,
    eta,
    eta_pairs,
    finite_value_states,
    infinite_cost_states,
    load_model_json,
    model_from_dict,
    model_to_dict,
    shift_costs,
    transform_infinite_costs,
    uniform_points,
    validate_mdp,
)
from acmdp.models import LqParams, lq_model, random_mdp


def one_state(cost=0.0):
    return FiniteMdp.from_lists([[0]], [[cost]], [[[1.0]]])


class TestValidate:
    def test_single_state_valid(self):
        m = one_state()
        assert validate_mdp(m) is m
        assert m.num_states == 1 and m.num_pairs == 1

    def test_row_not_stochastic(self):
        with pytest.raises(ModelError, match="row not stochastic"):
            FiniteMdp.from_lists([[0], [0]], [[0.0], [0.0]], [[[0.5, 0.4]], [[0.0, 1.0]]])

    def test_empty_action_set(self):
        with pytest.raises(ModelError, match="empty action set"):
            FiniteMdp.from_lists([[0], []], [[0.0], []], [[[1.0, 0.0]], []])

    def test_cost_below_bound(self):
        with pytest.raises(ModelError, match="cost below lower bound"):
            FiniteMdp.from_lists([[0]], [[-1.0]], [[[1.0]]], lower_bound=0.0)

    def test_index_out_of_range(self):
        with pytest.raises(ModelError, match="index out of range"):
            FiniteMdp.from_lists([[0]], [[0.0]], [[{3: 1.0}]])

    def test_raw_constructor_checked(self):
        m = one_state()
        bad = FiniteMdp(1, ((0,),), m.state_ptr, m.cost, sp.csr_matrix(np.array([[0.7]])), 0.0)
        with pytest.raises(ModelError, match="row not stochastic"):
            validate_mdp(bad)

    def test_nan_and_neg_inf_rejected(self):
        with pytest.raises(ModelError):
            FiniteMdp.from_lists([[0]], [[math.nan]], [[[1.0]]])
        with pytest.raises(ModelError):
            FiniteMdp.from_lists([[0]], [[-math.inf]], [[[1.0]]])

    def test_inf_literal_and_lower_bound_default(self):
        m = FiniteMdp.from_lists([[0, 1]], [[2.0, "inf"]], [[[1.0], [1.0]]])
        assert m.cost_of(0, 1) == math.inf
        assert m.lower_bound == 2.0

    def test_row_sum_tolerance(self):
        FiniteMdp.from_lists([[0]], [[0.0]], [[[1.0 + 5e-13]]])
        with pytest.raises(ModelError, match="row not stochastic"):
            FiniteMdp.from_lists([[0]], [[0.0]], [[[1.0 + 1e-10]]])

    def test_policy_membership(self):
        m = one_state()
        with pytest.raises(ModelError):
            m.policy_pairs(StationaryPolicy((7,)))


class TestEta:
    def test_zero_continuation(self):
        m = one_state(1.0)
        for alpha in (0.0, 0.3, 1.0):
            assert eta(m, np.zeros(1), alpha, 0, 0) == 1.0

    def test_constant_continuation(self):
        m = FiniteMdp.from_lists([[0], [0]], [[1.0], [0.0]], [[[0.25, 0.75]], [[1.0, 0.0]]])
        assert eta(m, np.full(2, 2.0), 0.5, 0, 0) == 2.0

    def test_infinite_cost(self):
        m = FiniteMdp.from_lists([[0, 1]], [[0.0, "inf"]], [[[1.0], [1.0]]])
        assert eta(m, np.zeros(1), 0.9, 0, 1) == math.inf

    def test_infinite_u_reachable_and_unreachable(self):
        m = FiniteMdp.from_lists([[0, 1], [0]], [[1.0, 1.0], [0.0]], [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0]]])
        u = np.array([0.0, math.inf])
        assert eta(m, u, 0.5, 0, 0) == math.inf
        assert eta(m, u, 0.5, 0, 1) == 1.0
        np.testing.assert_array_equal(eta_pairs(m, u, 0.5)[:2], [math.inf, 1.0])

    def test_pairs_agree_with_scalar(self):
        m = random_mdp(3, 4, 3, sparsity=0.4)
        u = np.arange(4.0)
        q = eta_pairs(m, u, 0.7)
        for x in range(m.num_states):
            for a in m.actions(x):
                assert q[m.pair(x, a)] == pytest.approx(eta(m, u, 0.7, x, a), abs=1e-14)

    @given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.lists(st.floats(0, 50), min_size=5, max_size=5),
           st.lists(st.floats(0, 5), min_size=5, max_size=5))
    def test_monotone_in_u(self, seed, alpha, u, bump):
        m = random_mdp(seed, 5, 3, sparsity=0.3)
        u = np.array(u)
        assert np.all(eta_pairs(m, u, alpha) <= eta_pairs(m, u + np.array(bump), alpha))

    @given(st.integers(0, 10_000), st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
    def test_alpha_zero_is_cost(self, seed, u):
        m = random_mdp(seed, 4, 2, infinite_cost_fraction=0.3)
        np.testing.assert_array_equal(eta_pairs(m, np.array(u), 0.0), m.cost)


class TestDiscretize:
    def _spec(self, step_fn, noise=((0.0,), (1.0,))):
        return ContinuousModelSpec((0.0, 2.0), (0.0, 1.0), lambda x, a: x + a, step_fn, NoiseLaw(*noise))

    def test_exact_hit(self):
        m = discretize(self._spec(lambda x, a, e: np.full_like(x + a + e, 1.0)), GridSpec([0.0, 1.0, 2.0], [0.0]))
        for x in range(3):
            assert m.row(x, 0) == {1: 1.0}

    def test_midway(self):
        m = discretize(self._spec(lambda x, a, e: 0.5 + 0 * x), GridSpec([0.0, 1.0, 2.0], [0.0]))
        assert m.row(0, 0) == {0: 0.5, 1: 0.5}

    def test_clamp_and_reflect(self):
        spec = self._spec(lambda x, a, e: x + 1.5 + 0 * a)
        clamp = discretize(spec, GridSpec([0.0, 1.0, 2.0], [0.0], "clamp"))
        assert clamp.row(2, 0) == {2: 1.0}
        refl = discretize(spec, GridSpec([0.0, 1.0, 2.0], [0.0], "reflect"))
        # 2 + 1.5 reflects to 0.5
        assert refl.row(2, 0) == {0: 0.5, 1: 0.5}

    def test_successor_outside_after_reflection(self):
        spec = self._spec(lambda x, a, e: x + 10.0 + 0 * a)
        with pytest.raises(ModelError, match="successor outside"):
            discretize(spec, GridSpec([0.0, 1.0, 2.0], [0.0], "reflect"))

    def test_costs_at_grid_points(self):
        m = discretize(self._spec(lambda x, a, e: x + 0 * a), GridSpec([0.0, 1.0, 2.0], [0.0, 1.0]))
        assert m.cost_of(2, 1) == 3.0

    def test_lq_small_grid_symmetric(self):
        spec = lq_model(LqParams(), (-2.0, 2.0), (-2.0, 2.0))
        pts = uniform_points(-2, 2, 1)
        m = discretize(spec, GridSpec(pts, pts))
        P = m.kernel.toarray()
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        n = 5
        for x in range(n):
            for a in range(n):
                row = P[m.pair(x, a)]
                mirror = P[m.pair(n - 1 - x, n - 1 - a)]
                np.testing.assert_allclose(row, mirror[::-1], atol=1e-15)
                assert m.cost_of(x, a) == m.cost_of(n - 1 - x, n - 1 - a)

    def test_grid_outside_interval(self):
        with pytest.raises(ModelError):
            discretize(self._spec(lambda x, a, e: x), GridSpec([0.0, 3.0], [0.0]))

    def test_uniform_points_symmetric(self):
        p = uniform_points(-6, 6, 0.1)
        assert p.size == 121 and p[60] == 0.0
        np.testing.assert_array_equal(p, -p[::-1])

    def test_grid_spec_checks(self):
        with pytest.raises(ModelError):
            GridSpec([0.0], [0.0])
        with pytest.raises(ModelError):
            GridSpec([0.0, 1.0], [])
        with pytest.raises(ModelError):
            GridSpec([1.0, 0.0], [0.0])

    def test_noise_law_checks(self):
        with pytest.raises(ModelError):
            NoiseLaw((0.0, 1.0), (0.5, 0.6))


class TestInfiniteCosts:
    def test_all_finite_unchanged(self):
        m = random_mdp(1, 4, 3, sparsity=0.2)
        t = transform_infinite_costs(m)
        assert model_to_dict(t) == model_to_dict(m)

    def test_bad_state_becomes_sink(self):
        m = FiniteMdp.from_lists([[0], [0, 1]], [[1.0], ["inf", "inf"]], [[{1: 1.0}], [{0: 1.0}, {1: 1.0}]])
        t = transform_infinite_costs(m)
        assert t.num_states == 2
        assert t.actions(1) == (ABSORBING_ACTION,)
        assert t.cost_of(1, ABSORBING_ACTION) == math.inf
        assert t.row(1, ABSORBING_ACTION) == {1: 1.0}
        assert t.row(0, 0) == {1: 1.0}

    def test_mass_redirected(self):
        m = FiniteMdp.from_lists(
            [[0], [0], [0, 1]],
            [[0.5], ["inf"], [1.0, "inf"]],
            [[{0: 0.2, 1: 0.3, 2: 0.5}], [{1: 1.0}], [{2: 1.0}, {0: 1.0}]],
        )
        t = transform_infinite_costs(m)
        # survivors 0, 2 -> 0, 1; sink is 2
        assert t.row(0, 0) == pytest.approx({0: 0.2, 1: 0.5, 2: 0.3})
        assert t.actions(1) == (0,)
        assert np.isfinite(t.cost[:-1]).all()

    def test_trivial_model(self):
        m = FiniteMdp.from_lists([[0]], [["inf"]], [[[1.0]]])
        with pytest.raises(ModelError, match="trivial model"):
            transform_infinite_costs(m)

    @given(st.integers(0, 5000))
    def test_output_invariants(self, seed):
        m = random_mdp(seed, 5, 3, sparsity=0.3, infinite_cost_fraction=0.4)
        t = transform_infinite_costs(m)
        validate_mdp(t)
        survivors = m.num_states - int(infinite_cost_states(m).sum())
        assert np.isfinite(t.cost[: t.state_ptr[survivors]]).all()
        if t.num_states > survivors:
            assert t.row(survivors, ABSORBING_ACTION) == {survivors: 1.0}

    def test_finite_value_states(self):
        m = FiniteMdp.from_lists([[0], [0]], [[0.0], ["inf"]], [[{1: 1.0}], [{1: 1.0}]])
        np.testing.assert_array_equal(finite_value_states(m), [False, False])
        m2 = FiniteMdp.from_lists([[0, 1], [0]], [[0.0, 1.0], ["inf"]], [[{1: 1.0}, {0: 1.0}], [{1: 1.0}]])
        np.testing.assert_array_equal(finite_value_states(m2), [True, False])


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        m = random_mdp(5, 4, 3, sparsity=0.5, infinite_cost_fraction=0.3)
        p = tmp_path / "m.json"
        dump_model_json(m, p)
        back = load_model_json(p)
        assert model_to_dict(back) == model_to_dict(m)
        assert '"inf"' in p.read_text()

    def test_malformed(self):
        with pytest.raises(ModelError, match="malformed"):
            model_from_dict({"states": []})

    def test_shift(self):
        m = random_mdp(2, 3, 2)
        s = shift_costs(m, 7.3)
        np.testing.assert_array_equal(s.cost, m.cost + 7.3)
        assert s.lower_bound == m.lower_bound + 7.3
