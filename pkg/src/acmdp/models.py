"""Canonical test models: the linear-quadratic example, a lost-sales
inventory model, and seeded random finite MDPs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ContinuousModelSpec,
    FiniteMdp,
    GridSpec,
    ModelError,
    NoiseLaw,
    ROW_SUM_TOL,
    uniform_points,
)


@dataclass(frozen=True)
class LqParams:
    """Scalar LQ system ``x' = gamma x + beta a + xi`` with cost ``q x^2 + r a^2``."""

    gamma: float = 1.0
    beta: float = 1.0
    q: float = 1.0
    r: float = 1.0
    noise_atoms: tuple = ((-1.0, 0.5), (1.0, 0.5))

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0:
            raise ModelError("q and r must be positive")
        if self.gamma * self.beta <= 0:
            raise ModelError("gamma * beta must be positive")
        atoms = tuple((float(v), float(p)) for v, p in self.noise_atoms)
        object.__setattr__(self, "noise_atoms", atoms)
        law = self.noise_law  # validates probabilities
        if abs(law.mean) > ROW_SUM_TOL:
            raise ModelError("noise must have zero mean")

    @property
    def noise_law(self) -> NoiseLaw:
        return NoiseLaw(tuple(v for v, _ in self.noise_atoms), tuple(p for _, p in self.noise_atoms))

    @property
    def noise_variance(self) -> float:
        return self.noise_law.variance


def two_atom_noise(sigma: float) -> tuple:
    """Symmetric law on ``{-sigma, +sigma}``; mean 0, variance ``sigma**2``."""
    if sigma == 0:
        return ((0.0, 1.0),)
    return ((-float(sigma), 0.5), (float(sigma), 0.5))


def lq_model(params: LqParams, state_interval=(-6.0, 6.0), action_interval=(-6.0, 6.0)) -> ContinuousModelSpec:
    g, b, q, r = params.gamma, params.beta, params.q, params.r
    return ContinuousModelSpec(
        state_interval=tuple(state_interval),
        action_interval=tuple(action_interval),
        cost_fn=lambda x, a: q * x * x + r * a * a,
        next_state_fn=lambda x, a, xi: g * x + b * a + xi,
        noise_law=params.noise_law,
        name="lq",
    )


def lq_grid(radius: float = 6.0, step: float = 0.1, action_radius: float | None = None,
            action_step: float | None = None, boundary_policy: str = "clamp") -> GridSpec:
    ar = radius if action_radius is None else action_radius
    ast = step if action_step is None else action_step
    return GridSpec(uniform_points(-radius, radius, step), uniform_points(-ar, ar, ast), boundary_policy)


def inventory_model(holding_rate: float, order_cost: float, demand_atoms, capacity: float) -> ContinuousModelSpec:
    """Lost-sales inventory: order up to capacity, pay holding plus a fixed order fee.

    ``demand_atoms`` is a sequence of ``(demand, probability)`` pairs.
    """
    if holding_rate < 0 or order_cost < 0:
        raise ModelError("holding and order costs must be nonnegative")
    if capacity <= 0:
        raise ModelError("capacity must be positive")
    demand = [(float(d), float(p)) for d, p in demand_atoms]
    if any(d < 0 for d, _ in demand):
        raise ModelError("demand atoms must be nonnegative")
    law = NoiseLaw(tuple(d for d, _ in demand), tuple(p for _, p in demand))
    cap = float(capacity)
    return ContinuousModelSpec(
        state_interval=(0.0, cap),
        action_interval=(0.0, cap),
        cost_fn=lambda x, a: holding_rate * x + order_cost * (a > 0),
        next_state_fn=lambda x, a, d: np.clip(x + a - d, 0.0, cap),
        noise_law=law,
        admissible=lambda x, a: a <= cap - x + 1e-12,
        name="inventory",
    )


def inventory_grid(capacity: float, step: float = 1.0) -> GridSpec:
    pts = uniform_points(0.0, capacity, step)
    return GridSpec(pts, pts, "clamp")


def single_state_model(cost: float = 1.0) -> FiniteMdp:
    return FiniteMdp.from_lists([[0]], [[cost]], [[{0: 1.0}]])


def random_mdp(
    seed: int,
    n_states: int,
    n_actions: int,
    cost_range=(0.0, 1.0),
    sparsity: float = 0.0,
    infinite_cost_fraction: float = 0.0,
    *,
    unichain: bool = False,
) -> FiniteMdp:
    """Reproducible random model.

    Each kernel entry is dropped with probability ``sparsity`` (at least one
    survives per row) and the rest get positive weights.  ``unichain=True``
    keeps an entry on state 0 in every row, so every stationary policy has a
    single recurrent class containing 0, which is aperiodic.  A fraction of
    pairs gets cost ``+inf``, always leaving one finite action per state.
    """
    if n_states < 1 or n_actions < 1:
        raise ModelError("need at least one state and one action")
    if not (0.0 <= sparsity <= 1.0 and 0.0 <= infinite_cost_fraction <= 1.0):
        raise ModelError("fractions must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    lo, hi = map(float, cost_range)
    actions, costs, kernels = [], [], []
    for _ in range(n_states):
        cs = rng.uniform(lo, hi, size=n_actions)
        inf_mask = rng.random(n_actions) < infinite_cost_fraction
        if inf_mask.all():
            inf_mask[rng.integers(n_actions)] = False
        cs = np.where(inf_mask, math.inf, cs)
        rows = []
        for _ in range(n_actions):
            keep = rng.random(n_states) >= sparsity
            if unichain:
                keep[0] = True
            if not keep.any():
                keep[rng.integers(n_states)] = True
            w = np.where(keep, rng.uniform(0.05, 1.0, size=n_states), 0.0)
            w = w / w.sum()
            rows.append({int(y): float(w[y]) for y in np.flatnonzero(w)})
        actions.append(list(range(n_actions)))
        costs.append([float(c) for c in cs])
        kernels.append(rows)
    return FiniteMdp.from_lists(actions, costs, kernels, lower_bound=lo)
