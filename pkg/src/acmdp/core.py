"""Finite MDP data model, the one-step Bellman operation, grid discretization
of continuous models and the infinite-cost model transformation.

A model is stored pair-major: every admissible (state, action) pair gets one
row in a flat cost vector and one row in a sparse ``(num_pairs, num_states)``
transition matrix.  Pairs of state ``x`` occupy ``state_ptr[x]:state_ptr[x+1]``.
Infinite costs are stored as ``numpy.inf``; ``-inf`` and ``nan`` are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12
INF = math.inf
ABSORBING_ACTION = "a*"


class ModelError(ValueError):
    """Raised when a model violates one of its structural invariants."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StationaryPolicy:
    """Deterministic stationary policy: one action identifier per state."""

    choice: tuple

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(self.choice))

    def __len__(self) -> int:
        return len(self.choice)

    def __getitem__(self, x: int):
        return self.choice[x]


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with extended-real costs and a sparse kernel.

    Use :meth:`from_lists` or :func:`load_model_json` rather than the raw
    constructor; both run :func:`validate_mdp`.
    """

    num_states: int
    action_ids: tuple
    state_ptr: np.ndarray
    cost: np.ndarray
    kernel: sp.csr_matrix
    lower_bound: float
    _index: tuple = field(default=(), repr=False)

    def __post_init__(self):
        index = tuple({a: i for i, a in enumerate(acts)} for acts in self.action_ids)
        object.__setattr__(self, "_index", index)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_lists(
        cls,
        actions: Sequence[Sequence[Hashable]],
        costs: Sequence[Sequence[float]],
        kernels: Sequence[Sequence[Mapping[int, float] | Sequence[float]]],
        lower_bound: float | None = None,
    ) -> "FiniteMdp":
        """Build and validate a model from nested per-state lists.

        ``kernels[x][i]`` is either a dense row of length ``num_states`` or a
        ``{next_state: probability}`` mapping for the i-th action of ``x``.
        """
        n = len(actions)
        if n < 1:
            raise ModelError("model needs at least one state")
        if len(costs) != n or len(kernels) != n:
            raise ModelError("actions, costs and kernels must have one entry per state")
        ptr = [0]
        flat_cost: list[float] = []
        rows, cols, vals = [], [], []
        pair = 0
        for x in range(n):
            if len(actions[x]) == 0:
                raise ModelError(f"empty action set at state {x}")
            if len(costs[x]) != len(actions[x]) or len(kernels[x]) != len(actions[x]):
                raise ModelError(f"state {x}: costs/kernels do not match the action list")
            for c, row in zip(costs[x], kernels[x]):
                flat_cost.append(_parse_cost(c))
                items = row.items() if isinstance(row, Mapping) else enumerate(row)
                for y, p in items:
                    y = int(y)
                    if y < 0 or y >= n:
                        raise ModelError(f"index out of range: next state {y} at state {x}")
                    if p != 0.0:
                        rows.append(pair)
                        cols.append(y)
                        vals.append(float(p))
                pair += 1
            ptr.append(pair)
        cost = np.asarray(flat_cost, dtype=float)
        kernel = sp.csr_matrix((vals, (rows, cols)), shape=(pair, n))
        kernel.sum_duplicates()
        if lower_bound is None:
            finite = cost[np.isfinite(cost)]
            lower_bound = float(finite.min()) if finite.size else 0.0
        model = cls(
            num_states=n,
            action_ids=tuple(tuple(a) for a in actions),
            state_ptr=_frozen(np.asarray(ptr, dtype=np.int64)),
            cost=_frozen(cost),
            kernel=kernel,
            lower_bound=float(lower_bound),
        )
        return validate_mdp(model)

    # -- accessors ----------------------------------------------------------

    @property
    def num_pairs(self) -> int:
        return int(self.state_ptr[-1])

    @property
    def pair_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_states), np.diff(self.state_ptr))

    def actions(self, x: int) -> tuple:
        return self.action_ids[x]

    def num_actions(self, x: int) -> int:
        return int(self.state_ptr[x + 1] - self.state_ptr[x])

    def local_index(self, x: int, a: Hashable) -> int:
        try:
            return self._index[x][a]
        except KeyError:
            raise ModelError(f"action {a!r} is not available at state {x}") from None

    def pair(self, x: int, a: Hashable) -> int:
        return int(self.state_ptr[x]) + self.local_index(x, a)

    def cost_of(self, x: int, a: Hashable) -> float:
        return float(self.cost[self.pair(x, a)])

    def row(self, x: int, a: Hashable) -> dict[int, float]:
        p = self.pair(x, a)
        lo, hi = self.kernel.indptr[p], self.kernel.indptr[p + 1]
        return {int(y): float(q) for y, q in zip(self.kernel.indices[lo:hi], self.kernel.data[lo:hi])}

    def policy_pairs(self, policy: StationaryPolicy) -> np.ndarray:
        """Flat pair index of the chosen action at every state."""
        if len(policy) != self.num_states:
            raise ModelError("policy length does not match the number of states")
        return np.array([self.pair(x, a) for x, a in enumerate(policy.choice)], dtype=np.int64)

    def policy_matrix(self, policy: StationaryPolicy) -> tuple[np.ndarray, sp.csr_matrix]:
        """Cost vector and transition matrix of the chain induced by ``policy``."""
        idx = self.policy_pairs(policy)
        return self.cost[idx].copy(), self.kernel[idx]

    def policy_from_local(self, local: Sequence[int]) -> StationaryPolicy:
        return StationaryPolicy(tuple(self.action_ids[x][int(i)] for x, i in enumerate(local)))


def _parse_cost(c: Any) -> float:
    if isinstance(c, str):
        if c.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        raise ModelError(f"unrecognised cost literal {c!r}")
    return float(c)


def validate_mdp(model: FiniteMdp) -> FiniteMdp:
    """Return ``model`` if every structural invariant holds, else raise ModelError."""
    n = model.num_states
    if n < 1:
        raise ModelError("model needs at least one state")
    ptr = np.asarray(model.state_ptr)
    if ptr.shape != (n + 1,) or ptr[0] != 0:
        raise ModelError("index out of range: malformed state pointer")
    counts = np.diff(ptr)
    if np.any(counts < 1):
        x = int(np.flatnonzero(counts < 1)[0])
        raise ModelError(f"empty action set at state {x}")
    if len(model.action_ids) != n or any(len(a) != k for a, k in zip(model.action_ids, counts)):
        raise ModelError("index out of range: action lists do not match the pair layout")
    for x, acts in enumerate(model.action_ids):
        if len(set(acts)) != len(acts):
            raise ModelError(f"duplicate action identifiers at state {x}")
    P = model.num_pairs
    cost = np.asarray(model.cost)
    if cost.shape != (P,):
        raise ModelError("index out of range: cost vector does not match pairs")
    if np.isnan(cost).any():
        raise ModelError("cost table contains NaN")
    if np.isneginf(cost).any():
        raise ModelError("cost of -inf is not allowed")
    if not math.isfinite(model.lower_bound):
        raise ModelError("lower bound must be finite")
    finite = np.isfinite(cost)
    if np.any(cost[finite] < model.lower_bound):
        p = int(np.flatnonzero(finite & (cost < model.lower_bound))[0])
        raise ModelError(f"cost below lower bound at pair {p}: {cost[p]} < {model.lower_bound}")
    K = model.kernel
    if K.shape != (P, n):
        raise ModelError("index out of range: kernel shape does not match (pairs, states)")
    if K.nnz and (K.indices.min() < 0 or K.indices.max() >= n):
        raise ModelError("index out of range: kernel column outside state space")
    if np.isnan(K.data).any() or np.any(K.data < 0):
        raise ModelError("kernel has negative or NaN entries")
    sums = np.asarray(K.sum(axis=1)).ravel()
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if bad.any():
        p = int(np.flatnonzero(bad)[0])
        x = int(np.searchsorted(ptr, p, side="right") - 1)
        raise ModelError(f"row not stochastic at state {x}, pair {p}: sum={sums[p]!r}")
    return model


# -- Bellman operation ------------------------------------------------------


def eta_pairs(model: FiniteMdp, u: np.ndarray, alpha: float) -> np.ndarray:
    """``c(x,a) + alpha * sum_y u(y) q(y|x,a)`` for every pair at once."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.num_states,):
        raise ValueError("u must have one entry per state")
    if np.isnan(u).any() or np.isneginf(u).any():
        raise ValueError("u must be bounded below and NaN-free")
    if alpha == 0.0:
        return model.cost.copy()
    # stored zeros are eliminated, so inf*0 never occurs
    return model.cost + alpha * (model.kernel @ u)


def eta(model: FiniteMdp, u: np.ndarray, alpha: float, x: int, a: Hashable) -> float:
    """One-step lookahead cost of action ``a`` at state ``x`` against ``u``."""
    p = model.pair(x, a)
    c = float(model.cost[p])
    if alpha == 0.0 or math.isinf(c):
        return c
    lo, hi = model.kernel.indptr[p], model.kernel.indptr[p + 1]
    ys = model.kernel.indices[lo:hi]
    qs = model.kernel.data[lo:hi]
    uy = np.asarray(u, dtype=float)[ys]
    if np.isinf(uy).any():
        return INF
    return c + alpha * float(qs @ uy)


def state_min(model: FiniteMdp, pair_values: np.ndarray) -> np.ndarray:
    """Per-state minimum of a pair-indexed array."""
    return np.minimum.reduceat(pair_values, model.state_ptr[:-1])


def state_argmin(model: FiniteMdp, pair_values: np.ndarray) -> np.ndarray:
    """Lowest local index attaining the per-state minimum."""
    out = np.empty(model.num_states, dtype=np.int64)
    for x in range(model.num_states):
        lo, hi = model.state_ptr[x], model.state_ptr[x + 1]
        out[x] = int(np.argmin(pair_values[lo:hi]))
    return out


def sets_within(model: FiniteMdp, pair_values: np.ndarray, bound: np.ndarray) -> tuple:
    """Per state, the action ids whose pair value is ``<= bound[x]``."""
    out = []
    for x in range(model.num_states):
        lo, hi = model.state_ptr[x], model.state_ptr[x + 1]
        keep = np.flatnonzero(pair_values[lo:hi] <= bound[x])
        out.append(tuple(model.action_ids[x][i] for i in keep))
    return tuple(out)


def shift_costs(model: FiniteMdp, k: float) -> FiniteMdp:
    """Same model with every cost (and the lower bound) increased by ``k``."""
    return FiniteMdp(
        num_states=model.num_states,
        action_ids=model.action_ids,
        state_ptr=model.state_ptr,
        cost=_frozen(model.cost + k),
        kernel=model.kernel,
        lower_bound=model.lower_bound + k,
    )


def finite_value_states(model: FiniteMdp) -> np.ndarray:
    """Mask of states that can avoid infinite cost forever.

    Largest set ``S`` such that every state of ``S`` has a finite-cost action
    whose kernel row is supported in ``S``.  Outside ``S`` every discounted
    value with ``alpha > 0`` is ``+inf``.
    """
    finite_pair = np.isfinite(model.cost)
    alive = state_min(model, np.where(finite_pair, 0.0, 1.0)) == 0.0
    while True:
        leak = model.kernel @ (~alive).astype(float)
        ok_pair = finite_pair & (leak == 0.0)
        new_alive = state_min(model, np.where(ok_pair, 0.0, 1.0)) == 0.0
        if np.array_equal(new_alive, alive):
            return alive
        alive = new_alive


# -- continuous models and grids -------------------------------------------


@dataclass(frozen=True)
class NoiseLaw:
    """Finite discrete noise distribution."""

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        probs = tuple(float(p) for p in self.probs)
        if len(atoms) == 0 or len(atoms) != len(probs):
            raise ModelError("noise law needs matching, nonempty atoms and probabilities")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > ROW_SUM_TOL:
            raise ModelError("noise probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self) -> float:
        return math.fsum(a * p for a, p in zip(self.atoms, self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (a - m) ** 2 for a, p in zip(self.atoms, self.probs))


@dataclass(frozen=True)
class ContinuousModelSpec:
    """One-dimensional controlled model with finitely many noise atoms.

    ``cost_fn`` and ``next_state_fn`` must accept broadcast numpy arrays.
    ``admissible(x, a)`` (optional, also array-valued) restricts the action
    grid state by state.
    """

    state_interval: tuple
    action_interval: tuple
    cost_fn: Callable
    next_state_fn: Callable
    noise_law: NoiseLaw
    admissible: Callable | None = None
    name: str = "continuous"


@dataclass(frozen=True)
class GridSpec:
    state_points: np.ndarray
    action_points: np.ndarray
    boundary_policy: str = "clamp"

    def __post_init__(self):
        s = np.asarray(self.state_points, dtype=float)
        a = np.asarray(self.action_points, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ModelError("grid needs at least two state points")
        if a.ndim != 1 or a.size < 1:
            raise ModelError("grid needs at least one action point")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(a) <= 0):
            raise ModelError("grid points must be strictly increasing")
        if self.boundary_policy not in ("clamp", "reflect"):
            raise ModelError(f"unknown boundary policy {self.boundary_policy!r}")
        object.__setattr__(self, "state_points", _frozen(s))
        object.__setattr__(self, "action_points", _frozen(a))


def uniform_points(low: float, high: float, step: float) -> np.ndarray:
    """Points ``low, low+step, ..., high`` computed as integer multiples of step.

    Integer multiples keep grids symmetric about zero bit-for-bit.
    """
    k0 = round(low / step)
    k1 = round(high / step)
    if not (math.isclose(k0 * step, low, abs_tol=1e-9) and math.isclose(k1 * step, high, abs_tol=1e-9)):
        raise ModelError("interval endpoints must be multiples of the step")
    return np.arange(k0, k1 + 1) * step


def _apply(fn: Callable, *args: np.ndarray) -> np.ndarray:
    shape = np.broadcast_shapes(*(np.shape(a) for a in args))
    try:
        out = np.asarray(fn(*args), dtype=float)
        if out.shape == shape:
            return out
        return np.broadcast_to(out, shape).astype(float)
    except (TypeError, ValueError):
        return np.vectorize(fn, otypes=[float])(*args)


def discretize(spec: ContinuousModelSpec, grid: GridSpec) -> FiniteMdp:
    """Finite MDP on the grid with two-point linear-interpolation kernels."""
    xs, acts = grid.state_points, grid.action_points
    slo, shi = spec.state_interval
    alo, ahi = spec.action_interval
    eps = 1e-9 * max(1.0, abs(slo), abs(shi), abs(alo), abs(ahi))
    if xs[0] < slo - eps or xs[-1] > shi + eps or acts[0] < alo - eps or acts[-1] > ahi + eps:
        raise ModelError("grid points fall outside the model intervals")
    lo, hi = float(xs[0]), float(xs[-1])
    n, m = xs.size, acts.size
    atoms = np.asarray(spec.noise_law.atoms)
    probs = np.asarray(spec.noise_law.probs)

    X = xs[:, None]
    A = acts[None, :]
    if spec.admissible is None:
        allowed = np.ones((n, m), dtype=bool)
    else:
        allowed = np.broadcast_to(np.asarray(_apply(spec.admissible, X, A), dtype=bool), (n, m))
    cost = _apply(spec.cost_fn, X, A)
    Y = _apply(spec.next_state_fn, X[:, :, None], A[:, :, None], atoms[None, None, :])

    if grid.boundary_policy == "clamp":
        Y = np.clip(Y, lo, hi)
    else:
        Y = np.where(Y < lo, 2 * lo - Y, Y)
        Y = np.where(Y > hi, 2 * hi - Y, Y)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any((Y < lo - tol) | (Y > hi + tol) | ~np.isfinite(Y)):
        raise ModelError("successor outside the grid after boundary handling")
    Y = np.clip(Y, lo, hi)

    j = np.clip(np.searchsorted(xs, Y, side="right") - 1, 0, n - 2)
    w_hi = (Y - xs[j]) / (xs[j + 1] - xs[j])
    w_hi = np.clip(w_hi, 0.0, 1.0)
    w_lo = 1.0 - w_hi

    actions, costs, kernels = [], [], []
    for i in range(n):
        ai = np.flatnonzero(allowed[i])
        if ai.size == 0:
            raise ModelError(f"no admissible grid action at state {i}")
        actions.append([int(k) for k in ai])
        costs.append([float(cost[i, k]) for k in ai])
        rows = []
        for k in ai:
            row: dict[int, float] = {}
            for t in range(atoms.size):
                for y, w in ((j[i, k, t], w_lo[i, k, t]), (j[i, k, t] + 1, w_hi[i, k, t])):
                    if w > 0.0:
                        row[int(y)] = row.get(int(y), 0.0) + probs[t] * w
            rows.append(row)
        kernels.append(rows)
    finite = [c for cs in costs for c in cs if math.isfinite(c)]
    return FiniteMdp.from_lists(actions, costs, kernels, lower_bound=min(finite) if finite else 0.0)


# -- infinite-cost transformation ------------------------------------------


def infinite_cost_states(model: FiniteMdp) -> np.ndarray:
    """Mask of states whose every action has infinite one-step cost."""
    return state_min(model, model.cost) == INF


def transform_infinite_costs(model: FiniteMdp) -> FiniteMdp:
    """Restrict to finite-cost actions and collapse hopeless states.

    States without a finite-cost action are merged into one absorbing state
    (appended last) with the single action ``"a*"`` of cost ``+inf``; kernel
    mass into merged states is redirected there.  Surviving states keep
    their relative order.
    """
    finite_pair = np.isfinite(model.cost)
    if not finite_pair.any():
        raise ModelError("trivial model: every action has infinite cost")
    bad = infinite_cost_states(model)
    keep = np.flatnonzero(~bad)
    new_index = np.full(model.num_states, -1, dtype=np.int64)
    new_index[keep] = np.arange(keep.size)
    has_sink = bool(bad.any())
    sink = keep.size
    n_new = keep.size + int(has_sink)

    actions, costs, kernels = [], [], []
    K = model.kernel
    for x in keep:
        acts, cs, rows = [], [], []
        for i, a in enumerate(model.action_ids[x]):
            p = model.state_ptr[x] + i
            if not finite_pair[p]:
                continue
            row: dict[int, float] = {}
            for y, q in zip(K.indices[K.indptr[p]:K.indptr[p + 1]], K.data[K.indptr[p]:K.indptr[p + 1]]):
                tgt = int(new_index[y]) if new_index[y] >= 0 else sink
                row[tgt] = row.get(tgt, 0.0) + float(q)
            acts.append(a)
            cs.append(float(model.cost[p]))
            rows.append(row)
        actions.append(acts)
        costs.append(cs)
        kernels.append(rows)
    if has_sink:
        actions.append([ABSORBING_ACTION])
        costs.append([INF])
        kernels.append([{sink: 1.0}])
    assert len(actions) == n_new
    return FiniteMdp.from_lists(actions, costs, kernels, lower_bound=model.lower_bound)


# -- JSON model format ------------------------------------------------------


def _cost_to_json(c: float):
    return "inf" if c == INF else float(c)


def model_to_dict(model: FiniteMdp) -> dict:
    states = []
    for x in range(model.num_states):
        acts = []
        for a in model.action_ids[x]:
            row = model.row(x, a)
            acts.append({
                "id": a,
                "cost": _cost_to_json(model.cost_of(x, a)),
                "kernel": {str(y): q for y, q in sorted(row.items())},
            })
        states.append({"actions": acts})
    return {"num_states": model.num_states, "lower_bound": model.lower_bound, "states": states}


def model_from_dict(data: Mapping) -> FiniteMdp:
    try:
        n = int(data["num_states"])
        states = data["states"]
        if len(states) != n:
            raise ModelError("num_states does not match the states list")
        actions = [[act["id"] for act in st["actions"]] for st in states]
        costs = [[act["cost"] for act in st["actions"]] for st in states]
        kernels = [[{int(y): float(q) for y, q in act["kernel"].items()} for act in st["actions"]]
                   for st in states]
        lb = data.get("lower_bound")
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc
    return FiniteMdp.from_lists(actions, costs, kernels, lower_bound=lb)


def dump_model_json(model: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model_json(path: str | Path) -> FiniteMdp:
    return model_from_dict(json.loads(Path(path).read_text()))
