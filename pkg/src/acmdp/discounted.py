"""Discounted-cost dynamic programming on finite models.

Value iteration is run on the nonnegative costs ``c - lower_bound`` and
shifted back afterwards.  Iterates are carried in split form
``v_n = h_n + s_n`` with ``min h_n = 0``: the scalar ``s_n`` grows like
``1/(1 - alpha)`` while ``h_n`` stays at the scale of the relative values,
so discount factors very close to one keep full precision in ``h``.  The
split form is an exact re-parametrisation of the plain iterates
``v_{n+1} = T v_n`` since ``T(h + s) = T h + alpha * s``.

On multichain models the span of ``T v - v`` only shrinks like ``alpha**n``;
after ``switch_after`` sweeps the solver hands the greedy policy to Howard
policy iteration with an elimination that stays accurate as ``alpha -> 1``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    FiniteMdp,
    StationaryPolicy,
    eta_pairs,
    finite_value_states,
    sets_within,
    state_argmin,
    state_min,
)

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """Value iteration hit ``max_iter``; ``last_values`` holds the final iterate."""

    def __init__(self, message: str, last_values: np.ndarray, iterations: int):
        super().__init__(message)
        self.last_values = last_values
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class DiscountedSolution:
    """Output of :func:`value_iteration`.

    ``relative`` is ``v - m`` and ``offset`` is ``m = min v`` over finite
    states; ``scaled_min`` is ``(1 - alpha) * m`` computed without the
    cancellation that ``(1 - alpha) * values.min()`` would suffer.
    ``declared_tol`` is the DCOE tolerance the stored ``values`` vector
    meets; it exceeds ``tol`` only when ``|values|`` is so large that ``tol``
    is below double-precision resolution.
    """

    alpha: float
    values: np.ndarray
    relative: np.ndarray
    offset: float
    scaled_min: float
    opt_sets: tuple
    policy: StationaryPolicy
    iterations: int
    residual: float
    tol: float
    declared_tol: float
    match_tol: float
    damping: float = 0.0
    method: str = "value_iteration"
    history: dict = field(default_factory=dict, repr=False)

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


def _check_alpha(alpha: float, allow_one: bool = False) -> None:
    hi_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (alpha >= 0.0 and hi_ok):
        rng = "[0, 1]" if allow_one else "[0, 1)"
        raise ValueError(f"discount factor {alpha} outside {rng}")


def finite_horizon_solve(model: FiniteMdp, alpha: float, horizon: int):
    """Optimal ``horizon``-step discounted values and a Markov optimal policy.

    Returns ``(values, policies)`` where ``values[n]`` is ``v_{n,alpha}`` for
    ``n = 0..horizon`` and ``policies[t]`` is the decision rule used at epoch
    ``t``; ``policies[horizon - n]`` attains the minimum of step ``n``.
    """
    _check_alpha(alpha, allow_one=True)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    values = np.zeros((horizon + 1, model.num_states))
    policies: list[StationaryPolicy] = [None] * horizon  # type: ignore[list-item]
    for n in range(horizon):
        q = eta_pairs(model, values[n], alpha)
        values[n + 1] = state_min(model, q)
        policies[horizon - n - 1] = model.policy_from_local(state_argmin(model, q))
    return values, policies


def _stop_threshold(alpha: float, tol: float, scale: float) -> float:
    target = tol * (1.0 - alpha) / max(alpha, 0.5)
    floor = 64.0 * EPS * max(1.0, scale)
    return max(target, floor)


def value_iteration(
    model: FiniteMdp,
    alpha: float,
    tol: float = 1e-9,
    max_iter: int = 1_000_000,
    *,
    match_tol: float | None = None,
    damping: float | str = "auto",
    record_history: bool = False,
    switch_after: int | None = 5000,
) -> DiscountedSolution:
    """Infinite-horizon discounted values by value iteration from ``v_0 = 0``.

    Iteration stops when the span of ``T v_n - v_n`` on finite states drops
    below ``tol * (1 - alpha) / max(alpha, 0.5)`` (or a precision floor of a
    few ulps of the relative values); the reported values are the MacQueen
    midpoint extrapolation of the last iterate.  ``damping="auto"`` switches to
    the operator ``0.5 v + 0.5 T v`` (same fixed point) when the span stalls,
    which happens on periodic chains.  If the stopping rule has not fired
    after ``switch_after`` sweeps (``None`` disables this) the result is
    finished by Howard policy iteration and ``method`` says so.
    """
    _check_alpha(alpha)
    if tol <= 0:
        raise ValueError("tol must be positive")
    match_tol = 10.0 * tol if match_tol is None else match_tol
    n = model.num_states
    K = model.lower_bound
    c = model.cost - K

    if alpha == 0.0:
        fin = state_min(model, c) < math.inf
    else:
        fin = finite_value_states(model)
    if not fin.any():
        raise ValueError("every state has infinite discounted value")

    auto = damping == "auto"
    omega = 0.0 if auto else float(damping)
    if not 0.0 <= omega < 1.0:
        raise ValueError("damping must lie in [0, 1)")

    h = np.where(fin, 0.0, math.inf)
    s = 0.0
    hist_min_inc: list[float] = []
    hist_sup_inc: list[float] = []
    span_log: list[float] = []
    converged = False
    it = 0
    y = h
    delta = np.zeros(int(fin.sum()))
    method = "value_iteration"
    while it < max_iter:
        if switch_after is not None and it >= switch_after:
            method = "policy_iteration"
            break
        a_eff = omega + (1.0 - omega) * alpha
        Th = state_min(model, c + alpha * (model.kernel @ h)) if alpha > 0 else state_min(model, c)
        y = omega * h + (1.0 - omega) * Th if omega else Th
        delta = y[fin] - h[fin]
        span = float(delta.max() - delta.min())
        it += 1
        if record_history:
            inc = delta - (1.0 - a_eff) * s
            hist_min_inc.append(float(inc.min()))
            hist_sup_inc.append(float(np.abs(inc).max()))
        if span <= _stop_threshold(alpha, tol, float(np.abs(y[fin]).max())):
            converged = True
            break
        span_log.append(span)
        if auto and omega == 0.0 and it >= 200 and it % 100 == 0:
            if span > 0.5 * span_log[-100]:
                omega = 0.5
                log.info("value iteration stalled at alpha=%g after %d sweeps; damping on", alpha, it)
        ymin = float(y[fin].min())
        s = a_eff * s + ymin
        h = y - ymin

    a_eff = omega + (1.0 - omega) * alpha
    if method == "policy_iteration":
        log.info("value iteration slow at alpha=%g; finishing with policy iteration", alpha)
        greedy = state_argmin(model, c + alpha * (model.kernel @ h))
        v_fin, pi_steps = _policy_iteration(model, c, alpha, fin, greedy)
        ymin = float(v_fin.min())
        rel = np.full(n, math.inf)
        rel[fin] = v_fin - ymin
        scaled_s = (1.0 - alpha) * ymin
        m_s = ymin
        it += pi_steps
    elif not converged:
        raise ConvergenceError(
            f"value iteration did not converge in {max_iter} iterations (alpha={alpha})",
            last_values=h + s + K / (1.0 - alpha),
            iterations=it,
        )

    else:
        mid = 0.5 * (float(delta.max()) + float(delta.min()))
        ymin = float(y[fin].min())
        rel = np.where(fin, y - ymin, math.inf)
        # v_hat = y + a_eff/(1-a_eff) * mid; its minimum is m_s.
        ratio = (1.0 - alpha) / (1.0 - a_eff)
        scaled_s = (1.0 - alpha) * ymin + ratio * a_eff * mid
        m_s = ymin + a_eff * mid / (1.0 - a_eff)

    gaps, resid = _gaps(model, c, alpha, rel, scaled_s, fin)
    residual = float(resid.max()) if resid.size else 0.0
    offset = m_s + K / (1.0 - alpha)
    values = np.where(fin, rel + offset, math.inf)
    finite_vals = values[fin]
    declared = max(tol, 16.0 * EPS * float(np.abs(finite_vals).max()))
    # gaps are only resolved to a few ulps of the relative values
    resolution = 64.0 * EPS * max(1.0, float(rel[fin].max()))
    opt_bound = np.where(fin, max(match_tol, resolution), math.inf)
    opt_sets = sets_within(model, np.where(np.isnan(gaps), math.inf, gaps), opt_bound)
    opt_sets = tuple(acts if fin[x] else model.action_ids[x] for x, acts in enumerate(opt_sets))
    policy = StationaryPolicy(tuple(acts[0] for acts in opt_sets))
    history = {}
    if record_history:
        history = {"min_increment": np.array(hist_min_inc), "sup_increment": np.array(hist_sup_inc)}
    return DiscountedSolution(
        alpha=alpha,
        values=values,
        relative=rel,
        offset=offset,
        scaled_min=scaled_s + K,
        opt_sets=opt_sets,
        policy=policy,
        iterations=it,
        residual=residual,
        tol=tol,
        declared_tol=declared,
        match_tol=match_tol,
        damping=omega,
        method=method,
        history=history,
    )


def discounted_policy_values(P, c: np.ndarray, alpha: float) -> np.ndarray:
    """Solve ``(I - alpha P) v = c`` for a stochastic ``P`` and ``c >= 0``.

    Dense Gaussian elimination in the GTH style: every diagonal pivot is
    rebuilt from the row defects ``1 - alpha`` and the off-diagonal mass,
    never by subtraction, so the solve stays componentwise accurate when
    ``alpha`` is close to one.  Large sparse systems go to ``spsolve``.
    """
    n = P.shape[0]
    c = np.asarray(c, dtype=float)
    if n > 2000:
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        A = sp.identity(n, format="csc") - alpha * sp.csc_matrix(P)
        return np.asarray(spla.spsolve(A, c))
    D = P.toarray() if hasattr(P, "toarray") else np.array(P, dtype=float)
    M = alpha * D  # magnitudes of the off-diagonal entries
    np.fill_diagonal(M, 0.0)
    defect = np.full(n, 1.0 - alpha)
    b = c.copy()
    piv = np.empty(n)
    for k in range(n):
        piv[k] = defect[k] + M[k, k + 1:].sum()
        if k + 1 == n:
            break
        if piv[k] <= 0:
            raise np.linalg.LinAlgError("singular policy system")
        lk = M[k + 1:, k] / piv[k]
        M[k + 1:, k + 1:] += np.outer(lk, M[k, k + 1:])
        idx = np.arange(k + 1, n)
        M[idx, idx] = 0.0
        defect[k + 1:] += lk * defect[k]
        b[k + 1:] += lk * b[k]
    if piv[-1] <= 0:
        raise np.linalg.LinAlgError("singular policy system")
    v = np.empty(n)
    for k in range(n - 1, -1, -1):
        v[k] = (b[k] + M[k, k + 1:] @ v[k + 1:]) / piv[k]
    return v


def _policy_iteration(model: FiniteMdp, c: np.ndarray, alpha: float, fin: np.ndarray, local: np.ndarray,
                      max_steps: int = 1000):
    """Howard iteration on the finite-value states from the local action indices ``local``."""
    states = np.flatnonzero(fin)
    pos = np.full(model.num_states, -1)
    pos[states] = np.arange(states.size)
    ptr = model.state_ptr
    ps = model.pair_state
    local = np.asarray(local).copy()
    for step in range(1, max_steps + 1):
        idx = ptr[:-1][states] + local[states]
        P = model.kernel[idx][:, states]
        v_fin = discounted_policy_values(P, c[idx], alpha)
        v = np.full(model.num_states, math.inf)
        v[states] = v_fin
        q = c + alpha * (model.kernel @ np.where(fin, v, 0.0))
        q = np.where(np.asarray((model.kernel @ (~fin).astype(float)) > 0) | ~fin[ps], math.inf, q)
        best = state_argmin(model, q)
        qbest = state_min(model, q)
        improve = qbest[states] < v_fin - 1e-12 * np.maximum(1.0, np.abs(v_fin))
        if not improve.any():
            return v_fin, step
        local[states[improve]] = best[states[improve]]
    raise ConvergenceError(f"policy iteration did not settle in {max_steps} steps (alpha={alpha})",
                           last_values=v, iterations=max_steps)


def _gaps(model, c, alpha, rel, scaled, fin):
    """Pair gaps ``eta(v)(x,a) - v(x)`` and per-state DCOE residuals.

    With ``v = rel + m`` the gap is ``c + alpha P rel - rel(x) - (1-alpha) m``,
    which never forms the large offset ``m`` explicitly.
    """
    q = c + alpha * (model.kernel @ rel) if alpha > 0 else c.copy()
    ps = model.pair_state
    with np.errstate(invalid="ignore"):
        gaps = q - rel[ps] - scaled
    gaps = np.where(fin[ps], gaps, math.inf)
    resid = np.abs(state_min(model, gaps))[fin]
    return gaps, resid


def pair_gaps(model: FiniteMdp, solution: DiscountedSolution) -> np.ndarray:
    """``eta(v_alpha)(x,a) - v_alpha(x)`` for every pair (``inf`` off finite states)."""
    fin = solution.finite_mask
    scaled = solution.scaled_min - model.lower_bound
    gaps, _ = _gaps(model, model.cost - model.lower_bound, solution.alpha, solution.relative, scaled, fin)
    return gaps


@dataclass(frozen=True)
class DcoeReport:
    residuals: np.ndarray
    max_residual: float
    tol: float
    passed: bool


def verify_dcoe(model: FiniteMdp, alpha: float, values: np.ndarray, tol: float) -> DcoeReport:
    """Per-state ``|v(x) - min_a eta(v)(x,a)|`` on states with finite value.

    The minimum finite value is factored out before applying the operator so
    large values (``alpha`` near one) do not cancel catastrophically.
    """
    _check_alpha(alpha, allow_one=True)
    v = np.asarray(values, dtype=float)
    fin = np.isfinite(v)
    if not fin.any():
        raise ValueError("values must be finite on at least one state")
    m = float(v[fin].min())
    r = np.where(fin, v - m, math.inf)
    q = eta_pairs(model, r, alpha) if alpha > 0 else model.cost.copy()
    Tr = state_min(model, q)
    res = np.zeros(model.num_states)
    with np.errstate(invalid="ignore"):
        res[fin] = np.abs(Tr[fin] - r[fin] - (1.0 - alpha) * m)
    res[~fin] = np.where(Tr[~fin] == math.inf, 0.0, math.inf)
    mx = float(res.max())
    return DcoeReport(residuals=res, max_residual=mx, tol=tol, passed=bool(mx <= tol))


def check_policy_optimality(
    model: FiniteMdp,
    alpha: float,
    solution: DiscountedSolution,
    policy: StationaryPolicy,
    tol: float | None = None,
) -> bool:
    """True iff ``policy`` picks a discount-optimal action at every state.

    The gap ``eta(v)(x, policy(x)) - v(x)`` must be ``<= tol`` (default:
    the solution's ``match_tol``).
    """
    if alpha != solution.alpha:
        raise ValueError("solution was computed for a different discount factor")
    tol = solution.match_tol if tol is None else tol
    gaps = pair_gaps(model, solution)
    fin = solution.finite_mask
    idx = model.policy_pairs(policy)
    return bool(np.all(gaps[idx][fin] <= tol))


# -- serialization -----------------------------------------------------------


def _num(v: float):
    return None if not math.isfinite(v) else float(v)


def solution_to_dict(sol: DiscountedSolution) -> dict:
    return {
        "alpha": sol.alpha,
        "values": [_num(v) for v in sol.values],
        "policy": list(sol.policy.choice),
        "opt_sets": [list(s) for s in sol.opt_sets],
        "residual": sol.residual,
        "iterations": sol.iterations,
        "tol": sol.tol,
        "declared_tol": sol.declared_tol,
        "match_tol": sol.match_tol,
        "damping": sol.damping,
        "method": sol.method,
        "scaled_min": sol.scaled_min,
    }


def solution_from_dict(d: dict) -> DiscountedSolution:
    values = np.array([math.inf if v is None else float(v) for v in d["values"]])
    fin = np.isfinite(values)
    m = float(values[fin].min())
    alpha = float(d["alpha"])
    return DiscountedSolution(
        alpha=alpha,
        values=values,
        relative=np.where(fin, values - m, math.inf),
        offset=m,
        scaled_min=float(d.get("scaled_min", (1.0 - alpha) * m)),
        opt_sets=tuple(tuple(s) for s in d.get("opt_sets", [[p] for p in d["policy"]])),
        policy=StationaryPolicy(tuple(d["policy"])),
        iterations=int(d["iterations"]),
        residual=float(d["residual"]),
        tol=float(d.get("tol", d.get("declared_tol", 0.0))),
        declared_tol=float(d.get("declared_tol", d.get("tol", 0.0))),
        match_tol=float(d.get("match_tol", 0.0)),
        damping=float(d.get("damping", 0.0)),
        method=d.get("method", "value_iteration"),
    )


def write_solution_json(sol: DiscountedSolution, path: str | Path, extra: dict | None = None) -> None:
    doc = solution_to_dict(sol)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_solution_json(path: str | Path) -> DiscountedSolution:
    return solution_from_dict(json.loads(Path(path).read_text()))
