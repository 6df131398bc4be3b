"""Ground truth that does not go through discounting.

Exact per-policy gains come from the recurrent-class structure of the
induced chain; the optimal gain is the pointwise minimum over all
deterministic stationary policies (enumeration) or, for unichain models,
relative value iteration.  Also: the scalar LQ Riccati solution and a
finite-support harness for the weak-Fatou inequality.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .core import FiniteMdp, StationaryPolicy, eta_pairs, state_argmin, state_min

log = logging.getLogger(__name__)

ENUMERATION_CAP = 10**6
MAX_CLASS_SIZE = 1000
DENSE_LIMIT = 64


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OracleResult:
    optimal_gain: np.ndarray
    optimal_policy: StationaryPolicy
    method: str
    per_policy_gains: np.ndarray | None = None
    bias: np.ndarray | None = None


def chain_gain(P, c: np.ndarray) -> np.ndarray:
    """Long-run average cost of the chain ``(P, c)`` from every start state.

    Closed communicating classes are found as strongly connected components
    with no outgoing edge; each gets its stationary distribution, and
    transient states average the class gains by absorption probability.
    States that can reach an infinite cost get ``+inf``.
    """
    c = np.asarray(c, dtype=float)
    if P.shape[0] <= DENSE_LIMIT:
        return _chain_gain_dense(P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float), c)
    P = sp.csr_matrix(P)
    n = P.shape[0]
    g = np.full(n, math.inf)
    adj = (P > 0).astype(np.int8)

    bad = ~np.isfinite(c)
    if bad.any():
        # states from which a bad state is reachable
        reach = bad.copy()
        radj = adj.T.tocsr()
        frontier = np.flatnonzero(bad)
        while frontier.size:
            nxt = np.unique(radj[frontier].indices)
            nxt = nxt[~reach[nxt]]
            reach[nxt] = True
            frontier = nxt
        bad = reach
    good = np.flatnonzero(~bad)
    if good.size == 0:
        return g
    Pg = P[good][:, good]
    cg = c[good]
    ng = good.size
    ncomp, labels = connected_components(Pg, directed=True, connection="strong")
    coo = Pg.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    closed = np.ones(ncomp, dtype=bool)
    closed[np.unique(labels[coo.row[leaving]])] = False

    gg = np.zeros(ng)
    recurrent = np.zeros(ng, dtype=bool)
    for k in np.flatnonzero(closed):
        idx = np.flatnonzero(labels == k)
        if idx.size > MAX_CLASS_SIZE:
            raise OracleError(f"recurrent class of size {idx.size} exceeds the oracle limit")
        pi = stationary_distribution(Pg[idx][:, idx].toarray())
        gg[idx] = float(pi @ cg[idx])
        recurrent[idx] = True
    tr = np.flatnonzero(~recurrent)
    if tr.size:
        rec = np.flatnonzero(recurrent)
        A = np.eye(tr.size) - Pg[tr][:, tr].toarray()
        b = Pg[tr][:, rec] @ gg[rec]
        gg[tr] = np.linalg.solve(A, b)
    g[good] = gg
    return g


def _chain_gain_dense(P: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    R = (P > 0) | np.eye(n, dtype=bool)
    for _ in range(max(1, int(np.ceil(np.log2(n))))):
        R = (R.astype(np.int32) @ R.astype(np.int32)) > 0
    g = np.zeros(n)
    bad = ~np.isfinite(c)
    if bad.any():
        reach_bad = R[:, bad].any(axis=1)
    else:
        reach_bad = np.zeros(n, dtype=bool)
    recurrent = ~(R & ~R.T).any(axis=1)
    todo = recurrent & ~reach_bad
    while todo.any():
        i = int(np.flatnonzero(todo)[0])
        idx = np.flatnonzero(R[i])
        pi = stationary_distribution(P[np.ix_(idx, idx)])
        g[idx] = float(pi @ c[idx])
        todo[idx] = False
    tr = np.flatnonzero(~recurrent & ~reach_bad)
    if tr.size:
        rec = np.flatnonzero(recurrent & ~reach_bad)
        A = np.eye(tr.size) - P[np.ix_(tr, tr)]
        g[tr] = np.linalg.solve(A, P[np.ix_(tr, rec)] @ g[rec])
    g[reach_bad] = math.inf
    return g


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible stochastic matrix (dense)."""
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    # pi (I - P) = 0 with the last equation replaced by sum(pi) = 1
    A = (np.eye(n) - P).T
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def policy_gain(model: FiniteMdp, policy: StationaryPolicy) -> np.ndarray:
    """Exact average cost per unit time of ``policy`` at every state."""
    c, P = model.policy_matrix(policy)
    return chain_gain(P, c)


def _policy_space(model: FiniteMdp, skip_infinite: bool):
    spaces = []
    for x in range(model.num_states):
        lo, hi = model.state_ptr[x], model.state_ptr[x + 1]
        local = np.arange(hi - lo)
        if skip_infinite:
            fin = np.isfinite(model.cost[lo:hi])
            if fin.any():
                local = local[fin]
        spaces.append(local)
    return spaces


def enumerate_optimal(model: FiniteMdp, cap: int = ENUMERATION_CAP, *, skip_infinite: bool = True,
                      keep_table: bool = False, tie_tol: float = 1e-9) -> OracleResult:
    """Pointwise minimum gain over every deterministic stationary policy.

    Policies are visited in lexicographic order of local action indices; the
    reported policy is the first whose gain is within ``tie_tol`` of the
    minimum at every state.  ``skip_infinite`` leaves out infinite-cost
    actions wherever a finite one exists (they can only give ``+inf``).
    """
    spaces = _policy_space(model, skip_infinite)
    total = math.prod(len(s) for s in spaces)
    if total > cap:
        raise OracleError(
            f"{total} stationary policies exceed the enumeration cap {cap}; "
            "use relative_value_iteration for unichain models"
        )
    n = model.num_states
    ptr = model.state_ptr
    gains = np.empty((total, n)) if keep_table else None
    best = np.full(n, math.inf)
    policies = []
    dense = model.kernel.toarray() if n <= DENSE_LIMIT else None
    for k, local in enumerate(itertools.product(*spaces)):
        idx = ptr[:-1] + np.asarray(local)
        if dense is not None:
            g = _chain_gain_dense(dense[idx], model.cost[idx])
        else:
            g = chain_gain(model.kernel[idx], model.cost[idx])
        if keep_table:
            gains[k] = g
        policies.append((local, g))
        best = np.minimum(best, g)
    chosen = None
    for local, g in policies:
        ok = np.where(np.isinf(best), True, g <= best + tie_tol * (1.0 + np.abs(best)))
        if ok.all():
            chosen = local
            break
    if chosen is None:
        # no single policy attains the pointwise minimum within tie_tol (numerical edge case)
        chosen = min(policies, key=lambda t: float(np.sum(np.where(np.isinf(t[1]), 1e300, t[1]))))[0]
    return OracleResult(best, model.policy_from_local(chosen), "enumeration", gains)


def relative_value_iteration(model: FiniteMdp, tol: float = 1e-10, max_iter: int = 200_000, *,
                             aperiodicity: str = "auto", reference: int = 0) -> OracleResult:
    """Unichain average-cost solver by relative value iteration.

    ``aperiodicity``: ``"on"`` always uses the kernel ``(P + I) / 2`` (gain and
    optimal actions unchanged), ``"off"`` never does, ``"auto"`` switches it on
    when the span of successive differences stops shrinking.
    """
    if aperiodicity not in ("auto", "on", "off"):
        raise ValueError("aperiodicity must be 'auto', 'on' or 'off'")
    if not np.isfinite(model.cost).all():
        raise OracleError("relative value iteration needs finite costs")
    tau = 0.5 if aperiodicity == "on" else 1.0
    c = model.cost
    h = np.zeros(model.num_states)
    ps = model.pair_state
    spans: list[float] = []
    for it in range(1, max_iter + 1):
        q = c + model.kernel @ h if tau == 1.0 else c + tau * (model.kernel @ h) + (1 - tau) * h[ps]
        Th = state_min(model, q)
        d = Th - h
        span = float(d.max() - d.min())
        if span <= tol:
            gain = 0.5 * (float(d.max()) + float(d.min()))
            hh = (Th - Th[reference]) / tau
            greedy = state_argmin(model, eta_pairs(model, hh, 1.0))
            return OracleResult(np.full(model.num_states, gain), model.policy_from_local(greedy),
                                "relative_value_iteration", bias=hh)
        spans.append(span)
        if aperiodicity == "auto" and tau == 1.0 and it >= 100 and it % 50 == 0 and span > 0.9 * spans[-50]:
            log.info("relative value iteration span stalled after %d sweeps; using (P+I)/2", it)
            tau = 0.5
        h = Th - Th[reference]
    raise OracleError(
        f"relative value iteration span did not converge in {max_iter} sweeps "
        "(periodic or multichain model?); try aperiodicity='on'"
    )


# -- linear-quadratic example ------------------------------------------------


@dataclass(frozen=True)
class RiccatiSolution:
    p: float
    K: float
    w_star: float
    iterations: int


def riccati_map(p: float, gamma: float, beta: float, q: float, r: float) -> float:
    return q + gamma**2 * p - gamma**2 * beta**2 * p**2 / (r + beta**2 * p)


def lq_riccati(gamma: float, beta: float, q: float, r: float, noise_variance: float,
               tol: float = 1e-12, max_iter: int = 100_000) -> RiccatiSolution:
    """Scalar discrete Riccati fixed point by iteration from ``p = q``.

    Optimal feedback is ``a = -K x``; the optimal average cost is
    ``p * noise_variance``.
    """
    if q <= 0 or r <= 0:
        raise ValueError("q and r must be positive")
    if gamma * beta < 0:
        raise ValueError("gamma * beta must be nonnegative")
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    p = q
    for it in range(1, max_iter + 1):
        nxt = riccati_map(p, gamma, beta, q, r)
        if abs(nxt - p) <= tol:
            p = nxt
            break
        p = nxt
    else:
        raise OracleError("Riccati iteration did not converge")
    K = gamma * beta * p / (r + beta**2 * p)
    return RiccatiSolution(p=p, K=K, w_star=p * noise_variance, iterations=it)


# -- weak Fatou --------------------------------------------------------------


@dataclass(frozen=True)
class FatouReport:
    lower_limit: np.ndarray
    lhs: float
    rhs: float
    holds: bool


def weak_fatou_check(measure_sequence, limit_measure, function_sequence, tol: float = 1e-12) -> FatouReport:
    """Check ``int liminf h_n d(mu) <= liminf int h_n d(mu_n)`` on a finite support.

    The rows of ``function_sequence`` are one period of an eventually
    periodic sequence ``h_n``; the measures are
    ``mu_n = mu + (nu_{n mod K} - mu) / (n + 1)`` where ``nu_k`` are the rows
    of ``measure_sequence``, so ``mu_n -> mu`` entrywise.  On a finite
    support the topology is discrete and both lower limits are attained
    along the period: ``liminf h_n = min_k h_k`` and
    ``liminf int h_n d(mu_n) = min_k int h_k d(mu)``.
    """
    nu = np.atleast_2d(np.asarray(measure_sequence, dtype=float))
    mu = np.asarray(limit_measure, dtype=float)
    H = np.atleast_2d(np.asarray(function_sequence, dtype=float))
    if nu.shape[1] != mu.shape[0] or H.shape[1] != mu.shape[0]:
        raise ValueError("support mismatch between measures and functions")
    if nu.shape[0] != H.shape[0]:
        raise ValueError("measure and function sequences must have the same length")
    for m in (*nu, mu):
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ValueError("measures must be probability vectors")
    if np.any(H < 0) or np.isnan(H).any():
        raise ValueError("functions must be nonnegative")
    h_low = H.min(axis=0)
    lhs = _integral(h_low, mu)
    rhs = min(_integral(h, mu) for h in H)
    return FatouReport(lower_limit=h_low, lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + tol))


def _integral(h: np.ndarray, mu: np.ndarray) -> float:
    mask = mu > 0
    return float(np.dot(h[mask], mu[mask]))


def weak_fatou_harness(measure_sequence, limit_measure, function_sequence, tol: float = 1e-12) -> bool:
    return weak_fatou_check(measure_sequence, limit_measure, function_sequence, tol).holds


# -- serialization -------------------------------------------------------------


def _num(v):
    return None if not math.isfinite(v) else float(v)


def oracle_to_dict(res: OracleResult) -> dict:
    return {
        "method": res.method,
        "optimal_gain": [_num(v) for v in res.optimal_gain],
        "policy": list(res.optimal_policy.choice),
    }


def oracle_from_dict(d: dict) -> OracleResult:
    gain = np.array([math.inf if v is None else float(v) for v in d["optimal_gain"]])
    return OracleResult(gain, StationaryPolicy(tuple(d["policy"])), d["method"])


def write_oracle_json(res: OracleResult, path, extra: dict | None = None) -> None:
    doc = oracle_to_dict(res)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_oracle_json(path) -> OracleResult:
    return oracle_from_dict(json.loads(Path(path).read_text()))
