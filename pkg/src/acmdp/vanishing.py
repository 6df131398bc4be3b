"""Vanishing-discount analysis of a finite model.

Pipeline: discounted solves along an increasing grid of discount factors
(:func:`compute_trace`), tail envelopes of the relative values
(:func:`estimate_u`), an average-cost optimality inequality certificate
(:func:`build_certificate`), limit sets of discount-optimal actions
(:func:`build_app_sets`), and diagnostics (:func:`tauberian_check`,
:func:`check_assumption_B`, :func:`locate_X_alpha`).

All limits are realised on the finite grid: a ``liminf`` as ``alpha -> 1``
becomes a tail extremum.  These are estimates, and every report carries the
tolerances it used.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import FiniteMdp, StationaryPolicy, eta_pairs, sets_within, state_min
from .discounted import DiscountedSolution, discounted_policy_values, value_iteration
from .oracle import policy_gain

DEFAULT_VI_TOL = 1e-9
DEFAULT_CERT_TOL = 1e-6
DEFAULT_MATCH_TOL = 1e-8
DEFAULT_X_ALPHA_TOL = 1e-8
DEFAULT_TAIL_WINDOW = 3
DEFAULT_MIN_COUNT = 2


def alpha_grid(k_min: int = 2, k_max: int = 16) -> np.ndarray:
    """Discount factors ``1 - 10**(-k/2)`` for ``k = k_min..k_max``."""
    return np.array([1.0 - 10.0 ** (-k / 2.0) for k in range(k_min, k_max + 1)])


class CertificateError(RuntimeError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# -- trace -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VanishingTrace:
    """Per-alpha discounted quantities along an increasing grid.

    ``scaled_min[i]`` is ``(1 - alpha_i) * m_alpha_i``; ``w_low``/``w_high``
    are its minimum/maximum over the last ``tail_window`` grid points and
    ``lambda_star`` its maximum over the whole grid.
    """

    alphas: np.ndarray
    values: np.ndarray
    m: np.ndarray
    u: np.ndarray
    scaled_min: np.ndarray
    opt_sets: tuple
    tail_window: int
    lower_bound: float = 0.0
    vi_tol: float = DEFAULT_VI_TOL
    solutions: tuple = field(default=(), repr=False)

    @property
    def num_states(self) -> int:
        return self.u.shape[1]

    @property
    def tail(self) -> slice:
        return slice(len(self.alphas) - self.tail_window, len(self.alphas))

    @property
    def w_low(self) -> float:
        return float(self.scaled_min[self.tail].min())

    @property
    def w_high(self) -> float:
        return float(self.scaled_min[self.tail].max())

    @property
    def lambda_star(self) -> float:
        return float(self.scaled_min.max())

    @classmethod
    def from_arrays(cls, alphas, u, m=None, opt_sets=None, tail_window: int = DEFAULT_TAIL_WINDOW,
                    lower_bound: float = 0.0) -> "VanishingTrace":
        """Trace from raw per-alpha relative values (synthetic traces, CSV input)."""
        alphas = np.asarray(alphas, dtype=float)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        m = np.zeros(len(alphas)) if m is None else np.asarray(m, dtype=float)
        if opt_sets is None:
            opt_sets = tuple(tuple(() for _ in range(u.shape[1])) for _ in alphas)
        _check_grid(alphas)
        return cls(
            alphas=alphas,
            values=u + m[:, None],
            m=m,
            u=u,
            scaled_min=(1.0 - alphas) * m,
            opt_sets=tuple(tuple(tuple(s) for s in row) for row in opt_sets),
            tail_window=min(tail_window, len(alphas)),
            lower_bound=lower_bound,
        )


def _check_grid(alphas: np.ndarray) -> None:
    if alphas.ndim != 1 or alphas.size < 1:
        raise ValueError("alpha grid must be a nonempty vector")
    if np.any(alphas < 0) or np.any(alphas >= 1):
        raise ValueError("alpha grid must lie in [0, 1)")
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha grid must be strictly increasing")


def compute_trace(
    model: FiniteMdp,
    alphas: Sequence[float] | None = None,
    vi_tol: float = DEFAULT_VI_TOL,
    tail_window: int = DEFAULT_TAIL_WINDOW,
    *,
    match_tol: float | None = None,
    max_iter: int = 1_000_000,
) -> VanishingTrace:
    """Solve the discounted problem at every grid point and collect the trace."""
    alphas = alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    _check_grid(alphas)
    if not 1 <= tail_window <= alphas.size:
        raise ValueError("tail window must be between 1 and the grid length")
    sols = tuple(value_iteration(model, float(a), vi_tol, max_iter, match_tol=match_tol) for a in alphas)
    return VanishingTrace(
        alphas=alphas,
        values=np.array([s.values for s in sols]),
        m=np.array([s.offset for s in sols]),
        u=np.array([s.relative for s in sols]),
        scaled_min=np.array([s.scaled_min for s in sols]),
        opt_sets=tuple(s.opt_sets for s in sols),
        tail_window=tail_window,
        lower_bound=model.lower_bound,
        vi_tol=vi_tol,
        solutions=sols,
    )


# -- limit envelope ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LimitEnvelope:
    """``U[i] = min_{j >= i} u_{alpha_j}``, its spatial lower envelope, and ``u``."""

    beta_grid: np.ndarray
    U: np.ndarray
    u_lower: np.ndarray
    u: np.ndarray
    neighborhood: int | None = None


def _spatial_min(U: np.ndarray, radius: int) -> np.ndarray:
    out = U.copy()
    n = U.shape[-1]
    for d in range(1, radius + 1):
        if d >= n:
            break
        out[..., d:] = np.minimum(out[..., d:], U[..., :-d])
        out[..., :-d] = np.minimum(out[..., :-d], U[..., d:])
    return out


def estimate_u(trace: VanishingTrace, neighborhood: int | None = None) -> LimitEnvelope:
    """Grid realisation of ``u(x) = liminf_{alpha -> 1, y -> x} u_alpha(y)``.

    ``neighborhood`` is a radius in state-index steps (for discretised
    one-dimensional models); ``None`` means the discrete topology, where the
    spatial lower envelope is the identity.
    """
    if len(trace.alphas) < 2:
        raise ValueError("need at least two grid points")
    U = np.minimum.accumulate(trace.u[::-1], axis=0)[::-1]
    low = U if not neighborhood else _spatial_min(U, int(neighborhood))
    return LimitEnvelope(beta_grid=trace.alphas.copy(), U=U, u_lower=low, u=low[-1].copy(),
                         neighborhood=neighborhood)


# -- certificate -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AcoiCertificate:
    """Optimality-inequality certificate ``w_bar + u(x) >= c(x, phi(x)) + sum u q``.

    ``slack[x] = w_bar + u(x) - eta(u, 1)(x, phi(x))``; states where ``u`` is
    infinite are vacuous (slack ``+inf``).  ``failure`` names the first state
    with empty ``A*`` and its minimal gap when the certificate fails.
    """

    u: np.ndarray
    w_bar: float
    policy: StationaryPolicy
    slack: np.ndarray
    a_star_sets: tuple
    a_lower_sets: tuple
    passed: bool
    tol: float
    match_tol: float
    failure: dict | None = None

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())


def build_certificate(model: FiniteMdp, envelope, w_bar: float, tol: float = DEFAULT_CERT_TOL,
                      match_tol: float = DEFAULT_MATCH_TOL) -> AcoiCertificate:
    u = envelope.u if isinstance(envelope, LimitEnvelope) else np.asarray(envelope, dtype=float)
    if u.shape != (model.num_states,):
        raise ValueError("u must have one entry per state")
    if np.isnan(u).any() or np.any(u < 0):
        raise ValueError("u must be nonnegative")
    fin = np.isfinite(u)
    if not fin.any():
        raise ValueError("u is infinite everywhere")
    q = eta_pairs(model, u, 1.0)
    min_q = state_min(model, q)
    star_bound = np.where(fin, w_bar + u + tol, math.inf)
    a_star = sets_within(model, q, star_bound)
    argmin_sets = sets_within(model, q, np.where(fin, min_q + match_tol, math.inf))
    a_lower = []
    for x in range(model.num_states):
        both = tuple(a for a in argmin_sets[x] if a in set(a_star[x]))
        a_lower.append(both if both else argmin_sets[x])
    a_lower = tuple(a_lower)
    policy = StationaryPolicy(tuple(s[0] for s in a_lower))
    chosen = q[model.policy_pairs(policy)]
    with np.errstate(invalid="ignore"):
        slack = np.where(fin, w_bar + u - chosen, math.inf)
    gap = np.where(fin, min_q - (w_bar + u), -math.inf)
    failure = None
    empty = [x for x in range(model.num_states) if len(a_star[x]) == 0]
    if empty:
        x = empty[0]
        failure = {"state": x, "min_gap": float(gap[x]), "empty_states": empty}
    passed = failure is None and bool(np.nanmin(slack) >= -tol)
    return AcoiCertificate(u=u.copy(), w_bar=float(w_bar), policy=policy, slack=slack,
                           a_star_sets=a_star, a_lower_sets=a_lower, passed=passed, tol=tol,
                           match_tol=match_tol, failure=failure)


def verify_certificate(model: FiniteMdp, u, w_bar: float, policy: StationaryPolicy,
                       tol: float = DEFAULT_CERT_TOL) -> tuple[bool, np.ndarray]:
    """Recompute the slack of a saved certificate; returns ``(passed, slack)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.num_states,) or np.any(u < 0):
        raise ValueError("u must be a nonnegative vector with one entry per state")
    fin = np.isfinite(u)
    q = eta_pairs(model, u, 1.0)[model.policy_pairs(policy)]
    with np.errstate(invalid="ignore"):
        slack = np.where(fin, w_bar + u - q, math.inf)
    return bool(slack.min() >= -tol), slack


def acoi_iteration_bound(model: FiniteMdp, cert: AcoiCertificate, horizons: Sequence[int]) -> dict:
    """``n * w_bar + u(x) - v_n^phi(x)`` for each ``n`` in ``horizons``.

    Iterating a passing certificate gives ``v_n^phi <= n (w_bar + tol) + u``;
    the returned margins should therefore be ``>= -n * tol``.
    """
    c, P = model.policy_matrix(cert.policy)
    out = {}
    for n, v in zip(sorted(horizons), fixed_policy_horizon_values(c, P, sorted(horizons))):
        out[n] = n * cert.w_bar + cert.u - v
    return out


# -- approximating sets ------------------------------------------------------


@dataclass(frozen=True)
class AppSets:
    sets: tuple
    support_counts: tuple
    fallback_states: tuple
    tail_window: int
    min_count: int

    @property
    def warning(self) -> bool:
        return bool(self.fallback_states)

    @property
    def policy(self) -> StationaryPolicy:
        return StationaryPolicy(tuple(s[0] for s in self.sets))


def build_app_sets(trace: VanishingTrace, cert: AcoiCertificate, tail_window: int = DEFAULT_TAIL_WINDOW,
                   min_count: int = DEFAULT_MIN_COUNT) -> AppSets:
    """Actions of ``A*`` that are discount-optimal at ``>= min_count`` tail points.

    When the threshold empties a state's set, the most frequent discount-optimal
    action inside ``A*`` is used instead (or ``A_*`` if none occurs) and the
    state is listed in ``fallback_states``.
    """
    if not cert.passed:
        raise CertificateError("cannot build approximating sets from a failed certificate")
    if not 1 <= tail_window <= len(trace.alphas):
        raise ValueError("tail window must be between 1 and the grid length")
    tail = trace.opt_sets[len(trace.alphas) - tail_window:]
    sets, counts, fallback = [], [], []
    for x in range(trace.num_states):
        star = cert.a_star_sets[x]
        cnt = {a: sum(1 for row in tail if a in row[x]) for a in star}
        chosen = tuple(a for a in star if cnt[a] >= min_count)
        if not chosen:
            fallback.append(x)
            best = max(cnt.values(), default=0)
            chosen = tuple(a for a in star if cnt[a] == best) if best > 0 else cert.a_lower_sets[x]
            chosen = chosen[:1]
        sets.append(chosen)
        all_cnt = {}
        for row in tail:
            for a in row[x]:
                all_cnt[a] = all_cnt.get(a, 0) + 1
        counts.append(all_cnt)
    return AppSets(tuple(sets), tuple(counts), tuple(fallback), tail_window, min_count)


# -- Tauberian check ----------------------------------------------------------


def fixed_policy_discounted(c: np.ndarray, P, alpha: float) -> np.ndarray:
    lo = float(c.min())
    return discounted_policy_values(P, c - lo, alpha) + lo / (1.0 - alpha)


def fixed_policy_horizon_values(c: np.ndarray, P, horizons: Sequence[int]) -> list[np.ndarray]:
    """``v_N^phi`` for each ``N`` in increasing ``horizons`` by ``v_{n+1} = c + P v_n``."""
    Pm = P.toarray() if sp.issparse(P) and P.shape[0] <= 200 else P
    v = np.zeros_like(c, dtype=float)
    out = []
    n = 0
    for N in horizons:
        while n < N:
            v = c + Pm @ v
            n += 1
        out.append(v.copy())
    return out


@dataclass(frozen=True, eq=False)
class TauberianReport:
    alphas: np.ndarray
    discounted_averages: np.ndarray
    horizons: tuple
    cesaro_averages: np.ndarray
    gain: np.ndarray
    discounted_gaps: np.ndarray
    cesaro_gaps: np.ndarray

    @property
    def max_discounted_gap(self) -> float:
        return float(self.discounted_gaps[-1].max())

    @property
    def max_cesaro_gap(self) -> float:
        return float(self.cesaro_gaps[-1].max())


def tauberian_check(model: FiniteMdp, policy: StationaryPolicy, trace, horizons: Sequence[int] = (10**5,)) -> TauberianReport:
    """Compare ``(1-alpha) v_alpha^phi`` and ``v_N^phi / N`` with the exact gain of ``phi``.

    ``trace`` may be a :class:`VanishingTrace` or a plain sequence of
    discount factors.
    """
    alphas = trace.alphas if isinstance(trace, VanishingTrace) else np.asarray(trace, dtype=float)
    horizons = tuple(int(h) for h in horizons)
    if any(h <= 0 for h in horizons) or list(horizons) != sorted(set(horizons)):
        raise ValueError("horizons must be positive and strictly increasing")
    c, P = model.policy_matrix(policy)
    if not np.isfinite(c).all():
        raise ValueError("policy chooses an infinite-cost action")
    gain = policy_gain(model, policy)
    disc = np.array([(1.0 - a) * fixed_policy_discounted(c, P, a) for a in alphas])
    ces = np.array([v / N for v, N in zip(fixed_policy_horizon_values(c, P, horizons), horizons)])
    return TauberianReport(
        alphas=alphas,
        discounted_averages=disc,
        horizons=horizons,
        cesaro_averages=ces,
        gain=gain,
        discounted_gaps=np.abs(disc - gain),
        cesaro_gaps=np.abs(ces - gain),
    )


# -- assumption heuristics ------------------------------------------------------


class BoundStatus(str, Enum):
    B = "B"
    B_UNDERLINE = "B_underline"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class AssumptionReport:
    status: tuple
    sup_windows: np.ndarray
    inf_windows: np.ndarray
    growth_tol: float

    @property
    def overall(self) -> BoundStatus:
        if all(s is BoundStatus.B for s in self.status):
            return BoundStatus.B
        if all(s is not BoundStatus.INCONCLUSIVE for s in self.status):
            return BoundStatus.B_UNDERLINE
        return BoundStatus.INCONCLUSIVE


def check_assumption_B(trace: VanishingTrace, growth_tol: float = 0.01, abs_tol: float = 1e-9) -> AssumptionReport:
    """Heuristic boundedness labels for ``u_alpha(x)`` as ``alpha -> 1``.

    Compares the max and min of ``u_alpha(x)`` over the last ``T`` grid points
    with the ``T`` points before them (``T = max(2, N // 3)``).  A stable max
    suggests (B); a stable min with a growing max suggests only the liminf
    version; anything else is inconclusive.  Finite data cannot prove either.
    """
    N = len(trace.alphas)
    if N < 4:
        raise ValueError("need at least four grid points")
    T = max(2, N // 3)
    early = trace.u[N - 2 * T:N - T]
    late = trace.u[N - T:]
    s1, s2 = early.max(axis=0), late.max(axis=0)
    l1, l2 = early.min(axis=0), late.min(axis=0)
    status = []
    for x in range(trace.num_states):
        if not (np.isfinite(s2[x]) and np.isfinite(l2[x])):
            status.append(BoundStatus.INCONCLUSIVE)
        elif s2[x] <= s1[x] * (1 + growth_tol) + abs_tol:
            status.append(BoundStatus.B)
        elif l2[x] <= l1[x] * (1 + growth_tol) + abs_tol:
            status.append(BoundStatus.B_UNDERLINE)
        else:
            status.append(BoundStatus.INCONCLUSIVE)
    return AssumptionReport(tuple(status), np.vstack([s1, s2]), np.vstack([l1, l2]), growth_tol)


# -- minimiser localisation ----------------------------------------------------


@dataclass(frozen=True)
class XAlphaReport:
    sets: tuple
    union: tuple
    window: tuple
    tol: float

    def contained_in(self, lo: int, hi: int) -> bool:
        return all(lo <= x <= hi for x in self.union)


def locate_X_alpha(trace: VanishingTrace, tol: float = DEFAULT_X_ALPHA_TOL) -> XAlphaReport:
    """States where ``v_alpha`` is within ``tol`` of its minimum, per grid point."""
    sets = tuple(tuple(int(x) for x in np.flatnonzero(row <= tol)) for row in trace.u)
    union = tuple(sorted(set().union(*sets)))
    window = (union[0], union[-1]) if union else ()
    return XAlphaReport(sets, union, window, tol)


# -- end-to-end ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AverageResult:
    trace: VanishingTrace
    envelope: LimitEnvelope
    certificate: AcoiCertificate
    app_sets: AppSets | None
    tauberian: TauberianReport | None
    assumption: AssumptionReport | None
    x_alpha: XAlphaReport

    @property
    def policy(self) -> StationaryPolicy:
        return self.certificate.policy


def solve_average(
    model: FiniteMdp,
    alphas: Sequence[float] | None = None,
    *,
    vi_tol: float = DEFAULT_VI_TOL,
    cert_tol: float = DEFAULT_CERT_TOL,
    match_tol: float = DEFAULT_MATCH_TOL,
    tail_window: int = DEFAULT_TAIL_WINDOW,
    min_count: int = DEFAULT_MIN_COUNT,
    neighborhood: int | None = None,
    horizons: Sequence[int] | None = None,
    x_alpha_tol: float = DEFAULT_X_ALPHA_TOL,
    require_pass: bool = True,
) -> AverageResult:
    """Trace, envelope, certificate, approximating sets and Tauberian report.

    Failures are re-raised as :class:`PipelineError` carrying the stage name.
    With ``require_pass=False`` a failed certificate is returned instead of
    raising, and the stages that need a passing certificate are skipped.
    """
    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise PipelineError(name, exc) from exc

    trace = stage("compute_trace", compute_trace, model, alphas, vi_tol, tail_window)
    env = stage("estimate_u", estimate_u, trace, neighborhood)
    cert = stage("build_certificate", build_certificate, model, env, trace.w_high, cert_tol, match_tol)
    if not cert.passed:
        if require_pass:
            f = cert.failure or {}
            raise PipelineError("build_certificate", CertificateError(
                f"certificate failed at state {f.get('state')} (gap {f.get('min_gap')}); "
                f"min slack {cert.min_slack:.3e} < -{cert_tol:g}"))
        app = None
    else:
        app = stage("build_app_sets", build_app_sets, trace, cert, tail_window, min_count)
    taub = None
    if horizons:
        finite_policy = np.isfinite(model.cost[model.policy_pairs(cert.policy)]).all()
        if finite_policy:
            taub = stage("tauberian_check", tauberian_check, model, cert.policy, trace, horizons)
    assume = check_assumption_B(trace) if len(trace.alphas) >= 4 else None
    xa = locate_X_alpha(trace, x_alpha_tol)
    return AverageResult(trace, env, cert, app, taub, assume, xa)


# -- serialization ---------------------------------------------------------------


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))


TRACE_COLUMNS = ("alpha", "state", "v", "m_alpha", "u_alpha", "scaled_m_alpha", "opt_set")


def write_trace_csv(trace: VanishingTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i, a in enumerate(trace.alphas):
            for x in range(trace.num_states):
                w.writerow([repr(float(a)), x, _fmt(trace.values[i, x]), _fmt(trace.m[i]),
                            _fmt(trace.u[i, x]), _fmt(trace.scaled_min[i]),
                            json.dumps(list(trace.opt_sets[i][x]))])


def read_trace_csv(path, tail_window: int = DEFAULT_TAIL_WINDOW, lower_bound: float = 0.0) -> VanishingTrace:
    rows = list(csv.DictReader(open(path, newline="")))
    alphas = sorted({float(r["alpha"]) for r in rows})
    n = max(int(r["state"]) for r in rows) + 1
    ai = {a: i for i, a in enumerate(alphas)}
    A = len(alphas)
    values = np.zeros((A, n))
    u = np.zeros((A, n))
    m = np.zeros(A)
    scaled = np.zeros(A)
    sets = [[() for _ in range(n)] for _ in range(A)]
    for r in rows:
        i, x = ai[float(r["alpha"])], int(r["state"])
        values[i, x] = float(r["v"])
        u[i, x] = float(r["u_alpha"])
        m[i] = float(r["m_alpha"])
        scaled[i] = float(r["scaled_m_alpha"])
        sets[i][x] = tuple(json.loads(r["opt_set"]))
    return VanishingTrace(alphas=np.array(alphas), values=values, m=m, u=u, scaled_min=scaled,
                          opt_sets=tuple(tuple(s) for s in sets), tail_window=min(tail_window, A),
                          lower_bound=lower_bound)


def _num(v: float):
    return None if not math.isfinite(v) else float(v)


def certificate_to_dict(cert: AcoiCertificate) -> dict:
    return {
        "u": [_num(v) for v in cert.u],
        "w_bar": cert.w_bar,
        "policy": list(cert.policy.choice),
        "slack": [_num(v) for v in cert.slack],
        "a_star_sets": [list(s) for s in cert.a_star_sets],
        "a_lower_sets": [list(s) for s in cert.a_lower_sets],
        "pass": cert.passed,
        "tol": cert.tol,
        "match_tol": cert.match_tol,
        "failure": cert.failure,
    }


def certificate_from_dict(d: dict) -> AcoiCertificate:
    inf = lambda v: math.inf if v is None else float(v)  # noqa: E731
    return AcoiCertificate(
        u=np.array([inf(v) for v in d["u"]]),
        w_bar=float(d["w_bar"]),
        policy=StationaryPolicy(tuple(d["policy"])),
        slack=np.array([inf(v) for v in d["slack"]]),
        a_star_sets=tuple(tuple(s) for s in d["a_star_sets"]),
        a_lower_sets=tuple(tuple(s) for s in d["a_lower_sets"]),
        passed=bool(d["pass"]),
        tol=float(d["tol"]),
        match_tol=float(d["match_tol"]),
        failure=d.get("failure"),
    )


def app_sets_to_dict(app: AppSets) -> dict:
    return {
        "sets": [list(s) for s in app.sets],
        "support_counts": [[[a, k] for a, k in cnt.items()] for cnt in app.support_counts],
        "fallback_states": list(app.fallback_states),
        "warning": app.warning,
        "tail_window": app.tail_window,
        "min_count": app.min_count,
    }


def app_sets_from_dict(d: dict) -> AppSets:
    return AppSets(
        sets=tuple(tuple(s) for s in d["sets"]),
        support_counts=tuple({a: k for a, k in cnt} for cnt in d["support_counts"]),
        fallback_states=tuple(d["fallback_states"]),
        tail_window=int(d["tail_window"]),
        min_count=int(d["min_count"]),
    )


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
