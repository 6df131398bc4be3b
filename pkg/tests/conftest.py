import itertools

import numpy as np
import pytest
from hypothesis import settings

from acmdp.core import FiniteMdp

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_discounted(model: FiniteMdp, alpha: float) -> np.ndarray:
    """Optimal discounted values by solving every deterministic policy densely."""
    P = model.kernel.toarray()
    best = np.full(model.num_states, np.inf)
    for local in itertools.product(*(range(model.num_actions(x)) for x in range(model.num_states))):
        idx = model.state_ptr[:-1] + np.array(local)
        v = np.linalg.solve(np.eye(model.num_states) - alpha * P[idx], model.cost[idx])
        best = np.minimum(best, v)
    return best


def dyadic_mdp(seed: int, n: int, m: int) -> FiniteMdp:
    """Random model whose kernel rows are multiples of 1/16, so they sum to one exactly."""
    rng = np.random.default_rng(seed)
    kernels, costs = [], []
    for _ in range(n):
        rows = []
        for _ in range(m):
            w = rng.multinomial(16, np.full(n, 1.0 / n)) / 16.0
            rows.append(list(w))
        kernels.append(rows)
        costs.append(list(np.round(rng.uniform(0, 4, m), 3)))
    return FiniteMdp.from_lists([list(range(m))] * n, costs, kernels)


def brute_discounted_mp(model: FiniteMdp, alpha: float, digits: int = 40):
    """High-precision :func:`brute_discounted`; returns ``(values, values - min)``.

    The relative values are formed before rounding to double.
    """
    import mpmath as mp

    mp.mp.dps = digits
    n = model.num_states
    P = model.kernel.toarray()
    best = [mp.inf] * n
    a = mp.mpf(alpha)
    for local in itertools.product(*(range(model.num_actions(x)) for x in range(n))):
        idx = model.state_ptr[:-1] + np.array(local)
        A = mp.matrix([[(1 if i == j else 0) - a * mp.mpf(P[idx[i], j]) for j in range(n)] for i in range(n)])
        v = mp.lu_solve(A, mp.matrix([mp.mpf(model.cost[k]) for k in idx]))
        best = [min(b, v[i]) for i, b in enumerate(best)]
    low = min(best)
    return np.array([float(b) for b in best]), np.array([float(b - low) for b in best])


def brute_gain(model: FiniteMdp, local) -> np.ndarray:
    """Cesaro gain of a policy from a long matrix power (independent of the oracle module)."""
    idx = model.state_ptr[:-1] + np.array(local)
    P = model.kernel.toarray()[idx]
    c = model.cost[idx]
    # average of P^0..P^(2^k - 1) by repeated doubling
    S, Pk = np.eye(len(c)), P.copy()
    for _ in range(20):
        S = S + S @ Pk
        Pk = Pk @ Pk
    return (S @ c) / 2**20


def two_absorbing() -> FiniteMdp:
    return FiniteMdp.from_lists([[0], [0]], [[0.0], [1.0]], [[{0: 1.0}], [{1: 1.0}]])


def tiny_models():
    """A few small models with known structure, used across test files."""
    cycle = FiniteMdp.from_lists([[0], [0]], [[0.0], [2.0]], [[{1: 1.0}], [{0: 1.0}]])
    choice = FiniteMdp.from_lists(
        [[0, 1], [0, 1]],
        [[1.0, 0.5], [0.0, 2.0]],
        [[{0: 0.5, 1: 0.5}, {0: 1.0}], [{1: 0.9, 0: 0.1}, {0: 1.0}]],
    )
    return {"cycle": cycle, "choice": choice}


@pytest.fixture
def models():
    return tiny_models()
