"""
Service completion time of one batch: moment generating function, a direct
path-enumeration oracle, the truncated completion-time PMF and the energy MGF.

The MGF follows the recursion

    M_{T,n}(s) = e^{sT^n} / (1 - P_{n→n} e^{sT^n}) · Σ_{i<n} P_{n→i} M_{T,i}(s),  M_{T,0}(s) = 1

and the energy variant substitutes E^i for T^i.
"""

import math
from collections import deque
from functools import lru_cache
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

try:
    from rlnc_tdd.channel_model import round_energy
    from rlnc_tdd.errors import DivergenceError, PreconditionError, ToleranceNotReachedError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import (
        CompletionPmf, LinkParams, Policy, PolicyObjective, ServiceModel, TransitionMatrix,
    )
    from rlnc_tdd.rlnc_chain import absorption_means, build_transition_matrix, policy_for
except ImportError:
    from channel_model import round_energy
    from errors import DivergenceError, PreconditionError, ToleranceNotReachedError
    from logging_config import get_logger
    from models import (
        CompletionPmf, LinkParams, Policy, PolicyObjective, ServiceModel, TransitionMatrix,
    )
    from rlnc_chain import absorption_means, build_transition_matrix, policy_for

logger = get_logger(__name__)

DEFAULT_BRANCH_BUDGET = 10_000
DEFAULT_NODE_CAP = 2_000_000
MERGE_RTOL = 1e-12


def _check_state(n: int, policy: Policy) -> None:
    if not 1 <= n <= policy.batch_size:
        raise PreconditionError(f"state must lie in [1, {policy.batch_size}], got {n}")


# ─────────────────────────────────────────────────────────────
# 📈 MGF
# ─────────────────────────────────────────────────────────────

def _mgf_recursion(n: int, s: float, costs: Sequence[float], p: np.ndarray) -> float:
    values = [1.0]
    for i in range(1, n + 1):
        growth = math.exp(s * costs[i - 1])
        denom = 1.0 - p[i, i] * growth
        if denom <= 0.0:
            raise DivergenceError(
                f"geometric factor diverges at state {i}: P_ii·e^(sT) = {p[i, i] * growth:.6g} >= 1"
            )
        values.append(growth / denom * float(np.dot(p[i, :i], values)))
    return values[n]


def mgf_eval(n: int, s: float, policy: Policy, matrix: TransitionMatrix,
             tol: Optional[float] = None) -> float:
    """Evaluate M_{T,n}(s) bottom-up from state 0.

    ``tol`` is accepted for symmetry with the enumeration oracle and unused.

    Raises:
        DivergenceError: when P_{i→i}·e^{sT^i} >= 1 for some visited i
    """
    _check_state(n, policy)
    return _mgf_recursion(n, s, policy.t_round, matrix.p)


def energy_costs(policy: Policy, params: LinkParams) -> Tuple[float, ...]:
    """E^1..E^M for the policy's counts."""
    size = policy.batch_size
    return tuple(round_energy(params, size, i, n_i) for i, n_i in enumerate(policy.n_per_state, start=1))


def energy_mgf_eval(n: int, s: float, policy: Policy, matrix: TransitionMatrix,
                    params: LinkParams) -> float:
    """M_{E,n}(s): the MGF recursion with round energies in place of round durations."""
    _check_state(n, policy)
    return _mgf_recursion(n, s, energy_costs(policy, params), matrix.p)


def mean_service_time(j: int, policy: Policy, matrix: TransitionMatrix) -> float:
    """1/μ_j, the mean completion time from state j (identical to the policy's cached E[T_j])."""
    _check_state(j, policy)
    return absorption_means(matrix.p[: j + 1, : j + 1], policy.t_round[:j])[j - 1]


def service_moments(n: int, policy: Policy, matrix: TransitionMatrix,
                    rel_step: float = 1e-3) -> Tuple[float, float]:
    """Mean and variance of the completion time by central differences of the MGF at s = 0."""
    _check_state(n, policy)
    step = rel_step / policy.expected_completion[n - 1]
    up = mgf_eval(n, step, policy, matrix)
    down = mgf_eval(n, -step, policy, matrix)
    mean = (up - down) / (2.0 * step)
    second = (up - 2.0 + down) / step ** 2
    return mean, max(second - mean ** 2, 0.0)


# ─────────────────────────────────────────────────────────────
# 🔍 DIRECT ENUMERATION (oracle)
# ─────────────────────────────────────────────────────────────

def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Tuples (m_1..m_parts) of non-negative ints summing to ``total`` with m_parts ≥ 1."""
    def _fill(remaining: int, slots: int) -> Iterator[Tuple[int, ...]]:
        if slots == 1:
            yield (remaining,)
            return
        for first in range(remaining + 1):
            for rest in _fill(remaining - first, slots - 1):
                yield (first,) + rest

    for top in range(1, total + 1):
        if parts == 1:
            if top == total:
                yield (top,)
            continue
        for lower in _fill(total - top, parts - 1):
            yield lower + (top,)


def _path_weight(p: np.ndarray, visits: Tuple[int, ...]) -> float:
    """C_n·A_n for visit counts (m_1..m_n)."""
    n = len(visits)
    c_n = 1.0
    for j, m_j in enumerate(visits, start=1):
        if m_j > 0:
            c_n *= p[j, j] ** (m_j - 1)

    memo: Dict[int, float] = {}

    def a(k: int) -> float:
        # probability of the jump sequence from k to absorption through the visited states
        if k == 0:
            return 1.0
        if visits[k - 1] == 0:
            return 0.0
        if k in memo:
            return memo[k]
        total = 0.0
        for j in range(k - 1, -1, -1):
            total += p[k, j] * a(j)
            if j >= 1 and visits[j - 1] > 0:
                break
        memo[k] = total
        return total

    return c_n * a(n)


def mgf_direct_enum(n: int, s: float, policy: Policy, matrix: TransitionMatrix, tol: float,
                    round_costs: Optional[Sequence[float]] = None,
                    max_level: int = 5_000) -> float:
    """Sum C_n·A_n·exp(s·Σ m_i T^i) over visit-count tuples, level by level in Σ m_i.

    For s ≤ 0 the unvisited tail is bounded by the probability mass not yet
    enumerated; enumeration stops once that bound is at most ``tol``.

    Raises:
        PreconditionError: for n > 4 or s > 0
        ToleranceNotReachedError: when ``max_level`` is reached first
    """
    _check_state(n, policy)
    if n > 4:
        raise PreconditionError(f"direct enumeration is limited to n <= 4, got {n}")
    if s > 0:
        raise PreconditionError(f"direct enumeration needs s <= 0, got {s}")
    costs = np.asarray(round_costs if round_costs is not None else policy.t_round, dtype=float)[:n]
    p = matrix.p

    value = 0.0
    mass = 0.0
    for level in range(1, max_level + 1):
        for visits in _compositions(level, n):
            weight = _path_weight(p, visits)
            if weight == 0.0:
                continue
            mass += weight
            value += weight * math.exp(s * float(np.dot(visits, costs)))
        if 1.0 - mass <= tol:
            logger.debug("direct enumeration n=%d s=%g stopped at level %d, tail %.3g", n, s, level, 1.0 - mass)
            return value
    raise ToleranceNotReachedError(
        f"direct enumeration for n={n} left tail {1.0 - mass:.3g} > tol={tol} after {max_level} levels"
    )


# ─────────────────────────────────────────────────────────────
# 📊 COMPLETION-TIME PMF
# ─────────────────────────────────────────────────────────────

def _expand_pmf(n: int, p: np.ndarray, threshold: float,
                node_cap: int) -> Tuple[Dict[Tuple[int, ...], float], float, int]:
    atoms: Dict[Tuple[int, ...], float] = {}
    truncated = 0.0
    expansions = 0
    frontier = deque([(n, (0,) * n, 1.0)])
    while frontier:
        state, counts, prob = frontier.popleft()
        expansions += 1
        if expansions > node_cap:
            raise ToleranceNotReachedError(
                f"completion PMF for n={n} exceeded the node cap of {node_cap} expansions"
            )
        visited = counts[: state - 1] + (counts[state - 1] + 1,) + counts[state:]
        for j in range(state, -1, -1):
            branch = prob * p[state, j]
            if branch == 0.0:
                continue
            if j == 0:
                atoms[visited] = atoms.get(visited, 0.0) + branch
            elif branch < threshold:
                truncated += branch
            else:
                frontier.append((j, visited, branch))
    return atoms, truncated, expansions


def _merge_atoms(times: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(times, kind="stable")
    times, probs = times[order], probs[order]
    merged_t = [times[0]]
    merged_p = [probs[0]]
    for t, q in zip(times[1:], probs[1:]):
        if abs(t - merged_t[-1]) <= MERGE_RTOL * max(abs(t), abs(merged_t[-1])):
            merged_p[-1] += q
        else:
            merged_t.append(t)
            merged_p.append(q)
    return np.array(merged_t), np.array(merged_p)


def completion_pmf(n: int, policy: Policy, matrix: TransitionMatrix, tol: float = 1e-10,
                   node_cap: int = DEFAULT_NODE_CAP,
                   branch_budget: int = DEFAULT_BRANCH_BUDGET,
                   round_costs: Optional[Sequence[float]] = None) -> CompletionPmf:
    """Breadth-first expansion of the chain from state n into completion-time atoms.

    Branches below ``tol / branch_budget`` are pruned and their probability is
    accumulated in ``truncated_mass``. If that exceeds ``tol`` the expansion is
    repeated with a ten times larger budget (up to three times).
    Atom times are Σ m_i·T^i over integer visit counts; passing ``round_costs``
    yields the completion-energy PMF instead.

    Raises:
        ToleranceNotReachedError: when the node cap is hit or the budget cannot meet ``tol``
    """
    _check_state(n, policy)
    if not 0.0 < tol < 1.0:
        raise PreconditionError(f"tol must lie in (0, 1), got {tol}")
    if np.any(np.diag(matrix.p)[1 : n + 1] >= 1.0):
        raise DivergenceError(f"chain from state {n} is not absorbing")
    costs = np.asarray(round_costs if round_costs is not None else policy.t_round, dtype=float)[:n]

    budget = branch_budget
    for _ in range(4):
        atoms, truncated, expansions = _expand_pmf(n, matrix.p, tol / budget, node_cap)
        if truncated <= tol:
            break
        logger.debug("completion PMF n=%d: truncated %.3g > tol %.3g with budget %d, retrying",
                     n, truncated, tol, budget)
        budget *= 10
    else:
        raise ToleranceNotReachedError(
            f"completion PMF for n={n} truncated {truncated:.3g} > tol={tol}"
        )

    visit_matrix = np.array(list(atoms.keys()), dtype=float)
    times, probs = _merge_atoms(visit_matrix @ costs, np.array(list(atoms.values())))
    logger.debug("completion PMF n=%d: %d atoms, %d expansions, truncated %.3g",
                 n, len(times), expansions, truncated)
    times.setflags(write=False)
    probs.setflags(write=False)
    return CompletionPmf(batch_size_state=n, times=times, probs=probs, truncated_mass=truncated, tol=tol)


def completion_pmf_to_frame(pmf: CompletionPmf) -> pd.DataFrame:
    return pd.DataFrame({"t": pmf.times, "p": pmf.probs})


# ─────────────────────────────────────────────────────────────
# 🧩 SERVICE MODELS
# ─────────────────────────────────────────────────────────────

@lru_cache(maxsize=256)
def build_service_model(params: LinkParams, batch_size: int, search_window: int = 50,
                        tol: float = 1e-10, node_cap: int = DEFAULT_NODE_CAP,
                        objective: PolicyObjective = PolicyObjective.TIME) -> ServiceModel:
    """Optimized policy, transition matrix and completion PMF for one service type.

    Cached per argument set; none of it depends on the arrival rate.
    """
    policy = policy_for(params, batch_size, search_window, objective)
    matrix = build_transition_matrix(policy, params)
    pmf = completion_pmf(batch_size, policy, matrix, tol, node_cap)
    return ServiceModel(batch_size=batch_size, policy=policy, matrix=matrix, pmf=pmf)
