"""
Degrees-of-freedom chain of one RLNC batch over the TDD erasure link.

State i is the number of innovative packets the receiver still needs. From
state i the transmitter sends N_i coded packets, each erased independently
with probability ``pe``; every received packet is innovative. The ACK is
erased with probability ``pe_ack`` and a lost ACK leaves the transmitter in
state i, so all progress is gated by (1 - pe_ack).
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

try:
    from rlnc_tdd.channel_model import round_duration, round_energy
    from rlnc_tdd.errors import DivergenceError, PreconditionError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import LinkParams, Policy, PolicyObjective, TransitionMatrix
except ImportError:
    from channel_model import round_duration, round_energy
    from errors import DivergenceError, PreconditionError
    from logging_config import get_logger
    from models import LinkParams, Policy, PolicyObjective, TransitionMatrix

logger = get_logger(__name__)

RoundCost = Callable[[LinkParams, int, int, int], float]


def transition_row(state: int, n_packets: int, params: LinkParams) -> np.ndarray:
    """Transition probabilities P_{i→j} for j = 0..i after one round from state i.

    Args:
        state: current dof deficit i ≥ 1
        n_packets: coded packets sent back to back, N_i ≥ i
        params: link parameters (only ``pe`` and ``pe_ack`` are used)

    Returns:
        Array of length i+1; element j is P_{i→j}, the diagonal absorbs the remainder.

    Raises:
        PreconditionError: if state < 1 or n_packets < state
    """
    if state < 1:
        raise PreconditionError(f"state must be at least 1, got {state}")
    if n_packets < state:
        raise PreconditionError(f"N_i must be at least i (i={state}), got {n_packets}")

    gate = 1.0 - params.pe_ack
    row = np.zeros(state + 1)
    if params.pe == 0.0:
        row[0] = gate
    else:
        success = 1.0 - params.pe
        # j = i - k for k = 1..i-1 received packets
        received = np.arange(1, state)
        row[state - received] = gate * binom.pmf(received, n_packets, success)
        row[0] = gate * binom.sf(state - 1, n_packets, success)
    row[state] = max(0.0, 1.0 - row[:state].sum())
    return row


def absorption_means(matrix: np.ndarray, costs: Sequence[float]) -> Tuple[float, ...]:
    """Expected accumulated cost until absorption from states 1..M.

    E_i = (c_i + Σ_{j=1}^{i-1} P_{i→j}·E_j) / (1 - P_{i→i}), with E_0 = 0.

    Raises:
        DivergenceError: if some P_{i→i} = 1
    """
    means = [0.0]
    for i in range(1, len(costs) + 1):
        escape = 1.0 - matrix[i, i]
        if escape <= 0.0:
            raise DivergenceError(f"state {i} never leaves (P_ii = {matrix[i, i]})")
        carried = float(np.dot(matrix[i, 1:i], means[1:i]))
        means.append((costs[i - 1] + carried) / escape)
    return tuple(means[1:])


def _chain_matrix(n_per_state: Sequence[int], params: LinkParams) -> np.ndarray:
    size = len(n_per_state)
    p = np.zeros((size + 1, size + 1))
    p[0, 0] = 1.0
    for i, n_i in enumerate(n_per_state, start=1):
        p[i, : i + 1] = transition_row(i, n_i, params)
    return p


def expected_completion_times(n_per_state: Sequence[int], params: LinkParams) -> Tuple[float, ...]:
    """E[T_1]..E[T_M] for the candidate counts N_1..N_M (M = len(n_per_state))."""
    size = len(n_per_state)
    costs = [round_duration(params, size, i, n_i) for i, n_i in enumerate(n_per_state, start=1)]
    return absorption_means(_chain_matrix(n_per_state, params), costs)


def expected_completion_energies(n_per_state: Sequence[int], params: LinkParams) -> Tuple[float, ...]:
    """Mean energy spent until the receiver holds all M dofs, from each state."""
    size = len(n_per_state)
    costs = [round_energy(params, size, i, n_i) for i, n_i in enumerate(n_per_state, start=1)]
    return absorption_means(_chain_matrix(n_per_state, params), costs)


def _greedy_counts(params: LinkParams, batch_size: int, search_window: int,
                   cost: RoundCost) -> List[int]:
    if batch_size < 1:
        raise PreconditionError(f"batch size must be at least 1, got {batch_size}")
    if search_window < 1:
        raise PreconditionError(f"search_window must be at least 1, got {search_window}")

    counts: List[int] = []
    means: List[float] = [0.0]
    for i in range(1, batch_size + 1):
        best_n: Optional[int] = None
        best_value = np.inf
        stale = 0
        n_i = i
        while stale < search_window:
            row = transition_row(i, n_i, params)
            escape = 1.0 - row[i]
            value = np.inf
            if escape > 0.0:
                value = (cost(params, batch_size, i, n_i) + float(np.dot(row[1:i], means[1:i]))) / escape
            if value < best_value:
                best_n, best_value, stale = n_i, value, 0
            else:
                stale += 1
            n_i += 1
        if best_n is None or not np.isfinite(best_value):
            raise DivergenceError(f"no finite objective for state {i} of batch {batch_size}")
        logger.debug("M=%d state %d: N=%d objective=%.6g (scan stopped at N=%d)",
                     batch_size, i, best_n, best_value, n_i - 1)
        counts.append(best_n)
        means.append(best_value)
    return counts


def _make_policy(params: LinkParams, counts: Sequence[int], objective: PolicyObjective) -> Policy:
    size = len(counts)
    return Policy(
        batch_size=size,
        n_per_state=tuple(counts),
        t_round=tuple(round_duration(params, size, i, n_i) for i, n_i in enumerate(counts, start=1)),
        expected_completion=expected_completion_times(counts, params),
        objective=objective,
    )


def optimize_policy(params: LinkParams, batch_size: int, search_window: int = 50) -> Policy:
    """Choose N_1..N_M minimizing the expected completion time, state by state.

    N_i is scanned upward from i and the scan stops after ``search_window``
    candidates without strict improvement, so ties keep the smaller N_i.
    """
    counts = _greedy_counts(params, batch_size, search_window, round_duration)
    return _make_policy(params, counts, PolicyObjective.TIME)


def optimize_energy_policy(params: LinkParams, batch_size: int, search_window: int = 50) -> Policy:
    """Same search as ``optimize_policy`` with the expected completion energy as objective.

    The returned policy still caches round durations and expected completion times.
    """
    counts = _greedy_counts(params, batch_size, search_window, round_energy)
    return _make_policy(params, counts, PolicyObjective.ENERGY)


def policy_for(params: LinkParams, batch_size: int, search_window: int = 50,
               objective: PolicyObjective = PolicyObjective.TIME) -> Policy:
    if PolicyObjective(objective) is PolicyObjective.ENERGY:
        return optimize_energy_policy(params, batch_size, search_window)
    return optimize_policy(params, batch_size, search_window)


def build_transition_matrix(policy: Policy, params: LinkParams) -> TransitionMatrix:
    """Full (M+1)×(M+1) absorbing matrix for a policy; the array is read-only."""
    p = _chain_matrix(policy.n_per_state, params)
    p.setflags(write=False)
    return TransitionMatrix(batch_size=policy.batch_size, p=p)
