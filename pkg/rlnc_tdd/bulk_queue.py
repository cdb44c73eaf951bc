"""
Finite-capacity M/G^(m,K)/1 bulk-service queue observed at service completions.

The embedded state is the number of packets waiting (at most B) right after a
service ends. A service takes min(waiting, K) packets once at least m are
waiting; arrivals that find B packets waiting are dropped.
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

try:
    from rlnc_tdd.arrival_counts import build_arrival_table
    from rlnc_tdd.errors import ConfigError, PreconditionError, RlncTddError, SingularChainError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import ArrivalPmf, LinkParams, QueueConfig, QueueSolution, SweepResult
    from rlnc_tdd.service_mgf import DEFAULT_NODE_CAP
except ImportError:
    from arrival_counts import build_arrival_table
    from errors import ConfigError, PreconditionError, RlncTddError, SingularChainError
    from logging_config import get_logger
    from models import ArrivalPmf, LinkParams, QueueConfig, QueueSolution, SweepResult
    from service_mgf import DEFAULT_NODE_CAP

logger = get_logger(__name__)

SWEEP_COLUMNS = ["lambda", "m", "K", "B", "EQ", "EZ", "stable", "err_bound"]
STOCHASTIC_TOL = 1e-12
RESIDUAL_TOL = 1e-10


# ─────────────────────────────────────────────────────────────
# 🧮 EMBEDDED CHAIN
# ─────────────────────────────────────────────────────────────

def _row_type(i: int, cfg: QueueConfig) -> Tuple[int, int]:
    """(service type, packets left behind) for a completion epoch with i waiting."""
    if i <= cfg.m:
        return cfg.m, 0
    if i <= cfg.k_max:
        return i, 0
    return cfg.k_max, i - cfg.k_max


def build_embedded_matrix(cfg: QueueConfig, arrivals: Mapping[int, ArrivalPmf]) -> np.ndarray:
    """(B+1)×(B+1) transition matrix of the waiting count between completions.

    Row i serves type m (i ≤ m), type i (m < i ≤ K) or type K leaving i-K
    behind (i > K). Column j < B holds a_{j-L}, the last column holds the tail
    R = 1 - Σ_{k ≤ B-1-L} a_k, so every row sums to one.

    Raises:
        ConfigError: if a service type is missing or tabulated below B counts
    """
    capacity = cfg.capacity
    for j in cfg.service_types:
        if j not in arrivals:
            raise ConfigError(f"no arrival PMF for service type {j}")
        if arrivals[j].kmax < capacity:
            raise ConfigError(f"arrival PMF for type {j} stops at k={arrivals[j].kmax} < B={capacity}")

    p = np.zeros((capacity + 1, capacity + 1))
    for i in range(capacity + 1):
        service_type, left = _row_type(i, cfg)
        a = arrivals[service_type].a
        p[i, left:capacity] = a[: capacity - left]
        p[i, capacity] = max(0.0, 1.0 - p[i, :capacity].sum())
    return p


def _solve_stationary(p: np.ndarray) -> Tuple[np.ndarray, float]:
    size = p.shape[0]
    if p.shape != (size, size):
        raise PreconditionError(f"transition matrix must be square, got {p.shape}")
    row_error = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    if row_error > STOCHASTIC_TOL or np.any(p < 0):
        raise PreconditionError(f"matrix is not row-stochastic (max row error {row_error:.3g})")

    # π(P - I) = 0 with the last equation replaced by Σπ = 1
    system = p.T - np.eye(size)
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        pi = linalg.solve(system, rhs)
    except linalg.LinAlgError as exc:
        raise SingularChainError(f"embedded chain has no unique stationary vector: {exc}") from exc
    if not np.all(np.isfinite(pi)):
        raise SingularChainError("stationary solve returned non-finite values")

    negative = float(-pi[pi < 0].sum())
    if negative > 0:
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        if negative > 1e-14:
            logger.warning("stationary vector had negative mass %.3g; clamped and renormalized", negative)

    residual = float(np.max(np.abs(pi @ p - pi)))
    if residual > RESIDUAL_TOL:
        raise SingularChainError(f"stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return pi, negative


def stationary_distribution(p: np.ndarray) -> np.ndarray:
    """Left stationary vector π·P = π of a row-stochastic matrix.

    Raises:
        PreconditionError: if ``p`` is not row-stochastic within 1e-12
        SingularChainError: if the chain is reducible or the residual exceeds 1e-10
    """
    return _solve_stationary(p)[0]


# ─────────────────────────────────────────────────────────────
# 📏 METRICS
# ─────────────────────────────────────────────────────────────

def mean_queue_size(pi: Sequence[float]) -> float:
    pi = np.asarray(pi, dtype=float)
    return float(np.dot(np.arange(len(pi)), pi))


def mean_batch_size(pi: Sequence[float], cfg: QueueConfig) -> float:
    """E[Z] = m·Σ_{i≤m} π_i + Σ_{m<i<K} i·π_i + K·(1 - Σ_{i<K} π_i); exactly m when m = K."""
    m, k_max = cfg.m, cfg.k_max
    if m == k_max:
        return float(m)
    pi = np.asarray(pi, dtype=float)
    middle = np.arange(m + 1, k_max)
    value = m * pi[: m + 1].sum() + np.dot(middle, pi[m + 1 : k_max]) + k_max * (1.0 - pi[:k_max].sum())
    return float(np.clip(value, m, k_max))


def stability_check(cfg: QueueConfig, mu_k: float) -> bool:
    """λ < K·μ_K, the stability condition of the infinite-capacity queue."""
    return bool(cfg.lambda_rate < cfg.k_max * mu_k)


def solve_queue(cfg: QueueConfig, link: LinkParams, search_window: int = 50, tol: float = 1e-10,
                node_cap: int = DEFAULT_NODE_CAP) -> QueueSolution:
    """Policies, arrival PMFs, embedded chain and metrics for one (λ, m, K, B) cell."""
    table = build_arrival_table(cfg, link, search_window, tol, node_cap)
    arrivals = {j: arr for j, (_, arr) in table.items()}
    mean_service = {j: service.mean_service for j, (service, _) in table.items()}

    pi, renorm = _solve_stationary(build_embedded_matrix(cfg, arrivals))
    stable = stability_check(cfg, 1.0 / mean_service[cfg.k_max])
    if not stable:
        logger.warning("lambda=%g with K=%d is unstable without the capacity limit (K·mu_K=%.6g)",
                       cfg.lambda_rate, cfg.k_max, cfg.k_max / mean_service[cfg.k_max])
    pi.setflags(write=False)
    return QueueSolution(
        config=cfg,
        pi=pi,
        mean_queue=mean_queue_size(pi),
        mean_batch=mean_batch_size(pi, cfg),
        stable_infinite=stable,
        input_error_bound=max(a.tail_bound for a in arrivals.values()) + renorm,
        mean_service=mean_service,
    )


# ─────────────────────────────────────────────────────────────
# 🔁 SWEEP
# ─────────────────────────────────────────────────────────────

def sweep(m_values: Iterable[int], k_values: Iterable[int], lambdas: Iterable[float], capacity: int,
          link: LinkParams, search_window: int = 50, tol: float = 1e-10,
          node_cap: int = DEFAULT_NODE_CAP, rel_tol: float = 1e-3) -> SweepResult:
    """Solve every (λ, m, K) with m ≤ K and collect a table in (λ, m, K) order.

    A failing cell keeps its row with NaN metrics and its error message in
    ``SweepResult.errors``.

    Raises:
        PreconditionError: if no (m, K) pair with m ≤ K is requested
    """
    m_values = sorted(set(m_values))
    k_values = sorted(set(k_values))
    lambdas = sorted(set(float(x) for x in lambdas))
    pairs = [(m, k) for m in m_values for k in k_values if m <= k]
    if not pairs or not lambdas:
        raise PreconditionError("sweep needs at least one lambda and one (m, K) pair with m <= K")

    rows: List[Dict] = []
    result = SweepResult(table=None)
    for lam in lambdas:
        for m, k in pairs:
            row = {"lambda": lam, "m": m, "K": k, "B": capacity,
                   "EQ": np.nan, "EZ": np.nan, "stable": False, "err_bound": np.nan}
            try:
                solution = solve_queue(QueueConfig(m, k, capacity, lam), link, search_window, tol, node_cap)
            except RlncTddError as exc:
                logger.warning("sweep cell lambda=%g m=%d K=%d failed: %s", lam, m, k, exc)
                result.errors[(lam, m, k)] = f"{exc.error_type}: {exc}"
            else:
                row.update(EQ=solution.mean_queue, EZ=solution.mean_batch,
                           stable=solution.stable_infinite, err_bound=solution.input_error_bound)
                result.distributions[(lam, m, k)] = solution.pi
            rows.append(row)

    result.table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    result.argmin = argmin_cells(result.table, rel_tol)
    result.fixed_batch_argmin = fixed_batch_argmin(result.table, rel_tol)
    return result


def _near_minimum(frame: pd.DataFrame, rel_tol: float) -> pd.DataFrame:
    finite = frame[np.isfinite(frame["EQ"])]
    if finite.empty:
        return finite
    best = finite["EQ"].min()
    return finite[finite["EQ"] <= best + rel_tol * abs(best)]


def argmin_cells(table: pd.DataFrame, rel_tol: float = 1e-3) -> Dict[float, List[Tuple[int, int]]]:
    """Every (m, K) whose E[Q] lies within ``rel_tol`` of the per-λ minimum."""
    report = {}
    for lam, group in table.groupby("lambda", sort=True):
        winners = _near_minimum(group, rel_tol)
        report[float(lam)] = [(int(m), int(k)) for m, k in zip(winners["m"], winners["K"])]
    return report


def fixed_batch_argmin(table: pd.DataFrame, rel_tol: float = 1e-3) -> Dict[float, List[int]]:
    """Minimizing batch size over the m = K cells, per λ."""
    fixed = table[table["m"] == table["K"]]
    return {lam: [m for m, _ in cells] for lam, cells in argmin_cells(fixed, rel_tol).items()}


def queue_ratio(table: pd.DataFrame, lambda_rate: float, numerator: Tuple[int, int],
                denominator: Tuple[int, int]) -> Optional[float]:
    """E[Q] of one (m, K) cell over another at the same λ, or None if either is missing."""
    rows = table[table["lambda"] == lambda_rate].set_index(["m", "K"])["EQ"]
    if numerator not in rows.index or denominator not in rows.index:
        return None
    return float(rows.loc[numerator] / rows.loc[denominator])
