"""
Poisson arrival counts during one service.

a_k^(j) = Σ_t P(T_j = t)·e^{-λt}(λt)^k/k!, a Poisson mixture over the atoms
of the completion-time PMF. Its generating function is A^(j)(z) = M_{T,j}(λ(z-1)).
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.stats import poisson

try:
    from rlnc_tdd.errors import PreconditionError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import ArrivalPmf, CompletionPmf, LinkParams, Policy, QueueConfig, ServiceModel, TransitionMatrix
    from rlnc_tdd.service_mgf import DEFAULT_NODE_CAP, build_service_model, mgf_eval
except ImportError:
    from errors import PreconditionError
    from logging_config import get_logger
    from models import ArrivalPmf, CompletionPmf, LinkParams, Policy, QueueConfig, ServiceModel, TransitionMatrix
    from service_mgf import DEFAULT_NODE_CAP, build_service_model, mgf_eval

logger = get_logger(__name__)


def arrival_pmf(j: int, lambda_rate: float, kmax: int, pmf: CompletionPmf) -> ArrivalPmf:
    """Probabilities a_0..a_kmax of k arrivals during a type-j service.

    Args:
        j: service type (batch size served)
        lambda_rate: Poisson arrival rate λ ≥ 0
        kmax: largest count to tabulate (at least 1)
        pmf: completion-time PMF from state j

    Returns:
        ArrivalPmf whose ``tail_bound`` is the PMF's truncated mass
    """
    if pmf.batch_size_state != j:
        raise PreconditionError(f"completion PMF is for state {pmf.batch_size_state}, not {j}")
    if lambda_rate < 0:
        raise PreconditionError(f"lambda must be non-negative, got {lambda_rate}")
    if kmax < 1:
        raise PreconditionError(f"kmax must be at least 1, got {kmax}")

    if lambda_rate == 0.0:
        a = np.zeros(kmax + 1)
        a[0] = pmf.probs.sum()
    else:
        k = np.arange(kmax + 1)[:, None]
        a = poisson.pmf(k, lambda_rate * pmf.times[None, :]) @ pmf.probs
    a = np.clip(a, 0.0, 1.0)
    a.setflags(write=False)
    return ArrivalPmf(service_type=j, lambda_rate=lambda_rate, a=a, tail_bound=pmf.truncated_mass)


def poisson_tail_bound(lambda_rate: float, kmax: int, pmf: CompletionPmf) -> float:
    """Upper bound on Σ_{k>kmax} a_k from the tabulated atoms (excluding truncated PMF mass)."""
    if lambda_rate == 0.0:
        return 0.0
    return float(np.dot(pmf.probs, poisson.sf(kmax, lambda_rate * pmf.times)))


def arrival_gf_eval(j: int, lambda_rate: float, z: float, policy: Policy, matrix: TransitionMatrix) -> float:
    """A^(j)(z) = M_{T,j}(λ(z - 1)) for z in [0, 1]."""
    if not 0.0 <= z <= 1.0:
        raise PreconditionError(f"z must lie in [0, 1], got {z}")
    return mgf_eval(j, lambda_rate * (z - 1.0), policy, matrix)


def arrival_polynomial(arrivals: ArrivalPmf, z: float) -> float:
    """Σ_k a_k z^k over the tabulated counts."""
    return float(np.polynomial.polynomial.polyval(z, arrivals.a))


def default_kmax(lambda_rate: float, t_max: float) -> int:
    """Count range that holds every atom's Poisson mass to ~1e-12."""
    mean = lambda_rate * t_max
    return int(math.ceil(mean + 20.0 * math.sqrt(mean) + 20))


def build_arrival_table(cfg: QueueConfig, link: LinkParams, search_window: int = 50,
                        tol: float = 1e-10, node_cap: int = DEFAULT_NODE_CAP,
                        kmax: Optional[int] = None) -> Dict[int, Tuple[ServiceModel, ArrivalPmf]]:
    """Service model and arrival PMF for every service type m..K.

    ``kmax`` defaults to the capacity B.
    """
    kmax = cfg.capacity if kmax is None else kmax
    table = {}
    for j in cfg.service_types:
        service = build_service_model(link, j, search_window, tol, node_cap)
        arrivals = arrival_pmf(j, cfg.lambda_rate, kmax, service.pmf)
        logger.debug("type %d: E[T]=%.6g s, a_0=%.6g, tail %.3g",
                     j, service.mean_service, arrivals.a[0], arrivals.tail_bound)
        table[j] = (service, arrivals)
    return table
