# Model definitions, data structures

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

try:
    from rlnc_tdd.errors import PreconditionError
except ImportError:
    from errors import PreconditionError


# ─── ENUMS ───

class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    TABLE = "table"


class PolicyObjective(str, Enum):
    """Quantity minimized when choosing the back-to-back counts N_i."""
    TIME = "time"
    ENERGY = "energy"


class HorizonKind(str, Enum):
    COMPLETIONS = "completions"
    DURATION = "duration"


# ─── LINK & TIMING ───

@dataclass(frozen=True)
class LinkParams:
    """Physical and protocol constants of the TDD packet-erasure link.

    Field size enters only through ``coeff_bits`` (g = log2 q).
    ``t_wait_s`` overrides the derived waiting window when set.
    """
    pe: float
    pe_ack: float
    rate_bps: float
    payload_bits: int
    header_bits: int
    coeff_bits: int
    ack_bits: int
    prop_delay_s: float
    tx_power: float = 1.0
    rx_power: float = 1.0
    t_wait_s: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.pe < 1.0:
            raise PreconditionError(f"pe must lie in [0, 1), got {self.pe}")
        if not 0.0 <= self.pe_ack < 1.0:
            raise PreconditionError(f"pe_ack must lie in [0, 1), got {self.pe_ack}")
        for name in ("rate_bps", "payload_bits", "coeff_bits", "ack_bits"):
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be strictly positive, got {getattr(self, name)}")
        for name in ("header_bits", "prop_delay_s", "tx_power", "rx_power"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.t_wait_s is not None and not self.t_wait_s > 0:
            raise PreconditionError(f"t_wait_s must be strictly positive, got {self.t_wait_s}")


@dataclass(frozen=True)
class TimingDerived:
    batch_size: int
    t_packet_s: float
    t_wait_s: float


# ─── CODING CHAIN ───

@dataclass(frozen=True)
class TransitionMatrix:
    """Absorbing dof chain for a batch of ``batch_size`` packets.

    ``p[i, j]`` is P_{i→j}; states are indexed 0..M and state 0 absorbs.
    """
    batch_size: int
    p: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.p[i, : i + 1]


@dataclass(frozen=True)
class Policy:
    """Back-to-back counts for a batch of size M.

    Sequences are indexed by state: element ``i - 1`` belongs to state i.
    """
    batch_size: int
    n_per_state: Tuple[int, ...]
    t_round: Tuple[float, ...]
    expected_completion: Tuple[float, ...]
    objective: PolicyObjective = PolicyObjective.TIME

    def n(self, i: int) -> int:
        return self.n_per_state[i - 1]

    def round_time(self, i: int) -> float:
        return self.t_round[i - 1]


# ─── SERVICE DISTRIBUTION ───

@dataclass(frozen=True)
class CompletionPmf:
    """Truncated PMF of the completion time from state ``batch_size_state``.

    ``times`` is strictly increasing; ``truncated_mass`` is the pruned probability.
    """
    batch_size_state: int
    times: np.ndarray
    probs: np.ndarray
    truncated_mass: float
    tol: float

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self.times.tolist(), self.probs.tolist()))


@dataclass(frozen=True)
class ServiceModel:
    """Everything the queue needs about one service type j."""
    batch_size: int
    policy: Policy
    matrix: TransitionMatrix
    pmf: CompletionPmf

    @property
    def mean_service(self) -> float:
        return self.policy.expected_completion[self.batch_size - 1]


@dataclass(frozen=True)
class ArrivalPmf:
    service_type: int
    lambda_rate: float
    a: np.ndarray
    tail_bound: float

    @property
    def kmax(self) -> int:
        return len(self.a) - 1


# ─── QUEUE ───

@dataclass(frozen=True)
class QueueConfig:
    """Bulk range (m, K), waiting-room capacity B and arrival rate λ."""
    m: int
    k_max: int
    capacity: int
    lambda_rate: float

    def __post_init__(self):
        if not 1 <= self.m <= self.k_max <= self.capacity:
            raise PreconditionError(
                f"need 1 <= m <= K <= B, got m={self.m}, K={self.k_max}, B={self.capacity}"
            )
        if self.lambda_rate < 0:
            raise PreconditionError(f"lambda must be non-negative, got {self.lambda_rate}")

    @property
    def service_types(self) -> range:
        return range(self.m, self.k_max + 1)


@dataclass(frozen=True)
class QueueSolution:
    config: QueueConfig
    pi: np.ndarray
    mean_queue: float
    mean_batch: float
    stable_infinite: bool
    input_error_bound: float
    mean_service: Dict[int, float] = field(default_factory=dict)


@dataclass
class SweepResult:
    """Sweep table plus the stationary vectors and argmin report behind it."""
    table: "object"  # pandas.DataFrame; typed loosely to keep models import-light
    distributions: Dict[Tuple[float, int, int], np.ndarray] = field(default_factory=dict)
    argmin: Dict[float, List[Tuple[int, int]]] = field(default_factory=dict)
    fixed_batch_argmin: Dict[float, List[int]] = field(default_factory=dict)
    errors: Dict[Tuple[float, int, int], str] = field(default_factory=dict)


# ─── SIMULATION ───

@dataclass(frozen=True)
class SimConfig:
    queue: QueueConfig
    link: LinkParams
    policies: Dict[int, Policy]
    seed: int = 1
    completions: Optional[int] = None
    duration_s: Optional[float] = None
    warmup: float = 0.1
    batches: int = 20
    strict_ack: bool = False
    initial_waiting: int = 0
    keep_trace: bool = False

    @property
    def horizon(self) -> HorizonKind:
        return HorizonKind.COMPLETIONS if self.completions is not None else HorizonKind.DURATION


@dataclass
class SimReport:
    seed: int
    rng_algorithm: str
    completions: int
    sim_time_s: float
    mean_queue_embedded: float
    mean_queue_embedded_se: float
    mean_queue_time_avg: float
    mean_queue_time_avg_se: float
    mean_batch: float
    mean_batch_se: float
    mean_service_time: Dict[int, float]
    mean_service_time_se: Dict[int, float]
    services_per_type: Dict[int, int]
    arrival_freq: Dict[int, List[float]]
    arrival_freq_se: Dict[int, List[float]]
    queue_histogram: List[int]
    arrivals: int
    served: int
    dropped: int
    in_system: int
    strict_ack: bool = False
    queue_trace: Optional[List[int]] = None


# ─── CONFIGURATION & RUNS ───

@dataclass(frozen=True)
class AnalysisConfig:
    """Resolved configuration file: the link plus queue and tolerance settings."""
    link: LinkParams
    lambda_rate: Optional[float] = None
    m: Optional[int] = None
    k_max: Optional[int] = None
    capacity: Optional[int] = None
    pmf_tol: float = 1e-10
    search_window: int = 50
    node_cap: int = 2_000_000
    seed: int = 1
    completions: int = 200_000
    warmup: float = 0.1
    batches: int = 20


@dataclass
class RunManifest:
    command: str
    config: Dict
    version: str
    outputs: List[str] = field(default_factory=list)
    created: Optional[str] = None
    extra: Dict = field(default_factory=dict)
