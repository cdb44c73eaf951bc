"""
Discrete-event simulation of the RLNC/TDD bulk-service link.

Poisson arrivals feed a waiting room of B packets. The server takes
min(waiting, K) packets once m are waiting and runs TDD rounds: N_i coded
packets (each erased with probability pe), then the ACK window (ACK erased with
probability pe_ack). Queue lengths are sampled at service completions to
compare with the embedded stationary distribution.

Random numbers come from numpy's counter-based Philox4x32-10 generator, one
stream per run, seeded from ``SimConfig.seed``.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import simpy

try:
    from rlnc_tdd.errors import ConfigError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import HorizonKind, LinkParams, Policy, SimConfig, SimReport
except ImportError:
    from errors import ConfigError
    from logging_config import get_logger
    from models import HorizonKind, LinkParams, Policy, SimConfig, SimReport

logger = get_logger(__name__)

RNG_ALGORITHM = "Philox4x32-10 (numpy.random.Philox)"
MIN_BATCHES = 20


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ─────────────────────────────────────────────────────────────
# 🎲 SERVICE SAMPLER
# ─────────────────────────────────────────────────────────────

def sample_services(link: LinkParams, policy: Policy, n: int, rng: np.random.Generator,
                    lambda_rate: Optional[float] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Draw ``n`` i.i.d. completion times for a batch of ``policy.batch_size``.

    All services advance round by round in lockstep. When ``lambda_rate`` is
    given, a Poisson arrival count over each duration is drawn as well.

    Returns:
        (durations, arrival counts or None)
    """
    t_round = np.asarray(policy.t_round)
    counts = np.asarray(policy.n_per_state)
    state = np.full(n, policy.batch_size)
    durations = np.zeros(n)
    active = np.arange(n)
    while active.size:
        current = state[active]
        durations[active] += t_round[current - 1]
        received = rng.binomial(counts[current - 1], 1.0 - link.pe)
        acked = rng.random(active.size) >= link.pe_ack
        state[active] = np.where(acked, current - np.minimum(received, current), current)
        active = active[state[active] > 0]
    arrivals = rng.poisson(lambda_rate * durations) if lambda_rate is not None else None
    return durations, arrivals


# ─────────────────────────────────────────────────────────────
# 🏗️ SIMULATION MODEL
# ─────────────────────────────────────────────────────────────

@dataclass
class _Completion:
    time: float
    batch: int
    duration: float
    arrivals: int
    queue: int
    area: float


@dataclass
class _Counters:
    arrivals: int = 0
    dropped: int = 0
    served: int = 0
    completions: List[_Completion] = field(default_factory=list)


class BulkLinkModel:
    """Waiting room, arrival source and bulk server inside one simpy environment."""

    def __init__(self, env: simpy.Environment, cfg: SimConfig, rng: np.random.Generator):
        self.env = env
        self.cfg = cfg
        self.rng = rng
        self.waiting = cfg.initial_waiting
        self.in_service = 0
        self.counters = _Counters(arrivals=cfg.initial_waiting)
        self._area = 0.0
        self._last_change = 0.0
        self._wakeup: Optional[simpy.Event] = None
        self.done = env.event()
        if cfg.queue.lambda_rate > 0:
            env.process(self._arrivals())
        env.process(self._server())

    def _set_waiting(self, value: int) -> None:
        now = self.env.now
        self._area += self.waiting * (now - self._last_change)
        self._last_change = now
        self.waiting = value

    def area_now(self) -> float:
        return self._area + self.waiting * (self.env.now - self._last_change)

    def _arrivals(self):
        scale = 1.0 / self.cfg.queue.lambda_rate
        while True:
            yield self.env.timeout(self.rng.exponential(scale))
            self.counters.arrivals += 1
            if self.waiting >= self.cfg.queue.capacity:
                self.counters.dropped += 1
                continue
            self._set_waiting(self.waiting + 1)
            if self._wakeup is not None and self.waiting >= self.cfg.queue.m:
                self._wakeup.succeed()
                self._wakeup = None

    def _server(self):
        queue = self.cfg.queue
        while True:
            while self.waiting < queue.m:
                self._wakeup = self.env.event()
                yield self._wakeup
            batch = min(self.waiting, queue.k_max)
            self._set_waiting(self.waiting - batch)
            self.in_service = batch
            start = self.env.now
            arrivals_before = self.counters.arrivals
            yield from self._serve(batch)
            self.in_service = 0
            self.counters.served += batch
            self.counters.completions.append(_Completion(
                time=self.env.now,
                batch=batch,
                duration=self.env.now - start,
                arrivals=self.counters.arrivals - arrivals_before,
                queue=self.waiting,
                area=self.area_now(),
            ))
            if self.cfg.completions is not None and len(self.counters.completions) >= self.cfg.completions:
                if not self.done.triggered:
                    self.done.succeed()

    def _serve(self, batch: int):
        """TDD rounds until the transmitter learns that all ``batch`` dofs arrived."""
        link = self.cfg.link
        policy = self.cfg.policies[batch]
        tx_state = batch
        rx_needed = batch
        while tx_state > 0:
            yield self.env.timeout(policy.round_time(tx_state))
            received = self.rng.binomial(policy.n(tx_state), 1.0 - link.pe)
            acked = self.rng.random() >= link.pe_ack
            if self.cfg.strict_ack:
                rx_needed -= min(received, rx_needed)
                if acked:
                    tx_state = rx_needed
            elif acked:
                tx_state -= min(received, tx_state)


# ─────────────────────────────────────────────────────────────
# 📊 ESTIMATORS
# ─────────────────────────────────────────────────────────────

def batch_means(values: np.ndarray, batches: int) -> Tuple[float, float]:
    """Sample mean and its batch-means standard error (NaN when too few values)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    mean = float(values.mean())
    if values.size < batches:
        return mean, float("nan")
    chunk_means = np.array([chunk.mean() for chunk in np.array_split(values, batches)])
    return mean, float(chunk_means.std(ddof=1) / np.sqrt(batches))


def _time_average(records: List[_Completion], start: Tuple[float, float], batches: int) -> Tuple[float, float]:
    times = np.array([start[0]] + [r.time for r in records])
    areas = np.array([start[1]] + [r.area for r in records])
    total = (areas[-1] - areas[0]) / (times[-1] - times[0]) if times[-1] > times[0] else float("nan")
    if len(records) < batches:
        return float(total), float("nan")
    edges = np.linspace(0, len(records), batches + 1).astype(int)
    estimates = np.array([
        (areas[b] - areas[a]) / (times[b] - times[a]) for a, b in zip(edges[:-1], edges[1:])
    ])
    return float(total), float(estimates.std(ddof=1) / np.sqrt(batches))


def _validate(cfg: SimConfig) -> None:
    queue = cfg.queue
    missing = [j for j in queue.service_types if j not in cfg.policies]
    if missing:
        raise ConfigError(f"no policy for batch sizes {missing}")
    for j in queue.service_types:
        if cfg.policies[j].batch_size != j:
            raise ConfigError(f"policy registered for batch size {j} is for {cfg.policies[j].batch_size}")
    if (cfg.completions is None) == (cfg.duration_s is None):
        raise ConfigError("set exactly one horizon: completions or duration_s")
    if cfg.completions is not None and cfg.completions < 1:
        raise ConfigError(f"completions must be positive, got {cfg.completions}")
    if cfg.duration_s is not None and not cfg.duration_s > 0:
        raise ConfigError(f"duration_s must be positive, got {cfg.duration_s}")
    if not 0.0 <= cfg.warmup < 1.0:
        raise ConfigError(f"warmup must lie in [0, 1), got {cfg.warmup}")
    if cfg.batches < MIN_BATCHES:
        raise ConfigError(f"batches must be at least {MIN_BATCHES}, got {cfg.batches}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {cfg.seed}")
    if not 0 <= cfg.initial_waiting <= queue.capacity:
        raise ConfigError(f"initial_waiting must lie in [0, B], got {cfg.initial_waiting}")


def simulate(cfg: SimConfig) -> SimReport:
    """Run one seeded simulation and summarize it with batch-means standard errors.

    Raises:
        ConfigError: on an inconsistent SimConfig (checked before the run)
    """
    _validate(cfg)
    env = simpy.Environment()
    model = BulkLinkModel(env, cfg, make_rng(cfg.seed))
    try:
        env.run(until=model.done if cfg.horizon is HorizonKind.COMPLETIONS else cfg.duration_s)
    except RuntimeError as exc:
        # simpy stops with no events left when arrivals cannot refill the queue
        logger.warning("simulation ran out of events before the horizon: %s", exc)

    counters = model.counters
    records = counters.completions
    if cfg.horizon is HorizonKind.COMPLETIONS:
        skip = int(cfg.warmup * len(records))
    else:
        cutoff = cfg.warmup * cfg.duration_s
        skip = sum(1 for r in records if r.time < cutoff)
    start = (records[skip - 1].time, records[skip - 1].area) if skip > 0 else (0.0, 0.0)
    kept = records[skip:]
    logger.info("simulated %d completions (%d after warmup) in %.6g s of link time",
                len(records), len(kept), env.now)

    queue = np.array([r.queue for r in kept], dtype=float)
    batch = np.array([r.batch for r in kept], dtype=float)
    eq, eq_se = batch_means(queue, cfg.batches)
    ez, ez_se = batch_means(batch, cfg.batches)
    tq, tq_se = _time_average(kept, start, cfg.batches) if kept else (float("nan"), float("nan"))

    capacity = cfg.queue.capacity
    service_time: Dict[int, float] = {}
    service_time_se: Dict[int, float] = {}
    per_type: Dict[int, int] = {}
    freq: Dict[int, List[float]] = {}
    freq_se: Dict[int, List[float]] = {}
    for j in cfg.queue.service_types:
        of_type = [r for r in kept if r.batch == j]
        per_type[j] = len(of_type)
        service_time[j], service_time_se[j] = batch_means(np.array([r.duration for r in of_type]), cfg.batches)
        counts = np.array([r.arrivals for r in of_type])
        freq[j], freq_se[j] = [], []
        for k in range(capacity + 1):
            f, se = batch_means((counts == k).astype(float), cfg.batches)
            freq[j].append(f)
            freq_se[j].append(se)

    in_system = model.waiting + model.in_service
    if counters.arrivals != counters.served + counters.dropped + in_system:
        logger.error("packet conservation violated: %d arrivals vs %d served + %d dropped + %d in system",
                     counters.arrivals, counters.served, counters.dropped, in_system)

    return SimReport(
        seed=cfg.seed,
        rng_algorithm=RNG_ALGORITHM,
        completions=len(kept),
        sim_time_s=float(env.now),
        mean_queue_embedded=eq,
        mean_queue_embedded_se=eq_se,
        mean_queue_time_avg=tq,
        mean_queue_time_avg_se=tq_se,
        mean_batch=ez,
        mean_batch_se=ez_se,
        mean_service_time=service_time,
        mean_service_time_se=service_time_se,
        services_per_type=per_type,
        arrival_freq=freq,
        arrival_freq_se=freq_se,
        queue_histogram=np.bincount(queue.astype(int), minlength=capacity + 1).tolist(),
        arrivals=counters.arrivals,
        served=counters.served,
        dropped=counters.dropped,
        in_system=in_system,
        strict_ack=cfg.strict_ack,
        queue_trace=queue.astype(int).tolist() if cfg.keep_trace else None,
    )
