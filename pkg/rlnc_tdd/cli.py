"""
Command-line interface for the RLNC/TDD bulk-service queue toolkit.

Usage:
    python -m rlnc_tdd <command> [options]

Commands:
    - policy: optimized back-to-back counts N_i, round durations and E[T_i]
    - service-dist: truncated completion-time PMF of one batch size
    - arrivals: probabilities of k arrivals during one service type
    - queue: stationary distribution, E[Q], E[Z] and stability of one (λ, m, K, B)
    - sweep: E[Q]/E[Z] table over λ and (m, K) ranges with argmin report
    - simulate: discrete-event simulation report

Every command accepts ``--config``, ``--out`` and ``--format csv|json|table``.
CSV and table outputs written with ``--out`` get a ``<out>.manifest.json`` sidecar;
JSON outputs embed the manifest.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 unstable configuration with ``--fail-unstable``.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

try:
    from rlnc_tdd.version import __version__
    from rlnc_tdd.arrival_counts import arrival_pmf, poisson_tail_bound
    from rlnc_tdd.bulk_queue import queue_ratio, solve_queue, sweep
    from rlnc_tdd.config import load_config, load_default_config, with_overrides
    from rlnc_tdd.des_oracle import simulate
    from rlnc_tdd.errors import (
        ConfigError, DivergenceError, InstabilityError, PreconditionError, RlncTddError,
        SingularChainError, ToleranceNotReachedError,
    )
    from rlnc_tdd.logging_config import ensure_logging_setup, get_logger, level_from_verbosity
    from rlnc_tdd.models import (
        AnalysisConfig, OutputFormat, PolicyObjective, QueueConfig, RunManifest, SimConfig,
    )
    from rlnc_tdd.rlnc_chain import expected_completion_energies
    from rlnc_tdd.service_mgf import build_service_model, completion_pmf_to_frame, service_moments
    from rlnc_tdd.utils import _to_primitive, now_utc, resolve_user_path, write_csv_file, write_json_file
except ImportError:
    from version import __version__
    from arrival_counts import arrival_pmf, poisson_tail_bound
    from bulk_queue import queue_ratio, solve_queue, sweep
    from config import load_config, load_default_config, with_overrides
    from des_oracle import simulate
    from errors import (
        ConfigError, DivergenceError, InstabilityError, PreconditionError, RlncTddError,
        SingularChainError, ToleranceNotReachedError,
    )
    from logging_config import ensure_logging_setup, get_logger, level_from_verbosity
    from models import (
        AnalysisConfig, OutputFormat, PolicyObjective, QueueConfig, RunManifest, SimConfig,
    )
    from rlnc_chain import expected_completion_energies
    from service_mgf import build_service_model, completion_pmf_to_frame, service_moments
    from utils import _to_primitive, now_utc, resolve_user_path, write_csv_file, write_json_file

try:
    from rlnc_tdd.storage import DUCKDB_AVAILABLE, PARQUET_AVAILABLE, SweepStorage, get_storage_path
except ImportError:
    try:
        from storage import DUCKDB_AVAILABLE, PARQUET_AVAILABLE, SweepStorage, get_storage_path
    except ImportError:
        DUCKDB_AVAILABLE = PARQUET_AVAILABLE = False

logger = get_logger(__name__)

DEFAULT_RANGE = "1-5"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNSTABLE = 4

EXIT_CODES = {
    ConfigError: EXIT_CONFIG,
    PreconditionError: EXIT_CONFIG,
    DivergenceError: EXIT_NUMERIC,
    ToleranceNotReachedError: EXIT_NUMERIC,
    SingularChainError: EXIT_NUMERIC,
    InstabilityError: EXIT_UNSTABLE,
}


def exit_code_for(error: RlncTddError) -> int:
    for error_cls, code in EXIT_CODES.items():
        if isinstance(error, error_cls):
            return code
    return EXIT_NUMERIC


# ─────────────────────────────────────────────────────────────
# 🧰 HELPERS
# ─────────────────────────────────────────────────────────────

def _json_output(result: Dict[str, Any], stream=None) -> None:
    """Write a JSON document to stdout (or ``stream``)."""
    stream = stream or sys.stdout
    print(json.dumps(_to_primitive(result), indent=None, ensure_ascii=False), file=stream)
    stream.flush()


def _json_error(message: str, error_type: str = "Error") -> None:
    _json_output({"error": message, "type": error_type})


def parse_int_range(text: str) -> List[int]:
    """``"1-5"``, ``"1,3,5"`` or ``"2"`` to a sorted list of integers."""
    values = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                values.update(range(int(lo), int(hi) + 1))
            else:
                values.add(int(part))
        except ValueError:
            raise ConfigError(f"invalid integer range {text!r}") from None
    if not values:
        raise ConfigError(f"empty range {text!r}")
    return sorted(values)


def parse_float_list(text: str) -> List[float]:
    try:
        values = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid number list {text!r}") from None
    if not values:
        raise ConfigError(f"empty list {text!r}")
    return values


def _given(value: Any, default: Any) -> Any:
    """Command-line value unless the flag was absent; zero and "" count as given."""
    return default if value is None else value


def _resolve_config(args: Dict[str, Any]) -> AnalysisConfig:
    """Configuration file (or packaged defaults) with command-line overrides."""
    cfg = load_config(resolve_user_path(args["config"])) if args.get("config") else load_default_config()
    return with_overrides(
        cfg,
        pe_ack=args.get("pe_ack"),
        lambda_rate=args.get("lambda_rate"),
        m=args.get("m"),
        k_max=args.get("K"),
        capacity=args.get("B"),
        seed=args.get("seed"),
        completions=args.get("completions"),
        warmup=args.get("warmup"),
        batches=args.get("batches"),
    )


def _require(cfg: AnalysisConfig, *names: str) -> None:
    labels = {"lambda_rate": "lambda", "k_max": "K", "capacity": "B", "m": "m"}
    missing = [labels[n] for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"missing required value(s): {', '.join(missing)} (set in config or on the command line)")


def _queue_config(cfg: AnalysisConfig) -> QueueConfig:
    _require(cfg, "lambda_rate", "m", "k_max", "capacity")
    return QueueConfig(cfg.m, cfg.k_max, cfg.capacity, cfg.lambda_rate)


def _manifest(command: str, cfg: AnalysisConfig, **extra: Any) -> RunManifest:
    return RunManifest(
        command=command,
        config=_to_primitive(cfg),
        version=__version__,
        created=now_utc().isoformat(),
        extra=extra,
    )


# ─────────────────────────────────────────────────────────────
# 🧪 COMMANDS
# ─────────────────────────────────────────────────────────────

def cmd_policy(args: Dict[str, Any]) -> Dict[str, Any]:
    """Optimized N_1..N_M with round durations and expected completion times.

    Args:
        args: ``config``, ``M`` (defaults to K), ``objective`` (time|energy), overrides

    Returns:
        Result dict with a ``frame`` (one row per state) and JSON ``data``
    """
    cfg = _resolve_config(args)
    batch_size = _given(args.get("M"), cfg.k_max)
    if batch_size is None:
        raise ConfigError("batch size required: pass --M or set K in the config")
    objective = PolicyObjective(args.get("objective") or PolicyObjective.TIME)
    service = build_service_model(cfg.link, batch_size, cfg.search_window, cfg.pmf_tol,
                                  cfg.node_cap, objective)
    policy = service.policy
    energies = expected_completion_energies(policy.n_per_state, cfg.link)
    frame = pd.DataFrame({
        "i": range(1, batch_size + 1),
        "N_i": policy.n_per_state,
        "T_round_s": policy.t_round,
        "E_T_s": policy.expected_completion,
        "E_energy": energies,
    })
    return {
        "command": "policy",
        "frame": frame,
        "data": {"batch_size": batch_size, "objective": objective, "policy": policy,
                 "expected_energy": energies},
        "summary": {"E[T_M] (s)": policy.expected_completion[-1]},
        "manifest": _manifest("policy", cfg, batch_size=batch_size, objective=objective.value),
    }


def cmd_service_dist(args: Dict[str, Any]) -> Dict[str, Any]:
    """Truncated completion-time PMF for batch size ``n`` (defaults to K)."""
    cfg = _resolve_config(args)
    n = _given(args.get("n"), cfg.k_max)
    if n is None:
        raise ConfigError("batch size required: pass --n or set K in the config")
    service = build_service_model(cfg.link, n, cfg.search_window, cfg.pmf_tol, cfg.node_cap)
    pmf = service.pmf
    mean, variance = service_moments(n, service.policy, service.matrix)
    return {
        "command": "service-dist",
        "frame": completion_pmf_to_frame(pmf),
        "data": {
            "n": n,
            "atoms": [{"t": t, "p": p} for t, p in pmf.atoms],
            "truncated_mass": pmf.truncated_mass,
            "mean_s": service.mean_service,
            "variance_s2": variance,
        },
        "summary": {"atoms": len(pmf.times), "truncated_mass": pmf.truncated_mass,
                    "E[T] (s)": service.mean_service, "sd[T] (s)": variance ** 0.5},
        "manifest": _manifest("service-dist", cfg, n=n),
    }


def cmd_arrivals(args: Dict[str, Any]) -> Dict[str, Any]:
    """a_0..a_kmax for service type ``j``; ``kmax`` defaults to B."""
    cfg = _resolve_config(args)
    _require(cfg, "lambda_rate")
    j = _given(args.get("j"), cfg.k_max)
    if j is None:
        raise ConfigError("service type required: pass --j or set K in the config")
    kmax = _given(args.get("kmax"), cfg.capacity)
    if kmax is None:
        raise ConfigError("kmax required: pass --kmax or set B in the config")
    service = build_service_model(cfg.link, j, cfg.search_window, cfg.pmf_tol, cfg.node_cap)
    arrivals = arrival_pmf(j, cfg.lambda_rate, kmax, service.pmf)
    beyond = poisson_tail_bound(cfg.lambda_rate, kmax, service.pmf)
    return {
        "command": "arrivals",
        "frame": pd.DataFrame({"k": range(kmax + 1), "a_k": arrivals.a}),
        "data": {"j": j, "lambda": cfg.lambda_rate, "a": arrivals.a,
                 "tail_bound": arrivals.tail_bound, "poisson_tail": beyond},
        "summary": {"sum a_k": float(arrivals.a.sum()), "tail_bound": arrivals.tail_bound,
                    "poisson_tail": beyond},
        "manifest": _manifest("arrivals", cfg, j=j, kmax=kmax),
    }


def cmd_queue(args: Dict[str, Any]) -> Dict[str, Any]:
    """Stationary distribution and metrics of one (λ, m, K, B) configuration."""
    cfg = _resolve_config(args)
    solution = solve_queue(_queue_config(cfg), cfg.link, cfg.search_window, cfg.pmf_tol, cfg.node_cap)
    return {
        "command": "queue",
        "frame": pd.DataFrame({"i": range(len(solution.pi)), "pi": solution.pi}),
        "data": {
            "pi": solution.pi,
            "EQ": solution.mean_queue,
            "EZ": solution.mean_batch,
            "stable": solution.stable_infinite,
            "err_bound": solution.input_error_bound,
            "mean_service_s": solution.mean_service,
        },
        "summary": {"E[Q]": solution.mean_queue, "E[Z]": solution.mean_batch,
                    "stable": solution.stable_infinite, "err_bound": solution.input_error_bound},
        "unstable": not solution.stable_infinite,
        "manifest": _manifest("queue", cfg),
    }


def cmd_sweep(args: Dict[str, Any]) -> Dict[str, Any]:
    """E[Q]/E[Z] table over λ values and (m, K) ranges, with argmin report.

    Args:
        args: ``lambdas`` ("1,10,30"), ``m_range``/``k_range`` ("1-5"), ``B``,
            optional ``store`` (DuckDB file) and ``parquet`` (export directory)
    """
    cfg = _resolve_config(args)
    if args.get("lambdas") is not None:
        lambdas = parse_float_list(args["lambdas"])
    elif cfg.lambda_rate is not None:
        lambdas = [cfg.lambda_rate]
    else:
        raise ConfigError("lambda list required: pass --lambdas or set lambda in the config")
    m_values = parse_int_range(_given(args.get("m_range"), DEFAULT_RANGE))
    k_values = parse_int_range(_given(args.get("k_range"), DEFAULT_RANGE))
    _require(cfg, "capacity")

    result = sweep(m_values, k_values, lambdas, cfg.capacity, cfg.link,
                   cfg.search_window, cfg.pmf_tol, cfg.node_cap)
    outputs = []
    run_id = None
    if args.get("store") or args.get("parquet"):
        if not DUCKDB_AVAILABLE:
            raise ConfigError("DuckDB storage not available. Install with: pip install duckdb pyarrow")
        db_path = args.get("store") or get_storage_path(args.get("out") or Path.cwd() / "sweep")
        with SweepStorage(resolve_user_path(db_path)) as storage:
            run_id = storage.store_sweep(result)
            outputs.append(str(db_path))
            if args.get("parquet"):
                if not PARQUET_AVAILABLE:
                    raise ConfigError("pyarrow is required for Parquet export. Install with: pip install pyarrow")
                written = storage.export_to_parquet(resolve_user_path(args["parquet"]), run_id=run_id)
                outputs.extend(str(p) for p in written)

    ratios = {lam: queue_ratio(result.table, lam, (3, 3), (1, 5)) for lam in lambdas}
    return {
        "command": "sweep",
        "frame": result.table,
        "data": {
            "rows": result.table,
            "argmin": {lam: [list(c) for c in cells] for lam, cells in result.argmin.items()},
            "fixed_batch_argmin": result.fixed_batch_argmin,
            "errors": result.errors,
            "distributions": result.distributions,
            "run_id": run_id,
        },
        "summary": {
            **{f"argmin (m,K) at lambda={lam:g}": cells for lam, cells in result.argmin.items()},
            **{f"argmin m=K at lambda={lam:g}": ms for lam, ms in result.fixed_batch_argmin.items()},
            **{f"EQ(3,3)/EQ(1,5) at lambda={lam:g}": r for lam, r in ratios.items() if r is not None},
        },
        "unstable": bool((~result.table["stable"].astype(bool)).any()),
        "failed_cells": len(result.errors),
        "outputs": outputs,
        "manifest": _manifest("sweep", cfg, lambdas=lambdas, m_range=m_values, k_range=k_values),
    }


def cmd_simulate(args: Dict[str, Any]) -> Dict[str, Any]:
    """Discrete-event simulation of one configuration; report as JSON-ready data."""
    cfg = _resolve_config(args)
    queue = _queue_config(cfg)
    policies = {
        j: build_service_model(cfg.link, j, cfg.search_window, cfg.pmf_tol, cfg.node_cap).policy
        for j in queue.service_types
    }
    duration = args.get("duration")
    sim_cfg = SimConfig(
        queue=queue,
        link=cfg.link,
        policies=policies,
        seed=cfg.seed,
        completions=None if duration else cfg.completions,
        duration_s=duration,
        warmup=cfg.warmup,
        batches=cfg.batches,
        strict_ack=bool(args.get("strict_ack")),
    )
    report = simulate(sim_cfg)
    summary = pd.DataFrame([
        {"metric": "E[Q] embedded", "estimate": report.mean_queue_embedded, "se": report.mean_queue_embedded_se},
        {"metric": "E[Q] time-average", "estimate": report.mean_queue_time_avg, "se": report.mean_queue_time_avg_se},
        {"metric": "E[Z]", "estimate": report.mean_batch, "se": report.mean_batch_se},
        *({"metric": f"E[T_{j}] (s)", "estimate": report.mean_service_time[j],
           "se": report.mean_service_time_se[j]} for j in queue.service_types),
    ])
    return {
        "command": "simulate",
        "frame": summary,
        "data": {"report": report},
        "summary": {"completions": report.completions, "arrivals": report.arrivals,
                    "dropped": report.dropped, "seed": report.seed},
        "manifest": _manifest("simulate", cfg, strict_ack=sim_cfg.strict_ack, duration_s=duration),
    }


COMMANDS = {
    "policy": cmd_policy,
    "service-dist": cmd_service_dist,
    "arrivals": cmd_arrivals,
    "queue": cmd_queue,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


# ─────────────────────────────────────────────────────────────
# 🖨️ OUTPUT
# ─────────────────────────────────────────────────────────────

def _format_scalar(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}" if abs(value) >= 1e-4 or value == 0 else f"{value:.4e}"
    return str(value)


def _sidecar(path: Path, manifest: RunManifest) -> Path:
    """``<out>.manifest.json`` beside ``path``; both are recorded in the manifest."""
    sidecar = path.with_name(path.name + ".manifest.json")
    manifest.outputs.extend([str(path), str(sidecar)])
    return sidecar


def emit(result: Dict[str, Any], fmt: OutputFormat, out: Optional[str]) -> List[str]:
    """Write a command result in the requested format; returns the files written."""
    manifest: RunManifest = result["manifest"]
    manifest.outputs = list(result.get("outputs", []))
    written: List[str] = []

    if fmt is OutputFormat.JSON:
        document = {"manifest": manifest, **result["data"]}
        if out:
            path = resolve_user_path(out)
            manifest.outputs.append(str(path))
            write_json_file(path, document)
            written.append(str(path))
        else:
            _json_output(document)
        return written

    if fmt is OutputFormat.CSV:
        if out:
            path = resolve_user_path(out)
            sidecar = _sidecar(path, manifest)
            write_csv_file(path, result["frame"])
            write_json_file(sidecar, manifest)
            written.extend([str(path), str(sidecar)])
        else:
            sys.stdout.write(result["frame"].to_csv(index=False, float_format="%.12g"))
        return written

    lines = [result["frame"].to_string(index=False, float_format=lambda v: f"{v:.4f}")]
    for label, value in result.get("summary", {}).items():
        lines.append(f"{label}: {_format_scalar(value)}")
    text = "\n".join(lines) + "\n"
    if out:
        path = resolve_user_path(out)
        sidecar = _sidecar(path, manifest)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        write_json_file(sidecar, manifest)
        written.extend([str(path), str(sidecar)])
    else:
        sys.stdout.write(text)
    return written


# ─────────────────────────────────────────────────────────────
# 🚪 ENTRY POINT
# ─────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value or YAML configuration file (default: packaged link)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.TABLE.value)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    common.add_argument("--pe-ack", dest="pe_ack", type=float, help="override the ACK erasure probability")
    common.add_argument("--fail-unstable", action="store_true",
                        help="exit with code 4 when lambda >= K·mu_K")

    queue_args = argparse.ArgumentParser(add_help=False)
    queue_args.add_argument("--lambda", dest="lambda_rate", type=float, help="arrival rate (packets/s)")
    queue_args.add_argument("--m", type=int, help="minimum bulk size")
    queue_args.add_argument("--K", type=int, help="maximum bulk size")
    queue_args.add_argument("--B", type=int, help="waiting-room capacity")

    parser = argparse.ArgumentParser(
        prog="rlnc-tdd",
        description="RLNC over a TDD erasure link as an M/G^(m,K)/1 bulk-service queue",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("policy", parents=[common], help="optimized N_i and E[T_i]")
    p.add_argument("--M", type=int, help="batch size (default: K from the config)")
    p.add_argument("--K", type=int, help=argparse.SUPPRESS)
    p.add_argument("--objective", choices=[o.value for o in PolicyObjective], default=PolicyObjective.TIME.value)

    p = sub.add_parser("service-dist", parents=[common], help="completion-time PMF")
    p.add_argument("--n", type=int, help="batch size (default: K from the config)")
    p.add_argument("--K", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("arrivals", parents=[common], help="arrival counts during one service")
    p.add_argument("--j", type=int, help="service type (default: K from the config)")
    p.add_argument("--lambda", dest="lambda_rate", type=float, help="arrival rate (packets/s)")
    p.add_argument("--kmax", type=int, help="largest count (default: B)")
    p.add_argument("--K", type=int, help=argparse.SUPPRESS)
    p.add_argument("--B", type=int, help=argparse.SUPPRESS)

    sub.add_parser("queue", parents=[common, queue_args], help="stationary distribution and metrics")

    p = sub.add_parser("sweep", parents=[common], help="E[Q]/E[Z] over lambda and (m, K)")
    p.add_argument("--lambdas", help="comma-separated arrival rates, e.g. 1,10,30")
    p.add_argument("--m-range", dest="m_range", help="minimum bulk sizes, e.g. 1-5")
    p.add_argument("--K-range", dest="k_range", help="maximum bulk sizes, e.g. 1-5")
    p.add_argument("--B", type=int, help="waiting-room capacity")
    p.add_argument("--store", help="DuckDB file to store the sweep in")
    p.add_argument("--parquet", help="directory for a Parquet export (implies --store)")

    p = sub.add_parser("simulate", parents=[common, queue_args], help="discrete-event simulation")
    p.add_argument("--seed", type=int)
    horizon = p.add_mutually_exclusive_group()
    horizon.add_argument("--completions", type=int, help="service completions to simulate")
    horizon.add_argument("--duration", type=float, help="simulated seconds instead of a completion count")
    p.add_argument("--warmup", type=float, help="fraction of the horizon discarded")
    p.add_argument("--batches", type=int, help="batch-means batches (>= 20)")
    p.add_argument("--strict-ack", dest="strict_ack", action="store_true",
                   help="keep receiver progress across lost ACKs")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    namespace = parser.parse_args(argv)
    args = vars(namespace)
    verbosity = args.get("verbose", 0)
    ensure_logging_setup(level_from_verbosity(verbosity) if verbosity else None)
    fmt = OutputFormat(args.get("format") or OutputFormat.TABLE.value)

    try:
        result = COMMANDS[args["command"]](args)
        emit(result, fmt, args.get("out"))
        if result.get("failed_cells"):
            logger.warning("%d sweep cell(s) failed; see the errors entry", result["failed_cells"])
        if args.get("fail_unstable") and result.get("unstable"):
            raise InstabilityError("configuration is unstable without the capacity limit (lambda >= K·mu_K)")
    except RlncTddError as e:
        if fmt is OutputFormat.JSON:
            _json_error(str(e), e.error_type)
        else:
            print(f"error [{e.error_type}]: {e}", file=sys.stderr)
        return exit_code_for(e)
    return EXIT_OK
