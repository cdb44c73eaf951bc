"""
DuckDB and Parquet storage for sweep results.

Sweep rows and the stationary vectors behind them can be kept in a DuckDB
file and exported to Parquet for plotting elsewhere.

Usage:
    from rlnc_tdd.storage import SweepStorage

    with SweepStorage('results/sweeps.db') as storage:
        run_id = storage.store_sweep(result)
        storage.export_to_parquet('results/parquet', run_id=run_id)
"""

import math
import uuid
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

try:
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import SweepResult
    from rlnc_tdd.utils import now_utc
except ImportError:
    from logging_config import get_logger
    from models import SweepResult
    from utils import now_utc

logger = get_logger(__name__)

try:
    import duckdb
    DUCKDB_AVAILABLE = True
except ImportError:
    DUCKDB_AVAILABLE = False
    logger.warning("duckdb not available. Install with: pip install duckdb")

try:
    import pyarrow as pa
    import pyarrow.parquet as pq
    PARQUET_AVAILABLE = True
except ImportError:
    PARQUET_AVAILABLE = False
    logger.warning("pyarrow not available. Install with: pip install pyarrow")


def _nullable(value) -> Optional[float]:
    value = float(value)
    return None if math.isnan(value) else value


class SweepStorage:
    """DuckDB storage for sweep tables and stationary distributions."""

    def __init__(self, db_path: Union[str, Path], create_schema: bool = True):
        """Open (or create) the database file.

        Args:
            db_path: Path to DuckDB database file
            create_schema: If True, create tables if they don't exist
        """
        if not DUCKDB_AVAILABLE:
            raise ImportError("duckdb package is required. Install with: pip install duckdb")

        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self.conn = duckdb.connect(str(self.db_path))

        if create_schema:
            self._create_schema()

    def _create_schema(self):
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS sweep_results (
                run_id TEXT NOT NULL,
                created TIMESTAMP NOT NULL,
                lambda DOUBLE NOT NULL,
                m INTEGER NOT NULL,
                K INTEGER NOT NULL,
                B INTEGER NOT NULL,
                EQ DOUBLE,
                EZ DOUBLE,
                stable BOOLEAN,
                err_bound DOUBLE,
                error TEXT,
                PRIMARY KEY (run_id, lambda, m, K)
            )
        """)
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS stationary_distributions (
                run_id TEXT NOT NULL,
                lambda DOUBLE NOT NULL,
                m INTEGER NOT NULL,
                K INTEGER NOT NULL,
                i INTEGER NOT NULL,
                pi DOUBLE NOT NULL,
                PRIMARY KEY (run_id, lambda, m, K, i)
            )
        """)

    def store_sweep(self, result: SweepResult, run_id: Optional[str] = None) -> str:
        """Insert every sweep row and stationary vector under one run id.

        Returns:
            The run id used (generated when not given)
        """
        run_id = run_id or uuid.uuid4().hex
        created = now_utc().replace(tzinfo=None)
        rows = []
        for record in result.table.to_dict(orient="records"):
            key = (float(record["lambda"]), int(record["m"]), int(record["K"]))
            rows.append((
                run_id, created, key[0], key[1], key[2], int(record["B"]),
                _nullable(record["EQ"]), _nullable(record["EZ"]), bool(record["stable"]),
                _nullable(record["err_bound"]), result.errors.get(key),
            ))
        if rows:
            self.conn.executemany(
                "INSERT INTO sweep_results VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)", rows
            )

        dist_rows = [
            (run_id, lam, m, k, i, float(p))
            for (lam, m, k), pi in result.distributions.items()
            for i, p in enumerate(pi)
        ]
        if dist_rows:
            self.conn.executemany(
                "INSERT INTO stationary_distributions VALUES (?, ?, ?, ?, ?, ?)", dist_rows
            )
        logger.info("stored sweep run %s: %d rows, %d distributions",
                    run_id, len(rows), len(result.distributions))
        return run_id

    def query_sweep(self, run_id: Optional[str] = None,
                    lambda_rate: Optional[float] = None) -> pd.DataFrame:
        query = "SELECT * FROM sweep_results"
        clauses, params = [], []
        if run_id is not None:
            clauses.append("run_id = ?")
            params.append(run_id)
        if lambda_rate is not None:
            clauses.append("lambda = ?")
            params.append(float(lambda_rate))
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY run_id, lambda, m, K"
        return self.conn.execute(query, params).fetchdf()

    def query_distribution(self, run_id: str, lambda_rate: float, m: int, k_max: int) -> np.ndarray:
        frame = self.conn.execute(
            "SELECT pi FROM stationary_distributions WHERE run_id = ? AND lambda = ? AND m = ? AND K = ? ORDER BY i",
            [run_id, float(lambda_rate), int(m), int(k_max)],
        ).fetchdf()
        return frame["pi"].to_numpy()

    def list_runs(self) -> List[str]:
        rows = self.conn.execute("SELECT DISTINCT run_id FROM sweep_results ORDER BY run_id").fetchall()
        return [r[0] for r in rows]

    def export_to_parquet(
        self,
        output_dir: Union[str, Path],
        run_id: Optional[str] = None,
        include_distributions: bool = True,
        compression: str = 'snappy'
    ) -> List[Path]:
        """Export sweep rows (and optionally stationary vectors) to Parquet.

        Args:
            output_dir: Directory to write Parquet files
            run_id: If specified, only export this run
            include_distributions: Also write ``stationary_distributions.parquet``
            compression: Compression algorithm ('snappy', 'zstd', 'gzip', 'brotli')

        Returns:
            List of created Parquet file paths
        """
        if not PARQUET_AVAILABLE:
            raise ImportError("pyarrow is required for Parquet export. Install with: pip install pyarrow")

        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        suffix = f"_{run_id}" if run_id else ""
        where = " WHERE run_id = ?" if run_id else ""
        params = [run_id] if run_id else []

        written = []
        sweep = self.conn.execute(
            f"SELECT * FROM sweep_results{where} ORDER BY run_id, lambda, m, K", params
        ).fetchdf()
        if not sweep.empty:
            path = output_dir / f"sweep_results{suffix}.parquet"
            pq.write_table(pa.Table.from_pandas(sweep, preserve_index=False), path, compression=compression)
            written.append(path)

        if include_distributions:
            dists = self.conn.execute(
                f"SELECT * FROM stationary_distributions{where} ORDER BY run_id, lambda, m, K, i", params
            ).fetchdf()
            if not dists.empty:
                path = output_dir / f"stationary_distributions{suffix}.parquet"
                pq.write_table(pa.Table.from_pandas(dists, preserve_index=False), path, compression=compression)
                written.append(path)
        return written

    def close(self):
        """Close database connection."""
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


def get_storage_path(output_path: Union[str, Path]) -> Path:
    """Default DuckDB file next to an output file: ``<dir>/data/sweeps.db``."""
    return Path(output_path).parent / "data" / "sweeps.db"
