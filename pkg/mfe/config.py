from __future__ import annotations

import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

load_dotenv()


def _default_threads() -> int:
    raw = os.getenv("MEQ_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Settings:
    # --- Parallelism ---
    # MEQ_THREADS caps IPFP row-block workers and benchmark replications.
    threads: int = field(default_factory=_default_threads)
    # Rows per IPFP half-step block; identical in serial and parallel runs.
    block_rows: int = int(os.getenv("MEQ_BLOCK_ROWS", "64"))

    # --- Solver defaults ---
    default_tol: float = float(os.getenv("MEQ_TOL", "1e-9"))
    default_max_iter: int = int(os.getenv("MEQ_MAX_ITER", "10000"))

    # --- CLI ---
    log_level: str = os.getenv("MEQ_LOG_LEVEL", "WARNING").strip().upper()


settings = Settings()
