"""Shared configuration for bop-forge.

Environment variables are read once per run; command-line flags override them
where both exist.
"""

import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from dotenv import load_dotenv

from solvers import SOLVER_NAMES
from tracing_config import EXPORTERS

logger = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = Path("~/.cache/bop-forge")

DEFAULT_K = 8
DEFAULT_P = 32
DEFAULT_N = 64
DEFAULT_L = 128
DEFAULT_TIMEOUT_MS = 5000
DEFAULT_FUEL = 10_000


@dataclass(frozen=True)
class Environment:
    """Validated environment settings."""

    solver: str
    trace_exporter: str
    project_id: str | None
    cache_dir: Path | None


def setup_environment(load_env_file: bool = True) -> Environment:
    """Load and validate the environment.

    Args:
        load_env_file: Whether to load a .env file first

    Returns:
        The validated settings

    Raises:
        OSError: If any variable holds an unsupported value
    """
    if load_env_file:
        load_dotenv()

    problems = []

    solver = os.getenv("BOPFORGE_SOLVER", "builtin").lower()
    if solver not in SOLVER_NAMES:
        problems.append(f"BOPFORGE_SOLVER={solver} (expected one of {', '.join(SOLVER_NAMES)})")

    exporter = os.getenv("BOPFORGE_TRACE_EXPORTER", "none").lower()
    if exporter not in EXPORTERS:
        problems.append(
            f"BOPFORGE_TRACE_EXPORTER={exporter} (expected one of {', '.join(EXPORTERS)})"
        )

    project_id = os.getenv("GOOGLE_CLOUD_PROJECT")
    if exporter == "cloud" and not project_id:
        problems.append("GOOGLE_CLOUD_PROJECT (required by the cloud trace exporter)")

    if problems:
        logger.error(
            "Invalid environment configuration",
            extra={"context": {"problems": problems}},
        )
        raise OSError(f"Invalid environment configuration: {'; '.join(problems)}")

    cache = os.getenv("BOPFORGE_CACHE")
    env = Environment(solver, exporter, project_id, Path(cache).expanduser() if cache else None)
    logger.debug("Environment validated", extra={"context": asdict(env)})
    return env


def resolve_cache_dir(flag: str | None, env: Environment | None = None) -> Path:
    """Pick the summary cache directory: ``--cache-dir``, then BOPFORGE_CACHE, then the default."""
    if flag:
        return Path(flag).expanduser()
    if env is not None and env.cache_dir is not None:
        return env.cache_dir
    cache = os.getenv("BOPFORGE_CACHE")
    if cache:
        return Path(cache).expanduser()
    return DEFAULT_CACHE_DIR.expanduser()


@dataclass
class RunConfig:
    """Inputs and search bounds of one compile run.

    Attributes:
        payload: SPL source path
        target: TIR source path
        entry: Entry block id; the target's declared entry when None
        P: Upper bound on tried statement permutations
        L: Maximum length of a dispatcher path (blocks)
        N: Upper bound on tried induced subgraphs per delta graph
        K: Upper bound on dispatcher path candidates per edge
        timeout_ms: Solver timeout per conjunction
    """

    payload: Path
    target: Path
    entry: int | None = None
    P: int = DEFAULT_P
    L: int = DEFAULT_L
    N: int = DEFAULT_N
    K: int = DEFAULT_K
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    fuel: int = DEFAULT_FUEL
    jobs: int = 1
    solver: str = "builtin"
    cache_dir: Path | None = None
    out: Path | None = None
    plan: Path | None = None
    report: Path | None = None
    emit_dot: Path | None = None
    trace_json: Path | None = None
    dump_candidates: Path | None = None
    dump_mapping: Path | None = None

    def validate(self) -> "RunConfig":
        """Check bounds.

        Raises:
            ValueError: If a bound is below 1 or the solver is unknown
        """
        bad = [
            name
            for name in ("P", "L", "N", "K", "timeout_ms", "fuel", "jobs")
            if getattr(self, name) < 1
        ]
        if bad:
            raise ValueError(f"Bounds must be >= 1: {', '.join(bad)}")
        if self.solver not in SOLVER_NAMES:
            raise ValueError(
                f"Unsupported solver: '{self.solver}'. Supported solvers: {', '.join(SOLVER_NAMES)}"
            )
        return self

    def bounds(self) -> dict[str, int]:
        return {"P": self.P, "L": self.L, "N": self.N, "K": self.K, "timeout_ms": self.timeout_ms}
