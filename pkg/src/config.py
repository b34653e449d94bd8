"""
Configuration Management Module

Centralized runtime configuration for EPSim with validation and defaults.
Run-specific settings (grid, time stepping, data) live in RunConfig files,
see src/run_config.py.
"""

import os
from typing import Optional

import psutil
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Config:
    """
    Centralized configuration class for EPSim.

    All configuration values are loaded from environment variables with
    sensible defaults.
    """

    # Transforms
    THREADS: int = int(os.getenv("EPSIM_THREADS", "1"))
    DETERMINISTIC: bool = _env_flag("EPSIM_DETERMINISTIC", "false")
    DEALIAS: bool = _env_flag("EPSIM_DEALIAS", "true")

    # Kernel auto-enlargement
    KERNEL_TAIL_TOL: float = float(os.getenv("EPSIM_KERNEL_TAIL_TOL", "0.01"))
    KERNEL_MAX_ATTEMPTS: int = int(os.getenv("EPSIM_KERNEL_MAX_ATTEMPTS", "6"))
    MEMORY_BUDGET_MB: Optional[float] = (
        float(os.environ["EPSIM_MEMORY_BUDGET_MB"])
        if os.getenv("EPSIM_MEMORY_BUDGET_MB")
        else None
    )

    # Direct quadrature limits
    TRILINEAR_DIRECT_MAX: int = int(os.getenv("EPSIM_TRILINEAR_DIRECT_MAX", "32"))
    BILINEAR_BLOCK: int = int(os.getenv("EPSIM_BILINEAR_BLOCK", str(1 << 22)))

    # Output
    OUTPUT_DIR: str = os.getenv("EPSIM_OUTPUT_DIR", "runs")

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: Optional[str] = os.getenv("LOG_FILE")

    # Environment
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development").lower()

    @classmethod
    def fft_workers(cls) -> int:
        """Worker count for scipy.fft; strict mode pins a single worker."""
        if cls.DETERMINISTIC:
            return 1
        return max(1, cls.THREADS)

    @classmethod
    def memory_budget_mb(cls) -> float:
        """Memory budget for kernel grids, half of available memory by default."""
        if cls.MEMORY_BUDGET_MB is not None:
            return cls.MEMORY_BUDGET_MB
        return psutil.virtual_memory().available / (1024 * 1024) / 2.0

    @classmethod
    def validate_required(cls) -> tuple[bool, list[str]]:
        """
        Validate configuration values.

        Returns:
            Tuple of (is_valid, list_of_problems)
        """
        problems = []

        if cls.THREADS < 1:
            problems.append("EPSIM_THREADS must be >= 1")
        if not 0.0 < cls.KERNEL_TAIL_TOL < 1.0:
            problems.append("EPSIM_KERNEL_TAIL_TOL must lie in (0, 1)")
        if cls.BILINEAR_BLOCK < 1:
            problems.append("EPSIM_BILINEAR_BLOCK must be >= 1")
        if cls.KERNEL_MAX_ATTEMPTS < 1:
            problems.append("EPSIM_KERNEL_MAX_ATTEMPTS must be >= 1")
        if cls.MEMORY_BUDGET_MB is not None and cls.MEMORY_BUDGET_MB <= 0:
            problems.append("EPSIM_MEMORY_BUDGET_MB must be positive")

        return len(problems) == 0, problems

    @classmethod
    def set_deterministic(cls, enabled: bool = True) -> None:
        """Force the strict deterministic mode (single transform worker)."""
        cls.DETERMINISTIC = enabled

    @classmethod
    def get_summary(cls) -> dict:
        """
        Get a summary of current configuration.

        Returns:
            Dictionary with configuration summary
        """
        return {
            "environment": cls.ENVIRONMENT,
            "threads": cls.THREADS,
            "fft_workers": cls.fft_workers(),
            "deterministic": cls.DETERMINISTIC,
            "dealias": cls.DEALIAS,
            "kernel_tail_tol": cls.KERNEL_TAIL_TOL,
            "memory_budget_mb": cls.MEMORY_BUDGET_MB,
            "output_dir": cls.OUTPUT_DIR,
            "log_level": cls.LOG_LEVEL,
        }


# Create a singleton instance
config = Config()
