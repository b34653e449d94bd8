"""
Exception hierarchy for EPSim

Library code raises these; only the command line turns them into exit
codes. ConfigurationError maps to a configuration failure, every other
EPSimError to a numerical failure. Each error carries a context mapping
(times, norms, tolerances, offending keys) that is rendered into the
message so a failed run can be diagnosed from its log alone.
"""

from numbers import Integral, Real
from typing import Any, Dict, List, Optional


def _render(value: Any) -> str:
    if isinstance(value, Real) and not isinstance(value, Integral):
        return f"{float(value):.6g}"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_render(v)}" for k, v in value.items()) + "}"
    return str(value)


class EPSimError(Exception):
    """
    Base class for simulator and harness errors.

    Attributes:
        message: What went wrong, without numbers
        context: Quantities describing where it went wrong
    """

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={_render(v)}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class GridMismatchError(EPSimError):
    """Raised when two fields live on different grids."""

    def __init__(self, left: Any, right: Any):
        super().__init__(
            "Fields are defined on different grids",
            context={"left": left, "right": right},
        )


class DimensionMismatchError(EPSimError):
    """Raised when a physical array does not match the grid shape."""

    def __init__(self, expected: tuple, got: tuple):
        super().__init__(
            f"Array shape {got} does not match grid shape {expected}",
            context={"expected": expected, "got": got},
        )


class NeutralityViolationError(EPSimError):
    """Raised when a density perturbation carries a nonzero mean."""

    def __init__(self, zero_mode: complex, tolerance: float):
        super().__init__(
            "Density perturbation violates charge neutrality (nonzero mean)",
            context={"zero_mode": abs(zero_mode), "tolerance": tolerance},
        )


class RotationalFlowError(EPSimError):
    """Raised when a velocity field is not irrotational."""

    def __init__(self, curl_norm: float, velocity_norm: float, tolerance: float):
        super().__init__(
            "Velocity field is rotational",
            context={
                "curl_norm": curl_norm,
                "velocity_norm": velocity_norm,
                "tolerance": tolerance,
            },
        )


class InvalidStateError(EPSimError):
    """Raised when a state or profile breaks one of its invariants."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message, context=context)


class BlowUpError(EPSimError):
    """Raised when a time step produces NaN or overflow."""

    def __init__(
        self,
        time_reached: float,
        last_norms: Optional[Dict[str, float]] = None,
        stage: Optional[int] = None,
    ):
        context: Dict[str, Any] = {"time_reached": time_reached}
        if stage is not None:
            context["stage"] = stage
        if last_norms:
            context["last_norms"] = last_norms
        super().__init__("Non-finite values encountered during integration", context)
        self.time_reached = time_reached
        self.last_norms = last_norms or {}


class HorizonError(EPSimError):
    """Raised when a run would exceed the wrap-around horizon of the box."""

    def __init__(self, t_end: float, t_wrap: float):
        super().__init__(
            "Requested end time exceeds the wrap-around horizon",
            context={"t_end": t_end, "t_wrap": t_wrap},
        )


class InsufficientSnapshotsError(EPSimError):
    """Raised when a trajectory has too few snapshots for an operation."""

    def __init__(self, needed: int, got: int, operation: Optional[str] = None):
        context: Dict[str, Any] = {"needed": needed, "got": got}
        if operation:
            context["operation"] = operation
        super().__init__("Not enough trajectory snapshots", context=context)


class QuadratureError(EPSimError):
    """Raised when snapshots cannot support the requested time quadrature."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message, context=context)


class GridTooLargeError(EPSimError):
    """Raised when a direct quadrature path is requested on a large grid."""

    def __init__(self, shape: tuple, limit: int, operation: str):
        super().__init__(
            f"Grid too large for the direct {operation} path",
            context={"shape": shape, "limit": limit},
        )


class PhaseDegeneracyError(EPSimError):
    """Raised when a quadratic phase is numerically zero where it must not be."""

    def __init__(self, combo: Any, value: float, xi: Any = None, eta: Any = None):
        super().__init__(
            "Phase nearly vanishes; sign bookkeeping is inconsistent",
            context={"combo": combo, "phase": value, "xi": xi, "eta": eta},
        )


class KernelTailError(EPSimError):
    """Raised when the propagator kernel leaks too much mass to the box edge."""

    def __init__(self, tail_fraction: float, tolerance: float, n: int):
        super().__init__(
            "Kernel tail beyond the box exceeds tolerance",
            context={"tail_fraction": tail_fraction, "tolerance": tolerance, "n": n},
        )
        self.tail_fraction = tail_fraction


class KernelBudgetError(EPSimError):
    """Raised when the kernel grid cannot be enlarged within the memory budget."""

    def __init__(self, required_mb: float, budget_mb: float, n: int):
        super().__init__(
            "Kernel grid cannot be enlarged within the memory budget",
            context={"required_mb": required_mb, "budget_mb": budget_mb, "n": n},
        )


class DecayFitError(EPSimError):
    """Raised when a decay fit window is unusable."""

    def __init__(self, message: str, column: Optional[str] = None, **context: Any):
        if column:
            context["column"] = column
        super().__init__(message, context=context)


class ProfileSupportError(EPSimError):
    """Raised when initial data is not well inside the periodic box."""

    def __init__(self, outer_fraction: float, limit: float):
        super().__init__(
            "Initial data carries too much mass near the box boundary",
            context={"outer_fraction": outer_fraction, "limit": limit},
        )


class TrajectoryFormatError(EPSimError):
    """Raised when a trajectory file cannot be decoded."""

    def __init__(self, message: str, path: Optional[str] = None):
        context: Dict[str, Any] = {}
        if path:
            context["path"] = path
        super().__init__(message, context=context)


class ConfigurationError(EPSimError):
    """Raised when configuration is invalid or missing."""

    def __init__(
        self,
        message: str,
        missing_keys: Optional[List[str]] = None,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ):
        """
        Initialize with configuration error.

        Args:
            message: Error message
            missing_keys: List of missing configuration keys (if applicable)
            key: Offending key (if applicable)
            line: Line number in the config file (if applicable)
        """
        context: Dict[str, Any] = {}
        if missing_keys:
            context["missing_keys"] = missing_keys
        if key:
            context["key"] = key
        if line is not None:
            context["line"] = line
        super().__init__(message, context=context)
        self.key = key
        self.line = line

