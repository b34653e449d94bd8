"""
Run Configuration Module

Parses run files: flat ``key = value`` INI text with the sections
[grid], [time], [params], [data], [output] and [task].  Every key is
optional except that the file must not be empty; unknown sections and keys
are rejected with their line number.  docs/config_keys.md lists the keys.
"""

from __future__ import annotations

import configparser
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from src.config import config
from src.exceptions import ConfigurationError
from src.integrator import DEFAULT_DT, DEFAULT_STRIDE, TIME_MATCH_TOL
from src.model import InitialDataSpec, ParamSet
from src.spectral_core import GridSpec

logger = logging.getLogger(__name__)

TASKS = (
    "simulate",
    "linear-decay",
    "decay-fit",
    "verify-lemmas",
    "normal-form-check",
    "kernel-scan",
)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in re.split(r"[,\s]+", text.strip()) if part)


def _pair(text: str) -> Tuple[float, float]:
    values = _floats(text)
    if len(values) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return values


# section -> key -> parser
SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "grid": {"n": int, "box_length": float},
    "time": {
        "t_end": float,
        "dt": float,
        "record_stride": int,
        "nonlinear": _bool,
    },
    "params": {
        "n_top": float,
        "n_prime": float,
        "n_one": float,
        "delta1": float,
        "delta2": float,
        "eps1": float,
    },
    "data": {
        "amplitude": float,
        "density_profile": str,
        "density_width": float,
        "potential_profile": str,
        "potential_width": float,
        "center": _pair,
        "wavenumber": float,
        "seed": int,
    },
    "output": {
        "directory": str,
        "save_trajectory": _bool,
        "write_csv": _bool,
    },
    "task": {
        "name": str,
        "fit_start": float,
        "fit_end": float,
        "samples": int,
        "radius": float,
        "normal_form_time": float,
        "cubic_method": str,
        "g_modes": int,
        "g_every": int,
        "kernel_scales": _floats,
        "kernel_times": _floats,
        "assert": _bool,
    },
}


@dataclass
class RunConfig:
    """Everything one harness run needs."""

    n: int = 64
    box_length: float = 64.0
    t_end: float = 20.0
    dt: float = DEFAULT_DT
    record_stride: int = DEFAULT_STRIDE
    nonlinear: bool = True
    params: ParamSet = field(default_factory=ParamSet)
    data: InitialDataSpec = field(default_factory=InitialDataSpec)
    output_dir: str = field(default_factory=lambda: config.OUTPUT_DIR)
    save_trajectory: bool = False
    write_csv: bool = True
    task: str = "simulate"
    fit_start: float = 5.0
    fit_end: Optional[float] = None
    samples: int = 100_000
    radius: float = 20.0
    normal_form_time: float = 1.0
    cubic_method: str = "nested"
    g_modes: Optional[int] = None
    g_every: int = 1
    kernel_scales: Tuple[float, ...] = (0.25, 1.0, 4.0)
    kernel_times: Tuple[float, ...] = (0.0, 1.0, 4.0, 16.0)
    check: bool = True
    source: Optional[str] = None

    @property
    def grid(self) -> GridSpec:
        return GridSpec.square(self.n, self.box_length)

    @property
    def t_wrap(self) -> float:
        return self.grid.wrap_horizon()

    def fit_window(self) -> Tuple[float, float]:
        end = self.fit_end if self.fit_end is not None else min(self.t_end, self.t_wrap)
        return (self.fit_start, end)

    def integration_span(self) -> Optional[Tuple[str, float]]:
        """(key, time) the task integrates to, or None for tasks that never integrate."""
        if self.task in ("simulate", "linear-decay"):
            return "time.t_end", self.t_end
        if self.task == "normal-form-check":
            return "task.normal_form_time", self.normal_form_time
        return None

    def problems(self) -> List[str]:
        found = list(self.params.problems())
        if self.n < 4 or self.n % 2:
            found.append(f"grid.n must be even and >= 4, got {self.n}")
        if not self.box_length > 0:
            found.append("grid.box_length must be positive")
        if not self.dt > 0:
            found.append("time.dt must be positive")
        if self.record_stride < 1:
            found.append("time.record_stride must be >= 1")
        if self.t_end < 0:
            found.append("time.t_end must be non-negative")
        if self.task not in TASKS:
            found.append(f"task.name must be one of {', '.join(TASKS)}")
        if self.cubic_method not in ("nested", "direct"):
            found.append("task.cubic_method must be 'nested' or 'direct'")
        if self.samples < 1:
            found.append("task.samples must be positive")
        grid_ok = self.n >= 4 and self.n % 2 == 0 and self.box_length > 0
        span = self.integration_span()
        if span is not None and grid_ok and self.dt > 0:
            key, t = span
            if t > self.t_wrap:
                found.append(
                    f"{key} = {t} is beyond the wrap-around horizon {self.t_wrap:.4g}"
                )
            steps = round(t / self.dt)
            if abs(steps * self.dt - t) > TIME_MATCH_TOL * max(1.0, t):
                found.append(f"{key} = {t} is not a multiple of time.dt = {self.dt}")
        return found

    def validate(self) -> "RunConfig":
        found = self.problems()
        if found:
            raise ConfigurationError(f"Invalid run configuration: {'; '.join(found)}")
        return self

    def with_overrides(self, **changes: Any) -> "RunConfig":
        data = {**self.__dict__, **{k: v for k, v in changes.items() if v is not None}}
        return RunConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["params"] = self.params.to_dict()
        return data


def _line_index(text: str) -> Dict[Tuple[Optional[str], str], int]:
    """(section, key) -> 1-based line number; sections map key '' to their header line."""
    index: Dict[Tuple[Optional[str], str], int] = {}
    section: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        header = re.fullmatch(r"\[([^\]]+)\]", line)
        if header:
            section = header.group(1).strip().lower()
            index.setdefault((section, ""), number)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        index.setdefault((section, key), number)
    return index


_FIELD_NAMES = {
    ("grid", "n"): "n",
    ("grid", "box_length"): "box_length",
    ("output", "directory"): "output_dir",
    ("output", "save_trajectory"): "save_trajectory",
    ("output", "write_csv"): "write_csv",
    ("task", "name"): "task",
    ("task", "assert"): "check",
}


def parse_run_config(text: str, source: Optional[str] = None) -> RunConfig:
    """Parse run-file text into a validated RunConfig."""
    if not text.strip():
        raise ConfigurationError("Run configuration is empty", key=source)
    lines = _line_index(text)
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__defaults__", inline_comment_prefixes=("#", ";")
    )
    try:
        parser.read_string(text, source=source or "<string>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigurationError(
            "Key outside any section", key=exc.line.strip(), line=exc.lineno
        ) from exc
    except configparser.Error as exc:
        raise ConfigurationError(
            f"Cannot parse run configuration: {exc.message}",
            line=getattr(exc, "lineno", None),
        ) from exc

    top: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    data: Dict[str, Any] = {}
    for section in parser.sections():
        name = section.lower()
        if name not in SCHEMA:
            raise ConfigurationError(
                f"Unknown section [{section}]", key=section, line=lines.get((name, ""))
            )
        for key, raw in parser.items(section):
            line = lines.get((name, key))
            converter = SCHEMA[name].get(key)
            if converter is None:
                raise ConfigurationError(
                    f"Unknown key '{key}' in [{name}]", key=f"{name}.{key}", line=line
                )
            try:
                value = converter(raw)
            except ValueError as exc:
                raise ConfigurationError(
                    f"Bad value for {name}.{key}: {exc}", key=f"{name}.{key}", line=line
                ) from exc
            if name == "params":
                params[key] = value
            elif name == "data":
                data[key] = value
            else:
                top[_FIELD_NAMES.get((name, key), key)] = value

    run = RunConfig(
        params=ParamSet(**params), data=InitialDataSpec(**data), source=source, **top
    )
    logger.debug(f"Parsed run configuration from {source or '<string>'}")
    return run.validate()


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError("Run configuration file not found", key=str(path))
    return parse_run_config(path.read_text(encoding="utf-8"), source=str(path))
