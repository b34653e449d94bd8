"""
Trajectory Storage Module

Binary trajectory files, one record per snapshot.  The layout is
documented in docs/trajectory_format.md; all numbers are little-endian.

    file header : magic b"EPSTRAJ1", uint32 version, uint32 count,
                  float64 dt, uint32 record_stride, uint8 nonlinear
    record      : uint32 nx, uint32 ny, float64 box_length, float64 t,
                  nx*ny complex128 coefficients (FFT order, row-major)
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from src.exceptions import TrajectoryFormatError
from src.integrator import Profile, Trajectory
from src.spectral_core import GridSpec, SpectralField

logger = logging.getLogger(__name__)

MAGIC = b"EPSTRAJ1"
VERSION = 1
_FILE_HEADER = struct.Struct("<8sIIdIB")
_RECORD_HEADER = struct.Struct("<IIdd")
_COMPLEX = np.dtype("<c16")


def save_trajectory(traj: Trajectory, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(
            _FILE_HEADER.pack(
                MAGIC,
                VERSION,
                len(traj),
                float(traj.dt),
                int(traj.record_stride),
                int(traj.nonlinear),
            )
        )
        for p in traj.profiles:
            grid = p.grid
            fh.write(_RECORD_HEADER.pack(grid.nx, grid.ny, grid.box_length, p.t))
            fh.write(np.ascontiguousarray(p.f.coeffs, dtype=_COMPLEX).tobytes())
    logger.info(f"Saved {len(traj)} snapshots to {path}")
    return path


def _read_exact(fh: BinaryIO, size: int, path: Path) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise TrajectoryFormatError("Unexpected end of file", path=str(path))
    return data


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    path = Path(path)
    if not path.exists():
        raise TrajectoryFormatError("Trajectory file not found", path=str(path))
    with open(path, "rb") as fh:
        magic, version, count, dt, stride, nonlinear = _FILE_HEADER.unpack(
            _read_exact(fh, _FILE_HEADER.size, path)
        )
        if magic != MAGIC:
            raise TrajectoryFormatError("Not a trajectory file", path=str(path))
        if version != VERSION:
            raise TrajectoryFormatError(
                f"Unsupported trajectory version {version}", path=str(path)
            )
        profiles = []
        grid = None
        for _ in range(count):
            nx, ny, box_length, t = _RECORD_HEADER.unpack(
                _read_exact(fh, _RECORD_HEADER.size, path)
            )
            record_grid = GridSpec(nx, ny, box_length)
            if grid is not None and record_grid != grid:
                raise TrajectoryFormatError("Grid changes between records", path=str(path))
            grid = record_grid
            raw = _read_exact(fh, nx * ny * _COMPLEX.itemsize, path)
            coeffs = np.frombuffer(raw, dtype=_COMPLEX).reshape(nx, ny)
            profiles.append(Profile(SpectralField(grid, coeffs), t))
        if fh.read(1):
            raise TrajectoryFormatError("Trailing bytes after last record", path=str(path))
    if not profiles:
        raise TrajectoryFormatError("Trajectory file holds no snapshots", path=str(path))
    logger.debug(f"Loaded {len(profiles)} snapshots from {path}")
    return Trajectory(
        np.array([p.t for p in profiles]), profiles, dt, stride, bool(nonlinear)
    )
