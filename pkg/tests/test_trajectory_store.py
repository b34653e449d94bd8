#!/usr/bin/env python3
"""
Tests for the binary trajectory format.
"""

import struct
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.exceptions import TrajectoryFormatError
from src.integrator import run
from src.spectral_core import GridSpec
from src.trajectory_store import MAGIC, load_trajectory, save_trajectory
from tests.strategies import gaussian_data


@pytest.mark.integrator
class TestTrajectoryStore:
    def setup_method(self):
        grid = GridSpec.square(8, 8.0)
        self.traj = run(gaussian_data(grid, 0.01, 1.0), 0.4, dt=0.05, record_stride=2)

    def test_save_and_load_are_bit_identical(self, tmp_path):
        path = save_trajectory(self.traj, tmp_path / "run" / "trajectory.bin")
        loaded = load_trajectory(path)
        assert loaded.dt == self.traj.dt
        assert loaded.record_stride == self.traj.record_stride
        assert loaded.nonlinear is True
        assert np.array_equal(loaded.times, self.traj.times)
        for a, b in zip(loaded.profiles, self.traj.profiles):
            assert a.grid == b.grid
            assert np.array_equal(a.f.coeffs, b.f.coeffs)

    def test_file_starts_with_magic_and_has_exact_size(self, tmp_path):
        path = save_trajectory(self.traj, tmp_path / "t.bin")
        data = path.read_bytes()
        assert data[:8] == MAGIC
        header = struct.calcsize("<8sIIdIB")
        record = struct.calcsize("<IIdd") + 8 * 8 * 16
        assert len(data) == header + len(self.traj) * record

    def test_missing_file(self, tmp_path):
        with pytest.raises(TrajectoryFormatError):
            load_trajectory(tmp_path / "absent.bin")

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTATRAJ" + bytes(64))
        with pytest.raises(TrajectoryFormatError, match="Not a trajectory file"):
            load_trajectory(path)

    def test_truncated_file(self, tmp_path):
        path = save_trajectory(self.traj, tmp_path / "t.bin")
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TrajectoryFormatError, match="Unexpected end of file"):
            load_trajectory(path)

    def test_trailing_bytes(self, tmp_path):
        path = save_trajectory(self.traj, tmp_path / "t.bin")
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(TrajectoryFormatError, match="Trailing bytes"):
            load_trajectory(path)
