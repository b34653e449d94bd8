#!/usr/bin/env python3
"""
Tests for environment configuration, logging setup and error rendering.
"""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import Config
from src.exceptions import BlowUpError, ConfigurationError, EPSimError, HorizonError
from src.logging_config import RUN_LOG_NAME, run_log, setup_logging


@pytest.mark.unit
class TestConfig:
    def test_defaults_validate(self):
        is_valid, problems = Config.validate_required()
        assert is_valid, problems

    def test_bad_values_are_reported(self, monkeypatch):
        monkeypatch.setattr(Config, "THREADS", 0)
        monkeypatch.setattr(Config, "KERNEL_TAIL_TOL", 2.0)
        monkeypatch.setattr(Config, "MEMORY_BUDGET_MB", -1.0)
        is_valid, problems = Config.validate_required()
        assert not is_valid
        assert len(problems) == 3
        assert any("EPSIM_THREADS" in p for p in problems)

    def test_deterministic_pins_one_worker(self, monkeypatch):
        monkeypatch.setattr(Config, "THREADS", 4)
        monkeypatch.setattr(Config, "DETERMINISTIC", False)
        assert Config.fft_workers() == 4
        Config.set_deterministic(True)
        assert Config.fft_workers() == 1

    def test_memory_budget(self, monkeypatch):
        monkeypatch.setattr(Config, "MEMORY_BUDGET_MB", 256.0)
        assert Config.memory_budget_mb() == 256.0
        monkeypatch.setattr(Config, "MEMORY_BUDGET_MB", None)
        assert Config.memory_budget_mb() > 0

    def test_summary(self):
        summary = Config.get_summary()
        assert summary["fft_workers"] == Config.fft_workers()
        assert "memory_budget_mb" in summary


@pytest.mark.unit
class TestLogging:
    def setup_method(self):
        self.root = logging.getLogger()
        self.saved = (self.root.level, list(self.root.handlers))

    def teardown_method(self):
        level, handlers = self.saved
        self.root.handlers[:] = handlers
        self.root.setLevel(level)

    def test_setup_logging(self, tmp_path):
        log_file = tmp_path / "logs" / "epsim.log"
        root = setup_logging(log_file=str(log_file), log_level="warning")
        assert root.level == logging.WARNING
        assert len(root.handlers) == 2
        logging.getLogger("src.test").warning("hello")
        for handler in root.handlers:
            handler.flush()
        assert "hello" in log_file.read_text()
        assert logging.getLogger("numexpr").level == logging.WARNING

    def test_run_log_captures_debug_and_restores(self, tmp_path):
        setup_logging(log_level="INFO")
        console = self.root.handlers[0]
        with run_log(tmp_path) as path:
            assert path == tmp_path / RUN_LOG_NAME
            logging.getLogger("src.integrator").debug("step detail")
        assert self.root.level == logging.INFO
        assert console.level == logging.INFO
        assert len(self.root.handlers) == 1
        assert "step detail" in path.read_text()


@pytest.mark.unit
class TestErrors:
    def test_message_without_context(self):
        assert str(EPSimError("Plain failure")) == "Plain failure"

    def test_floats_are_rendered_compactly(self):
        error = HorizonError(np.float64(100.0) / 3.0, 0.45 * 64.0)
        assert str(error) == (
            "Requested end time exceeds the wrap-around horizon (t_end=33.3333, t_wrap=28.8)"
        )

    def test_nested_norms_and_integers(self):
        error = BlowUpError(1.25, {"l2": 2.0 / 3.0}, stage=np.int64(3))
        text = str(error)
        assert "time_reached=1.25" in text
        assert "stage=3," in text
        assert "last_norms={l2: 0.666667}" in text
        assert error.last_norms == {"l2": 2.0 / 3.0}

    def test_configuration_error_keeps_location(self):
        error = ConfigurationError("Unknown key", key="time.warp", line=6)
        assert isinstance(error, EPSimError)
        assert error.context == {"key": "time.warp", "line": 6}
        assert str(error) == "Unknown key (key=time.warp, line=6)"
