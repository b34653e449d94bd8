#!/usr/bin/env python3
"""
Full-size acceptance runs of the shipped configurations.

These take minutes to hours; run them with ``pytest -m slow``.
"""

import sys
from pathlib import Path

import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.harness import run_task
from src.run_config import load_run_config

CONFIG_DIR = project_root / "data" / "configs"


def _run(name: str, tmp_path):
    run = load_run_config(CONFIG_DIR / name).with_overrides(output_dir=str(tmp_path))
    result = run_task(run)
    failures = [f"{c.name}: {c.measured} vs {c.threshold}" for c in result.failures]
    assert result.passed, failures
    return result


@pytest.mark.slow
@pytest.mark.integration
class TestAcceptance:
    def test_linear_decay(self, tmp_path):
        result = _run("linear.cfg", tmp_path)
        assert result.summary["fits"]["sup_decay"]["r2"] >= 0.98

    def test_nonlinear_simulation(self, tmp_path):
        result = _run("default.cfg", tmp_path)
        assert not any(c.skipped for c in result.criteria if c.name.endswith("exponent"))

    def test_lemmas(self, tmp_path):
        _run("lemmas.cfg", tmp_path)

    def test_normal_form(self, tmp_path):
        result = _run("normal_form.cfg", tmp_path)
        assert "coarse" in result.summary

    def test_kernel_scan(self, tmp_path):
        result = _run("kernel.cfg", tmp_path)
        assert len(result.summary["lp"]) == 12
