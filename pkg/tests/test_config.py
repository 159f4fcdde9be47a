"""Tests for environment settings, run configuration, logging and tracing."""

import io
import json
import logging
from pathlib import Path

import pytest

from config import DEFAULT_CACHE_DIR, RunConfig, resolve_cache_dir, setup_environment
from logging_config import JsonFormatter, resolve_level, setup_logging
from tracing_config import custom_span, setup_tracing


class TestEnvironment:
    """Test cases for setup_environment."""

    def test_defaults(self, clean_env):
        """Without variables the builtin solver and no exporter are used."""
        env = setup_environment(load_env_file=False)
        assert env.solver == "builtin"
        assert env.trace_exporter == "none"
        assert env.project_id is None
        assert env.cache_dir is None

    def test_values_are_case_insensitive(self, clean_env):
        """Solver and exporter names are lowercased."""
        clean_env.setenv("BOPFORGE_SOLVER", "Z3")
        clean_env.setenv("BOPFORGE_TRACE_EXPORTER", "Console")
        env = setup_environment(load_env_file=False)
        assert (env.solver, env.trace_exporter) == ("z3", "console")

    @pytest.mark.parametrize(
        "variables,match",
        [
            ({"BOPFORGE_SOLVER": "cvc5"}, "BOPFORGE_SOLVER"),
            ({"BOPFORGE_TRACE_EXPORTER": "jaeger"}, "BOPFORGE_TRACE_EXPORTER"),
            ({"BOPFORGE_TRACE_EXPORTER": "cloud"}, "GOOGLE_CLOUD_PROJECT"),
        ],
    )
    def test_invalid(self, clean_env, variables, match):
        """Unsupported values raise OSError naming the variable."""
        for name, value in variables.items():
            clean_env.setenv(name, value)
        with pytest.raises(OSError, match=match):
            setup_environment(load_env_file=False)

    def test_cache_precedence(self, clean_env, tmp_path):
        """--cache-dir beats BOPFORGE_CACHE, which beats the default."""
        assert resolve_cache_dir(None) == DEFAULT_CACHE_DIR.expanduser()
        clean_env.setenv("BOPFORGE_CACHE", str(tmp_path / "env"))
        assert resolve_cache_dir(None) == tmp_path / "env"
        assert resolve_cache_dir(str(tmp_path / "flag")) == tmp_path / "flag"
        env = setup_environment(load_env_file=False)
        assert resolve_cache_dir(None, env) == tmp_path / "env"


class TestRunConfig:
    """Test cases for RunConfig."""

    def test_defaults(self):
        """Bounds default to K=8, P=32, N=64 and L=128."""
        config = RunConfig(Path("p.spl"), Path("t.tir")).validate()
        assert config.bounds() == {"P": 32, "L": 128, "N": 64, "K": 8, "timeout_ms": 5000}
        assert config.fuel == 10_000

    @pytest.mark.parametrize("name", ["P", "L", "N", "K", "timeout_ms", "fuel", "jobs"])
    def test_bounds_below_one(self, name):
        """Every bound must be at least one."""
        with pytest.raises(ValueError, match=name):
            RunConfig(Path("p.spl"), Path("t.tir"), **{name: 0}).validate()

    def test_unknown_solver(self):
        """Unknown solver names are rejected."""
        with pytest.raises(ValueError, match="Unsupported solver"):
            RunConfig(Path("p.spl"), Path("t.tir"), solver="cvc5").validate()


class TestLogging:
    """Test cases for the JSON log format."""

    def test_record_with_context(self):
        """Records are one JSON object with the context attached."""
        record = logging.LogRecord("pipeline", logging.INFO, __file__, 1, "Compilation failed", None, None)
        record.context = {"kind": "NO_PATH"}
        entry = json.loads(JsonFormatter().format(record))
        assert entry["level"] == "INFO"
        assert entry["logger"] == "pipeline"
        assert entry["message"] == "Compilation failed"
        assert entry["context"] == {"kind": "NO_PATH"}
        assert "trace_id" not in entry

    def test_trace_ids_inside_span(self):
        """Records made inside a recording span carry its ids."""
        setup_tracing("none")
        record = logging.LogRecord("stitcher", logging.INFO, __file__, 1, "msg", None, None)
        with custom_span("test.span"):
            entry = json.loads(JsonFormatter().format(record))
        assert len(entry["trace_id"]) == 32
        assert len(entry["span_id"]) == 16

    def test_setup_logging(self, clean_env):
        """setup_logging installs one JSON handler at the requested level."""
        stream = io.StringIO()
        setup_logging("debug", stream)
        logging.getLogger("test").debug("hello", extra={"context": {"n": 1}})
        assert json.loads(stream.getvalue())["context"] == {"n": 1}
        assert len(logging.getLogger().handlers) == 1
        setup_logging("INFO")

    def test_level_names(self):
        """Unknown level names fall back to INFO."""
        assert resolve_level("warning") == logging.WARNING
        assert resolve_level("chatty") == logging.INFO
        assert resolve_level(None) == logging.INFO


class TestTracing:
    """Test cases for setup_tracing."""

    def test_unknown_exporter(self):
        """Unknown exporters raise ValueError."""
        with pytest.raises(ValueError, match="Unsupported trace exporter"):
            setup_tracing("jaeger")

    def test_cloud_needs_project(self):
        """The cloud exporter requires a project."""
        with pytest.raises(ValueError, match="GOOGLE_CLOUD_PROJECT"):
            setup_tracing("cloud")

    def test_span_records_errors(self):
        """Exceptions inside a span propagate."""
        setup_tracing("none")
        with pytest.raises(RuntimeError):
            with custom_span("test.error", {"n": 1}):
                raise RuntimeError("boom")
