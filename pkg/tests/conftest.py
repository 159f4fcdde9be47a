"""Shared fixtures for the test suite."""

from pathlib import Path

import pytest

from config import RunConfig
from spl_frontend import parse_spl
from target_model import parse_target

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
TARGETS = FIXTURES / "targets"
PAYLOADS = FIXTURES / "payloads"


def load_fixture_target(name: str):
    return parse_target((TARGETS / f"{name}.tir").read_text(encoding="utf-8"))


@pytest.fixture
def t1():
    return load_fixture_target("T1")


@pytest.fixture
def t2():
    return load_fixture_target("T2")


@pytest.fixture
def t3():
    return load_fixture_target("T3")


@pytest.fixture
def spl():
    """Parse SPL source given as a payload body."""

    def parse(body: str, header: str = ""):
        return parse_spl(f"void payload() {{\n{header}\n{body}\n}}\n")

    return parse


@pytest.fixture
def clean_env(monkeypatch):
    """Remove bop-forge variables from the environment."""
    for name in (
        "BOPFORGE_CACHE",
        "BOPFORGE_SOLVER",
        "BOPFORGE_TRACE_EXPORTER",
        "GOOGLE_CLOUD_PROJECT",
        "LOG_LEVEL",
    ):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


@pytest.fixture
def make_config():
    """RunConfig for a bundled payload and a fixture target."""

    def make(payload: str, target: str, **overrides) -> RunConfig:
        return RunConfig(PAYLOADS / f"{payload}.spl", TARGETS / f"{target}.tir", **overrides).validate()

    return make
