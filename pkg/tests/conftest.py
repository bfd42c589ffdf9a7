from __future__ import annotations

from pathlib import Path

import pytest

from tactile_emi.config import Config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture(scope="session")
def fig3_config() -> Config:
    return Config.load(CONFIGS / "fig3-phantom-release.cfg")


@pytest.fixture(scope="session")
def benign_config() -> Config:
    return Config.load(CONFIGS / "benign.cfg")


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list:
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda ln: int(ln.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
