import logging

import pytest

from graphex.simulate import ModelHyperparams, simulate_graph


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the long optional checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow tier; pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _quiet_cavi(caplog):
    caplog.set_level(logging.ERROR, logger="graphex.inference")


@pytest.fixture(scope="session")
def desk_sim():
    """The s = alpha = 120 sparse simulation used throughout."""
    g, truth = simulate_graph(ModelHyperparams(), seed=1)
    return g, truth


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
