import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def echo_plugin(*replies, delay=None, exit_after=None, bad_hello=False):
    """Command line for the loopback plugin shipped with the package."""
    cmd = [sys.executable, "-m", "framegrind.stages.echo_plugin"]
    for r in replies:
        cmd += ["--reply", r]
    if delay is not None:
        cmd += ["--delay", str(delay)]
    if exit_after is not None:
        cmd += ["--exit-after", str(exit_after)]
    if bad_hello:
        cmd.append("--bad-hello")
    return tuple(cmd)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
