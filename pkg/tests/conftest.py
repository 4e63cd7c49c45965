import logging
import sys

import pytest

from locindep.model import builtin_spec, spec_from_dict


def make_spec(components, horizon=1.0, **extra):
    """Spec from a list of component dicts; kind defaults to diffusion."""
    comps = []
    for i, c in enumerate(components, start=1):
        c = dict(c)
        c.setdefault("name", f"X{i}")
        c.setdefault("kind", "diffusion")
        if c["kind"] != "counting":
            c.setdefault("drift", "0")
            c.setdefault("sigma", "1")
        comps.append(c)
    return spec_from_dict({"horizon": horizon, "components": comps, **extra})


@pytest.fixture
def ex1():
    return builtin_spec("ex1")


@pytest.fixture
def ex2():
    return builtin_spec("ex2")


@pytest.fixture
def ex3():
    return builtin_spec("ex3")


@pytest.fixture
def ex1_family():
    return builtin_spec("ex1_family")


@pytest.fixture(autouse=True)
def _quiet_optimizer_warnings():
    logging.getLogger("locindep").setLevel(logging.ERROR)
    yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
