import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_cascade_path():
    from importlib import resources
    return resources.files("forgerykit").joinpath("data/haarcascade_frontalface_default.xml")


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    class Recorder:
        def __init__(self):
            self.label = None
            self.detail = ""

        def __call__(self, label):
            self.label = label
            return self

    rec = Recorder()
    yield rec
    if rec.label is not None:
        failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
        lines.append(f"{'FAIL' if failed else 'PASS'}  {rec.label}  {rec.detail}".rstrip())


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
