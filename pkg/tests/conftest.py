import numpy as np
import pytest

from tunechain import Credential, SimNetwork
from tunechain.fingerprint import synth_tone, write_wav

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, title, detail)."""
    outcome = {}

    def record(number, title, detail=""):
        outcome.update(number=number, title=title, detail=detail)

    yield record
    if outcome:
        rep = getattr(request.node, "rep_call", None)
        passed = rep is not None and rep.passed
        _CRITERIA[outcome["number"]] = (passed, outcome["title"], outcome["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    if report.when == "call":
        item.rep_call = report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}" + (f"  [{detail}]" if detail else ""))


def tone_wav(hz, seconds=1.0, amplitude=0.8, sample_rate=44100):
    audio = synth_tone(hz, seconds, sample_rate, amplitude)
    return write_wav(audio.samples, audio.sample_rate)


@pytest.fixture
def net():
    return SimNetwork()


@pytest.fixture
def users(net):
    """Three registered users on a fresh 4-node network."""
    addrs = [net.register(Credential(f"user{i}@example.org", f"pw{i}")) for i in range(3)]
    net.consensus_round()
    return addrs


@pytest.fixture
def rng():
    return np.random.default_rng(20200220)
