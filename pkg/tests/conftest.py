import numpy as np
import pytest

from tracelens import anomalies, procgen
from tracelens.eventlog import Event, EventLog, Trace


@pytest.fixture(scope="session")
def p2p():
    return procgen.builtin_p2p()


@pytest.fixture(scope="session")
def p2p_log(p2p):
    return procgen.sample_log(p2p, 200, seed=11)


@pytest.fixture(scope="session")
def p2p_injected(p2p, p2p_log):
    cfg = anomalies.InjectConfig(noise_level=0.3, seed=5)
    return anomalies.inject(p2p_log, p2p, cfg)


def make_log(rows):
    """rows: list of (case_id, [(activity, user), ...])."""
    traces = []
    for case_id, events in rows:
        traces.append(Trace(
            case_id=case_id,
            events=tuple(Event(activity=a, attrs={"user": u}) for a, u in events),
        ))
    return EventLog.from_traces(traces)


def make_plain_log(rows):
    """rows: list of (case_id, [activity, ...]) without attributes."""
    traces = []
    for case_id, acts in rows:
        traces.append(Trace(
            case_id=case_id,
            events=tuple(Event(activity=a) for a in acts),
        ))
    return EventLog.from_traces(traces)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
