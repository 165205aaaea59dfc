import os

import pytest
from hypothesis import HealthCheck, settings

from taptest.config import PipelineConfig
from taptest.gate import run_gate
from taptest.pipeline import make_session, run_cell, segment_signal, session_name

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def session0(cfg):
    return make_session(cfg, 0.0)


@pytest.fixture(scope="session")
def session5(cfg):
    return make_session(cfg, 5.0)


@pytest.fixture(scope="session")
def gate0(cfg, session0):
    return run_gate(session0.signal, cfg.gate)


@pytest.fixture(scope="session")
def gate5(cfg, session5):
    return run_gate(session5.signal, cfg.gate)


@pytest.fixture(scope="session")
def segments0(cfg, session0, gate0):
    return segment_signal(session0.signal, session0.truth_index, session0.truth_class, cfg,
                          gate0.report, session_name(0.0))


@pytest.fixture(scope="session")
def cell0(cfg, session0):
    return run_cell(cfg, 0.0, True, session0)
