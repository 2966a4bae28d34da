import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from botcascade.ingest import HitRecord

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

MIX = {"human": 0.5, "scraper_bot": 0.1, "monitor_bot": 0.075, "scalper_bot": 0.075, "stealth_bot": 0.25}


def make_hit(page="home", ts=1_700_000_000_000, prev=None, sid="s1", **kw):
    kw.setdefault("ip", "81.2.3.4")
    kw.setdefault("user_agent", "Mozilla/5.0 (Windows NT 10.0; rv:120.0) Gecko/20100101 Firefox/120.0")
    kw.setdefault("browser_width", 1366)
    kw.setdefault("browser_height", 657)
    kw.setdefault("java_enabled", "N")
    kw.setdefault("page_type", "content")
    kw.setdefault("visit_page_num", 1 if prev is None else 2)
    return HitRecord(timestamp=ts, pagename=page, prev_pagename=prev, session_id=sid, **kw)


IRREGULAR_GAPS_MS = (7_000, 3_000, 12_000, 5_000, 9_000, 2_000, 15_000)


def walk(pages, sid="s1", start=1_700_000_000_000, gap_ms=None, **kw):
    """Hits visiting ``pages`` in order, each linked to the previous one.

    Gaps are irregular unless ``gap_ms`` fixes them, so the interval
    heuristic stays quiet by default.
    """
    hits = []
    ts = start
    for i, page in enumerate(pages):
        if i:
            ts += gap_ms if gap_ms is not None else IRREGULAR_GAPS_MS[i % len(IRREGULAR_GAPS_MS)]
        hits.append(make_hit(page, ts, pages[i - 1] if i else None, sid, visit_page_num=i + 1, **kw))
    return hits


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def no_seed_env(monkeypatch):
    monkeypatch.delenv("BOTRACLE_SEED", raising=False)


@pytest.fixture(params=["python", "cython"])
def kernel_backend(request):
    from botcascade._kernels import available_backends
    backends = available_backends()
    if request.param not in backends:
        pytest.skip(f"{request.param} kernels not built")
    return backends[request.param]


def rng(seed=0):
    return np.random.default_rng(seed)


os.environ.setdefault("PYTHONHASHSEED", "0")


# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
