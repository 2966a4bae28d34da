import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from botcascade import ingest
from botcascade.ingest import HitRecord, parse_hits, sessionize
from conftest import make_hit

FULL = {"timestamp": 1700000000000, "ip": "81.1.2.3", "account_id": "emp-0001", "user_agent": "curl/8.0",
        "browser_width": 800, "browser_height": 600, "java_enabled": "N", "pagename": "cart",
        "prev_pagename": "home", "first_hit_pagename": "home", "page_type": "cart", "visit_num": 3,
        "visit_page_num": 2, "hourly_visitor": True, "last_purchase_num": 1, "session_id": "x", "label": "bot"}


def test_full_record_round_trip():
    hit = parse_hits(json.dumps(FULL)).hits[0]
    assert hit.to_dict() == FULL


def test_missing_width_defaults_to_zero():
    rec = dict(FULL)
    del rec["browser_width"]
    assert parse_hits(json.dumps(rec)).hits[0].browser_width == 0


def test_malformed_lines_skipped_and_counted():
    lines = []
    for i in range(100):
        if i in (10, 50, 90):
            lines.append("{not json" if i == 10 else json.dumps({"ip": "1.2.3.4"}))
        else:
            lines.append(json.dumps(dict(FULL, timestamp=FULL["timestamp"] + i)))
    result = parse_hits("\n".join(lines))
    assert len(result.hits) == 97 and result.skipped == 3


def test_mostly_malformed_input_is_an_error():
    with pytest.raises(ingest.FormatError):
        parse_hits("garbage\nmore garbage\n" + json.dumps(FULL))


def test_csv_matches_jsonl():
    hits = [make_hit("home", 1_700_000_000_000), make_hit("cart", 1_700_000_001_000, prev="home",
                                                         account_id="a,b \"q\"")]
    buf = io.StringIO()
    ingest.write_hits(hits, buf, "csv")
    assert parse_hits(buf.getvalue(), format="csv").hits == hits
    assert parse_hits(ingest.hits_to_jsonl_bytes(hits)).hits == hits


def test_unknown_enums_fall_back():
    hit = ingest.hit_from_dict(dict(FULL, java_enabled="maybe", page_type="blog", label="alien"))
    assert (hit.java_enabled, hit.page_type, hit.label) == ("U", "other", "unknown")


@pytest.mark.parametrize("bad", [{"timestamp": -5}, {"pagename": ""}, {"visit_page_num": 0}])
def test_invalid_records_rejected(bad):
    with pytest.raises(ValueError):
        ingest.hit_from_dict(dict(FULL, **bad))


def test_first_visit_hit_cannot_have_referrer():
    with pytest.raises(ValueError):
        HitRecord(timestamp=1, ip="1.1.1.1", user_agent="x", pagename="a", prev_pagename="b", visit_page_num=1)


def _keyed(ts_seconds):
    return [make_hit(f"p{i}", 1_700_000_000_000 + int(t * 1000), sid=None, visit_page_num=i + 1,
                     prev=f"p{i - 1}" if i else None) for i, t in enumerate(ts_seconds)]


def test_sessionize_examples():
    assert [len(s) for s in sessionize(_keyed([0, 10, 20]))] == [3]
    assert len(sessionize(_keyed([0, 3600]))) == 2
    a = [make_hit("x", 1_700_000_000_000 + i * 5_000_000, sid="A") for i in range(3)]
    b = [make_hit("y", 1_700_000_000_001 + i * 5_000_000, sid="B") for i in range(3)]
    out = sessionize([h for pair in zip(a, b) for h in pair])
    assert [(s.session_id, len(s)) for s in out] == [("A", 3), ("B", 3)]


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=30), st.floats(1, 5000))
def test_sessionize_partitions_hits(offsets, timeout):
    hits = _keyed(sorted(offsets))
    sessions = sessionize(hits, idle_timeout=timeout)
    assert sum(len(s) for s in sessions) == len(hits)
    for s in sessions:
        gaps = s.intervals
        assert all(g <= timeout for g in gaps)
        assert all(g >= 0 for g in gaps)


def test_session_label_precedence():
    s = ingest.Session("s", [make_hit(label="bot"), make_hit("b", 1_700_000_000_500, label="human")])
    assert s.label == "human"


def test_session_round_trip():
    s = ingest.Session("s", [make_hit(), make_hit("b", 1_700_000_000_500, prev="home")])
    buf = io.StringIO()
    ingest.write_sessions([s], buf)
    assert ingest.read_sessions(io.StringIO(buf.getvalue())) == [s]
