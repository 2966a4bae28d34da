import io

import pytest

from botcascade import pipeline
from botcascade.groundtruth import LabelingConfig
from botcascade.pipeline import PipelineConfig, SessionStore, Verdict, finalize, process_hit, run_stream
from conftest import make_hit, walk


class StubSgan:
    def __init__(self, p):
        self.p = p

    def score_hit(self, hit):
        return self.p(hit) if callable(self.p) else self.p


class StubDgcnn:
    def __init__(self, p):
        self.p = p
        self.calls = 0

    def score_graph(self, g):
        self.calls += 1
        return self.p(g) if callable(self.p) else self.p


def cfg(sgan_p, dgcnn_p, **kw):
    return PipelineConfig(sgan=StubSgan(sgan_p), dgcnn=StubDgcnn(dgcnn_p), labeling=LabelingConfig(), **kw)


def test_heuristic_short_circuit():
    c = cfg(0.5, 0.5)
    v = process_hit(SessionStore(), make_hit(user_agent="curl/8.0"), c)
    assert (v.decision, v.probability, v.stage) == ("bot", 1.0, "heuristic")
    assert c.dgcnn.calls == 0


def test_confident_sgan_skips_dgcnn():
    c = cfg(0.95, 0.5)
    v = process_hit(SessionStore(), make_hit(), c)
    assert (v.decision, v.probability, v.stage) == ("bot", 0.95, "sgan")
    assert c.dgcnn.calls == 0


def test_confident_human_from_sgan():
    v = process_hit(SessionStore(), make_hit(), cfg(0.05, 0.5))
    assert (v.decision, v.stage) == ("human", "sgan") and v.probability == pytest.approx(0.95)


def test_unsure_both_stays_open():
    store = SessionStore()
    v = process_hit(store, make_hit(), cfg(0.6, 0.55))
    assert v.decision == "undecided" and v.stage == "dgcnn"
    assert store.sessions["s1"].open


def test_dgcnn_decision_closes_and_is_reused():
    c = cfg(0.6, 0.97)
    store = SessionStore()
    hits = walk(["A", "B", "C"])
    v1 = process_hit(store, hits[0], c)
    assert (v1.decision, v1.stage) == ("bot", "dgcnn")
    v2 = process_hit(store, hits[1], c)
    assert (v2.decision, v2.stage, v2.probability) == ("bot", "dgcnn", v1.probability)
    assert c.dgcnn.calls == 1
    assert not store.sessions["s1"].open


def test_graph_grows_with_every_hit():
    seen = []
    c = cfg(0.6, lambda g: seen.append(g.hit_count) or 0.5)
    store = SessionStore()
    for h in walk(["A", "B", "A", "C"]):
        process_hit(store, h, c)
    assert seen == [1, 2, 3, 4]


def test_dgcnn_stride():
    c = cfg(0.6, 0.5, dgcnn_stride=3)
    store = SessionStore()
    for h in walk(list("ABCDEFG")):
        process_hit(store, h, c)
    assert c.dgcnn.calls == 3


def test_heuristic_flag_is_sticky():
    c = cfg(0.05, 0.5)
    store = SessionStore()
    hits = walk(["A", "B"])
    hits[0] = make_hit("A", hits[0].timestamp, user_agent="python-requests/2.31")
    v = [process_hit(store, h, c) for h in hits]
    assert [x.stage for x in v] == ["heuristic", "heuristic"]


def test_interval_heuristic_online():
    c = cfg(0.5, 0.5)
    store = SessionStore()
    verdicts = [process_hit(store, h, c) for h in walk(list("ABCDEF"), gap_ms=10_000)]
    assert verdicts[3].stage == "dgcnn"
    assert verdicts[4].stage == "heuristic"  # fifth hit completes four equal gaps


def test_finalize():
    c = cfg(0.6, 0.6)
    store = SessionStore()
    assert finalize(store, c) == []
    process_hit(store, make_hit(), c)
    (v,) = finalize(store, c)
    assert (v.decision, v.probability, v.stage) == ("bot", 0.6, "forced")
    assert finalize(store, c) == []


def test_max_session_hits_forces():
    c = cfg(0.6, 0.3, max_session_hits=3)
    store = SessionStore()
    v = [process_hit(store, h, c) for h in walk(list("ABCD"))]
    assert [x.decision for x in v[:2]] == ["undecided"] * 2
    assert (v[2].stage, v[2].decision) == ("forced", "human")
    assert v[3].stage == "forced"


def test_lambda_zero_decides_at_sgan():
    hits = walk(list("ABCDE"))
    res = run_stream(hits, cfg(0.5, 0.5, threshold=0.0))
    assert all(v.stage == "sgan" for v in res.verdicts)


def test_lambda_one_only_forced():
    hits = walk(list("ABC")) + walk(list("AB"), sid="s2")
    res = run_stream(hits, cfg(1.0, 1.0, threshold=1.0))
    decided = [v for v in res.verdicts if v.decided]
    assert {v.stage for v in decided} == {"forced"}
    assert len(decided) == 2


def test_sessionization_without_ids():
    c = cfg(0.6, 0.5)
    store = SessionStore()
    hits = [make_hit("A", 1_700_000_000_000, sid=None), make_hit("B", 1_700_000_010_000, prev="A", sid=None),
            make_hit("C", 1_700_010_000_000, sid=None)]
    ids = [process_hit(store, h, c).session_id for h in hits]
    assert ids[0] == ids[1] != ids[2]


def test_malformed_hit_is_an_anomaly():
    v = process_hit(SessionStore(), {"ip": "1.2.3.4"}, cfg(0.5, 0.5))
    assert v.anomaly and v.decision == "undecided"


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(0.5, 0.5, threshold=1.5)
    with pytest.raises(ValueError):
        cfg(0.5, 0.5, max_session_hits=0)


def _mixed_stream():
    hits = []
    for i in range(12):
        hits += walk(list("ABCDEFG")[: 2 + i % 6], sid=f"s{i:02d}", start=1_700_000_000_000 + i * 3_000)
    hits.sort(key=lambda h: h.timestamp)
    return hits


def _by_size(g):
    return 0.95 if g.node_count >= 4 else 0.5


def test_parallel_matches_serial():
    hits = _mixed_stream()
    serial = run_stream(hits, cfg(0.6, _by_size))
    parallel = run_stream(hits, cfg(0.6, _by_size), jobs=3)
    assert serial.verdicts == parallel.verdicts
    assert serial.stage_counts == parallel.stage_counts


def test_session_scores():
    vs = [Verdict("a#1", "bot", 0.9, "sgan", 1, "a"), Verdict("a", "undecided", 0.6, "dgcnn", 2, "a"),
          Verdict("a#3", "human", 0.7, "sgan", 3, "a"), Verdict("b", "undecided", 0.5, "dgcnn", 1, "b")]
    assert pipeline.session_scores(vs) == {"a": pytest.approx((0.9 + 0.3) / 2), "b": 0.5}


def test_verdict_io_round_trip():
    vs = run_stream(_mixed_stream(), cfg(0.6, 0.55)).verdicts
    buf = io.StringIO()
    pipeline.write_verdicts(vs, buf)
    assert pipeline.read_verdicts(io.StringIO(buf.getvalue())) == vs
    first = buf.getvalue().splitlines()[0]
    for key in ("subject", "decision", "probability", "stage", "timestamp"):
        assert f'"{key}"' in first


def test_bad_verdict_rejected():
    with pytest.raises(ValueError):
        Verdict("x", "maybe", 0.5, "sgan", 1, "x")
