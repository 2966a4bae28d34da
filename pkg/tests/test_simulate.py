import hashlib

import numpy as np
import pytest

from botcascade import simulate
from botcascade.ingest import hits_to_jsonl_bytes, sessionize
from conftest import MIX


def spec(seed=7, n=10, mix=None):
    return simulate.CorpusSpec(seed=seed, n_sessions=n, mix=mix or {"human": 0.5, "scraper_bot": 0.5})


def test_mix_arithmetic():
    _, truth = simulate.generate_corpus(spec())
    labels = list(truth.values())
    assert len(truth) == 10
    assert labels.count("human") == 5 and labels.count("bot") == 5


def test_same_spec_same_bytes():
    a = hits_to_jsonl_bytes(simulate.generate_corpus(spec(n=40))[0])
    b = hits_to_jsonl_bytes(simulate.generate_corpus(spec(n=40))[0])
    assert hashlib.sha256(a).digest() == hashlib.sha256(b).digest()


def test_different_seed_differs():
    a = hits_to_jsonl_bytes(simulate.generate_corpus(spec(seed=1, n=20))[0])
    b = hits_to_jsonl_bytes(simulate.generate_corpus(spec(seed=2, n=20))[0])
    assert a != b


def test_human_fraction_large_corpus():
    _, truth = simulate.generate_corpus(spec(n=1000))
    frac = sum(v == "human" for v in truth.values()) / len(truth)
    assert abs(frac - 0.5) <= 0.05


@pytest.mark.parametrize("mix", [{"human": 0.5, "scraper_bot": 0.4}, {"human": 1.2, "scraper_bot": -0.2},
                                 {"human": 0.5, "alien": 0.5}])
def test_bad_mix_rejected(mix):
    with pytest.raises(ValueError):
        simulate.generate_corpus(simulate.CorpusSpec(seed=0, n_sessions=5, mix=mix))


def test_zero_sessions_rejected():
    with pytest.raises(ValueError):
        simulate.generate_corpus(simulate.CorpusSpec(seed=0, n_sessions=0, mix={"human": 1.0}))


def test_apportion_sums_to_n():
    for n in (1, 7, 13, 2000):
        assert sum(simulate.apportion(MIX, n).values()) == n


def test_profiles_catalog():
    cat = simulate.describe_profiles()
    assert set(cat) == set(simulate.KINDS)
    assert cat["monitor_bot"]["interval_cv"] <= 0.01
    assert cat["scraper_bot"]["traversal"] == "breadth_exhaustive"


def test_human_window_width_floor():
    rng = np.random.default_rng(0)
    widths = [simulate._plan_session(rng, "human", spec()).width for _ in range(10_000)]
    assert min(widths) >= 320


def test_truth_labels_are_consistent_per_session():
    hits, truth = simulate.generate_corpus(spec(seed=3, n=200, mix=MIX))
    for s in sessionize(hits):
        assert {h.label for h in s.hits} == {truth[s.session_id]}


def test_hits_time_ordered():
    hits, _ = simulate.generate_corpus(spec(seed=4, n=100, mix=MIX))
    ts = [h.timestamp for h in hits]
    assert ts == sorted(ts)


def test_session_kinds_matches_truth():
    s = spec(seed=5, n=120, mix=MIX)
    _, truth = simulate.generate_corpus(s)
    kinds = simulate.session_kinds(s)
    assert all((kinds[sid] == "human") == (lab == "human") for sid, lab in truth.items())


def test_low_cv_intervals_are_bounded():
    gaps = simulate.sample_intervals(np.random.default_rng(0), 60.0, 0.005, 500)
    assert gaps.std() / gaps.mean() <= 0.005 * np.sqrt(3)


def test_truth_round_trip(tmp_path):
    import io
    buf = io.StringIO()
    simulate.write_truth({"b": "bot", "a": "human"}, buf)
    assert buf.getvalue() == "session_id,label\na,human\nb,bot\n"
    assert simulate.read_truth(io.StringIO(buf.getvalue())) == {"a": "human", "b": "bot"}


def test_sitemap_validation():
    with pytest.raises(ValueError):
        simulate.SiteMap(pages=(("a", "product"), ("b", "weird")), links={}, entry_pages=("a",))
    with pytest.raises(ValueError):
        simulate.SiteMap(pages=(("a", "product"), ("b", "cart")), links={"a": ("zzz",)}, entry_pages=("a",))
    site = simulate.default_sitemap()
    assert len(site.pages) == 40
