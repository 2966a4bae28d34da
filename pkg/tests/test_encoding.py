import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botcascade import encoding
from botcascade.encoding import OTHER, fit_encoder
from conftest import make_hit

FIREFOX = "Mozilla/5.0 (Windows NT 10.0; rv:120.0) Gecko/20100101 Firefox/120.0"


def _hits(n, special=None, count=0):
    hits = [make_hit(ts=1_700_000_000_000 + i, user_agent=FIREFOX) for i in range(n - count)]
    hits += [make_hit(ts=1_800_000_000_000 + i, user_agent=special) for i in range(count)]
    return hits


def vocab(enc, feat):
    return dict(enc.vocabularies)[feat]


def test_value_exactly_at_threshold_is_kept():
    enc = fit_encoder(_hits(1000, "FooBot/1.0", 1), rare_threshold=0.001)
    assert "FooBot" in vocab(enc, "user_agent")


def test_value_below_threshold_is_folded():
    enc = fit_encoder(_hits(1001, "FooBot/1.0", 1), rare_threshold=0.001)
    assert "FooBot" not in vocab(enc, "user_agent")


def test_single_page_type_vocab():
    enc = fit_encoder(_hits(10))
    assert vocab(enc, "page_type") == ("content", OTHER)
    assert enc.blocks()["page_type"].stop - enc.blocks()["page_type"].start == 2


def test_fit_is_deterministic():
    hits = _hits(50, "curl/8", 5)
    assert fit_encoder(hits) == fit_encoder(list(hits))


def test_encode_examples():
    hits = [make_hit(browser_height=h, java_enabled=j, ts=1_700_000_000_000 + i)
            for i, (h, j) in enumerate([(300, "Y"), (900, "N"), (600, "U")])]
    enc = fit_encoder(hits)
    names = enc.feature_names
    v = enc.encode(make_hit(browser_height=900, java_enabled="N", user_agent="Nobody/1")).values
    assert v[names.index("browser_height")] == 1.0
    assert v[names.index("user_agent_Other")] == 1.0
    assert v[enc.blocks()["user_agent"]].sum() == 1.0
    assert (v[names.index("java_enabled_N")], v[names.index("java_enabled_Y")],
            v[names.index("java_enabled_U")]) == (1.0, 0.0, 0.0)


def test_label_passes_through():
    enc = fit_encoder(_hits(5))
    assert enc.encode(make_hit(label="bot")).label == "bot"


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_numeric_features_clamped(w, h):
    enc = fit_encoder([make_hit(browser_width=500, browser_height=400),
                       make_hit(browser_width=1500, browser_height=900, ts=1_700_000_000_001)])
    v = enc.encode_values(make_hit(browser_width=w, browser_height=h))
    assert np.all((v >= 0) & (v <= 1))
    for block in enc.blocks().values():
        assert v[block].sum() == 1.0


def test_round_trip():
    enc = fit_encoder(_hits(20, "curl/8", 3))
    assert encoding.FeatureEncoder.from_dict(enc.to_dict()) == enc
    with pytest.raises(ValueError):
        encoding.FeatureEncoder.from_dict({**enc.to_dict(), "version": "0"})


def test_empty_fit_rejected():
    with pytest.raises(ValueError):
        fit_encoder([])
