import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botcascade import wtgraph
from botcascade.ingest import Session
from botcascade.wtgraph import NodeLabel, WTGraph, build_graph, compute_metrics, update_graph
from conftest import make_hit, walk
from oracles import brute_betweenness, brute_degree


def graph_of(n, edges):
    names = [f"n{i}" for i in range(n)]
    nodes = {name: NodeLabel("product", 1_700_000_000_000 + i) for i, name in enumerate(names)}
    return WTGraph("g", names[0], nodes, {(names[a], names[b]): 1 for a, b in edges})


def test_back_and_forth():
    g = build_graph(Session("s1", walk(["A", "B", "A"])))
    assert set(g.nodes) == {"A", "B"}
    assert g.edges == {("A", "B"): 1, ("B", "A"): 1}
    assert (g.nodes["A"].hit_count, g.nodes["B"].hit_count) == (2, 1)


def test_single_hit():
    g = build_graph(Session("s1", walk(["A"])))
    assert (g.node_count, g.edge_count, g.entry_pagename) == (1, 0, "A")


def test_self_loop_weight():
    g = build_graph(Session("s1", walk(["A", "A", "A"])))
    assert g.nodes["A"].hit_count == 3 and g.edges == {("A", "A"): 2}


def test_update_new_page_and_revisit():
    hits = walk(["A", "B", "A", "B"])
    g = build_graph(Session("s1", hits[:2]))
    update_graph(g, hits[2])
    assert g.node_count == 2 and g.edge_count == 2
    update_graph(g, hits[3])
    assert g.edges[("A", "B")] == 2 and (g.node_count, g.edge_count) == (2, 2)
    update_graph(g, make_hit("C", hits[3].timestamp + 1, prev="B"))
    assert g.node_count == 3


def test_update_rejects_other_session():
    g = build_graph(Session("s1", walk(["A"])))
    with pytest.raises(ValueError):
        update_graph(g, make_hit("B", sid="other"))


def test_referrer_outside_session_adds_no_edge():
    g = build_graph(Session("s1", [make_hit("B", prev="elsewhere", visit_page_num=2)]))
    assert g.edge_count == 0


def test_label_precedence():
    g = build_graph(Session("s1", walk(["A"], label="bot") + walk(["B"], start=1_700_000_001_000, label="human")))
    assert g.label == "human"
    assert {n.benchmark_label for n in g.nodes.values()} == {"human"}


page = st.sampled_from(list("ABCDEFG"))


@given(st.lists(page, min_size=1, max_size=25))
def test_incremental_equals_batch(pages):
    hits = walk(pages)
    batch = build_graph(Session("s1", hits))
    g = wtgraph.empty_graph("s1", hits[0])
    for h in hits:
        update_graph(g, h)
    assert g == batch
    assert wtgraph.graph_prefixes(Session("s1", hits))[-1] == batch


@given(st.lists(page, min_size=1, max_size=25))
def test_hit_count_matches_session_length(pages):
    g = build_graph(Session("s1", walk(pages)))
    assert g.hit_count == len(pages)
    assert sum(g.edges.values()) == len(pages) - 1
    g.validate()


def test_three_cycle_metrics():
    m = compute_metrics(graph_of(3, [(0, 1), (1, 2), (2, 0)]))
    assert all(v == 1.0 for v in m.degree_centrality.values())
    assert all(v == pytest.approx(0.5) for v in m.betweenness_centrality.values())


def test_path_betweenness():
    m = compute_metrics(graph_of(3, [(0, 1), (1, 2)]))
    assert m.betweenness_centrality == {"n0": 0.0, "n1": pytest.approx(0.5), "n2": 0.0}


def test_single_node_metrics():
    g = build_graph(Session("s1", walk(["A"])))
    m = compute_metrics(g)
    assert m.node_count == 1
    assert m.degree_centrality == {"A": 0.0} and m.betweenness_centrality == {"A": 0.0}
    assert m.page_type_distribution == {"content": 1.0}


@st.composite
def digraphs(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pairs = [(a, b) for a in range(n) for b in range(n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return n, edges


@given(digraphs())
def test_centralities_match_enumeration(case):
    n, edges = case
    m = compute_metrics(graph_of(n, edges))
    names = [f"n{i}" for i in range(n)]
    assert [m.node_degree[x] for x in names] == brute_degree(n, edges).tolist()
    np.testing.assert_allclose([m.betweenness_centrality[x] for x in names], brute_betweenness(n, edges),
                               atol=1e-9)


def test_rake_examples():
    scores = wtgraph.rake_scores(wtgraph.candidate_phrases("deep learning for bot detection", ["for"]))
    assert scores == {("deep", "learning"): 4.0, ("bot", "detection"): 4.0}
    g = graph_of(2, [])
    titles = {"n0": "deep learning", "n1": "bot detection"}
    assert wtgraph.session_topics(g, titles, ["for"]) == {"deep learning", "bot detection"}
    assert wtgraph.session_topics(g, {"n0": "for the", "n1": "of a"}, wtgraph.DEFAULT_STOPWORDS) == frozenset()
    assert wtgraph.session_topics(graph_of(1, []), {"n0": "checkout"}, []) == {"checkout"}


def test_topics_fall_back_to_pagename():
    g = build_graph(Session("s1", walk(["trail_running_shoes"])))
    assert wtgraph.session_topics(g, {}) == {"trail running shoes"}


def test_graph_io_round_trip():
    graphs = [build_graph(Session("s1", walk(["A", "B", "A", "C"]))), graph_of(3, [(0, 1)])]
    buf = io.StringIO()
    wtgraph.write_graphs(graphs, buf)
    assert wtgraph.read_graphs(io.StringIO(buf.getvalue())) == graphs


def test_graph_validation():
    with pytest.raises(ValueError):
        WTGraph.from_dict({"session_id": "s", "entry_pagename": "A", "nodes": [], "edges": []})


def test_metrics_csv_columns():
    g = build_graph(Session("s1", walk(["A", "B"])))
    buf = io.StringIO()
    wtgraph.write_metrics_csv([wtgraph.metrics_row(g, compute_metrics(g))], buf)
    header, row = buf.getvalue().splitlines()
    assert header.split(",") == list(wtgraph.METRIC_COLUMNS)
    assert row.startswith("s1,unknown,2,1,2,")
