"""Website-traversal (WT) graphs built from sessions, and their metrics.

A WT graph has one node per distinct page of a session and a directed edge
``prev -> current`` for every hit that names its previous page.  Edge weights
count how often that navigation happened; a refresh shows up as a self-loop.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .ingest import PAGE_TYPES, HitRecord, Session

GRAPH_FORMAT = "botcascade-wtgraph"

# Label precedence used when hits of one session disagree.
_LABEL_RANK = {"unknown": 0, "bot": 1, "human": 2}

DEFAULT_STOPWORDS = frozenset("""
a about above after again all am an and any are as at be because been before being below between both but by
can could did do does doing down during each few for from further had has have having he her here hers him his
how i if in into is it its just me more most my no nor not now of off on once only or other our out over own
same she should so some such than that the their them then there these they this those through to too under
until up very was we were what when where which while who whom why will with you your
""".split())


@dataclass
class NodeLabel:
    page_type: str
    first_visit_timestamp: int
    hit_count: int = 1
    benchmark_label: str = "unknown"

    def to_dict(self) -> dict:
        return {"page_type": self.page_type, "first_visit_timestamp": self.first_visit_timestamp,
                "hit_count": self.hit_count, "benchmark_label": self.benchmark_label}


@dataclass
class WTGraph:
    session_id: str
    entry_pagename: str
    nodes: Dict[str, NodeLabel] = field(default_factory=dict)
    edges: Dict[Tuple[str, str], int] = field(default_factory=dict)
    label: str = "unknown"

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def hit_count(self) -> int:
        return sum(n.hit_count for n in self.nodes.values())

    @property
    def start_timestamp(self) -> int:
        return min(n.first_visit_timestamp for n in self.nodes.values())

    def copy(self) -> "WTGraph":
        return WTGraph(
            session_id=self.session_id,
            entry_pagename=self.entry_pagename,
            nodes={k: NodeLabel(**v.to_dict()) for k, v in self.nodes.items()},
            edges=dict(self.edges),
            label=self.label,
        )

    def validate(self) -> None:
        if self.entry_pagename not in self.nodes:
            raise ValueError(f"entry page {self.entry_pagename!r} is not a node")
        for (a, b), w in self.edges.items():
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge {a}->{b} has an endpoint outside the node set")
            if int(w) != w or w < 1:
                raise ValueError(f"edge {a}->{b} has weight {w}")
        for name, node in self.nodes.items():
            if node.hit_count < 1 or node.first_visit_timestamp <= 0:
                raise ValueError(f"bad node label for {name}")

    def csr(self, order: Optional[Sequence[str]] = None):
        """Directed adjacency as ``(names, indptr, indices)`` with sorted rows."""
        names = list(order) if order is not None else sorted(self.nodes)
        index = {name: i for i, name in enumerate(names)}
        rows = [[] for _ in names]
        for a, b in self.edges:
            rows[index[a]].append(index[b])
        indptr = np.zeros(len(names) + 1, dtype=np.int64)
        indices = []
        for i, row in enumerate(rows):
            row.sort()
            indices.extend(row)
            indptr[i + 1] = len(indices)
        return names, indptr, np.asarray(indices, dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "format": GRAPH_FORMAT,
            "session_id": self.session_id,
            "entry_pagename": self.entry_pagename,
            "label": self.label,
            "nodes": [dict(pagename=name, **node.to_dict()) for name, node in self.nodes.items()],
            "edges": [{"from": a, "to": b, "weight": w} for (a, b), w in self.edges.items()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WTGraph":
        if doc.get("format", GRAPH_FORMAT) != GRAPH_FORMAT:
            raise ValueError("not a WT graph document")
        nodes = {}
        for n in doc["nodes"]:
            nodes[str(n["pagename"])] = NodeLabel(
                page_type=str(n["page_type"]),
                first_visit_timestamp=int(n["first_visit_timestamp"]),
                hit_count=int(n["hit_count"]),
                benchmark_label=str(n.get("benchmark_label", "unknown")),
            )
        edges = {(str(e["from"]), str(e["to"])): int(e["weight"]) for e in doc["edges"]}
        g = cls(session_id=str(doc["session_id"]), entry_pagename=str(doc["entry_pagename"]),
                nodes=nodes, edges=edges, label=str(doc.get("label", "unknown")))
        g.validate()
        return g


def _add_hit(g: WTGraph, hit: HitRecord) -> None:
    node = g.nodes.get(hit.pagename)
    if node is None:
        g.nodes[hit.pagename] = NodeLabel(hit.page_type, hit.timestamp, 1, g.label)
    else:
        node.hit_count += 1
    # A previous page outside this session (e.g. before an idle split) has
    # no node to attach to, so that navigation is dropped.
    if hit.prev_pagename is not None and hit.prev_pagename in g.nodes:
        key = (hit.prev_pagename, hit.pagename)
        g.edges[key] = g.edges.get(key, 0) + 1
    if _LABEL_RANK.get(hit.label, 0) > _LABEL_RANK[g.label]:
        g.label = hit.label
        for n in g.nodes.values():
            n.benchmark_label = g.label


def empty_graph(session_id: str, first_hit: HitRecord) -> WTGraph:
    return WTGraph(session_id=session_id, entry_pagename=first_hit.pagename)


def build_graph(session: Session) -> WTGraph:
    """Build the WT graph of a whole session."""
    g = empty_graph(session.session_id, session.hits[0])
    for hit in session.hits:
        _add_hit(g, hit)
    return g


def graph_prefixes(session: Session) -> List[WTGraph]:
    """The graph after each hit of the session, as seen by an online detector."""
    g = empty_graph(session.session_id, session.hits[0])
    out = []
    for hit in session.hits:
        _add_hit(g, hit)
        out.append(g.copy())
    return out


def update_graph(g: WTGraph, hit: HitRecord) -> WTGraph:
    """Extend ``g`` in place by one hit of the same session and return it."""
    if hit.session_id is not None and hit.session_id != g.session_id:
        raise ValueError(f"hit of session {hit.session_id!r} cannot update graph {g.session_id!r}")
    _add_hit(g, hit)
    return g


@dataclass
class GraphMetrics:
    node_degree: Dict[str, int]
    node_count: int
    edge_count: int
    page_type_distribution: Dict[str, float]
    session_topics: FrozenSet[str]
    number_of_hits: int
    hits_per_subpage: Dict[str, int]
    degree_centrality: Dict[str, float]
    betweenness_centrality: Dict[str, float]


def node_degrees(g: WTGraph) -> Dict[str, int]:
    """In-degree plus out-degree over distinct edges; a self-loop counts once."""
    deg = {name: 0 for name in g.nodes}
    for a, b in g.edges:
        deg[a] += 1
        if b != a:
            deg[b] += 1
    return deg


def betweenness_centrality(g: WTGraph) -> Dict[str, float]:
    """Directed, unit-length betweenness normalized by ``(n-1)(n-2)``."""
    n = g.node_count
    if n <= 2:
        return {name: 0.0 for name in g.nodes}
    names, indptr, indices = g.csr()
    raw = _kernels.betweenness(indptr, indices, n)
    scale = 1.0 / ((n - 1) * (n - 2))
    return {name: float(raw[i]) * scale for i, name in enumerate(names)}


def compute_metrics(g: WTGraph, page_titles: Optional[Mapping[str, str]] = None,
                    stopwords: Optional[Iterable[str]] = None) -> GraphMetrics:
    n = g.node_count
    degrees = node_degrees(g)
    hits = {name: node.hit_count for name, node in g.nodes.items()}
    total = sum(hits.values())
    dist: Dict[str, float] = {}
    for node in g.nodes.values():
        dist[node.page_type] = dist.get(node.page_type, 0.0) + node.hit_count
    dist = {k: v / total for k, v in dist.items()} if total else {}
    return GraphMetrics(
        node_degree=degrees,
        node_count=n,
        edge_count=g.edge_count,
        page_type_distribution=dist,
        session_topics=session_topics(g, page_titles or {}, DEFAULT_STOPWORDS if stopwords is None else stopwords),
        number_of_hits=total,
        hits_per_subpage=hits,
        degree_centrality={k: (d / (n - 1) if n > 1 else 0.0) for k, d in degrees.items()},
        betweenness_centrality=betweenness_centrality(g),
    )


# -- RAKE -------------------------------------------------------------------

_SPLIT_PUNCT = re.compile(r"[^\w\s'-]+|\s-\s")
_WORD = re.compile(r"[\w'-]+")


def candidate_phrases(text: str, stopwords: Iterable[str]) -> List[Tuple[str, ...]]:
    """Split text into runs of non-stopwords, breaking at punctuation."""
    stop = {w.lower() for w in stopwords}
    phrases = []
    for chunk in _SPLIT_PUNCT.split(text.lower()):
        current: List[str] = []
        for word in _WORD.findall(chunk):
            word = word.strip("'-")
            if not word or word in stop:
                if current:
                    phrases.append(tuple(current))
                current = []
            else:
                current.append(word)
        if current:
            phrases.append(tuple(current))
    return phrases


def rake_scores(phrases: Sequence[Tuple[str, ...]]) -> Dict[Tuple[str, ...], float]:
    """Phrase score = sum over member words of degree(w) / freq(w)."""
    freq: Dict[str, int] = {}
    degree: Dict[str, int] = {}
    for phrase in phrases:
        for word in phrase:
            freq[word] = freq.get(word, 0) + 1
            degree[word] = degree.get(word, 0) + len(phrase)
    return {p: sum(degree[w] / freq[w] for w in p) for p in phrases}


def session_topics(g: WTGraph, page_titles: Mapping[str, str],
                   stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> FrozenSet[str]:
    """RAKE keywords scoring at least 1 over the titles of the graph's pages.

    Each title is its own text unit, so phrases never span two pages.  Pages
    without a title fall back to their pagename with underscores as spaces.
    """
    stopwords = list(stopwords)
    phrases: List[Tuple[str, ...]] = []
    for name in sorted(g.nodes):
        title = page_titles.get(name) if page_titles else None
        if title is None:
            title = name.replace("_", " ")
        phrases.extend(candidate_phrases(title, stopwords))
    return frozenset(" ".join(p) for p, s in rake_scores(phrases).items() if s >= 1.0)


# -- IO -----------------------------------------------------------------------

def write_graphs(graphs: Iterable[WTGraph], out) -> None:
    for g in graphs:
        out.write(json.dumps(g.to_dict(), sort_keys=True))
        out.write("\n")


def read_graphs(stream) -> List[WTGraph]:
    graphs = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            graphs.append(WTGraph.from_dict(json.loads(line)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: bad graph record: {exc}") from exc
    return graphs


METRIC_COLUMNS = (
    ["session_id", "label", "node_count", "edge_count", "number_of_hits", "max_degree",
     "mean_degree_centrality", "max_betweenness"]
    + [f"share_{t}" for t in PAGE_TYPES]
    + ["session_topics"]
)


def metrics_row(g: WTGraph, m: GraphMetrics) -> dict:
    row = {
        "session_id": g.session_id,
        "label": g.label,
        "node_count": m.node_count,
        "edge_count": m.edge_count,
        "number_of_hits": m.number_of_hits,
        "max_degree": max(m.node_degree.values()),
        "mean_degree_centrality": round(float(np.mean(list(m.degree_centrality.values()))), 6),
        "max_betweenness": round(max(m.betweenness_centrality.values()), 6),
        "session_topics": ";".join(sorted(m.session_topics)),
    }
    for t in PAGE_TYPES:
        row[f"share_{t}"] = round(m.page_type_distribution.get(t, 0.0), 6)
    return row


def write_metrics_csv(rows: Iterable[dict], out) -> None:
    writer = csv.DictWriter(out, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
