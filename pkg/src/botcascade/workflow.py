"""Glue between the stages: turning labeled sessions into training sets."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .encoding import FeatureEncoder, FeatureVector, fit_encoder
from .ingest import Session
from .wtgraph import WTGraph, build_graph, graph_prefixes


def sgan_training_data(sessions: Sequence[Session], encoder: Optional[FeatureEncoder] = None
                       ) -> Tuple[FeatureEncoder, List[FeatureVector], np.ndarray]:
    """Encoder plus labeled vectors (human/bot hits) and the unlabeled matrix.

    The encoder is fitted on every hit, labeled or not, when not given.
    """
    hits = [h for s in sessions for h in s.hits]
    if encoder is None:
        encoder = fit_encoder(hits)
    labeled = [encoder.encode(h) for h in hits if h.label in ("human", "bot")]
    unlabeled = encoder.encode_many([h for h in hits if h.label not in ("human", "bot")])
    return encoder, labeled, unlabeled


def dgcnn_training_graphs(sessions: Sequence[Session], prefixes: bool = True) -> List[WTGraph]:
    """Graphs of the human/bot sessions; with ``prefixes`` one per hit.

    Online, the graph classifier sees a session's graph after every hit, so
    training on all prefixes teaches it how little a short prefix reveals.
    """
    out: List[WTGraph] = []
    for s in sessions:
        if s.label not in ("human", "bot"):
            continue
        graphs = graph_prefixes(s) if prefixes else [build_graph(s)]
        for g in graphs:
            # A prefix carries the label of its whole session.
            g.label = s.label
            for node in g.nodes.values():
                node.benchmark_label = s.label
        out.extend(graphs)
    return out
