"""The detection cascade: heuristics, then the hit classifier, then the graph
classifier on the accumulated session, each gated by a confidence threshold.

Hits are processed one at a time.  A hit the heuristics flag is a bot with
probability 1.  Otherwise the SGAN scores it; if neither class reaches the
threshold the hit's session graph goes to the DGCNN, and if that is unsure
too the verdict is ``undecided`` and the session waits for more hits.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from . import nn
from .groundtruth import LabelingConfig, hit_heuristics, intervals_look_regular
from .ingest import DEFAULT_IDLE_TIMEOUT, HitRecord, derived_session_id, hit_from_dict
from .wtgraph import WTGraph, empty_graph, update_graph

logger = logging.getLogger(__name__)

STAGES = ("heuristic", "sgan", "dgcnn", "forced")
DECISIONS = ("bot", "human", "undecided")

# Soft outputs are kept strictly inside (0, 1); a threshold of 1 then means
# "never decide on model confidence alone".
_P_MIN = nn.PROB_CLIP
_P_MAX = 1.0 - nn.PROB_CLIP


def _clip(p: float) -> float:
    return min(_P_MAX, max(_P_MIN, float(p)))


@dataclass
class PipelineConfig:
    sgan: object
    dgcnn: object
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    threshold: float = 0.9
    max_session_hits: int = 200
    dgcnn_stride: int = 1
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.max_session_hits < 1 or self.dgcnn_stride < 1:
            raise ValueError("max_session_hits and dgcnn_stride must be >= 1")
        for name in ("sgan", "dgcnn"):
            model = getattr(self, name)
            if getattr(model, "encoder", True) is None:
                raise ValueError(f"{name} model has no bound encoder")
        enc = getattr(self.sgan, "encoder", None)
        width = getattr(self.sgan, "feature_width", None)
        if enc is not None and width is not None and enc.total_width != width:
            raise ValueError("SGAN encoder width does not match the model")


@dataclass
class Verdict:
    subject: str
    decision: str
    probability: float
    stage: str
    timestamp: int
    session_id: str
    anomaly: bool = False

    def __post_init__(self):
        if self.decision not in DECISIONS or self.stage not in STAGES:
            raise ValueError(f"bad verdict {self.decision}/{self.stage}")

    @property
    def decided(self) -> bool:
        return self.decision != "undecided"

    @property
    def p_bot(self) -> float:
        return self.probability if self.decision == "bot" else 1.0 - self.probability

    def to_dict(self) -> dict:
        return {"subject": self.subject, "decision": self.decision, "probability": self.probability,
                "stage": self.stage, "timestamp": self.timestamp, "session_id": self.session_id,
                "anomaly": self.anomaly}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Verdict":
        return cls(str(d["subject"]), str(d["decision"]), float(d["probability"]), str(d["stage"]),
                   int(d["timestamp"]), str(d.get("session_id", d["subject"])), bool(d.get("anomaly", False)))


@dataclass
class SessionState:
    session_id: str
    graph: Optional[WTGraph] = None
    verdicts: List[Verdict] = field(default_factory=list)
    open: bool = True
    hits: int = 0
    timestamps: List[int] = field(default_factory=list)
    flagged: bool = False
    final: Optional[Verdict] = None
    dgcnn_calls: int = 0
    last_p_bot: float = 0.5

    @property
    def last_timestamp(self) -> int:
        return self.timestamps[-1]


class SessionStore:
    """Open and closed session states, plus online sessionization."""

    def __init__(self):
        self.sessions: Dict[str, SessionState] = {}
        self._by_client: Dict[Tuple[str, str], str] = {}

    def __len__(self):
        return len(self.sessions)

    def open_sessions(self) -> List[SessionState]:
        return [s for s in self.sessions.values() if s.open]

    def session_for(self, hit: HitRecord, idle_timeout: float) -> SessionState:
        sid = hit.session_id
        if sid is None:
            key = (hit.ip, hit.user_agent)
            current = self._by_client.get(key)
            state = self.sessions.get(current) if current else None
            if state is None or (hit.timestamp - state.last_timestamp) / 1000.0 > idle_timeout:
                sid = derived_session_id(hit.ip, hit.user_agent, hit.timestamp)
                self._by_client[key] = sid
            else:
                sid = current
        state = self.sessions.get(sid)
        if state is None:
            state = self.sessions[sid] = SessionState(sid)
        return state


def _decide(p_bot: float, threshold: float) -> Tuple[str, float]:
    """Decision and its probability if the more likely class clears the threshold."""
    if p_bot >= 1.0 - p_bot:
        return ("bot", p_bot) if p_bot >= threshold else ("undecided", p_bot)
    return ("human", 1.0 - p_bot) if 1.0 - p_bot >= threshold else ("undecided", p_bot)


def _forced(state: SessionState, cfg: PipelineConfig, timestamp: int) -> Verdict:
    p = _clip(cfg.dgcnn.score_graph(state.graph))
    decision = "bot" if p >= 0.5 else "human"
    v = Verdict(state.session_id, decision, p if decision == "bot" else 1.0 - p, "forced", timestamp,
                state.session_id)
    state.open = False
    state.final = v
    state.graph = None
    return v


def process_hit(store: SessionStore, hit, cfg: PipelineConfig) -> Verdict:
    """Run one hit through the cascade and record the verdict on its session."""
    if not isinstance(hit, HitRecord):
        try:
            hit = hit_from_dict(dict(hit))
        except (KeyError, TypeError, ValueError) as exc:
            logger.warning("malformed hit: %s", exc)
            return Verdict("?", "undecided", 0.5, "heuristic", 0, "?", anomaly=True)
    state = store.session_for(hit, cfg.idle_timeout)
    state.hits += 1
    state.timestamps.append(hit.timestamp)
    hit_id = f"{state.session_id}#{state.hits}"

    verdict = _cascade(state, hit, hit_id, cfg)
    state.verdicts.append(verdict)
    return verdict


def _cascade(state: SessionState, hit: HitRecord, hit_id: str, cfg: PipelineConfig) -> Verdict:
    # Stage 1: heuristics.  A flag sticks to the session and closes it.
    if not state.flagged:
        intervals = [(b - a) / 1000.0 for a, b in zip(state.timestamps, state.timestamps[1:])]
        if hit_heuristics(hit, cfg.labeling) or intervals_look_regular(intervals, cfg.labeling):
            state.flagged = True
            state.open = False
            state.graph = None
    if state.flagged:
        return Verdict(hit_id, "bot", 1.0, "heuristic", hit.timestamp, state.session_id)

    # Open sessions keep their traversal graph current with every hit.
    if state.open and (state.graph is None or state.graph.hit_count < cfg.max_session_hits):
        if state.graph is None:
            state.graph = empty_graph(state.session_id, hit)
        update_graph(state.graph, hit)

    # Stage 2: per-hit SGAN.
    p_bot = _clip(cfg.sgan.score_hit(hit))
    decision, prob = _decide(p_bot, cfg.threshold)
    if decision != "undecided":
        return Verdict(hit_id, decision, prob, "sgan", hit.timestamp, state.session_id)

    # Stage 3: DGCNN on the accumulated session graph.
    if not state.open:
        f = state.final
        return Verdict(state.session_id, f.decision, f.probability, f.stage, hit.timestamp, state.session_id)
    if state.hits >= cfg.max_session_hits:
        return _forced(state, cfg, hit.timestamp)
    state.dgcnn_calls += 1
    if (state.dgcnn_calls - 1) % cfg.dgcnn_stride == 0:
        state.last_p_bot = _clip(cfg.dgcnn.score_graph(state.graph))
    decision, prob = _decide(state.last_p_bot, cfg.threshold)
    if decision == "undecided":
        return Verdict(state.session_id, "undecided", state.last_p_bot, "dgcnn", hit.timestamp, state.session_id)
    v = Verdict(state.session_id, decision, prob, "dgcnn", hit.timestamp, state.session_id)
    state.open = False
    state.final = v
    state.graph = None
    return v


def finalize(store: SessionStore, cfg: PipelineConfig) -> List[Verdict]:
    """Force a DGCNN verdict on every session still waiting for one, then
    empty the store.

    A session is waiting when it is open and its latest verdict is
    undecided; one whose last hit was settled by the SGAN needs nothing more.
    """
    out = []
    for sid in sorted(store.sessions):
        state = store.sessions[sid]
        if state.open and state.graph is not None and state.verdicts and not state.verdicts[-1].decided:
            v = _forced(state, cfg, state.last_timestamp)
            state.verdicts.append(v)
            out.append(v)
    store.sessions.clear()
    store._by_client.clear()
    return out


@dataclass
class StreamResult:
    verdicts: List[Verdict]
    stage_counts: Dict[str, int]
    undecided: int

    @property
    def sessions(self) -> List[str]:
        return sorted({v.session_id for v in self.verdicts})


def stage_counts(verdicts: Iterable[Verdict]) -> Dict[str, int]:
    counts = {s: 0 for s in STAGES}
    for v in verdicts:
        if v.decided:
            counts[v.stage] += 1
    return counts


def _run_shard(args) -> List[Tuple[int, Verdict]]:
    indexed_hits, cfg = args
    store = SessionStore()
    out = [(i, process_hit(store, hit, cfg)) for i, hit in indexed_hits]
    out.extend((-1, v) for v in finalize(store, cfg))
    return out


def _shard_key(hit: HitRecord) -> str:
    return hit.session_id if hit.session_id is not None else f"{hit.ip}\x1f{hit.user_agent}"


def run_stream(hits: Iterable[HitRecord], cfg: PipelineConfig, jobs: int = 1) -> StreamResult:
    """Process every hit, then finalize.

    With ``jobs > 1`` hits are sharded by session (or client, for hits
    without a session id) across worker processes; the verdict order is the
    same as a single-process run.
    """
    hits = list(hits)
    if jobs <= 1 or len(hits) < 2:
        store = SessionStore()
        verdicts = [process_hit(store, h, cfg) for h in hits]
        verdicts.extend(finalize(store, cfg))
    else:
        import zlib
        shards: List[List[Tuple[int, HitRecord]]] = [[] for _ in range(jobs)]
        for i, h in enumerate(hits):
            shards[zlib.crc32(_shard_key(h).encode("utf-8")) % jobs].append((i, h))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_shard, [(s, cfg) for s in shards if s]))
        per_hit = [None] * len(hits)
        forced = []
        for part in results:
            for i, v in part:
                if i < 0:
                    forced.append(v)
                else:
                    per_hit[i] = v
        forced.sort(key=lambda v: v.session_id)
        verdicts = per_hit + forced
    counts = stage_counts(verdicts)
    return StreamResult(verdicts, counts, sum(1 for v in verdicts if not v.decided))


def session_scores(verdicts: Iterable[Verdict]) -> Dict[str, float]:
    """Session-level bot score: mean p_bot over the session's decided verdicts.

    Undecided verdicts carry no decision and are skipped; a session with no
    decided verdict at all gets 0.5.
    """
    sums: Dict[str, List[float]] = {}
    for v in verdicts:
        bucket = sums.setdefault(v.session_id, [])
        if v.decided:
            bucket.append(v.p_bot)
    return {sid: (sum(ps) / len(ps) if ps else 0.5) for sid, ps in sorted(sums.items())}


def write_verdicts(verdicts: Iterable[Verdict], out) -> None:
    for v in verdicts:
        out.write(json.dumps(v.to_dict(), sort_keys=True))
        out.write("\n")


def read_verdicts(stream) -> List[Verdict]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if line:
            try:
                out.append(Verdict.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: bad verdict: {exc}") from exc
    return out
