"""Assumption labeling and high-precision bot heuristics.

Labels come from two assumptions: hits from internal (employee) accounts are
human, hits from cloud-provider address space are bot, everything else is
unknown.  Three heuristics then promote unknown hits to bot:

* forged / automation user agent,
* regular timing between hits (coefficient of variation of intervals),
* unrealistically small browser windows.

Heuristics never produce a human label.
"""
from __future__ import annotations

import ipaddress
import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Mapping, Optional, Sequence, Tuple

from .ingest import HitRecord, Session

logger = logging.getLogger(__name__)

BOT = "bot"
PASS = "pass"

DEFAULT_AUTOMATION_SUBSTRINGS = (
    "python-requests",
    "curl",
    "wget",
    "scrapy",
    "httpclient",
    "headless",
    "phantomjs",
    "selenium",
)

# Ordered: the first matching marker wins, so more specific tokens go first.
_FAMILY_MARKERS = (
    ("HeadlessChrome", "HeadlessChrome"),
    ("Edg/", "Edge"),
    ("OPR/", "Opera"),
    ("Opera", "Opera"),
    ("Firefox/", "Firefox"),
    ("MSIE", "MSIE"),
    ("Trident/", "MSIE"),
    ("Chrome/", "Chrome"),
    ("Safari/", "Safari"),
)

DEFAULT_UA_CAPABILITIES = {
    "MSIE": frozenset({"Y"}),
    "Chrome": frozenset({"N", "U"}),
    "Firefox": frozenset({"N", "U"}),
    "Safari": frozenset({"N", "U"}),
    "Edge": frozenset({"N", "U"}),
}


def ua_family(user_agent: str) -> str:
    """Reduce a user-agent string to its browser/client family.

    Known browser markers are matched first; otherwise the product token
    before the first ``/`` is used (``python-requests/2.31`` ->
    ``python-requests``).
    """
    ua = (user_agent or "").strip()
    if not ua:
        return "Other"
    for marker, family in _FAMILY_MARKERS:
        if marker in ua:
            return family
    token = ua.split("/", 1)[0].split()[0] if ua.split() else ua
    return token or "Other"


@dataclass
class LabelingConfig:
    internal_accounts: FrozenSet[str] = frozenset()
    cloud_cidrs: Tuple[str, ...] = ()
    automation_ua_substrings: Tuple[str, ...] = DEFAULT_AUTOMATION_SUBSTRINGS
    ua_capability_table: Mapping[str, FrozenSet[str]] = field(
        default_factory=lambda: dict(DEFAULT_UA_CAPABILITIES))
    min_hits_for_interval_test: int = 5
    interval_cv_threshold: float = 0.05
    min_window_axis_px: int = 50

    def __post_init__(self):
        self.internal_accounts = frozenset(self.internal_accounts)
        self.cloud_cidrs = tuple(self.cloud_cidrs)
        self.automation_ua_substrings = tuple(s.lower() for s in self.automation_ua_substrings)
        self.ua_capability_table = {
            k: frozenset(str(x).upper() for x in v) for k, v in dict(self.ua_capability_table).items()}
        if self.min_hits_for_interval_test <= 0 or self.interval_cv_threshold <= 0:
            raise ValueError("interval thresholds must be positive")
        if self.min_window_axis_px <= 0:
            raise ValueError("min_window_axis_px must be positive")
        # raises ValueError on malformed CIDRs
        self._networks = tuple(ipaddress.ip_network(c.strip(), strict=False) for c in self.cloud_cidrs)

    @property
    def networks(self):
        return self._networks

    @classmethod
    def from_mapping(cls, cfg: Mapping, base_dir: Optional[str] = None) -> "LabelingConfig":
        """Build from a parsed config document (e.g. a ``[labeling]`` TOML table).

        ``cloud_cidrs_file`` may name a plain-text file with one CIDR per line.
        """
        cidrs = list(cfg.get("cloud_cidrs", []))
        path = cfg.get("cloud_cidrs_file")
        if path:
            import os
            if base_dir and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            cidrs.extend(load_cidr_file(path))
        kwargs = dict(internal_accounts=frozenset(cfg.get("internal_accounts", [])), cloud_cidrs=tuple(cidrs))
        if "automation_ua_substrings" in cfg:
            kwargs["automation_ua_substrings"] = tuple(cfg["automation_ua_substrings"])
        if "ua_capability_table" in cfg:
            kwargs["ua_capability_table"] = {k: frozenset(v) for k, v in cfg["ua_capability_table"].items()}
        for name in ("min_hits_for_interval_test", "interval_cv_threshold", "min_window_axis_px"):
            if name in cfg:
                kwargs[name] = cfg[name]
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        return {
            "internal_accounts": sorted(self.internal_accounts),
            "cloud_cidrs": list(self.cloud_cidrs),
            "automation_ua_substrings": list(self.automation_ua_substrings),
            "ua_capability_table": {k: sorted(v) for k, v in sorted(self.ua_capability_table.items())},
            "min_hits_for_interval_test": self.min_hits_for_interval_test,
            "interval_cv_threshold": self.interval_cv_threshold,
            "min_window_axis_px": self.min_window_axis_px,
        }


def load_cidr_file(path: str) -> List[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line)
    return out


@dataclass
class StageCounts:
    bot: int = 0
    human: int = 0
    unknown: int = 0

    @property
    def total(self) -> int:
        return self.bot + self.human + self.unknown

    def add(self, label: str, n: int = 1) -> None:
        setattr(self, label, getattr(self, label) + n)

    def to_dict(self) -> dict:
        return {"bot": self.bot, "human": self.human, "unknown": self.unknown}


@dataclass
class LabelReport:
    """Hit counts per class before and after heuristic enhancement."""

    assumption: StageCounts = field(default_factory=StageCounts)
    enhanced: StageCounts = field(default_factory=StageCounts)
    conflicts: int = 0
    anomalies: int = 0

    @property
    def human_recall(self) -> Optional[float]:
        """Fraction of assumption-human hits the heuristics left alone."""
        if self.assumption.human == 0:
            return None
        return 1.0 - self.conflicts / self.assumption.human

    def merge(self, other: "LabelReport") -> "LabelReport":
        out = LabelReport(conflicts=self.conflicts + other.conflicts,
                          anomalies=self.anomalies + other.anomalies)
        for stage in ("assumption", "enhanced"):
            a, b = getattr(self, stage), getattr(other, stage)
            setattr(out, stage, StageCounts(a.bot + b.bot, a.human + b.human, a.unknown + b.unknown))
        return out

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption.to_dict(),
            "enhanced": self.enhanced.to_dict(),
            "conflicts": self.conflicts,
            "anomalies": self.anomalies,
            "human_recall": self.human_recall,
        }


def _assumption_label(hit: HitRecord, cfg: LabelingConfig) -> Tuple[str, bool]:
    if hit.account_id is not None and hit.account_id in cfg.internal_accounts:
        return "human", False
    try:
        addr = ipaddress.ip_address(hit.ip.strip())
    except ValueError:
        return "unknown", True
    for net in cfg.networks:
        if addr.version == net.version and addr in net:
            return "bot", False
    return "unknown", False


def label_by_assumptions(hits: Sequence[HitRecord], cfg: LabelingConfig,
                         report: Optional[LabelReport] = None) -> List[HitRecord]:
    """Label each hit human (internal account), bot (cloud IP) or unknown.

    The human rule wins when both match.  Hits with unparseable IPs stay
    unknown and are counted as anomalies on ``report`` when one is given.
    """
    out = []
    for hit in hits:
        label, anomaly = _assumption_label(hit, cfg)
        if anomaly:
            logger.debug("unparseable ip %r", hit.ip)
            if report is not None:
                report.anomalies += 1
        out.append(hit.with_label(label))
    return out


def heuristic_forged_ua(hit: HitRecord, cfg: LabelingConfig) -> str:
    ua = hit.user_agent or ""
    lowered = ua.lower()
    if any(s in lowered for s in cfg.automation_ua_substrings):
        return BOT
    expected = cfg.ua_capability_table.get(ua_family(ua))
    if expected is not None and hit.java_enabled not in expected:
        return BOT
    return PASS


def interval_cv(intervals: Sequence[float]) -> float:
    """Population coefficient of variation; ``nan`` when undefined."""
    n = len(intervals)
    if n == 0:
        return math.nan
    mean = math.fsum(intervals) / n
    if mean <= 0:
        return math.nan
    var = math.fsum((x - mean) ** 2 for x in intervals) / n
    return math.sqrt(var) / mean


def intervals_look_regular(intervals: Sequence[float], cfg: LabelingConfig) -> bool:
    if len(intervals) < cfg.min_hits_for_interval_test - 1:
        return False
    cv = interval_cv(intervals)
    return not math.isnan(cv) and cv < cfg.interval_cv_threshold


def heuristic_interval_similarity(session: Session, cfg: LabelingConfig) -> str:
    return BOT if intervals_look_regular(session.intervals, cfg) else PASS


def heuristic_window_size(hit: HitRecord, cfg: LabelingConfig) -> str:
    smallest = min(hit.browser_width, hit.browser_height)
    return BOT if 0 < smallest < cfg.min_window_axis_px else PASS


def hit_heuristics(hit: HitRecord, cfg: LabelingConfig) -> bool:
    """True when any per-hit heuristic flags the hit."""
    return heuristic_forged_ua(hit, cfg) == BOT or heuristic_window_size(hit, cfg) == BOT


def apply_heuristics(sessions: Sequence[Session], cfg: LabelingConfig) -> Tuple[List[Session], LabelReport]:
    """Promote unknown hits to bot where a heuristic fires.

    Assumption labels are never overwritten.  A human hit that a heuristic
    would flag is recorded as a conflict and stays human.  The interval
    heuristic flags every hit of its session.
    """
    report = LabelReport()
    out = []
    for session in sessions:
        session_flag = heuristic_interval_similarity(session, cfg) == BOT
        new_hits = []
        for hit in session.hits:
            report.assumption.add(hit.label)
            flagged = session_flag or hit_heuristics(hit, cfg)
            label = hit.label
            if flagged:
                if label == "unknown":
                    label = "bot"
                elif label == "human":
                    report.conflicts += 1
            report.enhanced.add(label)
            new_hits.append(hit if label == hit.label else hit.with_label(label))
        out.append(Session(session_id=session.session_id, hits=new_hits))
    return out, report


def label_sessions(sessions: Sequence[Session], cfg: LabelingConfig) -> Tuple[List[Session], LabelReport]:
    """Assumption labeling followed by heuristic enhancement."""
    anomalies = LabelReport()
    labeled = [Session(s.session_id, label_by_assumptions(s.hits, cfg, anomalies)) for s in sessions]
    out, report = apply_heuristics(labeled, cfg)
    report.anomalies = anomalies.anomalies
    return out, report
