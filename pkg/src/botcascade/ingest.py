"""Hit records, parsing, and sessionization.

A *hit* is one request record against the web server.  Hits arrive as JSONL
(one object per line) or CSV (header row with the same field names) and are
grouped into sessions either by an explicit ``session_id`` or by the
``(ip, user_agent)`` key with an idle timeout.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)

PAGE_TYPES = ("product", "category", "search", "cart", "checkout", "content", "other")
JAVA_VALUES = ("Y", "N", "U")
LABELS = ("human", "bot", "unknown")

HIT_FIELDS = (
    "timestamp",
    "ip",
    "account_id",
    "user_agent",
    "browser_width",
    "browser_height",
    "java_enabled",
    "pagename",
    "prev_pagename",
    "first_hit_pagename",
    "page_type",
    "visit_num",
    "visit_page_num",
    "hourly_visitor",
    "last_purchase_num",
    "session_id",
    "label",
)

DEFAULT_IDLE_TIMEOUT = 1800.0


class FormatError(ValueError):
    """Raised when too much of an input is malformed to trust the rest."""


@dataclass(frozen=True)
class HitRecord:
    timestamp: int
    ip: str
    user_agent: str
    pagename: str
    account_id: Optional[str] = None
    browser_width: int = 0
    browser_height: int = 0
    java_enabled: str = "U"
    prev_pagename: Optional[str] = None
    first_hit_pagename: Optional[str] = None
    page_type: str = "other"
    visit_num: int = 1
    visit_page_num: int = 1
    hourly_visitor: bool = False
    last_purchase_num: int = 0
    session_id: Optional[str] = None
    label: str = "unknown"

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")
        if not self.pagename:
            raise ValueError("pagename must be non-empty")
        if self.visit_page_num < 1 or self.visit_num < 1:
            raise ValueError("visit_num and visit_page_num must be >= 1")
        if self.browser_width < 0 or self.browser_height < 0 or self.last_purchase_num < 0:
            raise ValueError("negative count or window dimension")
        if self.visit_page_num == 1 and self.prev_pagename is not None:
            raise ValueError("first hit of a visit cannot have prev_pagename")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in HIT_FIELDS}

    def with_label(self, label: str) -> "HitRecord":
        return replace(self, label=label)


def _opt_str(value) -> Optional[str]:
    if value is None:
        return None
    value = str(value)
    return value if value != "" else None


def _int(value, default: int = 0) -> int:
    if value is None or value == "":
        return default
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        if value != int(value):
            raise ValueError(f"non-integral value {value!r}")
        return int(value)
    return int(str(value).strip())


def _bool(value) -> bool:
    if value is None or value == "":
        return False
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    text = str(value).strip().lower()
    if text in ("1", "true", "t", "yes", "y"):
        return True
    if text in ("0", "false", "f", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def hit_from_dict(obj: dict) -> HitRecord:
    """Build a HitRecord from a loosely-typed mapping.

    Missing numeric fields default to 0 (visit counters to 1), a missing
    ``java_enabled`` to ``U``; unknown enum values fall back to ``other``,
    ``U`` and ``unknown``.  Raises ``ValueError``/``KeyError``/``TypeError`` on
    records that cannot be repaired.
    """
    if not isinstance(obj, dict):
        raise TypeError("hit record must be an object")
    java = str(obj.get("java_enabled") or "U").strip().upper()
    page_type = str(obj.get("page_type") or "other").strip().lower()
    label = str(obj.get("label") or "unknown").strip().lower()
    ts = obj["timestamp"]
    if isinstance(ts, bool):
        raise ValueError("boolean timestamp")
    return HitRecord(
        timestamp=_int(ts, default=-1),
        ip=str(obj["ip"]),
        account_id=_opt_str(obj.get("account_id")),
        user_agent=str(obj.get("user_agent") or ""),
        browser_width=_int(obj.get("browser_width")),
        browser_height=_int(obj.get("browser_height")),
        java_enabled=java if java in JAVA_VALUES else "U",
        pagename=str(obj["pagename"]),
        prev_pagename=_opt_str(obj.get("prev_pagename")),
        first_hit_pagename=_opt_str(obj.get("first_hit_pagename")),
        page_type=page_type if page_type in PAGE_TYPES else "other",
        visit_num=_int(obj.get("visit_num"), default=1),
        visit_page_num=_int(obj.get("visit_page_num"), default=1),
        hourly_visitor=_bool(obj.get("hourly_visitor")),
        last_purchase_num=_int(obj.get("last_purchase_num")),
        session_id=_opt_str(obj.get("session_id")),
        label=label if label in LABELS else "unknown",
    )


@dataclass
class ParseResult:
    hits: List[HitRecord]
    skipped: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.hits)

    def __len__(self):
        return len(self.hits)


def _decode_lines(source) -> Iterator[str]:
    if isinstance(source, (bytes, bytearray)):
        yield from source.decode("utf-8").splitlines()
        return
    if isinstance(source, str):
        yield from source.splitlines()
        return
    for line in source:
        if isinstance(line, (bytes, bytearray)):
            line = line.decode("utf-8")
        yield line.rstrip("\r\n")


def parse_hits(source: Union[bytes, str, IO], format: str = "jsonl",
               max_malformed_fraction: float = 0.5) -> ParseResult:
    """Parse hit records from a byte/text stream.

    Malformed lines are skipped and counted.  If more than half of the
    non-blank records are malformed a :class:`FormatError` is raised carrying
    the first few line diagnostics.
    """
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown format {format!r}")
    hits: List[HitRecord] = []
    errors: List[Tuple[int, str]] = []
    total = 0
    lines = _decode_lines(source)
    if format == "jsonl":
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                hits.append(hit_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append((lineno, f"{type(exc).__name__}: {exc}"))
    else:
        reader = csv.DictReader(lines)
        for row in reader:
            lineno = reader.line_num
            if not any((v or "").strip() for v in row.values() if isinstance(v, str)):
                continue
            total += 1
            try:
                if None in row:
                    raise ValueError("too many columns")
                hits.append(hit_from_dict(row))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append((lineno, f"{type(exc).__name__}: {exc}"))
    if total and len(errors) / total > max_malformed_fraction:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in errors[:5])
        raise FormatError(f"{len(errors)} of {total} records malformed ({detail})")
    if errors:
        logger.warning("skipped %d malformed record(s)", len(errors))
    return ParseResult(hits=hits, skipped=len(errors), errors=errors)


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def write_hits(hits: Iterable[HitRecord], out: IO[str], format: str = "jsonl") -> None:
    if format == "jsonl":
        for hit in hits:
            out.write(json.dumps(hit.to_dict(), separators=(",", ":")))
            out.write("\n")
    elif format == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(HIT_FIELDS)
        for hit in hits:
            d = hit.to_dict()
            writer.writerow([_csv_value(d[name]) for name in HIT_FIELDS])
    else:
        raise ValueError(f"unknown format {format!r}")


@dataclass
class Session:
    session_id: str
    hits: List[HitRecord]

    def __post_init__(self):
        if not self.hits:
            raise ValueError("session must contain at least one hit")
        for a, b in zip(self.hits, self.hits[1:]):
            if b.timestamp < a.timestamp:
                raise ValueError(f"session {self.session_id}: hits not time ordered")

    @property
    def intervals(self) -> List[float]:
        """Inter-hit gaps in seconds (length ``len(hits) - 1``)."""
        ts = [h.timestamp for h in self.hits]
        return [(b - a) / 1000.0 for a, b in zip(ts, ts[1:])]

    @property
    def label(self) -> str:
        """Session label: human if any hit is human, else bot if any is bot."""
        labels = {h.label for h in self.hits}
        if "human" in labels:
            return "human"
        if "bot" in labels:
            return "bot"
        return "unknown"

    def __len__(self):
        return len(self.hits)

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "hits": [h.to_dict() for h in self.hits]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Session":
        hits = [hit_from_dict(h) for h in obj["hits"]]
        return cls(session_id=str(obj["session_id"]), hits=hits)


def derived_session_id(ip: str, user_agent: str, first_timestamp: int) -> str:
    """Stable id for a session that arrived without one."""
    digest = hashlib.sha1(f"{ip}\x1f{user_agent}\x1f{first_timestamp}".encode("utf-8"))
    return "s-" + digest.hexdigest()[:16]


def sessionize(hits: Sequence[HitRecord], idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> List[Session]:
    """Group hits into sessions.

    Hits carrying a ``session_id`` group by it regardless of timing.  The
    rest are keyed by ``(ip, user_agent)`` and split whenever the gap to the
    previous hit of the same key exceeds ``idle_timeout`` seconds.  Within a
    session hits are ordered by timestamp, ties by input order.  Sessions are
    returned ordered by session id.
    """
    explicit = {}
    keyed = {}
    for pos, hit in enumerate(hits):
        if hit.session_id is not None:
            explicit.setdefault(hit.session_id, []).append((hit.timestamp, pos, hit))
        else:
            keyed.setdefault((hit.ip, hit.user_agent), []).append((hit.timestamp, pos, hit))

    groups = {}
    for sid, items in explicit.items():
        items.sort(key=lambda t: (t[0], t[1]))
        groups[sid] = [h for _, _, h in items]

    limit_ms = idle_timeout * 1000.0
    for (ip, ua), items in keyed.items():
        items.sort(key=lambda t: (t[0], t[1]))
        current = [items[0][2]]
        for _, _, hit in items[1:]:
            if hit.timestamp - current[-1].timestamp > limit_ms:
                sid = derived_session_id(ip, ua, current[0].timestamp)
                groups.setdefault(sid, []).extend(current)
                current = [hit]
            else:
                current.append(hit)
        sid = derived_session_id(ip, ua, current[0].timestamp)
        groups.setdefault(sid, []).extend(current)

    return [Session(session_id=sid, hits=groups[sid]) for sid in sorted(groups)]


def read_sessions(stream: IO[str]) -> List[Session]:
    sessions = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            sessions.append(Session.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return sessions


def write_sessions(sessions: Iterable[Session], out: IO[str]) -> None:
    for s in sessions:
        out.write(json.dumps(s.to_dict(), separators=(",", ":")))
        out.write("\n")


def hits_to_jsonl_bytes(hits: Iterable[HitRecord]) -> bytes:
    buf = io.StringIO()
    write_hits(hits, buf, "jsonl")
    return buf.getvalue().encode("utf-8")
