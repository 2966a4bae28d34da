"""Seeded synthetic traffic with ground truth.

Generates labeled hit streams from a handful of actor families over a small
e-commerce site.  Output depends only on the :class:`CorpusSpec`; every
session draws from its own child of one ``SeedSequence``.
"""
from __future__ import annotations

import ipaddress
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ingest import PAGE_TYPES, HitRecord

logger = logging.getLogger(__name__)

KINDS = ("human", "scraper_bot", "monitor_bot", "scalper_bot", "stealth_bot")
TRAVERSALS = ("targeted_walk", "breadth_exhaustive", "single_page_repeat", "purchase_rush")

BASE_TIMESTAMP_MS = 1_700_000_000_000
DAY_MS = 86_400_000

DEFAULT_CLOUD_CIDRS = (
    "3.0.0.0/9",
    "18.128.0.0/9",
    "34.64.0.0/10",
    "35.184.0.0/13",
    "52.0.0.0/11",
    "20.33.0.0/16",
)
RESIDENTIAL_CIDRS = ("81.0.0.0/8", "86.0.0.0/8", "92.0.0.0/8", "176.0.0.0/8", "188.0.0.0/8")
RESIDENTIAL_V6 = "2a02::/16"
CORPORATE_CIDR = "198.51.100.0/24"
INTERNAL_ACCOUNTS = tuple(f"emp-{i:04d}" for i in range(500))


@dataclass(frozen=True)
class SiteMap:
    pages: Tuple[Tuple[str, str], ...]
    links: Mapping[str, Tuple[str, ...]]
    entry_pages: Tuple[str, ...]
    titles: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [p for p, _ in self.pages]
        if len(names) < 2:
            raise ValueError("site map needs at least 2 pages")
        if len(set(names)) != len(names):
            raise ValueError("duplicate page names")
        known = set(names)
        for page, kind in self.pages:
            if kind not in PAGE_TYPES:
                raise ValueError(f"unknown page type {kind!r} for {page}")
        for src, dsts in self.links.items():
            if src not in known or any(d not in known for d in dsts):
                raise ValueError(f"link endpoint missing from pages: {src} -> {dsts}")
        if not self.entry_pages or any(e not in known for e in self.entry_pages):
            raise ValueError("entry_pages must be a non-empty subset of pages")

    @property
    def page_type(self) -> Dict[str, str]:
        return dict(self.pages)

    def title(self, page: str) -> str:
        return self.titles.get(page) or page.replace("_", " ")


def default_sitemap() -> SiteMap:
    """A 40-page store: content, categories, products, search, cart, checkout."""
    products = {
        "shoes": ["trail_running_shoes", "leather_boots", "canvas_sneakers", "summer_sandals"],
        "shirts": ["linen_shirt", "oxford_shirt", "graphic_tee", "flannel_shirt"],
        "jackets": ["rain_jacket", "down_parka", "denim_jacket"],
        "accessories": ["wool_scarf", "leather_belt", "sports_watch"],
        "electronics": ["wireless_headphones", "gaming_console", "smart_speaker"],
        "home": ["ceramic_mug_set", "cotton_bed_sheets", "desk_lamp"],
    }
    pages: List[Tuple[str, str]] = []
    links: Dict[str, List[str]] = {}
    titles: Dict[str, str] = {}

    def add(name, kind, title):
        pages.append((name, kind))
        links[name] = []
        titles[name] = title

    add("home", "content", "Home")
    for name, title in (("about", "About Our Store"), ("help", "Help Center"),
                        ("shipping_info", "Shipping Information"), ("contact", "Contact Us")):
        add(name, "content", title)
    add("search", "search", "Search")
    add("search_results", "search", "Search Results")
    for cat, items in products.items():
        add(f"cat_{cat}", "category", f"{cat.capitalize()} Collection")
        for item in items:
            add(item, "product", item.replace("_", " ").title())
    add("cart", "cart", "Shopping Cart")
    add("checkout_shipping", "checkout", "Checkout Shipping Address")
    add("checkout_payment", "checkout", "Checkout Payment Details")
    add("checkout_confirm", "checkout", "Order Confirmation")
    add("login", "other", "Customer Login")
    add("account", "other", "Account Overview")
    add("wishlist", "other", "Saved Wishlist")

    cats = [f"cat_{c}" for c in products]
    all_products = [p for items in products.values() for p in items]
    links["home"] = cats + ["search", "login", "about", "help", "cart"]
    for name in ("about", "help", "shipping_info", "contact"):
        links[name] = ["home"]
    links["help"] = ["home", "shipping_info", "contact"]
    links["search"] = ["search_results", "home"]
    links["search_results"] = all_products[::2] + ["search", "home"]
    for cat, items in products.items():
        links[f"cat_{cat}"] = list(items) + ["home", "search"]
        for item in items:
            related = [i for i in items if i != item]
            links[item] = related + [f"cat_{cat}", "cart", "home", "wishlist"]
    links["cart"] = ["checkout_shipping", "home", "search"]
    links["checkout_shipping"] = ["checkout_payment", "cart"]
    links["checkout_payment"] = ["checkout_confirm", "checkout_shipping"]
    links["checkout_confirm"] = ["home", "account"]
    links["login"] = ["account", "home"]
    links["account"] = ["wishlist", "home"]
    links["wishlist"] = all_products[1::3] + ["home"]

    entry = ("home", "search", "cat_shoes", "cat_electronics", "gaming_console", "trail_running_shoes", "login")
    return SiteMap(pages=tuple(pages), links={k: tuple(v) for k, v in links.items()},
                   entry_pages=entry, titles=titles)


@dataclass(frozen=True)
class ActorProfile:
    """Behavior model of one actor family.

    Attributes:
        kind: actor family name.
        interval_mean: mean seconds between hits.
        interval_cv: coefficient of variation of the gaps.
        window_sizes: candidate (width, height) browser windows in px.
        ua_families: candidate user-agent families (keys of ``USER_AGENTS``).
        forged_ua_rate: chance the session claims a browser UA whose
            capabilities it does not have.
        traversal: navigation model name.
        session_length: inclusive (min, max) hit count; humans use a
            geometric law with mean ``session_length_mean`` clipped to the range.
        description: one-line summary for catalogs.
    """

    kind: str
    interval_mean: float
    interval_cv: float
    window_sizes: Tuple[Tuple[int, int], ...]
    ua_families: Tuple[str, ...]
    forged_ua_rate: float
    traversal: str
    session_length: Tuple[int, int]
    session_length_mean: Optional[float] = None
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if self.traversal not in TRAVERSALS:
            raise ValueError(f"unknown traversal {self.traversal!r}")
        if self.interval_mean <= 0 or self.interval_cv < 0:
            raise ValueError("interval mean must be > 0 and CV >= 0")
        if self.session_length[0] < 1 or self.session_length[1] < self.session_length[0]:
            raise ValueError("bad session length range")


HUMAN_WINDOWS = (
    (1920, 937), (1536, 730), (1366, 657), (1440, 789), (1280, 689), (2560, 1305),
    (390, 664), (414, 715), (375, 635), (360, 640), (412, 780), (768, 954), (820, 1080),
)
TINY_WINDOWS = ((1, 1), (10, 10), (40, 30), (800, 30), (24, 600))

USER_AGENTS = {
    "chrome": ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 "
               "(KHTML, like Gecko) Chrome/{v}.0.0.0 Safari/537.36", "N"),
    "chrome_mac": ("Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36 "
                   "(KHTML, like Gecko) Chrome/{v}.0.0.0 Safari/537.36", "N"),
    "firefox": ("Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:{v}.0) Gecko/20100101 Firefox/{v}.0", "N"),
    "safari": ("Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 "
               "(KHTML, like Gecko) Version/17.1 Safari/605.1.15", "N"),
    "mobile_safari": ("Mozilla/5.0 (iPhone; CPU iPhone OS 17_1 like Mac OS X) AppleWebKit/605.1.15 "
                      "(KHTML, like Gecko) Version/17.1 Mobile/15E148 Safari/604.1", "N"),
    "edge": ("Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 "
             "(KHTML, like Gecko) Chrome/{v}.0.0.0 Safari/537.36 Edg/{v}.0.0.0", "N"),
    "msie": ("Mozilla/4.0 (compatible; MSIE 8.0; Windows NT 6.1; Trident/4.0)", "Y"),
    "headless": ("Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 "
                 "(KHTML, like Gecko) HeadlessChrome/{v}.0.0.0 Safari/537.36", "N"),
    "python_requests": ("python-requests/2.{v}.0", "U"),
    "scrapy": ("Scrapy/2.11.0 (+https://scrapy.org)", "U"),
    "curl": ("curl/8.{v}.0", "U"),
    "wget": ("Wget/1.21.4", "U"),
    "httpclient": ("Apache-HttpClient/4.5.14 (Java/17.0.8)", "U"),
}
BROWSER_UAS = ("chrome", "chrome_mac", "firefox", "safari", "mobile_safari", "edge")
AUTOMATION_UAS = ("python_requests", "scrapy", "curl", "wget", "httpclient")

PRESETS: Dict[str, ActorProfile] = {
    "human": ActorProfile(
        kind="human", interval_mean=25.0, interval_cv=1.0, window_sizes=HUMAN_WINDOWS,
        ua_families=BROWSER_UAS + ("msie",), forged_ua_rate=0.0, traversal="targeted_walk",
        session_length=(1, 40), session_length_mean=7.0,
        description="Browser user following links toward products; irregular dwell times."),
    "scraper_bot": ActorProfile(
        kind="scraper_bot", interval_mean=2.0, interval_cv=0.02, window_sizes=TINY_WINDOWS,
        ua_families=AUTOMATION_UAS, forged_ua_rate=0.3, traversal="breadth_exhaustive",
        session_length=(10, 40),
        description="Crawler sweeping the site breadth-first at a fixed pace."),
    "monitor_bot": ActorProfile(
        kind="monitor_bot", interval_mean=60.0, interval_cv=0.005, window_sizes=((800, 600),),
        ua_families=("headless", "chrome"), forged_ua_rate=0.0, traversal="single_page_repeat",
        session_length=(6, 30),
        description="Uptime/price monitor polling one page on a clock."),
    "scalper_bot": ActorProfile(
        kind="scalper_bot", interval_mean=1.5, interval_cv=0.4, window_sizes=((1280, 720), (800, 600)),
        ua_families=("chrome", "chrome_mac"), forged_ua_rate=0.0, traversal="purchase_rush",
        session_length=(5, 25),
        description="Checkout bot cycling product -> cart -> checkout as fast as possible."),
    "stealth_bot": ActorProfile(
        kind="stealth_bot", interval_mean=12.0, interval_cv=0.8, window_sizes=HUMAN_WINDOWS,
        ua_families=BROWSER_UAS, forged_ua_rate=0.0, traversal="breadth_exhaustive",
        session_length=(8, 40),
        description="Real-browser bot with human-like technical attributes and pacing; "
                    "betrayed only by exhaustive sweeps or single-page polling."),
}


def describe_profiles() -> Dict[str, dict]:
    """Catalog of the built-in actor presets, one per actor kind."""
    doc = ActorProfile.__doc__
    return {kind: {**asdict(p), "field_docs": doc} for kind, p in PRESETS.items()}


@dataclass
class CorpusSpec:
    seed: int
    n_sessions: int
    mix: Mapping[str, float]
    sitemap: SiteMap = field(default_factory=default_sitemap)
    cloud_ip_fraction_for_bots: float = 0.3
    internal_account_fraction_for_humans: float = 0.15

    def validate(self) -> None:
        if self.n_sessions <= 0:
            raise ValueError("n_sessions must be positive")
        unknown = set(self.mix) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown actor kinds in mix: {sorted(unknown)}")
        for kind, frac in self.mix.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"mix fraction for {kind} outside [0, 1]: {frac}")
        total = math.fsum(self.mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mix fractions must sum to 1, got {total!r} from {dict(self.mix)}")
        for name in ("cloud_ip_fraction_for_bots", "internal_account_fraction_for_humans"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "CorpusSpec":
        return cls(
            seed=int(cfg["seed"]),
            n_sessions=int(cfg["n_sessions"]),
            mix={str(k): float(v) for k, v in cfg["mix"].items()},
            cloud_ip_fraction_for_bots=float(cfg.get("cloud_ip_fraction_for_bots", 0.3)),
            internal_account_fraction_for_humans=float(cfg.get("internal_account_fraction_for_humans", 0.15)),
        )

    def to_mapping(self) -> dict:
        return {
            "seed": self.seed,
            "n_sessions": self.n_sessions,
            "mix": dict(self.mix),
            "cloud_ip_fraction_for_bots": self.cloud_ip_fraction_for_bots,
            "internal_account_fraction_for_humans": self.internal_account_fraction_for_humans,
        }


def apportion(mix: Mapping[str, float], n: int) -> Dict[str, int]:
    """Largest-remainder split of ``n`` sessions by ``mix`` fractions."""
    kinds = [k for k in KINDS if mix.get(k, 0.0) > 0]
    raw = {k: mix[k] * n for k in kinds}
    counts = {k: int(math.floor(raw[k])) for k in kinds}
    rest = n - sum(counts.values())
    order = sorted(kinds, key=lambda k: (-(raw[k] - counts[k]), KINDS.index(k)))
    for k in order[:rest]:
        counts[k] += 1
    return counts


# -- sampling helpers -------------------------------------------------------

def _random_ip(rng: np.random.Generator, cidrs: Sequence[str]) -> str:
    net = ipaddress.ip_network(cidrs[int(rng.integers(len(cidrs)))])
    offset = int(rng.integers(1, min(net.num_addresses - 1, 2**62)))
    return str(net.network_address + offset)


def _residential_ip(rng: np.random.Generator) -> str:
    if rng.random() < 0.1:
        return _random_ip(rng, (RESIDENTIAL_V6,))
    return _random_ip(rng, RESIDENTIAL_CIDRS)


def _prefix_cvs_ok(intervals: np.ndarray, min_cv: float) -> bool:
    for end in range(4, len(intervals) + 1):
        head = intervals[:end]
        if head.std() / head.mean() < min_cv:
            return False
    return True


def sample_intervals(rng: np.random.Generator, mean: float, cv: float, n: int,
                     irregular_floor: Optional[float] = None) -> np.ndarray:
    """Draw ``n`` inter-hit gaps in seconds.

    Low-CV actors (``cv <= 0.05``) get bounded uniform jitter so every sample
    has CV at most ``cv * sqrt(3)``.  Others draw from a gamma law; with
    ``irregular_floor`` set, draws are repeated until every prefix of four or
    more gaps has CV at least that floor.
    """
    if n == 0:
        return np.zeros(0)
    if cv <= 0.05:
        half_width = cv * math.sqrt(3.0)
        return mean * (1.0 + rng.uniform(-half_width, half_width, size=n))
    shape = 1.0 / (cv * cv)
    for _ in range(1000):
        draws = rng.gamma(shape, mean / shape, size=n) + 0.2
        if irregular_floor is None or _prefix_cvs_ok(draws, irregular_floor):
            return draws
    raise RuntimeError("could not draw irregular intervals")  # pragma: no cover


def _ua_string(rng: np.random.Generator, family: str) -> Tuple[str, str]:
    template, java = USER_AGENTS[family]
    return template.replace("{v}", str(int(rng.integers(100, 125)) if "Chrome" in template or "Firefox" in template
                                       else int(rng.integers(1, 9)))), java


def _human_java(rng: np.random.Generator, family_java: str) -> str:
    if family_java == "Y":
        return "Y"
    return "N" if rng.random() < 0.85 else "U"


def _choose(rng: np.random.Generator, items: Sequence, weights: Optional[Sequence[float]] = None):
    if weights is None:
        return items[int(rng.integers(len(items)))]
    w = np.asarray(weights, dtype=float)
    return items[int(rng.choice(len(items), p=w / w.sum()))]


# -- traversal models --------------------------------------------------------
# each returns a list of (pagename, referrer) pairs; referrer None on the first hit

_WALK_WEIGHTS = {"product": 3.0, "category": 1.5, "search": 1.0, "cart": 0.8,
                 "checkout": 1.5, "content": 0.4, "other": 0.4}


def _targeted_walk(rng, site: SiteMap, n: int) -> List[Tuple[str, Optional[str]]]:
    ptype = site.page_type
    current = _choose(rng, site.entry_pages)
    out = [(current, None)]
    history = [current]
    while len(out) < n:
        u = rng.random()
        if u < 0.04:
            nxt = current
        elif u < 0.20 and len(history) > 1:
            nxt = history[-2]
        else:
            links = site.links.get(current) or site.entry_pages
            nxt = _choose(rng, links, [_WALK_WEIGHTS[ptype[p]] for p in links])
        out.append((nxt, current))
        history.append(nxt)
        current = nxt
    return out


def _breadth_exhaustive(rng, site: SiteMap, n: int) -> List[Tuple[str, Optional[str]]]:
    start = _choose(rng, site.entry_pages)
    order: List[Tuple[str, Optional[str]]] = [(start, None)]
    seen = {start}
    queue = deque([start])
    while queue and len(order) < n:
        page = queue.popleft()
        for nxt in site.links.get(page, ()):
            if nxt not in seen:
                seen.add(nxt)
                order.append((nxt, page))
                queue.append(nxt)
                if len(order) >= n:
                    break
    # site exhausted: sweep again from the start page
    while len(order) < n:
        prev = order[-1][0]
        order.append((start, prev))
    return order[:n]


def _single_page_repeat(rng, site: SiteMap, n: int) -> List[Tuple[str, Optional[str]]]:
    ptype = site.page_type
    targets = [p for p, _ in site.pages if ptype[p] in ("product", "content")]
    page = _choose(rng, targets)
    return [(page, None)] + [(page, page)] * (n - 1)


def _purchase_rush(rng, site: SiteMap, n: int) -> List[Tuple[str, Optional[str]]]:
    ptype = site.page_type
    products = [p for p, _ in site.pages if ptype[p] == "product"]
    target = _choose(rng, products)
    checkout = [p for p, _ in site.pages if ptype[p] == "checkout"]
    cycle = [target, "cart"] + checkout if "cart" in ptype else [target] + checkout
    out: List[Tuple[str, Optional[str]]] = []
    prev = None
    i = 0
    while len(out) < n:
        page = cycle[i % len(cycle)]
        out.append((page, prev))
        prev = page
        i += 1
    return out


_TRAVERSALS = {
    "targeted_walk": _targeted_walk,
    "breadth_exhaustive": _breadth_exhaustive,
    "single_page_repeat": _single_page_repeat,
    "purchase_rush": _purchase_rush,
}


@dataclass
class _SessionPlan:
    kind: str
    ua: str
    java: str
    width: int
    height: int
    ip: str
    account_id: Optional[str]
    traversal: str
    length: int
    visit_num: int
    hourly_visitor: bool
    purchases_before: int


def _plan_session(rng: np.random.Generator, kind: str, spec: CorpusSpec) -> _SessionPlan:
    prof = PRESETS[kind]
    lo, hi = prof.session_length
    if prof.session_length_mean:
        length = int(min(hi, max(lo, rng.geometric(1.0 / prof.session_length_mean))))
    else:
        length = int(rng.integers(lo, hi + 1))
    width, height = _choose(rng, prof.window_sizes)
    traversal = prof.traversal
    account_id = None

    if kind == "human":
        fam = _choose(rng, prof.ua_families, [5, 2, 3, 2, 4, 2, 0.3])
        ua, fam_java = _ua_string(rng, fam)
        java = _human_java(rng, fam_java)
        height = max(320, height - int(rng.integers(0, 40)))
        if rng.random() < spec.internal_account_fraction_for_humans:
            account_id = _choose(rng, INTERNAL_ACCOUNTS)
            ip = _random_ip(rng, (CORPORATE_CIDR,)) if rng.random() < 0.5 else _residential_ip(rng)
        else:
            ip = _residential_ip(rng)
            if rng.random() < 0.4:
                account_id = f"cust-{int(rng.integers(10**6)):06d}"
        visit_num = int(min(20, rng.geometric(0.5)))
        hourly = bool(rng.random() < 0.03)
        purchases = int(rng.poisson(0.4))
    else:
        ip = _random_ip(rng, DEFAULT_CLOUD_CIDRS) if rng.random() < spec.cloud_ip_fraction_for_bots \
            else _residential_ip(rng)
        if kind == "scraper_bot":
            u = rng.random()
            if u < 0.6:
                ua, java = _ua_string(rng, _choose(rng, AUTOMATION_UAS))
                width, height = (0, 0) if rng.random() < 0.5 else (width, height)
            elif u < 0.85:
                # browser UA claiming Java support it cannot have
                ua, _ = _ua_string(rng, _choose(rng, ("chrome", "firefox")))
                java = "Y"
                width, height = _choose(rng, HUMAN_WINDOWS)
            else:
                ua, java = _ua_string(rng, "chrome")
            visit_num = int(rng.integers(1, 500))
            hourly = bool(rng.random() < 0.7)
            purchases = 0
        elif kind == "monitor_bot":
            ua, java = _ua_string(rng, _choose(rng, prof.ua_families, [0.6, 0.4]))
            visit_num = int(rng.integers(100, 5000))
            hourly = True
            purchases = 0
        elif kind == "scalper_bot":
            ua, java = _ua_string(rng, _choose(rng, prof.ua_families))
            account_id = f"cust-{int(rng.integers(10**6)):06d}"
            visit_num = int(rng.integers(10, 300))
            hourly = bool(rng.random() < 0.8)
            purchases = int(rng.integers(3, 40))
        else:  # stealth_bot
            fam = _choose(rng, prof.ua_families)
            ua, fam_java = _ua_string(rng, fam)
            java = _human_java(rng, fam_java)
            height = max(320, height - int(rng.integers(0, 40)))
            if rng.random() < 0.4:
                traversal = "single_page_repeat"
            visit_num = int(min(20, rng.geometric(0.45)))
            hourly = bool(rng.random() < 0.05)
            purchases = 0
    return _SessionPlan(kind=kind, ua=ua, java=java, width=int(width), height=int(height), ip=ip,
                        account_id=account_id, traversal=traversal, length=length,
                        visit_num=visit_num, hourly_visitor=hourly, purchases_before=purchases)


def _generate_session(rng: np.random.Generator, index: int, kind: str, spec: CorpusSpec) -> List[HitRecord]:
    site = spec.sitemap
    ptype = site.page_type
    plan = _plan_session(rng, kind, spec)
    prof = PRESETS[kind]
    path = _TRAVERSALS[plan.traversal](rng, site, plan.length)
    floor = 0.2 if kind in ("human", "stealth_bot") else None
    gaps = sample_intervals(rng, prof.interval_mean, prof.interval_cv, len(path) - 1, irregular_floor=floor)
    start = BASE_TIMESTAMP_MS + int(rng.integers(0, DAY_MS))
    offsets = np.concatenate([[0.0], np.cumsum(gaps)]) * 1000.0
    label = "human" if kind == "human" else "bot"
    sid = f"s{index:06d}"
    entry = path[0][0]
    purchases = plan.purchases_before
    hits = []
    for i, ((page, ref), off) in enumerate(zip(path, offsets)):
        hits.append(HitRecord(
            timestamp=start + int(round(off)),
            ip=plan.ip,
            account_id=plan.account_id,
            user_agent=plan.ua,
            browser_width=plan.width,
            browser_height=plan.height,
            java_enabled=plan.java,
            pagename=page,
            prev_pagename=ref if i > 0 else None,
            first_hit_pagename=entry,
            page_type=ptype[page],
            visit_num=plan.visit_num,
            visit_page_num=i + 1,
            hourly_visitor=plan.hourly_visitor,
            last_purchase_num=purchases,
            session_id=sid,
            label=label,
        ))
        if page == "checkout_confirm":
            purchases += 1
    return hits


def generate_corpus(spec: CorpusSpec) -> Tuple[List[HitRecord], Dict[str, str]]:
    """Generate the interleaved hit stream and the session truth table.

    Returns ``(hits, truth)`` where hits are ordered by timestamp (ties by
    session then position) and ``truth`` maps session id to human/bot.
    """
    spec.validate()
    counts = apportion(spec.mix, spec.n_sessions)
    kinds = [k for k in KINDS for _ in range(counts.get(k, 0))]
    root = np.random.SeedSequence(spec.seed)
    assign_seq, *session_seqs = root.spawn(spec.n_sessions + 1)
    order = np.random.default_rng(assign_seq).permutation(len(kinds))
    kinds = [kinds[i] for i in order]

    keyed = []
    truth: Dict[str, str] = {}
    for index, (kind, seq) in enumerate(zip(kinds, session_seqs)):
        hits = _generate_session(np.random.default_rng(seq), index, kind, spec)
        truth[hits[0].session_id] = "human" if kind == "human" else "bot"
        keyed.extend(((h.timestamp, index, pos), h) for pos, h in enumerate(hits))
    keyed.sort(key=lambda t: t[0])
    return [h for _, h in keyed], truth


def session_kinds(spec: CorpusSpec) -> Dict[str, str]:
    """Actor kind of each generated session id (same assignment as generate_corpus)."""
    counts = apportion(spec.mix, spec.n_sessions)
    kinds = [k for k in KINDS for _ in range(counts.get(k, 0))]
    assign_seq = np.random.SeedSequence(spec.seed).spawn(spec.n_sessions + 1)[0]
    order = np.random.default_rng(assign_seq).permutation(len(kinds))
    return {f"s{i:06d}": kinds[j] for i, j in enumerate(order)}


def write_truth(truth: Mapping[str, str], out) -> None:
    out.write("session_id,label\n")
    for sid in sorted(truth):
        out.write(f"{sid},{truth[sid]}\n")


def read_truth(stream) -> Dict[str, str]:
    import csv
    reader = csv.reader(stream)
    rows = list(reader)
    if rows and rows[0] and rows[0][0] == "session_id":
        rows = rows[1:]
    return {r[0]: r[1].strip() for r in rows if len(r) >= 2}


def default_labeling_mapping() -> dict:
    """Labeling config matching the simulator's address plan and account pool."""
    return {"internal_accounts": list(INTERNAL_ACCOUNTS), "cloud_cidrs": list(DEFAULT_CLOUD_CIDRS)}
