"""Per-hit feature encoding for the hit classifier.

Numeric fields are min-max scaled (clamped to [0, 1]), booleans flagged, and
categoricals one-hot encoded with rare values folded into ``Other``.
Identity attributes (ip, account id) are deliberately left out.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .groundtruth import ua_family
from .ingest import HitRecord

ENCODER_FORMAT = "botcascade-encoder"
ENCODER_VERSION = "1"
OTHER = "Other"

NUMERIC_FEATURES = ("browser_width", "browser_height", "visit_num", "visit_page_num", "last_purchase_num")
FLAG_FEATURES = ("hourly_visitor",)
CATEGORICAL_FEATURES = ("user_agent", "page_type", "java_enabled")


def _category(hit: HitRecord, name: str) -> str:
    if name == "user_agent":
        return ua_family(hit.user_agent)
    return getattr(hit, name)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: str = "unknown"


@dataclass(frozen=True)
class FeatureEncoder:
    vocabularies: Tuple[Tuple[str, Tuple[str, ...]], ...]
    bounds: Tuple[Tuple[str, float, float], ...]
    rare_threshold: float = 0.001

    def __post_init__(self):
        for name, vocab in self.vocabularies:
            if OTHER not in vocab:
                raise ValueError(f"vocabulary {name} lacks {OTHER!r}")
        for name, lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"bad scaling bounds for {name}: {lo} > {hi}")

    @property
    def feature_names(self) -> List[str]:
        names = [name for name, _, _ in self.bounds]
        names.extend(FLAG_FEATURES)
        for feat, vocab in self.vocabularies:
            names.extend(f"{feat}_{v}" for v in vocab)
        return names

    @property
    def total_width(self) -> int:
        return len(self.bounds) + len(FLAG_FEATURES) + sum(len(v) for _, v in self.vocabularies)

    def blocks(self) -> Dict[str, slice]:
        """Column slice of each one-hot block."""
        out = {}
        start = len(self.bounds) + len(FLAG_FEATURES)
        for feat, vocab in self.vocabularies:
            out[feat] = slice(start, start + len(vocab))
            start += len(vocab)
        return out

    def encode(self, hit: HitRecord) -> FeatureVector:
        return FeatureVector(values=self.encode_values(hit), label=hit.label)

    def encode_values(self, hit: HitRecord) -> np.ndarray:
        out = np.zeros(self.total_width)
        for i, (name, lo, hi) in enumerate(self.bounds):
            x = float(getattr(hit, name))
            out[i] = 0.0 if hi == lo else min(1.0, max(0.0, (x - lo) / (hi - lo)))
        pos = len(self.bounds)
        for name in FLAG_FEATURES:
            out[pos] = 1.0 if getattr(hit, name) else 0.0
            pos += 1
        for feat, vocab in self.vocabularies:
            value = _category(hit, feat)
            idx = vocab.index(value) if value in vocab else vocab.index(OTHER)
            out[pos + idx] = 1.0
            pos += len(vocab)
        return out

    def encode_many(self, hits: Sequence[HitRecord]) -> np.ndarray:
        if not hits:
            return np.zeros((0, self.total_width))
        return np.stack([self.encode_values(h) for h in hits])

    def to_dict(self) -> dict:
        return {
            "format": ENCODER_FORMAT,
            "version": ENCODER_VERSION,
            "rare_threshold": self.rare_threshold,
            "numeric": [[n, lo, hi] for n, lo, hi in self.bounds],
            "flags": list(FLAG_FEATURES),
            "categorical": [[n, list(v)] for n, v in self.vocabularies],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureEncoder":
        if doc.get("format") != ENCODER_FORMAT:
            raise ValueError("not an encoder document")
        if str(doc.get("version")) != ENCODER_VERSION:
            raise ValueError(f"unsupported encoder version {doc.get('version')!r}")
        return cls(
            vocabularies=tuple((n, tuple(v)) for n, v in doc["categorical"]),
            bounds=tuple((n, float(lo), float(hi)) for n, lo, hi in doc["numeric"]),
            rare_threshold=float(doc["rare_threshold"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def fit_encoder(hits: Sequence[HitRecord], rare_threshold: float = 0.001) -> FeatureEncoder:
    """Fit vocabularies and scaling bounds on ``hits``.

    A categorical value whose relative frequency is strictly below
    ``rare_threshold`` is folded into ``Other``.  Vocabularies are ordered by
    frequency (descending), ties lexicographically, with ``Other`` last.
    """
    if not hits:
        raise ValueError("cannot fit an encoder on no hits")
    n = len(hits)
    vocabs = []
    for feat in CATEGORICAL_FEATURES:
        counts = Counter(_category(h, feat) for h in hits)
        kept = [v for v, c in counts.items() if c / n >= rare_threshold and v != OTHER]
        kept.sort(key=lambda v: (-counts[v], v))
        vocabs.append((feat, tuple(kept) + (OTHER,)))
    bounds = []
    for name in NUMERIC_FEATURES:
        vals = [getattr(h, name) for h in hits]
        bounds.append((name, float(min(vals)), float(max(vals))))
    return FeatureEncoder(vocabularies=tuple(vocabs), bounds=tuple(bounds), rare_threshold=rare_threshold)


def encode_hit(hit: HitRecord, enc: FeatureEncoder) -> FeatureVector:
    return enc.encode(hit)
