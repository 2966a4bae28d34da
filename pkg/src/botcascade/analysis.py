"""Evaluation: classification metrics, permutation importance, graph-size study."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

SCORINGS = ("r2", "negative_mse", "accuracy")


@dataclass
class MetricReport:
    """Binary metrics with bot as the positive class; ``None`` marks undefined."""

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: Optional[float]
    recall: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    auroc: Optional[float]

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("accuracy", "recall", "precision", "f1", "auroc",
                                              "tp", "fp", "tn", "fn")}


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def auroc_rank(scores: Sequence[float], positives: Sequence[bool]) -> Optional[float]:
    """Mann-Whitney AUROC with midranks, so tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc_trapezoid(scores: Sequence[float], positives: Sequence[bool]) -> Optional[float]:
    """AUROC by sweeping thresholds and integrating the ROC curve."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    tpr, fpr = [0.0], [0.0]
    for t in np.unique(s)[::-1]:
        above = s >= t
        tpr.append((above & pos).sum() / n_pos)
        fpr.append((above & ~pos).sum() / n_neg)
    area = 0.0
    for i in range(1, len(tpr)):
        area += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0
    return float(area)


def confusion_report(p_bot: Sequence[float], is_bot: Sequence[bool], threshold: float = 0.5) -> MetricReport:
    p = np.asarray(p_bot, dtype=np.float64)
    y = np.asarray(is_bot, dtype=bool)
    if len(p) == 0:
        raise ValueError("cannot score an empty prediction set")
    pred = p >= threshold
    tp = int((pred & y).sum())
    fp = int((pred & ~y).sum())
    tn = int((~pred & ~y).sum())
    fn = int((~pred & y).sum())
    recall = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    if recall is None or precision is None:
        f1 = None
    elif recall + precision == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricReport(tp, fp, tn, fn, (tp + tn) / len(p), recall, precision, f1, auroc_rank(p, y))


def score(predictions: Iterable[Tuple[str, float]], truth: Mapping[str, str],
          threshold: float = 0.5) -> MetricReport:
    """Metrics for ``(subject, p_bot)`` pairs against bot/human truth."""
    subjects, probs, labels = [], [], []
    for subject, p in predictions:
        if subject not in truth:
            raise KeyError(f"no truth label for {subject!r}")
        label = truth[subject]
        if label not in ("bot", "human"):
            raise ValueError(f"truth for {subject!r} is {label!r}, expected bot or human")
        subjects.append(subject)
        probs.append(float(p))
        labels.append(label == "bot")
    # Sort by subject so the result does not depend on input order.
    order = sorted(range(len(subjects)), key=subjects.__getitem__)
    return confusion_report([probs[i] for i in order], [labels[i] for i in order], threshold)


# -- permutation importance ---------------------------------------------------------

def r2_score(y, pred) -> float:
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("r2 is undefined for a constant target")
    return 1.0 - float(((y - pred) ** 2).sum()) / ss_tot


def negative_mse(y, pred) -> float:
    y = np.asarray(y, dtype=np.float64)
    return -float(np.mean((y - np.asarray(pred, dtype=np.float64)) ** 2))


def accuracy_score(y, pred) -> float:
    return float(np.mean((np.asarray(pred) >= 0.5) == (np.asarray(y) >= 0.5)))


SCORERS: Dict[str, Callable] = {"r2": r2_score, "negative_mse": negative_mse, "accuracy": accuracy_score}


@dataclass
class ImportanceRow:
    feature: str
    mean: float
    std: float
    scoring: str
    constant: bool = False


def permutation_importance(predict: Callable[[np.ndarray], np.ndarray], x, y, k: int = 50,
                           scoring: str = "r2", seed: int = 0,
                           feature_names: Optional[Sequence[str]] = None) -> List[ImportanceRow]:
    """Drop in score when each column is shuffled, averaged over ``k`` shuffles.

    ``predict`` maps a feature matrix to p_bot; ``y`` is 0/1 (1 = bot).  The
    baseline score is computed once on the unshuffled data.  Shuffle ``j`` of
    column ``d`` uses its own seed derived from ``(seed, d, j)``.  Constant
    columns are reported with importance 0 and flagged, since shuffling
    cannot change them.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if scoring not in SCORERS:
        raise ValueError(f"unknown scoring {scoring!r}; choose from {SCORERS}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2 or len(x) != len(y):
        raise ValueError("need a 2-D feature matrix with >= 2 rows matching y")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(x.shape[1])]
    if len(names) != x.shape[1]:
        raise ValueError("feature_names length does not match column count")
    fn = SCORERS[scoring]
    base = fn(y, predict(x))
    rows = []
    for d, name in enumerate(names):
        column = x[:, d]
        if np.all(column == column[0]):
            rows.append(ImportanceRow(name, 0.0, 0.0, scoring, constant=True))
            continue
        shuffled = np.empty(k)
        work = x.copy()
        for j in range(k):
            rng = np.random.default_rng(np.random.SeedSequence([seed, d, j]))
            work[:, d] = column[rng.permutation(len(column))]
            shuffled[j] = fn(y, predict(work))
        rows.append(ImportanceRow(name, float(base - shuffled.mean()), float(shuffled.std()), scoring))
    rows.sort(key=lambda r: -r.mean)
    return rows


IMPORTANCE_COLUMNS = ("feature", "r2_mean", "r2_std", "negative_mse_mean", "negative_mse_std")


def write_importance_csv(r2_rows: Sequence[ImportanceRow], mse_rows: Sequence[ImportanceRow], out) -> None:
    """Both scorings side by side, ordered by the r2 importance."""
    mse = {r.feature: r for r in mse_rows}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(IMPORTANCE_COLUMNS)
    for r in r2_rows:
        m = mse.get(r.feature)
        writer.writerow([r.feature, _fmt(r.mean), _fmt(r.std),
                         _fmt(m.mean) if m else "", _fmt(m.std) if m else ""])


# -- graph-size study -------------------------------------------------------------

@dataclass
class SizeRow:
    nodes: int
    graphs: int
    report: Optional[MetricReport]


def graph_size_study(p_bot: Sequence[float], node_counts: Sequence[int], is_bot: Sequence[bool],
                     max_nodes: int = 10) -> List[SizeRow]:
    """Metrics per node-count bucket 1..max_nodes; empty buckets have no report."""
    p = np.asarray(p_bot, dtype=np.float64)
    n = np.asarray(node_counts)
    y = np.asarray(is_bot, dtype=bool)
    rows = []
    for size in range(1, max_nodes + 1):
        sel = n == size
        count = int(sel.sum())
        rows.append(SizeRow(size, count, confusion_report(p[sel], y[sel]) if count else None))
    return rows


def study_graphs(model, graphs, truth: Mapping[str, str], max_nodes: int = 10) -> List[SizeRow]:
    """Run a DGCNN model over labeled WT graphs and bucket by node count."""
    keep = [g for g in graphs if truth.get(g.session_id) in ("bot", "human")]
    probs = model.classify(keep)
    return graph_size_study(probs, [g.node_count for g in keep],
                            [truth[g.session_id] == "bot" for g in keep], max_nodes)


SIZE_COLUMNS = ("nodes", "graphs", "accuracy", "recall", "precision", "f1", "auroc")


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_size_csv(rows: Sequence[SizeRow], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SIZE_COLUMNS)
    for row in rows:
        r = row.report
        metrics = [None] * 5 if r is None else [r.accuracy, r.recall, r.precision, r.f1, r.auroc]
        writer.writerow([row.nodes, row.graphs] + [_fmt(m) for m in metrics])


def stratified_split(keys: Sequence[str], labels: Sequence[str], train_fraction: float = 0.7,
                     seed: int = 0) -> Tuple[List[str], List[str]]:
    """Split keys into train/test keeping each label's proportion."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in sorted(set(labels)):
        group = sorted(k for k, lab in zip(keys, labels) if lab == label)
        idx = rng.permutation(len(group))
        cut = int(round(train_fraction * len(group)))
        train.extend(group[i] for i in idx[:cut])
        test.extend(group[i] for i in idx[cut:])
    return sorted(train), sorted(test)

