"""Graph classifier over WT graphs: GCN stack, sort pooling, 1-D conv head.

Layout (defaults)::

    X (n x f) -> 4 graph convolutions (32, 32, 32, 1; tanh), concatenated -> n x 97
              -> sort pooling, k = 35                                       -> 35 x 97
              -> conv1: 16 filters, kernel = stride = 97 (one node per step) -> 35 x 16, relu
              -> max pool 2                                                 -> 17 x 16
              -> conv2: 32 filters, kernel 5, stride 1                      -> 13 x 32, relu
              -> dense 128 relu -> dropout 0.5 -> dense 1 sigmoid

Because conv1's kernel and stride both equal the row width it is the same as
applying one dense layer to every pooled row, which is how it is computed.
Propagation uses ``P = D^-1 (A + I)`` on the symmetrized adjacency.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels, nn
from .wtgraph import WTGraph

logger = logging.getLogger(__name__)

MODEL_FORMAT = "botcascade-dgcnn"
OTHER = "Other"
EXTRA_FEATURES = ("log_hit_count", "first_visit_offset", "in_degree", "out_degree")


# -- node features --------------------------------------------------------------

@dataclass(frozen=True)
class NodeFeatureEncoder:
    page_types: Tuple[str, ...]

    def __post_init__(self):
        if OTHER not in self.page_types:
            raise ValueError(f"page type vocabulary lacks {OTHER!r}")

    @property
    def width(self) -> int:
        return len(self.page_types) + len(EXTRA_FEATURES)

    @property
    def feature_names(self) -> List[str]:
        return [f"page_type_{t}" for t in self.page_types] + list(EXTRA_FEATURES)

    def to_dict(self) -> dict:
        return {"page_types": list(self.page_types)}

    @classmethod
    def from_dict(cls, doc: dict) -> "NodeFeatureEncoder":
        return cls(tuple(doc["page_types"]))


def fit_node_encoder(graphs: Sequence[WTGraph]) -> NodeFeatureEncoder:
    seen = sorted({n.page_type for g in graphs for n in g.nodes.values()} - {OTHER})
    return NodeFeatureEncoder(tuple(seen) + (OTHER,))


@dataclass
class GraphTensor:
    """Node features plus the symmetrized, self-looped adjacency (CSR)."""

    x: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    names: Tuple[str, ...]
    label: Optional[int] = None

    def __post_init__(self):
        n = self.x.shape[0]
        if len(self.indptr) != n + 1 or len(self.names) != n:
            raise ValueError("adjacency/name count does not match feature rows")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("adjacency endpoint out of range")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def propagation(self) -> np.ndarray:
        """CSR data of ``D^-1 A~``: each row's entries are ``1 / deg(row)``."""
        deg = np.diff(self.indptr).astype(np.float64)
        return np.repeat(1.0 / deg, np.diff(self.indptr))

    def dense_propagation(self) -> np.ndarray:
        p = np.zeros((self.n, self.n))
        data = self.propagation()
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            p[i, self.indices[lo:hi]] = data[lo:hi]
        return p

    def permuted(self, perm: Sequence[int]) -> "GraphTensor":
        """The same graph with node ``perm[i]`` moved to row ``i``."""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        rows = []
        for new_i, old_i in enumerate(perm):
            nbrs = self.indices[self.indptr[old_i]:self.indptr[old_i + 1]]
            rows.append(np.sort(inverse[nbrs]))
        return GraphTensor(self.x[perm].copy(), _indptr_of(rows), _concat(rows),
                           tuple(self.names[i] for i in perm), self.label)


def _indptr_of(rows) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([len(r) for r in rows])]).astype(np.int64)


def _concat(rows) -> np.ndarray:
    return np.concatenate(rows).astype(np.int64) if rows else np.zeros(0, dtype=np.int64)


def graph_to_tensor(g: WTGraph, encoder: NodeFeatureEncoder, label: Optional[int] = None) -> GraphTensor:
    """Encode a WT graph; nodes are ordered by pagename.

    Node features: one-hot page type, ``log1p(hit_count)``, first-visit offset
    from session start scaled to [0, 1], in-degree and out-degree (distinct
    directed edges).  The benchmark label is not an input.
    """
    names = tuple(sorted(g.nodes))
    index = {name: i for i, name in enumerate(names)}
    n = len(names)
    vocab = {t: i for i, t in enumerate(encoder.page_types)}
    x = np.zeros((n, encoder.width))
    start = g.start_timestamp
    offsets = np.array([g.nodes[name].first_visit_timestamp - start for name in names], dtype=np.float64)
    span = offsets.max() if n else 0.0
    base = len(encoder.page_types)
    in_deg = np.zeros(n)
    out_deg = np.zeros(n)
    neighbours = [{i} for i in range(n)]
    for a, b in g.edges:
        i, j = index[a], index[b]
        out_deg[i] += 1
        in_deg[j] += 1
        neighbours[i].add(j)
        neighbours[j].add(i)
    for i, name in enumerate(names):
        node = g.nodes[name]
        x[i, vocab.get(node.page_type, vocab[OTHER])] = 1.0
        x[i, base] = math.log1p(node.hit_count)
        x[i, base + 1] = offsets[i] / span if span > 0 else 0.0
        x[i, base + 2] = in_deg[i]
        x[i, base + 3] = out_deg[i]
    rows = [np.array(sorted(nb), dtype=np.int64) for nb in neighbours]
    return GraphTensor(x, _indptr_of(rows), _concat(rows), names, label)


# -- configuration ----------------------------------------------------------------

@dataclass
class DgcnnConfig:
    gcn_units: Tuple[int, ...] = (32, 32, 32, 1)
    sort_pool_k: int = 35
    conv1_filters: int = 16
    conv1_kernel: int = 97
    pool_size: int = 2
    conv2_filters: int = 32
    conv2_kernel: int = 5
    dense_units: int = 128
    dropout: float = 0.5
    learning_rate: float = 0.0001
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    balance_classes: bool = True

    def __post_init__(self):
        self.gcn_units = tuple(int(u) for u in self.gcn_units)
        if self.conv1_kernel != sum(self.gcn_units):
            raise ValueError(f"conv1 kernel {self.conv1_kernel} must equal the concatenated GCN width "
                             f"{sum(self.gcn_units)}")
        if self.sort_pool_k < 1:
            raise ValueError("sort_pool_k must be >= 1")
        if self.conv2_positions < 1:
            raise ValueError("sort_pool_k too small for the pooling and conv2 kernel")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    @property
    def concat_width(self) -> int:
        return sum(self.gcn_units)

    @property
    def pooled_positions(self) -> int:
        return self.sort_pool_k // self.pool_size

    @property
    def conv2_positions(self) -> int:
        return self.pooled_positions - self.conv2_kernel + 1

    @property
    def flat_width(self) -> int:
        return self.conv2_positions * self.conv2_filters

    @classmethod
    def from_mapping(cls, cfg) -> "DgcnnConfig":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown dgcnn config keys: {sorted(unknown)}")
        return cls(**dict(cfg))


def param_shapes(config: DgcnnConfig, feature_width: int) -> Dict[str, Tuple[int, ...]]:
    shapes = {}
    prev = feature_width
    for i, units in enumerate(config.gcn_units, start=1):
        shapes[f"gcn.W{i}"] = (prev, units)
        prev = units
    shapes["conv1.W"] = (config.conv1_kernel, config.conv1_filters)
    shapes["conv1.b"] = (config.conv1_filters,)
    shapes["conv2.W"] = (config.conv2_kernel * config.conv1_filters, config.conv2_filters)
    shapes["conv2.b"] = (config.conv2_filters,)
    shapes["dense.W"] = (config.flat_width, config.dense_units)
    shapes["dense.b"] = (config.dense_units,)
    shapes["out.W"] = (config.dense_units, 1)
    shapes["out.b"] = (1,)
    return shapes


# -- forward pieces ---------------------------------------------------------------

@dataclass
class Batch:
    """Several graphs as one block-diagonal graph."""

    x: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    p_data: np.ndarray
    pt_data: np.ndarray
    offsets: np.ndarray
    names: Tuple[Tuple[str, ...], ...]

    @classmethod
    def of(cls, tensors: Sequence[GraphTensor]) -> "Batch":
        xs, indptrs, indices, p_data, pt_data = [], [np.zeros(1, dtype=np.int64)], [], [], []
        offsets = [0]
        nnz = 0
        for t in tensors:
            base = offsets[-1]
            xs.append(t.x)
            indptrs.append(t.indptr[1:] + nnz)
            indices.append(t.indices + base)
            p = t.propagation()
            p_data.append(p)
            # A~ is symmetric, so P^T has the same pattern with entries 1/deg(col).
            deg = np.diff(t.indptr).astype(np.float64)
            pt_data.append(1.0 / deg[t.indices])
            nnz += len(t.indices)
            offsets.append(base + t.n)
        return cls(np.vstack(xs), np.concatenate(indptrs), np.concatenate(indices),
                   np.concatenate(p_data), np.concatenate(pt_data), np.asarray(offsets),
                   tuple(t.names for t in tensors))

    @property
    def size(self) -> int:
        return len(self.offsets) - 1

    def propagate(self, z: np.ndarray) -> np.ndarray:
        return _kernels.spmm(self.indptr, self.indices, self.p_data, z)

    def propagate_t(self, z: np.ndarray) -> np.ndarray:
        return _kernels.spmm(self.indptr, self.indices, self.pt_data, z)


def gcn_forward(batch: Batch, weights: Sequence[np.ndarray]):
    """Stacked ``tanh(P Z W)`` layers; returns the concatenation and a cache."""
    z = batch.x
    outs, inputs = [], []
    for w in weights:
        if z.shape[1] != w.shape[0]:
            raise ValueError(f"GCN shape mismatch: {z.shape} @ {w.shape}")
        pz = batch.propagate(z)
        z = np.tanh(pz @ w)
        inputs.append(pz)
        outs.append(z)
    return np.hstack(outs), (inputs, outs)


def sort_order(h: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Row order for sort pooling: last channel descending, ties broken by
    earlier channels (right to left, descending), then by node name."""
    name_rank = np.argsort(np.argsort(np.asarray(names, dtype=object)))
    keys = [name_rank] + [-h[:, c] for c in range(h.shape[1])]
    return np.lexsort(keys)


def sort_pooling(h: np.ndarray, k: int, names: Optional[Sequence[str]] = None):
    """Keep the top ``k`` rows in sort order, zero-padding when ``n < k``.

    Returns the pooled ``k x width`` matrix and the selected row indices.
    """
    n = h.shape[0]
    if names is None:
        names = [f"{i:09d}" for i in range(n)]
    order = sort_order(h, names)[:k]
    out = np.zeros((k, h.shape[1]))
    out[:len(order)] = h[order]
    return out, order


class DgcnnModel:
    def __init__(self, config: DgcnnConfig, encoder: NodeFeatureEncoder, params: Dict[str, np.ndarray],
                 history: Optional[List[float]] = None):
        expected = param_shapes(config, encoder.width)
        for name, shape in expected.items():
            if name not in params or params[name].shape != shape:
                raise ValueError(f"parameter {name} missing or mis-shaped (want {shape})")
        self.config = config
        self.encoder = encoder
        self.params = params
        self.history: List[float] = list(history or [])
        self.optimizer = nn.AdamState(config.learning_rate)

    @property
    def gcn_weights(self) -> List[np.ndarray]:
        return [self.params[f"gcn.W{i}"] for i in range(1, len(self.config.gcn_units) + 1)]

    # -- batched forward/backward ----------------------------------------------

    def _forward(self, batch: Batch, params, mask: Optional[np.ndarray]):
        cfg = self.config
        weights = [params[f"gcn.W{i}"] for i in range(1, len(cfg.gcn_units) + 1)]
        h, gcache = gcn_forward(batch, weights)
        b = batch.size
        k = cfg.sort_pool_k
        pooled = np.zeros((b, k, cfg.concat_width))
        selected = []
        for gi in range(b):
            lo, hi = batch.offsets[gi], batch.offsets[gi + 1]
            pooled[gi], order = sort_pooling(h[lo:hi], k, batch.names[gi])
            selected.append(order + lo)
        c1_pre = pooled @ params["conv1.W"] + params["conv1.b"]
        c1 = np.maximum(c1_pre, 0.0)
        m = cfg.pooled_positions
        ps = cfg.pool_size
        windows = c1[:, :m * ps].reshape(b, m, ps, cfg.conv1_filters)
        arg = windows.argmax(axis=2)
        mp = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
        q = cfg.conv2_positions
        kk = cfg.conv2_kernel
        cols = np.stack([mp[:, j:j + kk].reshape(b, -1) for j in range(q)], axis=1)
        c2_pre = cols @ params["conv2.W"] + params["conv2.b"]
        c2 = np.maximum(c2_pre, 0.0)
        flat = c2.reshape(b, -1)
        d_pre = flat @ params["dense.W"] + params["dense.b"]
        d = np.maximum(d_pre, 0.0)
        dd = d * mask if mask is not None else d
        s = (dd @ params["out.W"] + params["out.b"])[:, 0]
        cache = dict(batch=batch, h=h, gcache=gcache, selected=selected, pooled=pooled, c1_pre=c1_pre,
                     arg=arg, cols=cols, c2_pre=c2_pre, flat=flat, d_pre=d_pre, dd=dd, mask=mask)
        return s, cache

    def _backward(self, ds: np.ndarray, cache, params) -> Dict[str, np.ndarray]:
        cfg = self.config
        b = len(ds)
        grads = {}
        grads["out.W"] = cache["dd"].T @ ds[:, None]
        grads["out.b"] = np.array([ds.sum()])
        g = ds[:, None] @ params["out.W"].T
        if cache["mask"] is not None:
            g = g * cache["mask"]
        g = g * (cache["d_pre"] > 0)
        grads["dense.W"] = cache["flat"].T @ g
        grads["dense.b"] = g.sum(axis=0)
        g = (g @ params["dense.W"].T).reshape(b, cfg.conv2_positions, cfg.conv2_filters)
        g = g * (cache["c2_pre"] > 0)
        cols = cache["cols"]
        grads["conv2.W"] = np.einsum("bqi,bqo->io", cols, g)
        grads["conv2.b"] = g.sum(axis=(0, 1))
        gcols = (g @ params["conv2.W"].T).reshape(b, cfg.conv2_positions, cfg.conv2_kernel, cfg.conv1_filters)
        gmp = np.zeros((b, cfg.pooled_positions, cfg.conv1_filters))
        for j in range(cfg.conv2_positions):
            gmp[:, j:j + cfg.conv2_kernel] += gcols[:, j]
        gwin = np.zeros((b, cfg.pooled_positions, cfg.pool_size, cfg.conv1_filters))
        np.put_along_axis(gwin, cache["arg"][:, :, None, :], gmp[:, :, None, :], axis=2)
        gc1 = np.zeros((b, cfg.sort_pool_k, cfg.conv1_filters))
        gc1[:, :cfg.pooled_positions * cfg.pool_size] = gwin.reshape(b, -1, cfg.conv1_filters)
        gc1 = gc1 * (cache["c1_pre"] > 0)
        pooled = cache["pooled"]
        grads["conv1.W"] = np.einsum("bkc,bkf->cf", pooled, gc1)
        grads["conv1.b"] = gc1.sum(axis=(0, 1))
        gpooled = gc1 @ params["conv1.W"].T
        gh = np.zeros_like(cache["h"])
        for gi, sel in enumerate(cache["selected"]):
            gh[sel] += gpooled[gi, :len(sel)]
        # Back through the GCN stack.
        inputs, outs = cache["gcache"]
        batch = cache["batch"]
        bounds = np.cumsum((0,) + cfg.gcn_units)
        carry = None
        for li in range(len(cfg.gcn_units) - 1, -1, -1):
            gz = gh[:, bounds[li]:bounds[li + 1]]
            if carry is not None:
                gz = gz + carry
            ga = gz * (1.0 - outs[li] ** 2)
            w = params[f"gcn.W{li + 1}"]
            grads[f"gcn.W{li + 1}"] = inputs[li].T @ ga
            if li > 0:
                carry = batch.propagate_t(ga @ w.T)
        return grads

    def loss(self, batch: Batch, y: np.ndarray, params=None, mask: Optional[np.ndarray] = None,
             weights: Optional[np.ndarray] = None):
        """Binary cross-entropy (weighted mean if ``weights``) and gradients."""
        params = self.params if params is None else params
        s, cache = self._forward(batch, params, mask)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        loss = float(np.sum(w * (nn.softplus(s) - y * s)))
        ds = (nn.sigmoid(s) - y) * w
        return loss, self._backward(ds, cache, params)

    # -- inference ---------------------------------------------------------------

    def _check(self, t: GraphTensor) -> None:
        if t.x.shape[1] != self.encoder.width:
            raise ValueError(f"node feature width {t.x.shape[1]} does not match model "
                             f"vocabulary width {self.encoder.width}")

    def predict_tensors(self, tensors: Sequence[GraphTensor], chunk: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(tensors), chunk):
            part = tensors[i:i + chunk]
            for t in part:
                self._check(t)
            s, _ = self._forward(Batch.of(part), self.params, None)
            out.append(nn.sigmoid(s))
        return np.concatenate(out) if out else np.zeros(0)

    def score_graph(self, g: WTGraph) -> float:
        return float(self.classify([g])[0])

    def classify(self, graphs: Sequence[WTGraph]) -> np.ndarray:
        return self.predict_tensors([graph_to_tensor(g, self.encoder) for g in graphs])

    # -- persistence ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "node_encoder": self.encoder.to_dict(),
            "history": list(self.history),
            "optimizer_step": self.optimizer.step,
            "weights": nn.weights_to_dict(self.params),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DgcnnModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a DGCNN model document")
        config = DgcnnConfig(**doc["config"])
        encoder = NodeFeatureEncoder.from_dict(doc["node_encoder"])
        params = nn.weights_from_dict(doc["weights"], param_shapes(config, encoder.width))
        model = cls(config, encoder, params, doc.get("history"))
        model.optimizer.step = int(doc.get("optimizer_step", 0))
        return model

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "DgcnnModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_dgcnn(config: DgcnnConfig, encoder: NodeFeatureEncoder, seed: Optional[int] = None) -> DgcnnModel:
    """Fan-in scaled uniform weights and zero biases drawn from ``seed``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in param_shapes(config, encoder.width).items():
        params[name] = nn.fan_in_uniform(rng, *shape) if len(shape) == 2 else np.zeros(shape)
    return DgcnnModel(config, encoder, params)


def _labels(graphs: Sequence[WTGraph], y) -> np.ndarray:
    if y is None:
        y = [g.label for g in graphs]
    out = []
    for v in y:
        if isinstance(v, str):
            if v not in ("bot", "human"):
                raise ValueError(f"graph label {v!r} is neither bot nor human")
            out.append(1 if v == "bot" else 0)
        else:
            out.append(int(v))
    return np.asarray(out, dtype=np.int64)


def train_dgcnn(model: DgcnnModel, graphs: Sequence[WTGraph], y=None,
                config: Optional[DgcnnConfig] = None) -> DgcnnModel:
    """Mini-batch Adam on binary cross-entropy with dropout active.

    Labels come from ``y`` (``"bot"``/``"human"`` or 1/0) or from each graph's
    own label.  Graphs are reshuffled every epoch from the seeded stream.
    With ``balance_classes`` each class carries half of the total loss weight.
    """
    config = config or model.config
    labels = _labels(graphs, y)
    if set(labels.tolist()) != {0, 1}:
        raise ValueError("training graphs must contain both bot and human examples")
    tensors = [graph_to_tensor(g, model.encoder) for g in graphs]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, len(model.history)]))
    n = len(tensors)
    keep = 1.0 - config.dropout
    if config.balance_classes:
        counts = np.bincount(labels, minlength=2).astype(np.float64)
        sample_w = (n / (2.0 * counts))[labels]
    else:
        sample_w = np.ones(n)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = Batch.of([tensors[i] for i in idx])
            mask = nn.dropout_mask(rng, (len(idx), config.dense_units), config.dropout) if keep < 1 else None
            loss, grads = model.loss(batch, labels[idx], mask=mask, weights=sample_w[idx])
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite DGCNN loss at epoch {epoch}")
            nn.adam_update(model.params, grads, model.optimizer)
            total += loss * sample_w[idx].sum()
        model.history.append(total / sample_w.sum())
        logger.debug("dgcnn epoch %d: loss=%.4f", epoch, model.history[-1])
    return model


def classify_graph(model: DgcnnModel, g: WTGraph) -> float:
    """Bot probability of one graph (dropout off)."""
    return float(model.classify([g])[0])
