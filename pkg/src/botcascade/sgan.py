"""Semi-supervised GAN hit classifier.

The discriminator is one network with two heads on a shared trunk:

* a classifier head (softmax over bot/human logits, trained with sparse
  categorical cross-entropy on labeled hits), and
* a real/fake head applying the ExpSum activation to the *same* logits,
  trained with binary cross-entropy on real (labeled and unlabeled) versus
  generated hits.

Trunk: dense(100, sigmoid) -> leaky ReLU(0.2), three times, then dropout 0.4.
Generator: 100-d latent -> dense(200, sigmoid) -> dense(n_features, relu).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import nn
from .encoding import FeatureEncoder, FeatureVector

logger = logging.getLogger(__name__)

CLASSES = ("human", "bot")
TRUNK_UNITS = (100, 100, 100)
MODEL_FORMAT = "botcascade-sgan"


@dataclass
class SganConfig:
    latent_dim: int = 100
    generator_hidden_units: int = 200
    trunk_units: Tuple[int, ...] = TRUNK_UNITS
    leaky_slope: float = 0.2
    dropout: float = 0.4
    n_classes: int = 2
    learning_rate: float = 0.0002
    beta1: float = 0.5
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    balance_classes: bool = True

    def __post_init__(self):
        self.trunk_units = tuple(self.trunk_units)
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.n_classes != 2:
            raise ValueError("the hit classifier is binary (bot, human)")

    @classmethod
    def from_mapping(cls, cfg) -> "SganConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown sgan config keys: {sorted(unknown)}")
        return cls(**dict(cfg))


@dataclass
class SganHistory:
    classifier_loss: List[float] = field(default_factory=list)
    discriminator_loss: List[float] = field(default_factory=list)
    generator_loss: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.classifier_loss)


class SganModel:
    """Generator plus two-headed discriminator over encoded hits."""

    def __init__(self, config: SganConfig, feature_width: int, params: Dict[str, np.ndarray],
                 encoder: Optional[FeatureEncoder] = None, history: Optional[SganHistory] = None):
        self.config = config
        self.feature_width = feature_width
        self.params = params
        self.encoder = encoder
        self.history = history or SganHistory()
        self.optimizers = {
            name: nn.AdamState(config.learning_rate, beta1=config.beta1)
            for name in ("classifier", "discriminator", "generator")
        }

    # -- parameter layout ---------------------------------------------------

    @staticmethod
    def shapes(config: SganConfig, feature_width: int) -> Dict[str, Tuple[int, ...]]:
        shapes = {}
        prev = feature_width
        for i, units in enumerate(config.trunk_units, start=1):
            shapes[f"d.W{i}"] = (prev, units)
            shapes[f"d.b{i}"] = (units,)
            prev = units
        shapes["d.Wo"] = (prev, config.n_classes)
        shapes["d.bo"] = (config.n_classes,)
        shapes["g.W1"] = (config.latent_dim, config.generator_hidden_units)
        shapes["g.b1"] = (config.generator_hidden_units,)
        shapes["g.W2"] = (config.generator_hidden_units, feature_width)
        shapes["g.b2"] = (feature_width,)
        return shapes

    @property
    def discriminator_keys(self) -> List[str]:
        return sorted(k for k in self.params if k.startswith("d."))

    @property
    def generator_keys(self) -> List[str]:
        return sorted(k for k in self.params if k.startswith("g."))

    # -- forward / backward ---------------------------------------------------

    def _trunk_forward(self, x: np.ndarray, params, mask_rng: Optional[np.random.Generator]):
        """Shared trunk plus the logit layer; returns logits and a cache."""
        cache = {"x": x, "layers": []}
        a = x
        for i in range(1, len(self.config.trunk_units) + 1):
            pre = a @ params[f"d.W{i}"] + params[f"d.b{i}"]
            h = nn.sigmoid(pre)
            out = np.where(h > 0, h, self.config.leaky_slope * h)
            cache["layers"].append((a, pre, h, out))
            a = out
        if mask_rng is not None:
            mask = nn.dropout_mask(mask_rng, a.shape, self.config.dropout)
        else:
            mask = None
        d = a * mask if mask is not None else a
        cache["mask"] = mask
        cache["d"] = d
        z = d @ params["d.Wo"] + params["d.bo"]
        return z, cache

    def _trunk_backward(self, dz: np.ndarray, cache, params, need_input_grad: bool = False):
        grads = {}
        grads["d.Wo"] = cache["d"].T @ dz
        grads["d.bo"] = dz.sum(axis=0)
        g = dz @ params["d.Wo"].T
        if cache["mask"] is not None:
            g = g * cache["mask"]
        slope = self.config.leaky_slope
        n_layers = len(cache["layers"])
        for i in range(n_layers, 0, -1):
            a_in, pre, h, out = cache["layers"][i - 1]
            g = g * np.where(h > 0, 1.0, slope)
            g = g * h * (1.0 - h)
            grads[f"d.W{i}"] = a_in.T @ g
            grads[f"d.b{i}"] = g.sum(axis=0)
            if i > 1 or need_input_grad:
                g = g @ params[f"d.W{i}"].T
        return grads, (g if need_input_grad else None)

    def _generator_forward(self, noise: np.ndarray, params):
        pre1 = noise @ params["g.W1"] + params["g.b1"]
        h1 = nn.sigmoid(pre1)
        pre2 = h1 @ params["g.W2"] + params["g.b2"]
        out = np.maximum(pre2, 0.0)
        return out, (noise, h1, pre2)

    def _generator_backward(self, dout: np.ndarray, cache, params):
        noise, h1, pre2 = cache
        g2 = dout * (pre2 > 0)
        grads = {"g.W2": h1.T @ g2, "g.b2": g2.sum(axis=0)}
        g1 = (g2 @ params["g.W2"].T) * h1 * (1.0 - h1)
        grads["g.W1"] = noise.T @ g1
        grads["g.b1"] = g1.sum(axis=0)
        return grads

    # -- losses (each returns loss and gradients) ------------------------------

    def classifier_loss(self, x, y, params=None, mask_rng=None):
        """Mean sparse categorical cross-entropy of the softmax head."""
        params = self.params if params is None else params
        z, cache = self._trunk_forward(x, params, mask_rng)
        p = nn.softmax(z)
        n = len(x)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), y] = 1.0
        loss = float(np.mean(-np.log(np.clip(p[np.arange(n), y], nn.PROB_CLIP, 1.0))))
        dz = (p - onehot) / n
        grads, _ = self._trunk_backward(dz, cache, params)
        return loss, grads

    def discriminator_loss(self, x, real_target, params=None, mask_rng=None):
        """Mean binary cross-entropy of the ExpSum head against real/fake targets."""
        params = self.params if params is None else params
        z, cache = self._trunk_forward(x, params, mask_rng)
        s = nn.logsumexp(z)
        t = np.asarray(real_target, dtype=np.float64)
        loss = nn.binary_cross_entropy_from_logit(s, t)
        ds = (nn.sigmoid(s) - t) / len(x)
        dz = ds[:, None] * nn.softmax(z)
        grads, _ = self._trunk_backward(dz, cache, params)
        return loss, grads

    def generator_loss(self, noise, params=None, mask_rng=None):
        """BCE of the ExpSum head on generated hits against the *real* target.

        Gradients flow through the discriminator but only generator blocks
        are returned.
        """
        params = self.params if params is None else params
        fake, gcache = self._generator_forward(noise, params)
        z, cache = self._trunk_forward(fake, params, mask_rng)
        s = nn.logsumexp(z)
        loss = nn.binary_cross_entropy_from_logit(s, np.ones_like(s))
        ds = (nn.sigmoid(s) - 1.0) / len(noise)
        dz = ds[:, None] * nn.softmax(z)
        _, dfake = self._trunk_backward(dz, cache, params, need_input_grad=True)
        return loss, self._generator_backward(dfake, gcache, params)

    # -- inference ------------------------------------------------------------

    def _check_width(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.feature_width:
            raise ValueError(f"feature width {x.shape[1]} does not match model width {self.feature_width}")
        return x

    def logits(self, x) -> np.ndarray:
        z, _ = self._trunk_forward(self._check_width(x), self.params, None)
        return z

    def predict_proba(self, x) -> np.ndarray:
        """Rows of class probabilities ordered as ``CLASSES`` (human, bot)."""
        return nn.softmax(self.logits(x))

    def p_bot(self, x) -> np.ndarray:
        return self.predict_proba(x)[:, CLASSES.index("bot")]

    def p_real(self, x) -> np.ndarray:
        return nn.expsum_activation(self.logits(x))

    def score_hit(self, hit) -> float:
        """p_bot for a raw hit, encoded with the bound encoder."""
        if self.encoder is None:
            raise ValueError("SGAN model has no bound feature encoder")
        return float(self.p_bot(self.encoder.encode_values(hit))[0])

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((n, self.config.latent_dim))
        return self._generator_forward(noise, self.params)[0]

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "feature_width": self.feature_width,
            "encoder": self.encoder.to_dict() if self.encoder is not None else None,
            "history": asdict(self.history),
            "optimizer_steps": {k: s.step for k, s in self.optimizers.items()},
            "weights": nn.weights_to_dict(self.params),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SganModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not an SGAN model document")
        config = SganConfig(**doc["config"])
        width = int(doc["feature_width"])
        params = nn.weights_from_dict(doc["weights"], cls.shapes(config, width))
        encoder = FeatureEncoder.from_dict(doc["encoder"]) if doc.get("encoder") else None
        if encoder is not None and encoder.total_width != width:
            raise ValueError("encoder width does not match model width")
        model = cls(config, width, params, encoder, SganHistory(**doc.get("history", {})))
        for k, step in doc.get("optimizer_steps", {}).items():
            if k in model.optimizers:
                model.optimizers[k].step = int(step)
        return model

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "SganModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_sgan(config: SganConfig, feature_width: int, seed: Optional[int] = None,
               encoder: Optional[FeatureEncoder] = None) -> SganModel:
    """Fan-in scaled uniform weights, zero biases, drawn deterministically from ``seed``."""
    if feature_width < 1:
        raise ValueError("feature_width must be >= 1")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in SganModel.shapes(config, feature_width).items():
        params[name] = nn.fan_in_uniform(rng, *shape) if len(shape) == 2 else np.zeros(shape)
    return SganModel(config, feature_width, params, encoder)


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.atleast_2d(vectors.astype(np.float64))
    if not vectors:
        return np.zeros((0, 0))
    return np.stack([v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)
                     for v in vectors])


def _labels_of(labeled, y) -> np.ndarray:
    if y is not None:
        return np.asarray([CLASSES.index(v) if isinstance(v, str) else int(v) for v in y], dtype=np.int64)
    return np.asarray([CLASSES.index(v.label) for v in labeled], dtype=np.int64)


def train_sgan(model: SganModel, labeled, unlabeled=(), config: Optional[SganConfig] = None,
               y=None) -> SganModel:
    """Adversarial semi-supervised training.

    ``labeled`` is a list of FeatureVectors with human/bot labels (or a
    matrix, with ``y`` giving labels).  Each step performs a classifier
    update on a labeled batch, a discriminator update on real (labeled and
    unlabeled) versus generated hits, and a generator update through the
    frozen discriminator.  One epoch passes the real hits through the
    discriminator once: ``ceil(n_real / (batch_size // 2))`` steps.
    """
    config = config or model.config
    x_lab = _as_matrix(labeled)
    y_lab = _labels_of(labeled, y)
    if len(x_lab) == 0:
        raise ValueError("no labeled data")
    classes_present = set(y_lab.tolist())
    if classes_present != {0, 1}:
        raise ValueError(f"labeled data must contain both classes, got {sorted(CLASSES[c] for c in classes_present)}")
    x_unl = _as_matrix(unlabeled) if len(unlabeled) else np.zeros((0, x_lab.shape[1]))
    if x_lab.shape[1] != model.feature_width or (len(x_unl) and x_unl.shape[1] != model.feature_width):
        raise ValueError("feature width does not match model")
    x_real = np.vstack([x_lab, x_unl]) if len(x_unl) else x_lab

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, len(model.history)]))
    half = max(1, config.batch_size // 2)
    by_class = [np.flatnonzero(y_lab == c) for c in range(2)]
    steps = max(1, math.ceil(len(x_real) / half))
    params = model.params
    d_keys = model.discriminator_keys
    for epoch in range(config.epochs):
        sums = np.zeros(3)
        for _ in range(steps):
            # (a) supervised classifier step
            if config.balance_classes:
                idx = np.concatenate([rng.choice(by_class[0], half), rng.choice(by_class[1], half)])
            else:
                idx = rng.integers(0, len(x_lab), config.batch_size)
            lc, grads = model.classifier_loss(x_lab[idx], y_lab[idx], mask_rng=rng)
            nn.adam_update(params, grads, model.optimizers["classifier"])
            # (b) discriminator: real vs generated
            real = x_real[rng.integers(0, len(x_real), half)]
            fake = model.generate(half, rng)
            xb = np.vstack([real, fake])
            tb = np.concatenate([np.ones(half), np.zeros(half)])
            ld, grads = model.discriminator_loss(xb, tb, mask_rng=rng)
            nn.adam_update(params, {k: grads[k] for k in d_keys}, model.optimizers["discriminator"])
            # (c) generator through the frozen discriminator
            noise = rng.standard_normal((config.batch_size, config.latent_dim))
            lg, grads = model.generator_loss(noise, mask_rng=rng)
            nn.adam_update(params, grads, model.optimizers["generator"])
            sums += (lc, ld, lg)
        means = sums / steps
        if not np.all(np.isfinite(means)):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}: {means.tolist()}")
        model.history.classifier_loss.append(float(means[0]))
        model.history.discriminator_loss.append(float(means[1]))
        model.history.generator_loss.append(float(means[2]))
        logger.debug("sgan epoch %d: L_C=%.4f L_D=%.4f L_G=%.4f", epoch, *means)
    return model


def classify_hit(model: SganModel, v) -> Tuple[float, float]:
    """Return ``(p_bot, p_human)`` from the softmax head (dropout off)."""
    values = v.values if isinstance(v, FeatureVector) else v
    p = model.predict_proba(values)[0]
    return float(p[CLASSES.index("bot")]), float(p[CLASSES.index("human")])


def discriminate(model: SganModel, v) -> float:
    """Real-sample probability from the ExpSum head (dropout off)."""
    values = v.values if isinstance(v, FeatureVector) else v
    return float(model.p_real(values)[0])
