"""Toy SGD trainer for point and dendritic MLPs on synthetic Gaussian blobs.

This is a mechanism check at desk scale: the same data and optimiser are used
for a point MLP and its equal-parameter dendritic counterpart (built with
:func:`dendricomm.complexity.scale_architecture`) so their accuracies can be
compared.
"""

from dataclasses import dataclass, field, asdict, replace
import csv
import io
import math

import numpy as np

from .complexity import count_params, linear_stack, scale_architecture
from .dendritic import (Activation, DendriticLayerSpec, IDENTITY, backward_dendritic,
                        forward_dendritic)

DATASETS = ("blobs",)


@dataclass(frozen=True)
class ToyConfig:
    dataset: str = "blobs"
    n_samples: int = 1200
    n_features: int = 8
    n_classes: int = 4
    blobs_per_class: int = 2
    cluster_std: float = 0.5
    separation: float = 4.0
    hidden: tuple = (16, 16, 16)
    K: int = 1
    lr: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    test_fraction: float = 0.25
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; built-in: {DATASETS}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 are required")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.n_classes < 2 or self.blobs_per_class < 1 or not self.hidden:
            raise ValueError("need >= 2 classes, >= 1 blob per class and >= 1 hidden layer")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    status: str
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    initial_accuracy: float = 0.0
    n_params: int = 0

    @property
    def final_accuracy(self):
        return self.accuracies[-1] if self.accuracies else self.initial_accuracy

    @property
    def ok(self):
        return self.status == "ok"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for e, (l, a) in enumerate(zip(self.losses, self.accuracies), start=1):
            w.writerow([e, repr(float(l)), repr(float(a))])
        return buf.getvalue()


def _streams(seed):
    # independent Philox streams for data, init and shuffling
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(3)]


def make_blobs(cfg, rng):
    """Gaussian mixture: each class owns ``blobs_per_class`` isotropic clusters.

    Centres are drawn on a sphere of radius ``separation``. Returns a
    train/test split ``(x_train, y_train, x_test, y_test)``.
    """
    n_centres = cfg.n_classes * cfg.blobs_per_class
    centres = rng.normal(size=(n_centres, cfg.n_features))
    centres *= cfg.separation / np.linalg.norm(centres, axis=1, keepdims=True)
    which = rng.integers(n_centres, size=cfg.n_samples)
    x = centres[which] + cfg.cluster_std * rng.normal(size=(cfg.n_samples, cfg.n_features))
    y = which % cfg.n_classes
    n_test = max(1, int(round(cfg.n_samples * cfg.test_fraction)))
    return x[n_test:], y[n_test:], x[:n_test], y[:n_test]


def build_network(cfg):
    """Descriptor for the point MLP (K=1) or its equal-parameter dendritic version."""
    base = linear_stack(cfg.n_features, list(cfg.hidden), cfg.n_classes, bias=True, name="toy")
    return scale_architecture(base, cfg.K) if cfg.K != 1 else base


def init_params(arch, rng, activation):
    """One mutable ``[W, b, K, n_neurons, act]`` entry per layer."""
    layers = arch.main_layers()
    params = []
    for i, l in enumerate(layers):
        act = IDENTITY if i == len(layers) - 1 else activation
        spec = DendriticLayerSpec.random(l.in_channels, l.out_channels, l.K, rng, act)
        params.append([spec.weights.copy(), spec.biases.copy(), l.K, l.out_channels, act])
    return params


def _spec(p):
    W, b, K, n, act = p
    return DendriticLayerSpec(n, K, W.shape[1], W, b, act)


def _forward(params, x):
    records, specs = [], []
    h = x
    for p in params:
        spec = _spec(p)
        rec = forward_dendritic(h, spec)
        records.append(rec)
        specs.append(spec)
        h = rec.outputs
    return h, records, specs


def _softmax_xent(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(y)), y].mean()
    grad = np.exp(logp)
    grad[np.arange(len(y)), y] -= 1.0
    return loss, grad / len(y)


def accuracy(params, x, y):
    logits, _, _ = _forward(params, x)
    return float((logits.argmax(axis=1) == y).mean())


def train_toy(cfg, seed=0):
    """Train with plain minibatch SGD. Deterministic given ``(cfg, seed)``.

    A non-finite loss stops training and returns ``status="diverged"``.
    """
    data_rng, init_rng, shuffle_rng = _streams(seed)
    xtr, ytr, xte, yte = make_blobs(cfg, data_rng)
    arch = build_network(cfg)
    params = init_params(arch, init_rng, Activation(cfg.activation))
    result = TrainResult("ok", initial_accuracy=accuracy(params, xte, yte),
                         n_params=count_params(arch).total_params)
    n = len(ytr)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.epochs):
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                logits, records, specs = _forward(params, xtr[idx])
                loss, g = _softmax_xent(logits, ytr[idx])
                if not math.isfinite(loss):
                    result.status = "diverged"
                    return result
                total += loss * len(idx)
                for p, rec, spec in zip(reversed(params), reversed(records), reversed(specs)):
                    gW, gb, g = backward_dendritic(rec, spec, g)
                    p[0] -= cfg.lr * gW
                    p[1] -= cfg.lr * gb
            result.losses.append(float(total / n))
            result.accuracies.append(accuracy(params, xte, yte))
    return result


def compare_point_dendritic(cfg, seeds=(0, 1, 2, 3, 4), K=4):
    """Final accuracies of the point MLP and the K-dendrite MLP on identical data."""
    rows = []
    for s in seeds:
        p = train_toy(replace(cfg, K=1), s)
        d = train_toy(replace(cfg, K=K), s)
        rows.append({"seed": s, "point": p.final_accuracy, "dendritic": d.final_accuracy,
                     "point_params": p.n_params, "dendritic_params": d.n_params,
                     "status": "ok" if p.ok and d.ok else "diverged"})
    return rows
