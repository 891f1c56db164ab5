"""Axonal wiring cost from Euclidean MSTs over random synapse positions.

Each of the ``D / sqrt(K)`` input neurons reaches ``D sqrt(K)`` synapses placed
uniformly in the unit square or cube. The wiring for one neuron is the
Euclidean MST over its synapses; the layer cost is ``D / sqrt(K)`` times the
mean tree length.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from .mst import mst_length

MAX_POINTS = 1 << 16


class CapacityError(ValueError):
    pass


def trial_rng(seed, trial):
    """Philox stream for ``(seed, trial)``; reproducible across platforms."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


@dataclass(frozen=True, eq=False)
class SynapseCloud:
    points: np.ndarray
    seed: int = None

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def sample_cloud(n, dim, seed, trial=0):
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_POINTS:
        raise CapacityError(f"{n} points exceeds the O(n^2) MST capacity of {MAX_POINTS}")
    pts = trial_rng(seed, trial).random((n, dim))
    pts.setflags(write=False)
    return SynapseCloud(pts, seed)


def emst_length(cloud):
    pts = cloud.points if isinstance(cloud, SynapseCloud) else np.asarray(cloud, dtype=np.float64)
    return mst_length(pts, "euclidean")


def synapse_count(D, K):
    n = D * math.sqrt(K)
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"D*sqrt(K) = {n} must be an integer")
    return int(round(n))


@dataclass
class WiringEstimate:
    D: int
    K: int
    dim: int
    trials: int
    tree_lengths: list = field(default_factory=list)

    @property
    def mean_tree_length(self):
        return float(np.mean(self.tree_lengths))

    @property
    def C_E(self):
        return self.D / math.sqrt(self.K) * self.mean_tree_length

    @property
    def n_synapses(self):
        return synapse_count(self.D, self.K)


def wiring_cost(D, K, dim, trials=10, seed=0, threads=1):
    """Estimate C_E from ``trials`` independent synapse clouds.

    Trial ``t`` draws from the stream keyed on ``(seed, t)``, so results do not
    depend on ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = synapse_count(D, K)
    if n > MAX_POINTS:
        raise CapacityError(f"D*sqrt(K) = {n} exceeds capacity {MAX_POINTS}")

    def one(t):
        return emst_length(sample_cloud(n, dim, seed, t))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            lengths = list(ex.map(one, range(trials)))
    else:
        lengths = [one(t) for t in range(trials)]
    return WiringEstimate(D, K, dim, trials, lengths)


@dataclass
class PowerLawFit:
    alpha: float
    beta: float
    residual: float

    def predict(self, D, K):
        return self.alpha * D / math.sqrt(K) * (D * math.sqrt(K)) ** self.beta


def fit_power_law(estimates):
    """Fit ``C_E = alpha * D/sqrt(K) * (D sqrt(K))**beta`` by least squares in log-log space.

    ``residual`` is the sum of squared log residuals.
    """
    x = np.array([math.log(e.D * math.sqrt(e.K)) for e in estimates])
    y = np.array([math.log(e.C_E / (e.D / math.sqrt(e.K))) for e in estimates])
    if len(np.unique(x)) < 2:
        raise ValueError("degenerate fit: need at least two distinct values of D*sqrt(K)")
    A = np.column_stack([x, np.ones_like(x)])
    (beta, log_alpha), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(((A @ np.array([beta, log_alpha]) - y) ** 2).sum())
    return PowerLawFit(float(math.exp(log_alpha)), float(beta), res)


def estimates_to_csv(estimates):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dim", "D", "K", "trial", "tree_length", "C_E"])
    for e in estimates:
        for t, length in enumerate(e.tree_lengths):
            w.writerow([e.dim, e.D, e.K, t, repr(float(length)), repr(e.C_E)])
    return buf.getvalue()
