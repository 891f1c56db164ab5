"""Communication cost of one layer mapped onto a unit-square mesh of PEs.

Point model: ``D`` PEs on an ``N x N`` grid (``N = sqrt(D)``, pitch ``l = 1/N``).
Dendritic model: ``M = D sqrt(K)`` dendrite PEs of pitch ``l_hat = 1/sqrt(M)``
feeding ``D_hat = D / sqrt(K)`` neurons. All costs are Manhattan path lengths.
"""

from dataclasses import dataclass, asdict
import csv
import io
import logging
import math

import numpy as np

from .mst import batched_mst_lengths, prim_mst

log = logging.getLogger(__name__)


def _is_square(n):
    return n >= 0 and math.isqrt(n) ** 2 == n


def _require_square(D):
    if not (isinstance(D, (int, np.integer)) and D >= 1 and _is_square(int(D))):
        raise ValueError(f"D={D} must be a positive perfect square for the grid layout")


@dataclass(frozen=True)
class MeshConfig:
    D: int
    K: int = 1

    def __post_init__(self):
        if self.D < 1 or self.K < 1:
            raise ValueError("D and K must be >= 1")

    @property
    def N(self):
        return math.sqrt(self.D)

    @property
    def l(self):
        return 1.0 / math.sqrt(self.D)

    @property
    def M(self):
        return self.D * math.sqrt(self.K)

    @property
    def l_hat(self):
        return 1.0 / math.sqrt(self.M)

    @property
    def D_hat(self):
        return self.D / math.sqrt(self.K)

    @property
    def N_hat(self):
        return math.sqrt(self.D_hat)


@dataclass
class CostReport:
    D: int
    K: int
    C_A: float
    C_E: float
    C_AG: float
    C_AA: float
    C_E_hat: float

    @property
    def C_A_hat(self):
        return self.C_AG + self.C_AA

    @property
    def eta(self):
        return (self.C_A_hat + self.C_E_hat) / (self.C_A + self.C_E)

    def row(self):
        d = asdict(self)
        d["C_A_hat"] = self.C_A_hat
        d["eta"] = self.eta
        return d


CSV_COLUMNS = ("D", "K", "C_A", "C_E", "C_AG", "C_AA", "C_E_hat", "eta")


def aggregation_cost_point(D):
    """C_A = D - sqrt(D): every PE sends its output to the corner junction."""
    _require_square(D)
    return float(D - math.isqrt(D))


def delivery_cost_point(D):
    """C_E = (D - 1) sqrt(D): a full-grid rectilinear tree for each of D inputs."""
    _require_square(D)
    return float((D - 1) * math.isqrt(D))


def grid_points(rows, cols, pitch=1.0):
    """PE centres, row-major, with PE (0, 0) at the junction corner."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    return np.column_stack([c, r]).astype(np.float64) * pitch


def aggregation_cost_bruteforce(D):
    """Sum of Manhattan distances from every PE to the junction PE, times l."""
    _require_square(D)
    N = math.isqrt(D)
    steps = grid_points(N, N).sum()  # integer grid steps x + y
    return float(steps) / N


def delivery_cost_rmst(D):
    """D times the rectilinear MST length over the full N x N grid (computed, not assumed)."""
    _require_square(D)
    N = math.isqrt(D)
    _, w = prim_mst(grid_points(N, N), metric="manhattan")
    return D * float(w.sum()) / N


def dendritic_aggregation_cost(cfg):
    """Return ``(C_AG, C_AA)``.

    C_AG gathers K dendrite outputs per neuron: ``(K - 1) D_hat l_hat``.
    C_AA sends the D_hat neuron outputs to the junction:
    ``N_hat^2 (N_hat - 1) l_hat sqrt(K)``. Both are closed forms and do not
    require N_hat to be an integer.
    """
    K, D_hat, l_hat, N_hat = cfg.K, cfg.D_hat, cfg.l_hat, cfg.N_hat
    c_ag = (K - 1) * D_hat * l_hat
    c_aa = N_hat * N_hat * (N_hat - 1) * l_hat * math.sqrt(K)
    return c_ag, c_aa


def dendritic_aggregation_bounds(cfg):
    """Upper bounds ``(sqrt(D) K^(1/4), D / sqrt(K))`` on ``(C_AG, C_AA)``."""
    return math.sqrt(cfg.D) * cfg.K ** 0.25, cfg.D / math.sqrt(cfg.K)


def dendritic_delivery_cost(cfg):
    """Exact ``(D / sqrt(K)) (D sqrt(K) - 1) l_hat``."""
    return cfg.D_hat * (cfg.M - 1) * cfg.l_hat


def dendritic_delivery_cost_approx(cfg):
    return cfg.D ** 1.5 / cfg.K ** 0.25


def cost_report(D, K):
    cfg = MeshConfig(D, K)
    c_ag, c_aa = dendritic_aggregation_cost(cfg)
    return CostReport(D, K, aggregation_cost_point(D), delivery_cost_point(D),
                      c_ag, c_aa, dendritic_delivery_cost(cfg))


def eta_map(D_values, K_values):
    """CostReports for every (D, K) cell, D-major."""
    if not D_values or not K_values:
        raise ValueError("D and K ranges must be nonempty")
    return [cost_report(D, K) for D in D_values for K in K_values]


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.row()
        w.writerow([d[c] if c in ("D", "K") else repr(float(d[c])) for c in CSV_COLUMNS])
    return buf.getvalue()


def dendrite_grid(cfg):
    """Rows x cols layout of the M dendrite PEs (square PEs of side l_hat).

    When M is not a perfect square the PEs tile a near-square rectangle of the
    same unit area instead of the unit square.
    """
    M = cfg.M
    if abs(M - round(M)) > 1e-9:
        raise ValueError(f"D*sqrt(K) = {M} is not an integer; K must be a perfect square")
    M = int(round(M))
    rows = max(r for r in range(1, math.isqrt(M) + 1) if M % r == 0)
    return rows, M // rows


def _pattern_rng(seed, pattern):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, pattern])))


def sparse_delivery_costs(cfg, sparsity, n_patterns, seed):
    """Per-pattern delivery cost under random sparse connectivity.

    Each of the D_hat input dimensions connects to every dendrite PE
    independently with probability ``1 - sparsity``; its cost is the
    rectilinear MST length over the selected PEs. Patterns use independent
    Philox streams keyed on ``(seed, pattern index)``.
    """
    if not 0 <= sparsity < 1:
        raise ValueError("sparsity must satisfy 0 <= sparsity < 1")
    if n_patterns < 1:
        raise ValueError("n_patterns must be >= 1")
    D_hat = cfg.D_hat
    if abs(D_hat - round(D_hat)) > 1e-9:
        raise ValueError(f"D/sqrt(K) = {D_hat} must be an integer to sample connections")
    D_hat = int(round(D_hat))
    rows, cols = dendrite_grid(cfg)
    pts = grid_points(rows, cols)  # integer grid steps; scaled by l_hat at the end
    costs = np.empty(n_patterns)
    if sparsity == 0:
        # every pattern is the full grid
        steps = batched_mst_lengths(np.broadcast_to(pts, (D_hat,) + pts.shape),
                                    np.ones((D_hat, len(pts)), dtype=bool), metric="manhattan")
        costs[:] = steps.sum() * cfg.l_hat
        return costs
    for p in range(n_patterns):
        rng = _pattern_rng(seed, p)
        keep = rng.random((D_hat, len(pts))) >= sparsity
        empty = int((~keep.any(axis=1)).sum())
        if empty:
            log.debug("pattern %d: %d input dimensions have no targets", p, empty)
        # compact each dimension's targets to the front so Prim scans only live points
        width = int(keep.sum(axis=1).max())
        order = np.argsort(~keep, axis=1, kind="stable")[:, :width]
        valid = np.take_along_axis(keep, order, axis=1)
        steps = batched_mst_lengths(pts[order], valid, metric="manhattan").sum()
        costs[p] = steps * cfg.l_hat
    return costs


def sparse_delivery_cost(cfg, sparsity, n_patterns=100, seed=0):
    """Mean and standard deviation of :func:`sparse_delivery_costs`."""
    costs = sparse_delivery_costs(cfg, sparsity, n_patterns, seed)
    return float(costs.mean()), float(costs.std(ddof=1)) if n_patterns > 1 else 0.0


def fit_k_slope(costs):
    """Least-squares slope of log(cost) against log(sqrt(K)).

    ``costs`` is an iterable of ``(K, cost)`` pairs.
    """
    pairs = list(costs)
    ks = np.array([k for k, _ in pairs], dtype=np.float64)
    cs = np.array([c for _, c in pairs], dtype=np.float64)
    if len(np.unique(ks)) < 2:
        raise ValueError("need at least two distinct K values to fit a slope")
    if np.any(cs <= 0):
        raise ValueError("costs must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(np.sqrt(ks)), np.log(cs), 1)
    return float(slope)
