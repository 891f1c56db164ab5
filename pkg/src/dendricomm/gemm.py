"""Global-memory traffic of block-wise GEMM, analytic and simulated.

``C = A @ B`` with ``A: M x L``, ``B: L x N`` is computed in ``B_M x B_N``
output blocks, each accumulating over ``L / B_L`` pairs of input blocks. A
dendritic layer with K dendrites per neuron multiplies ``A_hat: M x L/sqrt(K)``
by ``B_hat: L/sqrt(K) x N sqrt(K)`` (same MAC count) and sums every K
neighbouring outputs along N on chip, so only ``M N / sqrt(K)`` elements are
written back.

The simulated cache holds whole blocks. Reads are counted in elements fetched
from global memory; a block larger than the cache is streamed without being
cached.
"""

from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction
import csv
import heapq
import io
import math

POLICIES = ("none", "lru", "belady")
ORDERINGS = ("row_major", "grouped")


@dataclass(frozen=True)
class GemmShape:
    M: int
    N: int
    L: int
    K: int = 1

    def __post_init__(self):
        if min(self.M, self.N, self.L, self.K) < 1:
            raise ValueError("M, N, L and K must be >= 1")
        s = math.isqrt(self.K)
        if s * s != self.K:
            raise ValueError(f"K={self.K} must be a perfect square")
        if self.L % s:
            raise ValueError(f"sqrt(K)={s} must divide L={self.L}")

    @property
    def root_k(self):
        return math.isqrt(self.K)

    @property
    def inner(self):
        """Inner dimension of the product actually computed (L / sqrt(K))."""
        return self.L // self.root_k

    @property
    def cols(self):
        """Columns of the pre-aggregation output (N sqrt(K))."""
        return self.N * self.root_k

    @property
    def macs(self):
        return self.M * self.inner * self.cols


@dataclass(frozen=True)
class TilePlan:
    B_M: int
    B_N: int
    B_L: int
    G: int = 1
    ordering: str = "row_major"

    def __post_init__(self):
        if min(self.B_M, self.B_N, self.B_L, self.G) < 1:
            raise ValueError("block sizes and G must be >= 1")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")

    def check(self, shape):
        for dim, b, what in ((shape.M, self.B_M, "M"), (shape.cols, self.B_N, "N*sqrt(K)"),
                             (shape.inner, self.B_L, "L/sqrt(K)")):
            if dim % b:
                raise ValueError(f"block size {b} does not divide {what}={dim}")


@dataclass(frozen=True)
class CacheModel:
    capacity: int = 0
    policy: str = "lru"
    line_size: int = 1

    def __post_init__(self):
        if self.capacity < 0 or self.line_size < 1:
            raise ValueError("capacity must be >= 0 and line_size >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")

    def footprint(self, elems):
        return -(-elems // self.line_size) * self.line_size


@dataclass
class TrafficReport:
    reads_global: int
    writes_global: int
    analytic_reads: float
    analytic_writes: float


def _writes(shape):
    w = Fraction(shape.M * shape.cols, shape.K)
    if w.denominator != 1:
        raise ValueError("M*N*sqrt(K) must be divisible by K for whole aggregated outputs")
    return int(w)


def analytic_costs(shape, plan):
    """Closed-form reads and writes for ``plan.ordering``.

    Row-major (and any ordering without a cache):
    ``(B_M + B_N) L' (M / B_M) (N' / B_N)`` with ``L' = L/sqrt(K)`` and
    ``N' = N sqrt(K)``; the sqrt(K) factors cancel. Grouped, assuming the
    ``G B_M`` rows of A stay resident: ``N' L' M / (B_M G) + M L'``.
    """
    plan.check(shape)
    Lp, Np, M = shape.inner, shape.cols, shape.M
    if plan.ordering == "row_major":
        reads = (plan.B_M + plan.B_N) * Lp * (M // plan.B_M) * (Np // plan.B_N)
    else:
        reads = Np * Lp * M / (plan.B_M * plan.G) + M * Lp
    return {"reads": reads, "writes": _writes(shape)}


def no_cache_reads(shape, plan):
    plan.check(shape)
    return (plan.B_M + plan.B_N) * shape.inner * (shape.M // plan.B_M) * (shape.cols // plan.B_N)


def grouped_reads_for_capacity(shape, B_N, Q):
    """Grouped reads with ``G B_M = Q / L' - B_N`` substituted."""
    Lp = shape.inner
    rows = Q / Lp - B_N
    if rows <= 0:
        raise ValueError("cache too small to hold one B column panel")
    return shape.cols * Lp * shape.M / rows + shape.M * Lp


def grouped_reads_approx(shape, Q):
    """Small-B_N limit ``(N L^2 M / Q + M L) / sqrt(K)`` in the base-layer dimensions."""
    s = shape.root_k
    L = shape.L
    return (shape.N * L * L * shape.M / Q + shape.M * L) / s


def max_group(shape, B_M, B_N, Q, b_panels=2):
    """Largest G dividing M / B_M with ``(G B_M + b_panels B_N) L' <= Q`` (0 if none fits).

    LRU needs room for the next B panel while the current one is still live,
    hence two panels by default; with one panel it thrashes on the A group.
    """
    rows = shape.M // B_M
    limit = (Q // shape.inner - b_panels * B_N) // B_M
    return max((g for g in range(1, rows + 1) if rows % g == 0 and g <= limit), default=0)


@dataclass(frozen=True, eq=False)
class BlockSchedule:
    shape: GemmShape
    plan: TilePlan
    c_blocks: tuple

    def __len__(self):
        """Number of inner (A block, B block) steps."""
        return len(self.c_blocks) * (self.shape.inner // self.plan.B_L)

    def accesses(self):
        """Yield ``(matrix, i, j)`` tuples: A/B block reads and a C write per output block."""
        nl = self.shape.inner // self.plan.B_L
        for m, n in self.c_blocks:
            for l in range(nl):
                yield ("A", m, l)
                yield ("B", l, n)
            yield ("C", m, n)


def build_schedule(shape, plan):
    """Order the output blocks.

    Row-major walks C block rows left to right. Grouped takes ``G`` block rows
    at a time and sweeps down each block column of the group before moving
    along N; a short final group is allowed.
    """
    plan.check(shape)
    nm, nn = shape.M // plan.B_M, shape.cols // plan.B_N
    if plan.ordering == "row_major":
        blocks = [(m, n) for m in range(nm) for n in range(nn)]
    else:
        blocks = [(m, n)
                  for g0 in range(0, nm, plan.G)
                  for n in range(nn)
                  for m in range(g0, min(g0 + plan.G, nm))]
    return BlockSchedule(shape, plan, tuple(blocks))


def _sizes(schedule, cache):
    p = schedule.plan
    return {"A": cache.footprint(p.B_M * p.B_L), "B": cache.footprint(p.B_L * p.B_N)}


def _simulate_reads_lru(seq, sizes, Q):
    cache = OrderedDict()
    used = reads = 0
    for key in seq:
        if key in cache:
            cache.move_to_end(key)
            continue
        size = sizes[key[0]]
        reads += size
        if size > Q:
            continue
        while used + size > Q:
            _, s = cache.popitem(last=False)
            used -= s
        cache[key] = size
        used += size
    return reads


def _simulate_reads_belady(seq, sizes, Q):
    # evict the resident block whose next use is farthest in the future
    nxt = [math.inf] * len(seq)
    last = {}
    for i in range(len(seq) - 1, -1, -1):
        nxt[i] = last.get(seq[i], math.inf)
        last[seq[i]] = i
    resident = {}
    heap = []
    used = reads = 0
    for i, key in enumerate(seq):
        if key in resident:
            resident[key] = nxt[i]
            heapq.heappush(heap, (-nxt[i], i, key))
            continue
        size = sizes[key[0]]
        reads += size
        if size > Q:
            continue
        while used + size > Q:
            neg, _, victim = heapq.heappop(heap)
            if resident.get(victim) == -neg:
                del resident[victim]
                used -= sizes[victim[0]]
        resident[key] = nxt[i]
        used += size
        heapq.heappush(heap, (-nxt[i], i, key))
    return reads


def simulate_cache(schedule, cache):
    """Replay ``schedule`` against ``cache`` and count global traffic.

    Each C block is written once when it completes; dendritic aggregation
    happens on chip, so it writes ``B_M B_N / K`` elements.
    """
    sizes = _sizes(schedule, cache)
    seq = [a for a in schedule.accesses() if a[0] != "C"]
    if cache.policy == "none" or cache.capacity == 0:
        reads = sum(sizes[k[0]] for k in seq)
    elif cache.policy == "lru":
        reads = _simulate_reads_lru(seq, sizes, cache.capacity)
    else:
        reads = _simulate_reads_belady(seq, sizes, cache.capacity)
    p, shape = schedule.plan, schedule.shape
    writes = sum(Fraction(p.B_M * p.B_N, shape.K) for _ in schedule.c_blocks)
    if writes.denominator != 1:
        raise ValueError("aggregated write volume is not a whole number of elements")
    ana = analytic_costs(shape, p)
    return TrafficReport(reads, int(writes), ana["reads"], ana["writes"])


SWEEP_COLUMNS = ("M", "N", "L", "K", "B_M", "B_N", "G", "Q", "policy",
                 "reads_sim", "reads_analytic", "writes_sim", "writes_analytic")


def dendritic_reduction_sweep(M, N, L, Ks, Q, B_M, B_N, B_L, policy="lru"):
    """Grouped GEMM traffic for each K at a fixed cache capacity ``Q``.

    ``G`` is re-derived per K as the largest group that fits the cache (see
    :func:`max_group`), which is where the dendritic read saving comes from.
    """
    rows = []
    for K in Ks:
        shape = GemmShape(M, N, L, K)
        G = max_group(shape, B_M, B_N, Q, b_panels=2 if policy == "lru" else 1)
        if G < 1:
            raise ValueError(f"K={K}: cache of {Q} elements cannot hold a single group")
        plan = TilePlan(B_M, B_N, min(B_L, shape.inner), G, "grouped")
        rep = simulate_cache(build_schedule(shape, plan), CacheModel(Q, policy))
        rows.append({"M": M, "N": N, "L": L, "K": K, "B_M": B_M, "B_N": B_N, "G": G, "Q": Q,
                     "policy": policy, "reads_sim": rep.reads_global,
                     "reads_analytic": rep.analytic_reads, "writes_sim": rep.writes_global,
                     "writes_analytic": rep.analytic_writes})
    base = rows[0]
    for r in rows:
        r["read_ratio"] = r["reads_sim"] / base["reads_sim"]
        r["write_ratio"] = r["writes_sim"] / base["writes_sim"]
    return rows


def rows_to_csv(rows, columns=SWEEP_COLUMNS):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()
