"""Discrete entropy of dendritic outputs and of their somatic sum.

Works on finite joint distributions over K-tuples. The sum of the components
is the neuron output; entropies are in bits.
"""

from dataclasses import dataclass
from fractions import Fraction
import json
import math

import numpy as np

NORM_TOL = 1e-12
# sums closer than this are treated as the same neuron output value
MERGE_TOL = 1e-12


class ValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(tuple(s) for s in self.support)
        p = np.asarray(self.probs, dtype=np.float64)
        if len(support) == 0:
            raise ValidationError("empty support")
        if p.shape != (len(support),):
            raise ValidationError("one probability per support tuple is required")
        if np.any(p < 0):
            raise ValidationError("negative probability")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        K = len(support[0])
        if K < 1 or any(len(s) != K for s in support):
            raise ValidationError("support tuples must all have the same length K >= 1")
        if len(set(support)) != len(support):
            raise ValidationError("support tuples must be distinct")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", p)

    @property
    def K(self):
        return len(self.support[0])

    @classmethod
    def from_dense(cls, values, table):
        """Joint from a K-dimensional probability table over per-component ``values``."""
        table = np.asarray(table, dtype=np.float64)
        support, probs = [], []
        for idx in np.ndindex(*table.shape):
            if table[idx] > 0:
                support.append(tuple(values[k][i] for k, i in enumerate(idx)))
                probs.append(table[idx])
        return cls(tuple(support), np.array(probs))

    @classmethod
    def independent(cls, marginals):
        """Product distribution; ``marginals`` is a list of ``(values, probs)``."""
        values = [list(v) for v, _ in marginals]
        table = np.ones(())
        for _, p in marginals:
            table = np.multiply.outer(table, np.asarray(p, dtype=np.float64))
        return cls.from_dense(values, table)

    def permuted(self, order):
        return DiscreteJoint(tuple(tuple(s[i] for i in order) for s in self.support), self.probs)

    def to_dict(self):
        return {"K": self.K, "support": [[float(v) for v in s] for s in self.support],
                "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d):
        j = cls(tuple(tuple(s) for s in d["support"]), np.asarray(d["probs"]))
        if "K" in d and d["K"] != j.K:
            raise ValidationError(f"declared K={d['K']} but tuples have length {j.K}")
        return j

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def entropy(probs):
    """Shannon entropy in bits of a normalised probability vector (0 log 0 = 0)."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
        raise ValidationError("not a normalised distribution")
    nz = p[p > 0]
    # fsum is correctly rounded, so the result does not depend on outcome order
    return max(0.0, -math.fsum(nz * np.log2(nz)))


def joint_entropy(joint):
    return entropy(joint.probs)


def _sum_labels(joint, tol=MERGE_TOL, exact=False):
    """Label each support tuple with the index of its (merged) sum value."""
    if exact:
        sums = [sum(Fraction(v) for v in s) for s in joint.support]
        uniq = sorted(set(sums))
        where = {v: i for i, v in enumerate(uniq)}
        return np.array([where[s] for s in sums]), np.array([float(u) for u in uniq])
    sums = np.array([sum(s) for s in joint.support], dtype=np.float64)
    order = np.argsort(sums, kind="stable")
    labels = np.empty(len(sums), dtype=np.int64)
    values = []
    start = None
    for i in order:
        # chain sorted values: a new class starts when the gap to the class start exceeds tol
        if start is None or sums[i] - start > tol:
            start = sums[i]
            values.append(sums[i])
        labels[i] = len(values) - 1
    return labels, np.array(values)


def sum_distribution(joint, tol=MERGE_TOL, exact=False):
    """Pushforward of the joint through the componentwise sum: ``(values, probs)``."""
    labels, values = _sum_labels(joint, tol, exact)
    probs = np.bincount(labels, weights=joint.probs, minlength=len(values))
    return values, probs


def entropy_of_sum(joint, tol=MERGE_TOL, exact=False):
    return entropy(sum_distribution(joint, tol, exact)[1])


def conditional_entropy_given_sum(joint, tol=MERGE_TOL, exact=False, direct=False):
    """H(d_1..d_K | sum d_j).

    By default uses the chain-rule identity H(joint) - H(sum). With
    ``direct=True`` it averages the entropies of the conditional distributions
    within each sum class instead.
    """
    if not direct:
        return joint_entropy(joint) - entropy_of_sum(joint, tol, exact)
    labels, values = _sum_labels(joint, tol, exact)
    total = 0.0
    for c in range(len(values)):
        p = joint.probs[labels == c]
        mass = p.sum()
        if mass > 0:
            q = p[p > 0] / mass
            total += float(mass) * float(-(q * np.log2(q)).sum())
    return total


def conditional_entropy_of_sum_given_components(joint, tol=MERGE_TOL, exact=False):
    """H(sum d_j | d_1..d_K), computed from the conditional distribution of the sum
    given each support tuple. Each tuple maps to exactly one sum class."""
    labels, values = _sum_labels(joint, tol, exact)
    total = 0.0
    for i, p in enumerate(joint.probs):
        cond = np.zeros(len(values))
        cond[labels[i]] = 1.0
        total += float(p) * entropy(cond)
    return total


def verify_lemma1(joint, tol=MERGE_TOL, exact=False):
    return bool(conditional_entropy_of_sum_given_components(joint, tol, exact) < 1e-12)


def theorem_residual(joint, tol=MERGE_TOL, exact=False):
    """|H(sum) - (H(joint) - H(joint | sum))| with the conditional term computed directly."""
    lhs = entropy_of_sum(joint, tol, exact)
    rhs = joint_entropy(joint) - conditional_entropy_given_sum(joint, tol, exact, direct=True)
    return float(abs(lhs - rhs))


def sum_is_injective(joint, tol=MERGE_TOL, exact=False):
    labels, values = _sum_labels(joint, tol, exact)
    return len(values) == len(joint.support)


def random_joint(rng, K, n_values, density=0.7, integer_values=True):
    """Random joint over ``n_values`` values per component.

    Integer-valued components produce many colliding sums (the interesting
    case). Roughly ``1 - density`` of the cells get probability zero.
    """
    if integer_values:
        values = [sorted(rng.choice(np.arange(-3, 4), size=n_values, replace=False).tolist())
                  for _ in range(K)]
    else:
        values = [sorted(rng.normal(size=n_values).tolist()) for _ in range(K)]
    table = rng.random((n_values,) * K) * (rng.random((n_values,) * K) < density)
    if table.sum() == 0:
        table.flat[rng.integers(table.size)] = 1.0
    table = table / table.sum()
    return DiscreteJoint.from_dense(values, table)


def verify_trials(seed=0, trials=1000, max_K=4, max_values=6):
    """Per-trial records of the entropy identities over random joints."""
    if trials < 1 or max_K < 1 or max_values < 1:
        raise ValueError("trials, max_K and max_values must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(trials):
        K = int(rng.integers(1, max_K + 1))
        n = int(rng.integers(1, max_values + 1))
        j = random_joint(rng, K, n, integer_values=bool(rng.integers(2)))
        h_joint, h_sum = joint_entropy(j), entropy_of_sum(j)
        rows.append({"trial": t, "K": K, "support": len(j.support), "H_joint": h_joint,
                     "H_sum": h_sum, "residual": float(theorem_residual(j)),
                     "lemma1": bool(verify_lemma1(j)), "bound": bool(h_sum <= h_joint + 1e-12)})
    return rows


def verify(seed=0, trials=1000, max_K=4, max_values=6):
    """Run the entropy identities over random joints. Returns a summary dict."""
    rows = verify_trials(seed, trials, max_K, max_values)
    worst = float(max(r["residual"] for r in rows))
    lemma_ok = all(r["lemma1"] for r in rows)
    bound_ok = all(r["bound"] for r in rows)
    return {"trials": trials, "seed": seed, "worst_residual": worst,
            "lemma1": bool(lemma_ok), "bound": bool(bound_ok),
            "passed": bool(lemma_ok and bound_ok and worst < 1e-12)}
