"""Exact calculators for the algorithms' regret guarantees.

Each ``bound_*`` function evaluates the right-hand side of one guarantee as a
pure formula of already-aggregated statistics, so that any run of the
matching algorithm can be machine-checked: measured aggregate regret must
never exceed the calculator's value.

Subset aggregates average per-expert statistics under the prior conditioned
on the subset; comparator aggregates carry the coordinate-wise statistics of
a point in a usage polytope together with its binary relative entropy to the
prior vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ceil_one_plus_log2, log_exp_integral

__all__ = [
    "SubsetAggregate",
    "ComparatorAggregate",
    "aggregate_subset",
    "ln_plus",
    "z_conjugate",
    "bound_theorem1",
    "bound_theorem2",
    "bound_theorem3",
    "bound_eq20",
    "bound_theorem4",
    "binary_relative_entropy",
]


def ln_plus(x: float) -> float:
    """ln(max(x, 1)): the clipped logarithm used throughout the bounds."""
    return math.log(x) if x > 1.0 else 0.0


@dataclass(frozen=True)
class SubsetAggregate:
    """Prior-conditional averages of regret and variance over an expert subset."""

    subset: tuple[int, ...]
    pi_mass: float
    r_agg: float
    v_agg: float


@dataclass(frozen=True)
class ComparatorAggregate:
    """Coordinate-wise regret statistics of a comparator point in the hull."""

    v: np.ndarray
    r_v: float
    v_v: float
    entropy: float


def aggregate_subset(state, subset) -> SubsetAggregate:
    """Average (under the prior, conditioned on ``subset``) of R and V.

    ``state`` is an ``ExpertGameState``; ``subset`` any nonempty iterable of
    expert indices with positive total prior mass.
    """
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise ValueError("subset must be nonempty")
    k = state.prior.shape[0]
    if idx[0] < 0 or idx[-1] >= k:
        raise ValueError(f"subset indices must lie in [0, {k})")
    mass = float(state.prior[idx].sum())
    if mass <= 0.0:
        raise ValueError("subset has zero prior mass")
    cond = state.prior[idx] / mass
    return SubsetAggregate(
        subset=tuple(idx),
        pi_mass=mass,
        r_agg=float(cond @ state.regret[idx]),
        v_agg=float(cond @ state.variance[idx]),
    )


def z_conjugate(a: float, b: float) -> float:
    """Normalizer int_0^{1/2} exp(a eta - b eta^2) deta; 1/2 when a = b = 0."""
    if a == 0.0 and b == 0.0:
        return 0.5
    return math.exp(log_exp_integral(a, b))


def _check_pi_mass(pi_mass: float) -> None:
    if not 0.0 < pi_mass <= 1.0:
        raise ValueError(f"prior mass must lie in (0, 1], got {pi_mass}")


def bound_theorem1(v_agg: float, pi_mass: float, a: float = 0.0, b: float = 0.0) -> float:
    """Guarantee of the conjugate-prior rule:
    2 sqrt((V+b)(1/2 + ln+(Z sqrt(2(V+b))/pi))) + 5 ln+(2 sqrt(5) Z/pi) - a.
    """
    _check_pi_mass(pi_mass)
    if v_agg < 0.0:
        raise ValueError(f"variance aggregate must be nonnegative, got {v_agg}")
    z = z_conjugate(a, b)
    vb = v_agg + b
    main = 2.0 * math.sqrt(vb * (0.5 + ln_plus(z * math.sqrt(2.0 * vb) / pi_mass)))
    tail = 5.0 * ln_plus(2.0 * math.sqrt(5.0) * z / pi_mass)
    return main + tail - a


def bound_theorem2(v_agg: float, pi_mass: float) -> float:
    """Guarantee of the near-1/eta proper-prior rule:
    sqrt(2V)(1 + sqrt(2 ln+(ln+^2(2 sqrt(V)/(2-sqrt 2)) / (pi ln 2))))
    - 5 ln(pi) + 4.
    """
    _check_pi_mass(pi_mass)
    if v_agg < 0.0:
        raise ValueError(f"variance aggregate must be nonnegative, got {v_agg}")
    inner = ln_plus(2.0 * math.sqrt(v_agg) / (2.0 - math.sqrt(2.0))) ** 2
    main = math.sqrt(2.0 * v_agg) * (
        1.0 + math.sqrt(2.0 * ln_plus(inner / (pi_mass * math.log(2.0))))
    )
    return main - 5.0 * math.log(pi_mass) + 4.0


def bound_theorem3(v_agg: float, pi_mass: float, horizon: int) -> float:
    """Guarantee of the improper-prior rule:
    sqrt(2V)(1 + sqrt(2 ln((1/2 + ln(T+1))/pi))) + 5 ln(1 + (1 + 2 ln(T+1))/pi).

    At T = 0 and pi = 1 the inner logarithm of the first term is negative;
    the term is multiplied by sqrt(V) = 0 there (no rounds, no variance), so
    V = 0 short-circuits the first term to zero.
    """
    _check_pi_mass(pi_mass)
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    if v_agg < 0.0:
        raise ValueError(f"variance aggregate must be nonnegative, got {v_agg}")
    log_t = math.log(horizon + 1.0)
    tail = 5.0 * math.log(1.0 + (1.0 + 2.0 * log_t) / pi_mass)
    if v_agg == 0.0:
        return tail
    inner = max((0.5 + log_t) / pi_mass, 1.0)
    return math.sqrt(2.0 * v_agg) * (1.0 + math.sqrt(2.0 * math.log(inner))) + tail


def bound_eq20(v_v: float, entropy: float, num_components: int, alpha: float, gamma_mass: float) -> float:
    """Mistuned-grid guarantee (2/sqrt(alpha(2-alpha))) sqrt(V (D - K ln gamma))."""
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if not 0.0 < gamma_mass <= 1.0:
        raise ValueError(f"gamma mass must lie in (0, 1], got {gamma_mass}")
    coeff = 2.0 / math.sqrt(alpha * (2.0 - alpha))
    return coeff * math.sqrt(v_v * (entropy - num_components * math.log(gamma_mass)))


def bound_theorem4(v_v: float, entropy: float, num_components: int, horizon: int) -> float:
    """Final guarantee of the learning-rate-aggregated combinatorial rule:
    (4/sqrt 3) sqrt(V (D + K ln ceil(1+log2 T))) + 4 D + K max(4 ln ceil(1+log2 T), 1).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if v_v < 0.0 or entropy < 0.0:
        raise ValueError("variance and entropy must be nonnegative")
    g = ceil_one_plus_log2(horizon)
    log_g = math.log(g)
    main = 4.0 / math.sqrt(3.0) * math.sqrt(v_v * (entropy + num_components * log_g))
    return main + 4.0 * entropy + num_components * max(4.0 * log_g, 1.0)


def binary_relative_entropy(v, u) -> float:
    """Sum over coordinates of v ln(v/u) + (1-v) ln((1-v)/(1-u)).

    ``v`` may touch the boundary (0 ln 0 = 0); ``u`` should be interior.
    A boundary coordinate of ``u`` with a mismatched ``v`` yields inf.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if v.shape != u.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {u.shape}")
    if np.any((v < 0.0) | (v > 1.0)) or np.any((u < 0.0) | (u > 1.0)):
        raise ValueError("arguments must lie in [0, 1] componentwise")
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(v > 0.0, v * (np.log(v) - np.log(u)), 0.0)
        second = np.where(v < 1.0, (1.0 - v) * (np.log1p(-v) - np.log1p(-u)), 0.0)
    total = float(np.sum(first + second))
    return total if not math.isnan(total) else math.inf
