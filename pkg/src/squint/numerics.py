"""Shared floating-point kernels for learning-rate integrals.

Everything downstream reduces to integrals of exp(eta*r - eta^2*v) over the
learning-rate interval [0, 1/2], possibly with an extra eta factor or a prior
density in the integrand.  This module provides:

- the Gauss error function and a log-domain complementary error function,
- ``log_xi`` / ``xi_stable``: the closed erf-based form of
  int_0^{1/2} exp(eta*r - eta^2*v) deta for v > 0, evaluated without
  catastrophic cancellation over the whole (r, v) plane,
- analytic values for the degenerate v == 0 case,
- the eta-weighted integral int_0^{1/2} eta exp(eta*x - eta^2*y) deta used by
  conjugate-prior weights,
- deterministic adaptive Simpson quadrature (scalar and batched over vector
  integrands).

All potentially huge quantities are handled in log domain: the integrals grow
like exp(r/2 - v/4) or exp(r^2/(4v)) and overflow float64 long before the
algorithms upstream stop being well defined.  The ``log_*`` functions are
total for any finite arguments; the plain-valued wrappers overflow to ``inf``
where the value itself is not representable.

Naive evaluation of the erf-based closed form loses all precision when both
erf arguments are large with the same sign (the difference of two values that
round to +-1).  The classical fix is to switch to a second-order large-|r|
expansion, (exp(r/2 - v/4)(r + v) - r)/r^2, outside the window
r in [-12 sqrt(v), v + 12 sqrt(v)].  That expansion is kept here as
``xi_taylor2`` for reference, but it carries a relative error of order
1/72 + v^2/r^2 right at the window edge (0.7% at v=1 and almost 20% at
v=100), so it is not used as the production branch.  Instead the erf
difference is rearranged into complementary error functions of nonnegative
arguments, with an asymptotic scaled-erfc series for arguments beyond 25,
which keeps the relative error near 1e-13 uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadratureError",
    "QuadratureSpec",
    "erf",
    "log_erfc",
    "in_stability_window",
    "log_xi",
    "xi_stable",
    "xi_taylor2",
    "log_exp_integral",
    "log_eta_exp_integral",
    "integrate_adaptive",
    "integrate_adaptive_batch",
    "logsumexp",
    "ceil_one_plus_log2",
]

_LN_SQRT_PI = 0.5 * math.log(math.pi)

# erfc(x) stays a normal float64 up to x ~ 26.6; beyond 25 the asymptotic
# series for the scaled function erfcx(x) = e^{x^2} erfc(x) is accurate to
# ~3e-13 already, so 25 is a safe switch point.
_ERFCX_SERIES_CUTOFF = 25.0

# Exponents below this are safe to exponentiate in float64 with headroom.
_SAFE_EXP = 600.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature exhausted its subdivision budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Interval and tolerances for adaptive Simpson integration.

    The returned integral I satisfies an estimated error bound
    err <= max(abs_tol, rel_tol * |I|).
    """

    lower: float
    upper: float
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 20000

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("integration bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be a positive integer")


def erf(x: float) -> float:
    """Gauss error function on finite inputs.

    Delegates to the platform implementation (correctly-rounded rational
    approximation, error well below 1e-14), with odd symmetry exact in sign.
    """
    if not math.isfinite(x):
        raise ValueError(f"erf requires a finite argument, got {x}")
    return math.erf(x)


def _log_erfcx(x: float) -> float:
    """ln(erfcx(x)) = ln(exp(x^2) erfc(x)) for x >= 0, cancellation-free."""
    if x <= _ERFCX_SERIES_CUTOFF:
        return math.log(math.erfc(x)) + x * x
    z = 1.0 / (x * x)
    # erfcx(x) ~ (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6) + 105/(16x^8)) / (x sqrt(pi))
    s = 1.0 + z * (-0.5 + z * (0.75 + z * (-1.875 + z * 6.5625)))
    return -math.log(x) - _LN_SQRT_PI + math.log(s)


def log_erfc(x: float) -> float:
    """ln(erfc(x)) for any finite x, accurate into the deep right tail."""
    if not math.isfinite(x):
        raise ValueError(f"log_erfc requires a finite argument, got {x}")
    if x <= _ERFCX_SERIES_CUTOFF:
        return math.log(math.erfc(x))
    return _log_erfcx(x) - x * x


def in_stability_window(r: float, v: float) -> bool:
    """Whether r lies in [-12 sqrt(v), v + 12 sqrt(v)] (window closed).

    Inside the window the erf-based closed form is benign even when evaluated
    naively; outside, both erf arguments exceed 6 with the same sign.
    """
    if v <= 0.0:
        raise ValueError(f"stability window requires v > 0, got {v}")
    s = 12.0 * math.sqrt(v)
    return -s <= r <= v + s


def log_xi(r: float, v: float) -> float:
    """ln of xi(r, v) = int_0^{1/2} exp(eta*r - eta^2*v) deta, for v > 0.

    Uses the identity
        xi = sqrt(pi) e^{r^2/(4v)} (erf(a) - erf(b)) / (2 sqrt(v)),
    a = r/(2 sqrt(v)), b = (r - v)/(2 sqrt(v)), rewritten per sign pattern of
    (a, b) so no difference of near-equal quantities is ever formed.  The
    combination a^2 - b^2 is computed exactly as r/2 - v/4.
    """
    if not (math.isfinite(r) and math.isfinite(v)):
        raise ValueError(f"log_xi requires finite inputs, got r={r}, v={v}")
    if v <= 0.0:
        raise ValueError(f"log_xi requires v > 0, got v={v}")
    sv = math.sqrt(v)
    a = r / (2.0 * sv)
    b = (r - v) / (2.0 * sv)
    c = 0.5 * r - 0.25 * v
    base = _LN_SQRT_PI - math.log(2.0 * sv)
    if b >= 0.0:
        # erf(a) - erf(b) = erfc(b) - erfc(a), both arguments >= 0
        delta = -c + _log_erfcx(a) - _log_erfcx(b)
        return base + c + _log_erfcx(b) + math.log1p(-math.exp(delta))
    if a <= 0.0:
        # symmetric case: erfc(-a) - erfc(-b), both arguments >= 0
        delta = c + _log_erfcx(-b) - _log_erfcx(-a)
        return base + _log_erfcx(-a) + math.log1p(-math.exp(delta))
    # b < 0 < a: a plain sum, no cancellation
    return base + a * a + math.log(math.erf(a) + math.erf(-b))


def xi_stable(r: float, v: float) -> float:
    """xi(r, v) as a plain value; overflows to inf when ln xi > ~709.

    For extreme regimes (cumulative statistics of very long games) use
    ``log_xi`` directly.
    """
    lx = log_xi(r, v)
    if lx >= 709.0:
        return math.inf
    return math.exp(lx)


def xi_taylor2(r: float, v: float) -> float:
    """Second-order large-|r| expansion (exp(r/2 - v/4)(r + v) - r) / r^2.

    Reference fallback for |r| far outside the stability window; its relative
    error at the window edge itself reaches the percent range, so production
    code uses ``log_xi`` everywhere instead.  Overflows to inf when the value
    exceeds float64 range.
    """
    if r == 0.0:
        raise ValueError("expansion undefined at r = 0")
    c = 0.5 * r - 0.25 * v
    if c < _SAFE_EXP:
        return (math.exp(c) * (r + v) - r) / (r * r)
    # r large positive: the -r term is negligible at this magnitude
    log_val = c + math.log(r + v) - 2.0 * math.log(r)
    return math.exp(log_val) if log_val < 709.0 else math.inf


def _log_flat_integral(r: float) -> float:
    """ln of int_0^{1/2} e^{eta r} deta = (e^{r/2} - 1)/r, limit 1/2 at r=0."""
    if r == 0.0:
        return math.log(0.5)
    if r > 0.0:
        # e^{r/2}(1 - e^{-r/2})/r, stable for r from 1e-300 up to overflow
        return 0.5 * r + math.log(-math.expm1(-0.5 * r)) - math.log(r)
    return math.log(math.expm1(0.5 * r) / r)


def _log_eta_flat_integral(x: float) -> float:
    """ln of int_0^{1/2} eta e^{eta x} deta = (e^{x/2}(x/2 - 1) + 1)/x^2."""
    if abs(x) < 1e-3:
        # series sum_n x^n / (n! (n+2) 2^{n+2}); 12 terms reach float accuracy
        tot, term = 0.0, 1.0
        for n in range(12):
            if n > 0:
                term *= x / n
            tot += term / ((n + 2) * 2 ** (n + 2))
        return math.log(tot)
    if x > 0.0:
        if x < 2.0 * _SAFE_EXP:
            # e^{x/2}(x/2-1)+1 == expm1(x/2)(x/2-1) + x/2 avoids cancellation
            val = math.expm1(0.5 * x) * (0.5 * x - 1.0) + 0.5 * x
            return math.log(val) - 2.0 * math.log(x)
        return 0.5 * x + math.log(0.5 * x - 1.0) - 2.0 * math.log(x)
    # x < 0: e^{x/2}(x/2 - 1) lies in (-1, 0)
    return math.log1p(math.exp(0.5 * x) * (0.5 * x - 1.0)) - 2.0 * math.log(-x)


def _exponent_peak(r: float, v: float) -> float:
    """argmax over [0, 1/2] of eta*r - eta^2*v."""
    if v > 0.0:
        return min(max(r / (2.0 * v), 0.0), 0.5)
    if v == 0.0:
        return 0.5 if r >= 0.0 else 0.0
    # convex exponent: the max sits at one of the endpoints
    return 0.5 if 0.5 * r - 0.25 * v >= 0.0 else 0.0


# Effectively relative-only tolerance: the shifted integrals can be as small
# as 1/r^2 for |r| huge, and the log downstream needs relative accuracy.
_REL_ONLY_ABS_TOL = 1e-280

# exp(-45) ~ 2.9e-20: mass beyond that drop of the exponent is invisible at
# the 1e-10 relative tolerance used below.
_DECAY_BUDGET = 45.0


def _shifted_log_quadrature(r: float, v: float, with_eta: bool) -> float:
    """ln int_0^{1/2} [eta] e^{eta r - eta^2 v} deta by max-shifted Simpson.

    The integrand is shifted by its peak exponent and, for concave exponents,
    the domain is clipped to the region where the exponent is within 45 of
    the peak; an exponential boundary layer of width 1e-6 would otherwise
    force millions of panels on the full interval.
    """
    peak = _exponent_peak(r, v)
    shift = peak * r - peak * peak * v

    def f(eta: np.ndarray) -> np.ndarray:
        g = eta * r - eta * eta * v - shift
        out = np.exp(g)
        if with_eta:
            out = eta * out
        return out[:, None]

    if v >= 0.0:
        # distance from the peak at which the exponent has dropped by 45
        rate = abs(r - 2.0 * peak * v)
        d = math.inf
        if rate > 0.0:
            d = _DECAY_BUDGET / rate
        if v > 0.0:
            d = min(d, math.sqrt(_DECAY_BUDGET / v))
        d = min(d, 0.5)
        lo = max(0.0, peak - d)
        hi = min(0.5, peak + d)
        knots = [peak + s * k * d for s in (-1.0, 1.0) for k in (0.02, 0.07, 0.25)]
    else:
        # convex exponent: possible layers at both endpoints, keep the full
        # interval and seed subdivision near both ends
        lo, hi = 0.0, 0.5
        s0 = 1.0 / max(abs(r), abs(v), 2.0)
        knots = [k * s0 for k in (1.0, 3.0, 10.0, 45.0)]
        knots += [0.5 - k for k in knots]

    spec = QuadratureSpec(
        lo, hi, abs_tol=_REL_ONLY_ABS_TOL, rel_tol=1e-10, max_subdivisions=200_000
    )
    val = integrate_adaptive_batch(f, spec, knots=knots)[0]
    return shift + math.log(val)


def log_exp_integral(r: float, v: float) -> float:
    """ln of int_0^{1/2} exp(eta*r - eta^2*v) deta for any finite (r, v).

    v > 0 uses the closed erf form, v == 0 the analytic value, v < 0
    (convex exponent, still finite on the interval) shifted quadrature.
    """
    if not (math.isfinite(r) and math.isfinite(v)):
        raise ValueError(f"log_exp_integral requires finite inputs, got r={r}, v={v}")
    if v > 0.0:
        return log_xi(r, v)
    if v == 0.0:
        return _log_flat_integral(r)
    return _shifted_log_quadrature(r, v, with_eta=False)


# Closed-form cancellation guard: fall back to quadrature when fewer than
# ~10 significant digits survive the signed combination.
_CANCELLATION_CAP = 1e6


def _log_eta_closed(x: float, y: float) -> float | None:
    """Closed form ln((x xi + 1 - e^{x/2-y/4}) / (2y)) via signed log-sum.

    The three terms can cancel almost completely (the combination equals
    2y J, which is tiny when the integral is dominated by a thin layer);
    returns None when the estimated relative error of the float combination
    exceeds ~2e-10, signalling the caller to integrate numerically instead.
    """
    c = 0.5 * x - 0.25 * y
    terms = [(1.0, 0.0), (-1.0, c)]
    if x != 0.0:
        terms.append((math.copysign(1.0, x), log_xi(x, y) + math.log(abs(x))))
    peak = max(m for _, m in terms)
    signed = sum(s * math.exp(m - peak) for s, m in terms)
    gross = sum(math.exp(m - peak) for _, m in terms)
    if signed <= 0.0 or gross > _CANCELLATION_CAP * signed:
        return None
    return peak + math.log(signed) - math.log(2.0 * y)


def log_eta_exp_integral(x: float, y: float) -> float:
    """ln of J(x, y) = int_0^{1/2} eta exp(eta*x - eta^2*y) deta.

    For y > 0 uses the closed form J = (x xi(x,y) + 1 - e^{x/2 - y/4})/(2y)
    combined in log domain, falling back to max-shifted adaptive quadrature
    whenever the combination would cancel away too many digits (tiny
    arguments, or |x| extremely large relative to y).
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"log_eta_exp_integral requires finite inputs, got x={x}, y={y}")
    if y == 0.0:
        return _log_eta_flat_integral(x)
    if y > 0.0:
        val = _log_eta_closed(x, y)
        if val is not None:
            return val
    return _shifted_log_quadrature(x, y, with_eta=True)


def integrate_adaptive_batch(
    f: Callable[[np.ndarray], np.ndarray],
    spec: QuadratureSpec,
    knots: Sequence[float] | None = None,
) -> np.ndarray:
    """Adaptive Simpson quadrature of a vector-valued integrand.

    ``f`` maps an array of abscissas (n,) to values (n, m); the m components
    are integrated simultaneously over [spec.lower, spec.upper] and share the
    subdivision pattern.  ``knots`` seeds extra subdivision points (e.g. the
    known location of a sharp bump, which a coarse initial grid would
    otherwise miss entirely).

    Deterministic: identical inputs produce identical results.  Raises
    ``QuadratureError`` when max_subdivisions is exhausted before every
    interval meets its width-proportional share of the error budget.
    """
    lo, hi = spec.lower, spec.upper
    width = hi - lo
    edges = list(np.linspace(lo, hi, 9))
    if knots is not None:
        edges.extend(k for k in knots if lo < k < hi)
    edges = sorted(set(edges))
    # drop near-duplicate edges, keeping the endpoints
    cleaned = [edges[0]]
    for e in edges[1:]:
        if e - cleaned[-1] > 1e-12 * width:
            cleaned.append(e)
    cleaned[-1] = hi

    a = np.asarray(cleaned[:-1])
    b = np.asarray(cleaned[1:])
    mid = 0.5 * (a + b)
    fa = np.asarray(f(a), dtype=float)
    fb = np.asarray(f(b), dtype=float)
    fm = np.asarray(f(mid), dtype=float)
    if fa.ndim != 2:
        raise ValueError("batch integrand must return a 2-d array (points, components)")
    m_dim = fa.shape[1]
    coarse = (b - a)[:, None] / 6.0 * (fa + 4.0 * fm + fb)

    done = np.zeros(m_dim)
    n_subdiv = len(cleaned) - 1
    while a.size:
        lm = 0.5 * (a + mid)
        rm = 0.5 * (mid + b)
        flm = np.asarray(f(lm), dtype=float)
        frm = np.asarray(f(rm), dtype=float)
        s_left = (mid - a)[:, None] / 3.0 * (fa + 4.0 * flm + fm)
        s_right = (b - mid)[:, None] / 3.0 * (fm + 4.0 * frm + fb)
        fine = 0.5 * (s_left + s_right)
        err = np.abs(fine - coarse) / 15.0

        total_est = done + fine.sum(axis=0)
        budget = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total_est))
        share = ((b - a) / width)[:, None] * budget[None, :]
        ok = (err <= share).all(axis=1)

        if ok.any():
            done += (fine[ok] + (fine[ok] - coarse[ok]) / 15.0).sum(axis=0)
        keep = ~ok
        n_subdiv += int(keep.sum())
        if n_subdiv > spec.max_subdivisions:
            raise QuadratureError(
                f"adaptive Simpson exceeded {spec.max_subdivisions} subdivisions; "
                f"worst interval error {float(err[keep].max()):.3e}"
            )
        a_k, b_k, mid_k = a[keep], b[keep], mid[keep]
        fa_k, fb_k, fm_k = fa[keep], fb[keep], fm[keep]
        a = np.concatenate([a_k, mid_k])
        b = np.concatenate([mid_k, b_k])
        mid = np.concatenate([lm[keep], rm[keep]])
        fa = np.concatenate([fa_k, fm_k])
        fb = np.concatenate([fm_k, fb_k])
        fm = np.concatenate([flm[keep], frm[keep]])
        coarse = np.concatenate([s_left[keep] * 0.5, s_right[keep] * 0.5])

    return done


def integrate_adaptive(
    f: Callable[[float], float],
    spec: QuadratureSpec,
    knots: Sequence[float] | None = None,
) -> float:
    """Adaptive Simpson integral of a scalar function over [lower, upper].

    The integrand must be finite on the closed interval; removable endpoint
    singularities are the caller's job (pass a function returning the limit
    value at the endpoint).
    """

    def batch(xs: np.ndarray) -> np.ndarray:
        return np.array([[f(float(x))] for x in xs])

    return float(integrate_adaptive_batch(batch, spec, knots=knots)[0])


def logsumexp(values: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Max-shifted log(sum(exp(values))); tolerates -inf entries."""
    values = np.asarray(values, dtype=float)
    m = np.max(values, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(values - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def ceil_one_plus_log2(t: int) -> int:
    """ceil(1 + log2(t)) computed exactly on integers, t >= 1."""
    if t < 1:
        raise ValueError(f"horizon must be >= 1, got {t}")
    return 1 + (int(t) - 1).bit_length()
