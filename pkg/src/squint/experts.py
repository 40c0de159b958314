"""Prediction with expert advice: game state and weight rules.

The game state is the sufficient statistic (cumulative regret and uncentered
regret variance per expert) from which every weight rule here is computed.
Each round the learner plays a probability vector w on K experts, the
environment reveals losses in [0,1]^K, and expert k's instantaneous regret is
r^k = w . losses - losses^k.

Weight rules:

- ``squint_weights_conjugate``: w^k proportional to
  pi(k) int_0^{1/2} exp(eta(a+R^k) - eta^2(b+V^k)) eta deta,
  the closed-form family indexed by prior parameters (a, b); a = b = 0 is the
  uniform learning-rate prior.
- ``squint_weights_improper``: the eta factor of the rule cancels a 1/eta
  prior density, leaving w^k proportional to
  pi(k) int_0^{1/2} exp(eta R^k - eta^2 V^k) deta.
- ``squint_weights_cv``: near-1/eta proper prior with density
  ln(2)/(eta ln^2 eta); no closed form, adaptive quadrature.
- ``squint_weights_grid``: discrete prior on learning-rate points.
- ``iprod_weights_grid``: replaces exp(eta R - eta^2 V) by the product
  prod_t (1 + eta r_t), which requires the full regret history.
- ``hedge_weights``: classic exponentially weighted averages baseline.

All accumulation happens in log domain with a max shift before
exponentiation, so the rules stay finite for horizons up to 1e7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .numerics import (
    QuadratureSpec,
    integrate_adaptive_batch,
    log_eta_exp_integral,
    log_exp_integral,
    logsumexp,
)

__all__ = [
    "ExpertGameState",
    "ConjugatePrior",
    "CVPrior",
    "ImproperPrior",
    "DiscreteGridPrior",
    "LearningRatePrior",
    "update",
    "squint_weights_conjugate",
    "squint_weights_improper",
    "squint_weights_cv",
    "squint_weights_grid",
    "iprod_weights_grid",
    "hedge_weights",
    "weights_for_prior",
    "potential",
    "cv_log_integrals",
    "improper_potential_terms",
    "cv_potential_terms",
]

SIMPLEX_TOL = 1e-12


def _check_simplex(p: np.ndarray, what: str) -> None:
    if np.any(p < 0.0):
        raise ValueError(f"{what} has negative entries")
    if abs(float(p.sum()) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{what} must sum to 1 within {SIMPLEX_TOL}, got {p.sum()!r}")


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - logsumexp(log_w))
    return w / w.sum()


@dataclass(frozen=True)
class ExpertGameState:
    """Per-expert cumulative statistics after t rounds.

    ``regret[k]`` is the sum of instantaneous regrets against expert k,
    ``variance[k]`` the sum of their squares, and ``cum_loss[k]`` expert k's
    own cumulative loss (used by the Hedge baseline and by loss-based subset
    selection; the squint rules never read it).
    """

    prior: np.ndarray
    regret: np.ndarray
    variance: np.ndarray
    cum_loss: np.ndarray
    t: int = 0

    def __post_init__(self):
        for name in ("prior", "regret", "variance", "cum_loss"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        k = self.prior.shape[0]
        if any(getattr(self, n).shape != (k,) for n in ("regret", "variance", "cum_loss")):
            raise ValueError("state vectors must share the prior's length")
        _check_simplex(self.prior, "prior")
        slack = 1e-9 * max(1, self.t)
        if np.any(self.variance < -slack) or np.any(self.variance > self.t + slack):
            raise ValueError("variance must lie in [0, t]")
        if np.any(np.abs(self.regret) > self.t + slack):
            raise ValueError("cumulative regret must lie in [-t, t]")

    @property
    def num_experts(self) -> int:
        return self.prior.shape[0]

    @classmethod
    def from_prior(cls, prior) -> "ExpertGameState":
        prior = np.asarray(prior, dtype=float)
        z = np.zeros_like(prior)
        return cls(prior=prior, regret=z, variance=z.copy(), cum_loss=z.copy(), t=0)

    @classmethod
    def uniform(cls, num_experts: int) -> "ExpertGameState":
        if num_experts < 1:
            raise ValueError("need at least one expert")
        return cls.from_prior(np.full(num_experts, 1.0 / num_experts))


@dataclass(frozen=True)
class ConjugatePrior:
    """Density proportional to exp(a eta - b eta^2) on [0, 1/2]; (0, 0) is uniform."""

    a: float = 0.0
    b: float = 0.0


@dataclass(frozen=True)
class CVPrior:
    """Density ln(2) / (eta ln^2 eta) on (0, 1/2]; weights need quadrature."""

    quadrature: QuadratureSpec = field(
        default_factory=lambda: QuadratureSpec(0.0, 0.5, abs_tol=1e-12, rel_tol=1e-10)
    )


@dataclass(frozen=True)
class ImproperPrior:
    """The non-normalizable 1/eta density; the weight rule stays well defined."""


@dataclass(frozen=True)
class DiscreteGridPrior:
    """Point masses on a decreasing grid of learning rates in (0, 1/2]."""

    etas: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "etas", np.asarray(self.etas, dtype=float))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        if self.etas.ndim != 1 or self.etas.shape != self.masses.shape:
            raise ValueError("etas and masses must be 1-d arrays of equal length")
        if np.any(self.etas <= 0.0) or np.any(self.etas > 0.5):
            raise ValueError("grid points must lie in (0, 1/2]")
        if np.any(np.diff(self.etas) >= 0.0):
            raise ValueError("grid points must be strictly decreasing")
        _check_simplex(self.masses, "grid masses")

    @classmethod
    def uniform_on(cls, etas) -> "DiscreteGridPrior":
        etas = np.asarray(etas, dtype=float)
        return cls(etas=etas, masses=np.full(etas.shape, 1.0 / etas.size))


LearningRatePrior = Union[ConjugatePrior, CVPrior, ImproperPrior, DiscreteGridPrior]


def update(state: ExpertGameState, weights: np.ndarray, losses: np.ndarray) -> ExpertGameState:
    """Advance the state by one round played with ``weights`` against ``losses``."""
    weights = np.asarray(weights, dtype=float)
    losses = np.asarray(losses, dtype=float)
    k = state.num_experts
    if weights.shape != (k,) or losses.shape != (k,):
        raise ValueError(f"expected {k}-vectors, got {weights.shape} and {losses.shape}")
    _check_simplex(weights, "weights")
    if np.any(losses < 0.0) or np.any(losses > 1.0):
        raise ValueError("losses must lie in [0, 1]")
    r = float(weights @ losses) - losses
    return replace(
        state,
        regret=state.regret + r,
        variance=state.variance + r * r,
        cum_loss=state.cum_loss + losses,
        t=state.t + 1,
    )


def squint_weights_conjugate(state: ExpertGameState, a: float = 0.0, b: float = 0.0) -> np.ndarray:
    """Closed-form weights under the conjugate learning-rate prior."""
    log_w = np.array(
        [
            math.log(p) + log_eta_exp_integral(a + r, b + v)
            for p, r, v in zip(state.prior, state.regret, state.variance)
        ]
    )
    return _normalize_log_weights(log_w)


def squint_weights_improper(state: ExpertGameState) -> np.ndarray:
    """Weights under the improper 1/eta prior (closed form)."""
    log_w = np.array(
        [
            math.log(p) + log_exp_integral(r, v)
            for p, r, v in zip(state.prior, state.regret, state.variance)
        ]
    )
    return _normalize_log_weights(log_w)


# Substituting u = -1/ln(eta) maps (0, 1/2] to (0, 1/ln 2] and turns the
# prior density ln2/(eta ln^2 eta) deta into plain ln2 du: the transformed
# integrands vanish at u = 0 with all derivatives (eta = e^{-1/u}), so the
# quadrature never chases the slowly-decaying 1/ln^2 endpoint.
_CV_UPPER = 1.0 / math.log(2.0)


def _cv_eta_of_u(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(u > 0.0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)


def _cv_peak_knots(regret: np.ndarray, variance: np.ndarray, peak: np.ndarray) -> list[float]:
    knots = []
    for r, v, p in zip(regret, variance, peak):
        if 0.0 < p < 0.5 and v > 0.0:
            u_star = -1.0 / math.log(p)
            w_eta = 1.0 / math.sqrt(2.0 * v)
            w_u = w_eta * u_star * u_star / p
            for k in (-3.0, -1.0, 0.0, 1.0, 3.0):
                cand = u_star + k * w_u
                if 0.0 < cand < _CV_UPPER:
                    knots.append(cand)
        if r < -math.e:
            # mass concentrates near eta ~ 1/|R|, i.e. u ~ 1/ln|R|
            knots.append(1.0 / math.log(-r))
    return sorted(set(knots))


def cv_log_integrals(
    regret: np.ndarray, variance: np.ndarray, spec: QuadratureSpec | None = None
) -> np.ndarray:
    """Per-expert ln of ln(2) int_0^{1/2} e^{eta R - eta^2 V} / ln^2(eta) deta.

    All experts share one batched adaptive quadrature (in the transformed
    variable u = -1/ln eta), each max-shifted by its own peak exponent.  Only
    the tolerances and subdivision budget of ``spec`` are used.
    """
    if spec is None:
        spec = QuadratureSpec(0.0, 0.5, abs_tol=1e-12, rel_tol=1e-10)
    regret = np.asarray(regret, dtype=float)
    variance = np.asarray(variance, dtype=float)
    with np.errstate(divide="ignore"):
        peak = np.where(variance > 0.0, regret / np.maximum(2.0 * variance, 1e-300), math.inf)
    peak = np.clip(np.where(regret >= 0.0, np.minimum(peak, 0.5), 0.0), 0.0, 0.5)
    shift = peak * regret - peak * peak * variance

    def f(u: np.ndarray) -> np.ndarray:
        eta = _cv_eta_of_u(u)
        g = np.outer(eta, regret) - np.outer(eta * eta, variance) - shift[None, :]
        return np.exp(g) * eta[:, None]

    u_spec = QuadratureSpec(
        0.0, _CV_UPPER, abs_tol=spec.abs_tol, rel_tol=spec.rel_tol,
        max_subdivisions=spec.max_subdivisions,
    )
    integrals = integrate_adaptive_batch(f, u_spec, knots=_capped_knots(regret, variance, peak))
    return shift + np.log(integrals) + math.log(math.log(2.0))


def _capped_knots(regret, variance, peak) -> list[float] | None:
    # per-component peak knots help sharp bumps; for large stacked batches
    # they would multiply the initial grid, and a uniform seed suffices
    # (bump widths in the substituted variable stay wide for variance <= t)
    knots = _cv_peak_knots(regret, variance, peak)
    if len(knots) > 48:
        knots = list(np.linspace(0.0, _CV_UPPER, 50)[1:-1])
    return knots or None


def squint_weights_cv(state: ExpertGameState, spec: QuadratureSpec | None = None) -> np.ndarray:
    """Weights under the near-1/eta proper prior, by adaptive quadrature."""
    log_w = np.log(state.prior) + cv_log_integrals(state.regret, state.variance, spec)
    return _normalize_log_weights(log_w)


def squint_weights_grid(state: ExpertGameState, prior: DiscreteGridPrior) -> np.ndarray:
    """Weights under a discrete learning-rate prior, in log domain."""
    etas, masses = prior.etas, prior.masses
    g = np.outer(state.regret, etas) - np.outer(state.variance, etas * etas)
    log_terms = g + np.log(masses * etas)[None, :]
    log_w = np.log(state.prior) + logsumexp(log_terms, axis=1)
    return _normalize_log_weights(log_w)


def iprod_weights_grid(
    history: np.ndarray, prior_pi: np.ndarray, prior: DiscreteGridPrior
) -> np.ndarray:
    """Weights from products prod_t (1 + eta r_t^k) over a discrete grid.

    ``history`` holds the instantaneous regret vectors r_1..r_T as rows; the
    products are accumulated as sums of log1p terms.  Requires every factor
    1 + eta r to stay positive, which holds whenever |eta r| <= 1/2.
    """
    history = np.asarray(history, dtype=float)
    prior_pi = np.asarray(prior_pi, dtype=float)
    _check_simplex(prior_pi, "prior")
    if history.size == 0:
        history = history.reshape(0, prior_pi.shape[0])
    if history.ndim != 2 or history.shape[1] != prior_pi.shape[0]:
        raise ValueError("history must be (rounds, experts)")
    factors = 1.0 + prior.etas[None, :, None] * history[:, None, :]
    if np.any(factors <= 0.0):
        raise ValueError("product factor 1 + eta*r is not positive; need |eta*r| <= 1/2")
    log_products = np.log1p(prior.etas[None, :, None] * history[:, None, :]).sum(axis=0)
    log_terms = log_products + np.log(prior.masses * prior.etas)[:, None]
    log_w = np.log(prior_pi) + logsumexp(log_terms, axis=0)
    return _normalize_log_weights(log_w)


def hedge_weights(state: ExpertGameState, eta: float) -> np.ndarray:
    """Exponential weights on cumulative losses at a fixed learning rate."""
    if eta <= 0.0:
        raise ValueError(f"hedge learning rate must be positive, got {eta}")
    log_w = np.log(state.prior) - eta * state.cum_loss
    return _normalize_log_weights(log_w)


def weights_for_prior(state: ExpertGameState, prior: LearningRatePrior) -> np.ndarray:
    """Dispatch to the weight rule matching the prior choice."""
    if isinstance(prior, ConjugatePrior):
        return squint_weights_conjugate(state, prior.a, prior.b)
    if isinstance(prior, CVPrior):
        return squint_weights_cv(state, prior.quadrature)
    if isinstance(prior, ImproperPrior):
        return squint_weights_improper(state)
    if isinstance(prior, DiscreteGridPrior):
        return squint_weights_grid(state, prior)
    raise TypeError(f"unknown learning-rate prior {prior!r}")


def improper_potential_terms(regret, variance) -> np.ndarray:
    """Per-expert int_0^{1/2} (e^{eta R - eta^2 V} - 1)/eta deta.

    Accepts stacked statistics of any length (e.g. many games side by side);
    the integrand takes the limit value R at eta = 0.  Linear-domain: usable
    while max R^2/(4V) stays below ~700.
    """
    regret = np.asarray(regret, dtype=float)
    variance = np.asarray(variance, dtype=float)

    def f(eta: np.ndarray) -> np.ndarray:
        g = np.outer(eta, regret) - np.outer(eta * eta, variance)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(
                eta[:, None] > 0.0,
                np.expm1(g) / np.where(eta[:, None] > 0.0, eta[:, None], 1.0),
                regret[None, :],
            )
        return vals

    spec = QuadratureSpec(0.0, 0.5, abs_tol=1e-12, rel_tol=1e-10)
    knots = _interior_peaks(regret, variance)
    if knots is not None and len(knots) > 48:
        knots = list(np.linspace(0.0, 0.5, 50)[1:-1])
    return integrate_adaptive_batch(f, spec, knots=knots)


def cv_potential_terms(regret, variance) -> np.ndarray:
    """Per-expert int (e^{eta R - eta^2 V} - 1) gamma(eta) deta, CV density.

    Computed in the substituted variable u = -1/ln(eta), where the density
    becomes flat: ln2 * int_0^{1/ln2} (e^{g(eta(u))} - 1) du.
    """
    regret = np.asarray(regret, dtype=float)
    variance = np.asarray(variance, dtype=float)

    def f(u: np.ndarray) -> np.ndarray:
        eta = _cv_eta_of_u(u)
        g = np.outer(eta, regret) - np.outer(eta * eta, variance)
        return np.expm1(g)

    spec = QuadratureSpec(0.0, _CV_UPPER, abs_tol=1e-12, rel_tol=1e-10)
    with np.errstate(divide="ignore"):
        peak = np.where(variance > 0.0, regret / np.maximum(2.0 * variance, 1e-300), math.inf)
    peak = np.clip(np.where(regret >= 0.0, np.minimum(peak, 0.5), 0.0), 0.0, 0.5)
    return math.log(2.0) * integrate_adaptive_batch(
        f, spec, knots=_capped_knots(regret, variance, peak)
    )


def _potential_improper(state: ExpertGameState) -> float:
    return float(state.prior @ improper_potential_terms(state.regret, state.variance))


def _potential_cv(state: ExpertGameState) -> float:
    return float(state.prior @ cv_potential_terms(state.regret, state.variance))


def _interior_peaks(regret: np.ndarray, variance: np.ndarray) -> list[float] | None:
    peaks = []
    for r, v in zip(regret, variance):
        if v > 0.0 and 0.0 < r / (2.0 * v) < 0.5:
            center = float(r / (2.0 * v))
            width = 1.0 / math.sqrt(2.0 * v)
            for k in (-3.0, -1.0, 0.0, 1.0, 3.0):
                cand = center + k * width
                if 0.0 < cand < 0.5:
                    peaks.append(cand)
    return sorted(set(peaks)) or None


def potential(state: ExpertGameState, prior: LearningRatePrior) -> float:
    """Diagnostic potential: prior-averaged exp(eta R - eta^2 V) minus one.

    Non-positive on any history whose weights were produced by the matching
    weight rule; zero on the empty history.  For the improper prior the
    constant cannot be pulled out of the divergent 1/eta integral, so the
    subtracted form (e^{g} - 1)/eta is integrated directly.

    Exponents are evaluated in linear domain here, so this diagnostic is
    usable while max_k R^k*2/(4 V^k) stays below ~700 (always true for
    horizons below ~2800; weight rules themselves have no such limit).
    """
    if isinstance(prior, ConjugatePrior):
        log_z = log_exp_integral(prior.a, prior.b)
        log_terms = np.array(
            [
                math.log(p) + log_exp_integral(prior.a + r, prior.b + v) - log_z
                for p, r, v in zip(state.prior, state.regret, state.variance)
            ]
        )
        return math.expm1(logsumexp(log_terms))
    if isinstance(prior, DiscreteGridPrior):
        g = np.outer(state.regret, prior.etas) - np.outer(state.variance, prior.etas**2)
        log_terms = g + np.log(prior.masses)[None, :] + np.log(state.prior)[:, None]
        return math.expm1(logsumexp(log_terms))
    if isinstance(prior, ImproperPrior):
        return _potential_improper(state)
    if isinstance(prior, CVPrior):
        return _potential_cv(state)
    raise TypeError(f"unknown learning-rate prior {prior!r}")
