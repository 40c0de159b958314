"""Concept classes over {0,1}^K and their usage polytopes.

A concept class C is a finite set of 0/1 vectors (subsets of a ground set,
source-sink paths of a DAG, ...); the learner's collapsed action set is the
convex hull U = conv(C).  This module provides, per class:

- membership / feasibility residual for the hull's linear description,
- binary-relative-entropy (Bregman) projection onto the hull,
- decomposition of a hull point into a convex combination of concepts,
- exhaustive vertex enumeration for small-instance oracles.

Projections exploit that every hull constraint here is linear with +-1
coefficients: the projection onto a single such equality moves all incident
coordinates by a common shift in logit space, u_e -> sigmoid(logit(u_e) +/-
lambda), with the shift found by monotone root-finding.  The subset class
needs exactly one such shift; the flow polytope of a DAG cycles Bregman
projections through its conservation equalities until the residual is met
(for affine equalities the cyclic method converges to the projection onto
the intersection without correction terms).

Coordinates are clamped to [1e-12, 1 - 1e-12] before any projection: the
entropy geometry is undefined at the boundary and multiplicative updates
upstream can approach it.
"""

from __future__ import annotations

import itertools
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProjectionError",
    "Decomposition",
    "ConceptClass",
    "KSubsets",
    "DagPaths",
    "ExplicitVertices",
    "project",
    "decompose",
    "enumerate_vertices",
    "unconstrained_update",
    "INTERIOR_EPS",
]

INTERIOR_EPS = 1e-12
PROJECTION_RESIDUAL = 1e-9
DECOMPOSITION_RESIDUAL = 1e-8
MAX_SWEEPS = 10**4
DEFAULT_VERTEX_CAP = 10**5


class ProjectionError(RuntimeError):
    """Cyclic projection failed to reach the residual tolerance."""


def clamp_interior(u: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float), INTERIOR_EPS, 1.0 - INTERIOR_EPS)


def _logit(u: np.ndarray) -> np.ndarray:
    return np.log(u) - np.log1p(-u)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class Decomposition:
    """A hull point written as a convex combination of concepts."""

    concepts: np.ndarray  # (n, K), rows in {0, 1}
    weights: np.ndarray  # (n,), on the simplex

    def __post_init__(self):
        object.__setattr__(self, "concepts", np.asarray(self.concepts, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.concepts.ndim != 2 or self.weights.shape != (self.concepts.shape[0],):
            raise ValueError("need (n, K) concepts and (n,) weights")
        if np.any(self.weights < 0.0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must form a probability vector")

    def usage(self) -> np.ndarray:
        """The reconstructed point sum_i weights_i concepts_i."""
        return self.weights @ self.concepts


class ConceptClass(ABC):
    """Interface shared by all concept classes."""

    num_components: int

    @abstractmethod
    def hull_residual(self, u: np.ndarray) -> float:
        """Max violation of the hull's linear description (incl. the box)."""

    @abstractmethod
    def project(self, u_tilde: np.ndarray) -> np.ndarray:
        """Entropy projection of an interior point onto the hull."""

    @abstractmethod
    def decompose(self, u: np.ndarray) -> Decomposition:
        """Write a hull point as a convex combination of concepts."""

    @abstractmethod
    def vertices(self, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
        """All concepts as rows of a 0/1 matrix; raises when more than cap."""

    def project_batch(self, u_tildes: np.ndarray) -> np.ndarray:
        """Row-wise projection; subclasses may vectorize."""
        return np.stack([self.project(row) for row in np.atleast_2d(u_tildes)])

    def contains(self, u: np.ndarray, tol: float = DECOMPOSITION_RESIDUAL) -> bool:
        return self.hull_residual(u) <= tol

    def _check_dim(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.num_components,):
            raise ValueError(f"expected a {self.num_components}-vector, got shape {u.shape}")
        return u


def _box_residual(u: np.ndarray) -> float:
    return float(max(np.max(-u, initial=0.0), np.max(u - 1.0, initial=0.0), 0.0))


class KSubsets(ConceptClass):
    """All m-element subsets of {1..K}; hull = {u in [0,1]^K : sum u = m}."""

    def __init__(self, num_components: int, subset_size: int):
        if num_components < 1:
            raise ValueError("need at least one component")
        if not 0 <= subset_size <= num_components:
            raise ValueError(f"subset size must lie in [0, {num_components}]")
        self.num_components = num_components
        self.subset_size = subset_size

    def hull_residual(self, u: np.ndarray) -> float:
        u = self._check_dim(u)
        return max(abs(float(u.sum()) - self.subset_size), _box_residual(u))

    def project_batch(self, u_tildes: np.ndarray) -> np.ndarray:
        mat = clamp_interior(np.atleast_2d(u_tildes))
        if mat.shape[1] != self.num_components:
            raise ValueError(f"expected {self.num_components} columns")
        m = self.subset_size
        if m == 0:
            return np.zeros_like(mat)
        if m == self.num_components:
            return np.ones_like(mat)
        logits = _logit(mat)
        lo = np.full(mat.shape[0], -800.0)
        hi = np.full(mat.shape[0], 800.0)
        lam = np.zeros(mat.shape[0])
        for _ in range(80):
            lam = 0.5 * (lo + hi)
            g = _sigmoid(logits + lam[:, None]).sum(axis=1) - m
            if np.all(np.abs(g) <= 1e-12):
                break
            high = g > 0.0
            hi = np.where(high, lam, hi)
            lo = np.where(high, lo, lam)
        return _sigmoid(logits + lam[:, None])

    def project(self, u_tilde: np.ndarray) -> np.ndarray:
        u_tilde = self._check_dim(u_tilde)
        return self.project_batch(u_tilde[None, :])[0]

    def decompose(self, u: np.ndarray) -> Decomposition:
        u = self._check_dim(u)
        if not self.contains(u):
            raise ValueError(f"point is outside the hull (residual {self.hull_residual(u):.2e})")
        m, k = self.subset_size, self.num_components
        if m == 0:
            return Decomposition(np.zeros((1, k)), np.array([1.0]))
        residual = np.clip(u, 0.0, 1.0).astype(float)
        mass = 1.0
        concepts, weights = [], []
        for _ in range(2 * k + 2):
            if mass <= 1e-12:
                break
            order = np.argsort(-residual, kind="stable")
            chosen = np.zeros(k, dtype=bool)
            chosen[order[:m]] = True
            low = float(residual[chosen].min())
            slack = float((mass - residual[~chosen]).min()) if m < k else math.inf
            p = min(low, slack, mass)
            concepts.append(chosen.astype(float))
            weights.append(p)
            residual = np.clip(residual - p * chosen, 0.0, None)
            mass -= p
        if mass > 1e-10:
            raise ValueError(f"peeling failed to exhaust the point (leftover mass {mass:.2e})")
        w = np.asarray(weights)
        return Decomposition(np.asarray(concepts), w / w.sum())

    def vertices(self, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
        count = math.comb(self.num_components, self.subset_size)
        if count > cap:
            raise ValueError(f"{count} vertices exceed the cap {cap}")
        rows = np.zeros((count, self.num_components))
        for i, combo in enumerate(itertools.combinations(range(self.num_components), self.subset_size)):
            rows[i, list(combo)] = 1.0
        return rows


class DagPaths(ConceptClass):
    """Indicator vectors of source-sink paths in a DAG.

    Edges carry 1-based indices that fix the coordinate order: coordinate k
    corresponds to the edge with index k+1.  Every edge must lie on at least
    one source-sink path, so the hull is the unit-flow polytope: outflow 1 at
    the source and flow conservation at every other non-sink node.
    """

    def __init__(self, nodes, edges, source, sink):
        self.nodes = list(nodes)
        self.source = source
        self.sink = sink
        if source not in self.nodes or sink not in self.nodes:
            raise ValueError("source and sink must appear in the node list")
        if source == sink:
            raise ValueError("source and sink must differ")
        self.num_components = len(edges)
        if self.num_components == 0:
            raise ValueError("need at least one edge")
        indices = sorted(int(e[2]) for e in edges)
        if indices != list(range(1, self.num_components + 1)):
            raise ValueError("edge indices must be exactly 1..K, each once")
        self._edge_from = [None] * self.num_components
        self._edge_to = [None] * self.num_components
        for frm, to, idx in edges:
            if frm not in self.nodes or to not in self.nodes:
                raise ValueError(f"edge ({frm}, {to}) references unknown nodes")
            self._edge_from[int(idx) - 1] = frm
            self._edge_to[int(idx) - 1] = to
        self._out = {n: [] for n in self.nodes}
        self._in = {n: [] for n in self.nodes}
        for e in range(self.num_components):
            self._out[self._edge_from[e]].append(e)
            self._in[self._edge_to[e]].append(e)
        self._topo = self._toposort()
        self._check_edges_usable()
        self._constraints = self._build_constraints()

    @classmethod
    def from_json(cls, doc) -> "DagPaths":
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        required = {"nodes", "edges", "source", "sink"}
        unknown = set(doc) - required
        if unknown:
            raise ValueError(f"unknown keys in DAG description: {sorted(unknown)}")
        missing = required - set(doc)
        if missing:
            raise ValueError(f"DAG description missing keys: {sorted(missing)}")
        edges = [(e["from"], e["to"], e["index"]) for e in doc["edges"]]
        return cls(doc["nodes"], edges, doc["source"], doc["sink"])

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [
                {"from": self._edge_from[e], "to": self._edge_to[e], "index": e + 1}
                for e in range(self.num_components)
            ],
            "source": self.source,
            "sink": self.sink,
        }

    def _toposort(self):
        indeg = {n: 0 for n in self.nodes}
        for e in range(self.num_components):
            indeg[self._edge_to[e]] += 1
        frontier = [n for n in self.nodes if indeg[n] == 0]
        order = []
        while frontier:
            n = frontier.pop(0)
            order.append(n)
            for e in self._out[n]:
                to = self._edge_to[e]
                indeg[to] -= 1
                if indeg[to] == 0:
                    frontier.append(to)
        if len(order) != len(self.nodes):
            raise ValueError("graph contains a cycle")
        return order

    def _check_edges_usable(self):
        fwd = {n: False for n in self.nodes}
        fwd[self.source] = True
        for n in self._topo:
            if fwd[n]:
                for e in self._out[n]:
                    fwd[self._edge_to[e]] = True
        bwd = {n: False for n in self.nodes}
        bwd[self.sink] = True
        for n in reversed(self._topo):
            if bwd[n]:
                for e in self._in[n]:
                    bwd[self._edge_from[e]] = True
        dead = [
            e + 1
            for e in range(self.num_components)
            if not (fwd[self._edge_from[e]] and bwd[self._edge_to[e]])
        ]
        if dead:
            raise ValueError(f"edges {dead} lie on no source-sink path")

    def _build_constraints(self):
        cons = [(np.array(self._out[self.source], dtype=int), np.array([], dtype=int), 1.0)]
        for n in self._topo:
            if n in (self.source, self.sink):
                continue
            out_e, in_e = self._out[n], self._in[n]
            if out_e or in_e:
                cons.append((np.array(out_e, dtype=int), np.array(in_e, dtype=int), 0.0))
        # dense signed incidence of the same constraints, for the Newton solver
        self._inc = np.zeros((len(cons), self.num_components))
        self._rhs = np.zeros(len(cons))
        for i, (plus, minus, rhs) in enumerate(cons):
            self._inc[i, plus] = 1.0
            self._inc[i, minus] = -1.0
            self._rhs[i] = rhs
        return cons

    def hull_residual(self, u: np.ndarray) -> float:
        u = self._check_dim(u)
        res = _box_residual(u)
        for plus, minus, rhs in self._constraints:
            res = max(res, abs(float(u[plus].sum() - u[minus].sum() - rhs)))
        return res

    def _constraint_residuals(self, mat: np.ndarray) -> np.ndarray:
        out = np.zeros(mat.shape[0])
        for plus, minus, rhs in self._constraints:
            val = mat[:, plus].sum(axis=1) - mat[:, minus].sum(axis=1) - rhs
            out = np.maximum(out, np.abs(val))
        return out

    def project_batch(self, u_tildes: np.ndarray) -> np.ndarray:
        """Joint dual Newton iteration, cyclic Bregman sweeps as fallback.

        The projection of w onto the intersection of the flow equalities has
        the form u = sigmoid(logit(w) + A^T theta) with A the signed
        incidence of the constraints; theta solves A u(theta) = rhs, a
        smooth monotone system whose Jacobian A diag(u(1-u)) A^T is positive
        definite, so damped Newton converges in a handful of iterations.
        Rows the Newton iteration fails to converge (near-singular Jacobian
        from saturated bridge edges, for instance) are finished by cyclic
        per-constraint projections.
        """
        mat = clamp_interior(np.atleast_2d(u_tildes))
        if mat.shape[1] != self.num_components:
            raise ValueError(f"expected {self.num_components} columns")
        solved = self._project_newton(mat)
        if solved is not None:
            return solved
        return self._project_cyclic(mat)

    def _project_newton(self, mat: np.ndarray) -> np.ndarray | None:
        inc, rhs = self._inc, self._rhs
        logits = _logit(mat)
        n, c = mat.shape[0], inc.shape[0]
        theta = np.zeros((n, c))
        u = mat
        res = np.abs(u @ inc.T - rhs).max(axis=1)
        for _ in range(80):
            if np.all(res <= PROJECTION_RESIDUAL):
                return u
            diff = u @ inc.T - rhs  # (n, c)
            d = u * (1.0 - u)  # (n, K)
            jac = (inc[None, :, :] * d[:, None, :]) @ inc.T  # (n, c, c)
            try:
                step = np.linalg.solve(jac, diff[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                return None
            # backtracking on the residual norm, vectorized over rows
            alpha = np.ones(n)
            for _ in range(30):
                cand_theta = theta - alpha[:, None] * step
                cand_u = _sigmoid(logits + cand_theta @ inc)
                cand_res = np.abs(cand_u @ inc.T - rhs).max(axis=1)
                worse = (cand_res > res) & (res > PROJECTION_RESIDUAL)
                if not worse.any():
                    break
                alpha = np.where(worse, 0.5 * alpha, alpha)
            else:
                return None
            theta, u, res = cand_theta, cand_u, cand_res
        return None

    def _project_cyclic(self, mat: np.ndarray) -> np.ndarray:
        mat = mat.copy()
        for _ in range(MAX_SWEEPS):
            if np.all(self._constraint_residuals(mat) <= PROJECTION_RESIDUAL):
                return mat
            for plus, minus, rhs in self._constraints:
                lam = self._solve_shift(mat, plus, minus, rhs)
                mat[:, plus] = _sigmoid(_logit(mat[:, plus]) + lam[:, None])
                if minus.size:
                    mat[:, minus] = _sigmoid(_logit(mat[:, minus]) - lam[:, None])
        worst = float(self._constraint_residuals(mat).max())
        raise ProjectionError(
            f"cyclic projection missed residual {PROJECTION_RESIDUAL} after "
            f"{MAX_SWEEPS} sweeps (worst {worst:.2e})"
        )

    @staticmethod
    def _solve_shift(mat, plus, minus, rhs) -> np.ndarray:
        """Vector of logit shifts making sum(plus) - sum(minus) = rhs per row."""
        lp = _logit(mat[:, plus])
        lm = _logit(mat[:, minus]) if minus.size else None
        n = mat.shape[0]
        lo = np.full(n, -800.0)
        hi = np.full(n, 800.0)
        lam = np.zeros(n)

        def g_and_slope(lam):
            sp = _sigmoid(lp + lam[:, None])
            g = sp.sum(axis=1) - rhs
            slope = (sp * (1.0 - sp)).sum(axis=1)
            if lm is not None:
                sm = _sigmoid(lm - lam[:, None])
                g -= sm.sum(axis=1)
                slope += (sm * (1.0 - sm)).sum(axis=1)
            return g, slope

        for _ in range(100):
            g, slope = g_and_slope(lam)
            if np.all(np.abs(g) <= 1e-13):
                break
            high = g > 0.0
            hi = np.where(high, lam, hi)
            lo = np.where(high, lo, lam)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = lam - g / slope
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            lam = np.where(bad, 0.5 * (lo + hi), newton)
        return lam

    def project(self, u_tilde: np.ndarray) -> np.ndarray:
        u_tilde = self._check_dim(u_tilde)
        return self.project_batch(u_tilde[None, :])[0]

    def _path_count(self) -> int:
        count = {n: 0 for n in self.nodes}
        count[self.sink] = 1
        for n in reversed(self._topo):
            if n != self.sink:
                count[n] = sum(count[self._edge_to[e]] for e in self._out[n])
        return count[self.source]

    def vertices(self, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
        total = self._path_count()
        if total > cap:
            raise ValueError(f"{total} paths exceed the cap {cap}")
        rows = []

        def walk(node, picked):
            if node == self.sink:
                row = np.zeros(self.num_components)
                row[picked] = 1.0
                rows.append(row)
                return
            for e in self._out[node]:
                walk(self._edge_to[e], picked + [e])

        walk(self.source, [])
        return np.asarray(rows)

    def decompose(self, u: np.ndarray) -> Decomposition:
        u = self._check_dim(u)
        if not self.contains(u):
            raise ValueError(f"point is outside the hull (residual {self.hull_residual(u):.2e})")
        flow = np.clip(u, 0.0, 1.0).astype(float)
        concepts, weights = [], []
        for _ in range(2 * self.num_components + 2):
            remaining = float(flow[self._out[self.source]].sum())
            if remaining <= 1e-10:
                break
            path = self._widest_path(flow)
            if path is None:
                break
            bottleneck = float(flow[path].min())
            if bottleneck <= 1e-12:
                break
            row = np.zeros(self.num_components)
            row[path] = 1.0
            concepts.append(row)
            weights.append(bottleneck)
            flow[path] -= bottleneck
        if float(flow[self._out[self.source]].sum()) > 1e-8:
            raise ValueError("path stripping left residual source outflow")
        w = np.asarray(weights)
        return Decomposition(np.asarray(concepts), w / w.sum())

    def _widest_path(self, flow: np.ndarray):
        best = {n: 0.0 for n in self.nodes}
        pred = {n: None for n in self.nodes}
        best[self.source] = math.inf
        for n in self._topo:
            if best[n] <= 0.0:
                continue
            for e in self._out[n]:
                cand = min(best[n], float(flow[e]))
                to = self._edge_to[e]
                if cand > best[to]:
                    best[to] = cand
                    pred[to] = e
        if best[self.sink] <= 0.0:
            return None
        path, node = [], self.sink
        while node != self.source:
            e = pred[node]
            path.append(e)
            node = self._edge_from[e]
        return path[::-1]


class ExplicitVertices(ConceptClass):
    """A concept class given by an explicit vertex list.

    Supported when the vertex set is a product of per-coordinate value sets
    (each coordinate varies freely over {0,1} or is pinned), which makes the
    hull an axis-aligned box; projection and decomposition are then exact and
    cheap.  Non-product vertex lists are rejected: their hulls have no linear
    description short of facet enumeration, which this artifact does not do.
    """

    def __init__(self, vertices):
        mat = np.atleast_2d(np.asarray(vertices, dtype=float))
        if mat.size == 0 or not np.all((mat == 0.0) | (mat == 1.0)):
            raise ValueError("vertices must be nonempty 0/1 vectors")
        mat = np.unique(mat, axis=0)
        self.num_components = mat.shape[1]
        self._vertices = mat
        value_sets = [np.unique(mat[:, k]) for k in range(self.num_components)]
        prod = 1
        for vs in value_sets:
            prod *= len(vs)
        if prod != mat.shape[0]:
            raise ValueError(
                "vertex list is not a product set; use a structured concept class instead"
            )
        self._free = np.array([len(vs) == 2 for vs in value_sets])
        self._pinned_value = np.array([vs[0] if len(vs) == 1 else 0.5 for vs in value_sets])

    def hull_residual(self, u: np.ndarray) -> float:
        u = self._check_dim(u)
        res = _box_residual(u)
        pinned = ~self._free
        if pinned.any():
            res = max(res, float(np.max(np.abs(u[pinned] - self._pinned_value[pinned]))))
        return res

    def project(self, u_tilde: np.ndarray) -> np.ndarray:
        u = clamp_interior(self._check_dim(u_tilde))
        out = u.copy()
        pinned = ~self._free
        out[pinned] = self._pinned_value[pinned]
        return out

    def decompose(self, u: np.ndarray) -> Decomposition:
        u = self._check_dim(u)
        if not self.contains(u):
            raise ValueError(f"point is outside the hull (residual {self.hull_residual(u):.2e})")
        residual = np.clip(u, 0.0, 1.0).astype(float)
        mass = 1.0
        concepts, weights = [], []
        for _ in range(2 * self.num_components + 2):
            if mass <= 1e-12:
                break
            chosen = residual >= 0.5 * mass
            lows = residual[chosen]
            highs = (mass - residual)[~chosen]
            p = min(
                float(lows.min()) if lows.size else mass,
                float(highs.min()) if highs.size else mass,
                mass,
            )
            concepts.append(chosen.astype(float))
            weights.append(p)
            residual = np.clip(residual - p * chosen, 0.0, None)
            mass -= p
        if mass > 1e-10:
            raise ValueError(f"peeling failed to exhaust the point (leftover mass {mass:.2e})")
        w = np.asarray(weights)
        return Decomposition(np.asarray(concepts), w / w.sum())

    def vertices(self, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
        if self._vertices.shape[0] > cap:
            raise ValueError(f"{self._vertices.shape[0]} vertices exceed the cap {cap}")
        return self._vertices.copy()


def project(concept_class: ConceptClass, u_tilde: np.ndarray) -> np.ndarray:
    """Entropy projection of ``u_tilde`` onto the class's usage polytope."""
    return concept_class.project(u_tilde)


def decompose(concept_class: ConceptClass, u: np.ndarray) -> Decomposition:
    """Convex decomposition of a hull point into concepts."""
    return concept_class.decompose(u)


def enumerate_vertices(concept_class: ConceptClass, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """Complete, duplicate-free concept list (small instances only)."""
    return concept_class.vertices(cap)


def unconstrained_update(u: np.ndarray, x1: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Componentwise posterior u e^{-x1} / (u e^{-x1} + (1-u) e^{-x0}).

    Computed as sigmoid(logit(u) + x0 - x1), which cannot underflow to 0/0
    however large the exponents are.
    """
    u = clamp_interior(u)
    x1 = np.asarray(x1, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x0))):
        raise ValueError("loss components must be finite")
    return _sigmoid(_logit(u) + x0 - x1)
