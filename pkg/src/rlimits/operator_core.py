"""Jacobi operators on graphs and on the half-line.

A Jacobi operator acts by ``(H psi)(v) = sum_{u ~ v} a_uv psi(u) + b(v) psi(v)``
with positive edge weights ``a`` and a real potential ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph_core import Graph, RootedBall, ball, bfs_distances, build_regular_tree, is_clipped


@dataclass(frozen=True, eq=False)
class JacobiOperator:
    """Jacobi operator on a finite graph.

    Parameters
    ----------
    graph : Graph
    a : array_like
        Edge weights aligned with ``graph.edges``; strictly positive.
    b : array_like
        Potential, one value per vertex.
    """

    graph: Graph
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape[0] != len(self.graph.edges):
            raise ValueError(f"expected {len(self.graph.edges)} edge weights, got {a.shape[0]}")
        if b.shape[0] != self.graph.n:
            raise ValueError(f"expected {self.graph.n} potential values, got {b.shape[0]}")
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("edge weights must be finite and strictly positive")
        if not np.all(np.isfinite(b)):
            raise ValueError("potential must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def norm_bound(self) -> float:
        """``sup |a| + sup |b|``."""
        sa = float(self.a.max()) if self.a.size else 0.0
        sb = float(np.abs(self.b).max()) if self.b.size else 0.0
        return sa + sb

    @cached_property
    def apply_bound(self) -> float:
        """``max_deg * sup a + sup |b|``, a bound on the operator norm."""
        deg = max(self.graph.degrees(), default=0)
        sa = float(self.a.max()) if self.a.size else 0.0
        sb = float(np.abs(self.b).max()) if self.b.size else 0.0
        return deg * sa + sb

    @cached_property
    def weights(self) -> dict:
        return {e: float(w) for e, w in zip(self.graph.edges, self.a)}

    def weight(self, u: int, v: int) -> float:
        return self.weights[(u, v) if u < v else (v, u)]

    @cached_property
    def sparse(self):
        n = self.n
        if self.graph.edges:
            e = np.asarray(self.graph.edges)
            rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
            cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
            vals = np.concatenate([self.a, self.a, self.b])
        else:
            rows = cols = np.arange(n)
            vals = self.b
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def dense(self) -> np.ndarray:
        return self.sparse.toarray()

    def apply(self, psi) -> np.ndarray:
        psi = np.asarray(psi)
        if psi.shape[0] != self.n:
            raise ValueError(f"vector has length {psi.shape[0]}, operator acts on {self.n} vertices")
        return self.sparse @ psi

    def restrict(self, v: int, r: int) -> "BallMatrix":
        return restrict(self, v, r)

    def to_json(self) -> dict:
        return {
            "graph": self.graph.to_json(),
            "a": [[u, v, float(w)] for (u, v), w in zip(self.graph.edges, self.a)],
            "b": [float(x) for x in self.b],
        }

    @classmethod
    def from_json(cls, data: dict) -> "JacobiOperator":
        g = Graph.from_json(data["graph"])
        w = {(min(u, v), max(u, v)): float(x) for u, v, x in data["a"]}
        if set(w) != set(g.edges):
            raise ValueError("edge weights do not match graph edges")
        return cls(g, np.array([w[e] for e in g.edges]), np.asarray(data["b"], dtype=float))


@dataclass(frozen=True, eq=False)
class BallMatrix:
    """Matrix of ``H`` restricted to a ball, in the ball's enumeration."""

    ball: RootedBall
    entries: np.ndarray
    clipped: bool = False

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def prefix(self, r: int) -> np.ndarray:
        """Block for the sub-ball of radius ``r`` (a prefix of the enumeration)."""
        k = self.ball.prefix_size(r)
        return self.entries[:k, :k]

    def to_json(self) -> dict:
        return {
            "center": self.ball.center,
            "radius": self.ball.radius,
            "vertices": list(self.ball.vertices),
            "entries": self.entries.tolist(),
        }

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(float(x)) for x in row) for row in self.entries) + "\n"


def adjacency_operator(g: Graph) -> JacobiOperator:
    return JacobiOperator(g, np.ones(len(g.edges)), np.zeros(g.n))


def laplacian_operator(g: Graph) -> JacobiOperator:
    """``a = 1``, ``b(v) = -deg(v)``."""
    return JacobiOperator(g, np.ones(len(g.edges)), -np.asarray(g.degrees(), dtype=float))


def apply(H: JacobiOperator, psi) -> np.ndarray:
    return H.apply(psi)


def restrict_to(H: JacobiOperator, rb: RootedBall) -> BallMatrix:
    """Dirichlet restriction of ``H`` to the positions of ``rb``."""
    idx = np.asarray(rb.vertices, dtype=int)
    M = np.diag(H.b[idx])
    for i, j in rb.induced_edges:
        w = H.weight(rb.vertices[i], rb.vertices[j])
        M[i, j] = M[j, i] = w
    return BallMatrix(rb, M, is_clipped(H.graph, rb.center, rb.radius))


def restrict(H: JacobiOperator, v: int, r: int) -> BallMatrix:
    """``H`` restricted to ``B_r(v)`` in the coherent canonical enumeration."""
    if not 0 <= v < H.n:
        raise ValueError(f"center {v} out of range")
    if r < 0:
        raise ValueError("radius must be non-negative")
    return restrict_to(H, ball(H.graph, v, r))


def tree_levels(g: Graph) -> np.ndarray:
    dist = bfs_distances(g, 0)
    return np.array([dist[v] for v in range(g.n)])


def spherically_symmetric_operator(A, B, d: int, depth: int) -> JacobiOperator:
    """Radial operator on ``build_regular_tree(d, depth)``.

    ``A[k]`` is the weight of every edge between levels ``k`` and ``k + 1``
    and ``B[k]`` the potential on level ``k`` (so ``A[0]``, ``B[0]`` are the
    first entries of the one-based symbol).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] < depth or B.shape[0] < depth + 1:
        raise ValueError(f"need {depth} values of A and {depth + 1} of B")
    g = build_regular_tree(d, depth)
    lev = tree_levels(g)
    e = np.asarray(g.edges, dtype=int).reshape(-1, 2)
    a = A[np.minimum(lev[e[:, 0]], lev[e[:, 1]])] if len(e) else np.zeros(0)
    return JacobiOperator(g, a, B[lev])


# ------------------------------------------------------------ one dimension


@dataclass(frozen=True, eq=False)
class HalfLineJacobi:
    """Half-line Jacobi matrix with sites ``0, 1, 2, ...``.

    ``b[i]`` is the diagonal at site ``i`` and ``a[i]`` couples ``i`` and
    ``i + 1``.  With ``period = p`` the last ``p`` entries of both arrays
    repeat forever; otherwise only the stored window is known, and ``a``
    may be one entry shorter than ``b``.
    """

    a: np.ndarray
    b: np.ndarray
    period: int | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.size == 0:
            raise ValueError("empty window")
        if self.period is None:
            if a.size not in (b.size, b.size - 1):
                raise ValueError("a must have as many entries as b, or one fewer")
        elif a.size != b.size:
            raise ValueError("periodic tails need equal-length a and b windows")
        if np.any(a <= 0):
            raise ValueError("off-diagonal entries must be positive")
        if self.period is not None and not 1 <= self.period <= b.size:
            raise ValueError("period must lie in 1..window length")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def window(self) -> int:
        return self.b.size

    def _index(self, i, w):
        i = np.asarray(i)
        if np.any(i < 0):
            raise IndexError("negative site index")
        if self.period is None:
            if np.any(i >= w):
                raise IndexError(f"index beyond the known window of length {w}")
            return i
        p = self.period
        return np.where(i < w, i, w - p + (i - (w - p)) % p)

    def a_at(self, i):
        return self.a[self._index(i, self.a.size)]

    def b_at(self, i):
        return self.b[self._index(i, self.b.size)]

    def known(self, m: int) -> bool:
        """True if the first ``m`` sites (and their couplings) are determined."""
        return self.period is not None or m <= self.window

    def periodic_part(self) -> tuple:
        """``(a, b)`` over one period of the tail, or ``None``."""
        if self.period is None:
            return None
        p = self.period
        return self.a[-p:].copy(), self.b[-p:].copy()

    def matrix(self, m: int, start: int = 0) -> np.ndarray:
        return halfline_matrix(self, m, start)

    def to_json(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "period": self.period}

    @classmethod
    def from_json(cls, data: dict) -> "HalfLineJacobi":
        return cls(np.asarray(data["a"]), np.asarray(data["b"]), data.get("period"))


def free_halfline(window: int = 1, a: float = 1.0, b: float = 0.0) -> HalfLineJacobi:
    return HalfLineJacobi(np.full(window, a), np.full(window, b), period=1)


def halfline_matrix(j, m: int, start: int = 0) -> np.ndarray:
    """Dense ``m x m`` truncation of sites ``start .. start+m-1``."""
    if m < 1:
        raise ValueError("size must be at least 1")
    if j.period is None and start + m > j.window:
        raise ValueError(f"window of length {j.window} does not cover {start + m} sites")
    idx = np.arange(start, start + m)
    off = j.a_at(idx[:-1]) if m > 1 else np.zeros(0)
    return np.diag(j.b_at(idx)) + np.diag(off, 1) + np.diag(off, -1)


@dataclass(frozen=True, eq=False)
class WholeLineWindow:
    """Coefficients of a whole-line Jacobi matrix on sites ``-W..W``.

    ``b[i + W]`` is the diagonal at site ``i`` and ``a[i + W]`` couples ``i``
    and ``i + 1``.  ``center`` records where in the source sequence site 0
    was taken from.
    """

    a: np.ndarray
    b: np.ndarray
    center: int = 0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.size % 2 != 1 or a.size != b.size - 1:
            raise ValueError("need 2W+1 diagonal and 2W off-diagonal entries")
        if np.any(a <= 0):
            raise ValueError("off-diagonal entries must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def W(self) -> int:
        return (self.b.size - 1) // 2

    def b_at(self, i):
        return self.b[np.asarray(i) + self.W]

    def a_at(self, i):
        return self.a[np.asarray(i) + self.W]

    def matrix(self) -> np.ndarray:
        return np.diag(self.b) + np.diag(self.a, 1) + np.diag(self.a, -1)

    def to_json(self) -> dict:
        return {"center": self.center, "a": self.a.tolist(), "b": self.b.tolist()}
