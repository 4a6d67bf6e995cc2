"""Spherically symmetric operators on regular trees and their 1-D pieces.

A radial Jacobi operator on the ``d``-regular tree splits into half-line
Jacobi matrices ``S_n``; ``S_1`` couples the root with weight
``sqrt(d) A_1`` and every later step with ``sqrt(d-1) A_k``, and each
``S_n`` is a tail of ``S_1``.  This module builds that splitting on
truncated trees, computes right limits and strong tail limits of half-line
matrices, certifies the resulting essential-spectrum formulas at finite
scale, and implements the annular partition of unity with its commutator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .graph_core import Graph, bfs_distances, build_line_segment, build_regular_tree, tree_size
from .operator_core import (
    HalfLineJacobi,
    JacobiOperator,
    WholeLineWindow,
    halfline_matrix,
    spherically_symmetric_operator,
    tree_levels,
)
from .spectral import SpectrumApproximation, approx_spectrum, symmetric_eigen


# ------------------------------------------------------------ decomposition


@dataclass(frozen=True, eq=False)
class SphericalSymbol:
    """Radial coefficients: ``A[k]`` on edges between levels ``k``, ``k+1``;
    ``B[k]`` on level ``k``."""

    d: int
    A: np.ndarray
    B: np.ndarray
    depth: int
    tail_period: int | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if self.d < 3:
            raise ValueError("degree must be at least 3")
        if A.shape[0] < self.depth or B.shape[0] < self.depth + 1:
            raise ValueError(f"need {self.depth} values of A and {self.depth + 1} of B")
        if np.any(A <= 0):
            raise ValueError("A must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def random(cls, d: int, depth: int, seed: int, a_range=(0.5, 1.5), b_range=(-1.0, 1.0)):
        rng = np.random.default_rng(seed)
        return cls(d, rng.uniform(*a_range, depth), rng.uniform(*b_range, depth + 1), depth)

    @classmethod
    def constant(cls, d: int, depth: int, a: float = 1.0, b: float = 0.0):
        return cls(d, np.full(depth, a), np.full(depth + 1, b), depth, tail_period=1)

    def operator(self, depth: int | None = None) -> JacobiOperator:
        depth = self.depth if depth is None else depth
        return spherically_symmetric_operator(self.A, self.B, self.d, depth)

    def halfline(self) -> HalfLineJacobi:
        """``S_1`` as a half-line matrix (with a periodic tail when declared)."""
        m = self.depth
        a = np.sqrt(self.d - 1) * self.A[:m]
        if m:
            a[0] = np.sqrt(self.d) * self.A[0]
        if self.tail_period is None:
            return HalfLineJacobi(a, self.B[:m + 1])
        if m <= self.tail_period:
            raise ValueError("depth must exceed the tail period")
        # the root coupling sits outside the repeating block
        return HalfLineJacobi(a, self.B[:m], period=self.tail_period)

    def to_json(self) -> dict:
        return {"d": self.d, "A": self.A.tolist(), "B": self.B.tolist(), "tail_period": self.tail_period}

    @classmethod
    def from_json(cls, data: dict) -> "SphericalSymbol":
        A = np.asarray(data["A"], dtype=float)
        B = np.asarray(data["B"], dtype=float)
        depth = int(data.get("depth", min(len(A), len(B) - 1)))
        return cls(int(data["d"]), A, B, depth, data.get("tail_period"))


def multiplicity(d: int, n: int) -> int:
    """Number of copies of ``S_n`` in the decomposition."""
    if n < 1:
        raise ValueError("sector index starts at 1")
    if n == 1:
        return 1
    if n == 2:
        return d - 1
    return d * (d - 2) * (d - 1) ** (n - 3)


@dataclass(frozen=True, eq=False)
class SphericalBlock:
    n: int
    S: HalfLineJacobi
    multiplicity: int
    length: int

    def matrix(self) -> np.ndarray:
        return halfline_matrix(self.S, self.length)


@dataclass(frozen=True, eq=False)
class DecompositionPlan:
    d: int
    R: int
    blocks: tuple

    @property
    def dimension(self) -> int:
        return sum(b.multiplicity * b.length for b in self.blocks)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "R": self.R,
            "blocks": [
                {"n": b.n, "multiplicity": b.multiplicity, "length": b.length,
                 "a": b.S.a.tolist(), "b": b.S.b.tolist()}
                for b in self.blocks
            ],
        }


def sector_couplings(d: int, A, n: int, length: int) -> np.ndarray:
    """Off-diagonal of ``S_n`` on levels ``n-1 .. n+length-2``."""
    A = np.asarray(A, dtype=float)
    k = np.arange(length - 1)
    c = np.sqrt(d - 1) * A[n - 1 + k]
    if n == 1 and length > 1:
        c[0] = np.sqrt(d) * A[0]
    return c


def decompose(sym: SphericalSymbol, R: int) -> DecompositionPlan:
    """Blocks ``S_n`` of the radius-``R`` ball, ``n = 1 .. R+1``.

    ``S_n`` lives on levels ``n-1 .. R`` (length ``R - n + 2``).
    """
    if R > sym.depth:
        raise ValueError(f"radius {R} exceeds symbol depth {sym.depth}")
    if R < 0:
        raise ValueError("radius must be non-negative")
    blocks = []
    for n in range(1, R + 2):
        ell = R - n + 2
        S = HalfLineJacobi(sector_couplings(sym.d, sym.A, n, ell), sym.B[n - 1:n - 1 + ell])
        blocks.append(SphericalBlock(n, S, multiplicity(sym.d, n), ell))
    return DecompositionPlan(sym.d, R, tuple(blocks))


def dimension_identity(d: int, R: int) -> tuple:
    """``(sum_n k_n l_n, |B_R|)`` in exact integer arithmetic."""
    lhs = sum(multiplicity(d, n) * (R - n + 2) for n in range(1, R + 2))
    rhs = 1 + sum(d * (d - 1) ** (m - 1) for m in range(1, R + 1))
    return lhs, rhs


def verify_equivalence(sym: SphericalSymbol, R: int) -> dict:
    """Compare the spectrum of the radius-``R`` ball with the block spectra.

    The tree side is a direct eigensolve of the restricted operator; the
    other side is the multiset union of ``eig(S_n)`` repeated ``k_n`` times.
    """
    plan = decompose(sym, R)
    H = spherically_symmetric_operator(sym.A, sym.B, sym.d, R)
    tree_ev = symmetric_eigen(H.restrict(0, R).entries, vectors=False)
    parts = [np.repeat(symmetric_eigen(b.matrix(), vectors=False), b.multiplicity) for b in plan.blocks]
    block_ev = np.sort(np.concatenate(parts))
    lhs, rhs = dimension_identity(sym.d, R)
    if tree_ev.size != block_ev.size:
        disc = np.inf
    else:
        disc = float(np.max(np.abs(tree_ev - block_ev))) if tree_ev.size else 0.0
    return {
        "discrepancy": disc,
        "dimension": plan.dimension,
        "ball_size": int(tree_ev.size),
        "dimension_identity": lhs == rhs == tree_ev.size,
    }


# ------------------------------------------------------------ tails


@dataclass(frozen=True, eq=False)
class TailView:
    """``base`` with its first ``shift`` sites removed (an index offset)."""

    base: HalfLineJacobi
    shift: int

    @property
    def period(self):
        return self.base.period

    @property
    def window(self) -> int:
        return self.base.window - self.shift

    @property
    def a(self) -> np.ndarray:
        return self.base.a[self.shift:]

    @property
    def b(self) -> np.ndarray:
        return self.base.b[self.shift:]

    def a_at(self, i):
        return self.base.a_at(np.asarray(i) + self.shift)

    def b_at(self, i):
        return self.base.b_at(np.asarray(i) + self.shift)

    def matrix(self, m: int, start: int = 0) -> np.ndarray:
        return halfline_matrix(self, m, start)

    def materialize(self) -> HalfLineJacobi:
        p = self.base.period
        if p is None:
            return HalfLineJacobi(self.a.copy(), self.b.copy())
        n = max(self.window, p)
        idx = np.arange(n)
        return HalfLineJacobi(self.a_at(idx), self.b_at(idx), period=p)


def tail(j, k: int) -> TailView:
    if k < 0:
        raise ValueError("shift must be non-negative")
    if isinstance(j, TailView):
        return TailView(j.base, j.shift + k)
    return TailView(j, k)


def _base(j) -> HalfLineJacobi:
    return j.materialize() if isinstance(j, TailView) else j


# ------------------------------------------------------------ 1-D limits


class RightLimits(list):
    """List of limit objects with an ``exact`` flag (False for heuristic probes)."""

    def __init__(self, items=(), exact: bool = True):
        super().__init__(items)
        self.exact = exact


def _sup(x, y) -> float:
    return float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) if len(x) else 0.0


def _cluster(items, key, tol, min_size):
    """Greedy clustering against each cluster's latest member."""
    clusters = []
    for it in items:
        k = key(it)
        for c in clusters:
            if _sup(key(c[-1]), k) <= tol:
                c.append(it)
                break
        else:
            clusters.append([it])
    return [c for c in clusters if len(c) >= min_size]


def periodic_window(per_a, per_b, W: int, phase: int = 0, center: int = 0) -> WholeLineWindow:
    p = len(per_b)
    i = np.arange(-W, W + 1)
    return WholeLineWindow(np.asarray(per_a)[(phase + i[:-1]) % p], np.asarray(per_b)[(phase + i) % p], center)


def right_limits_1d(j, W: int, tol: float = 1e-9, probe_depth: int | None = None) -> RightLimits:
    """Right limits of a half-line matrix as windows on ``-W..W``.

    Eventually periodic input gives the distinct cyclic shifts of the
    periodic whole-line operator (exact).  Otherwise windows centred deep in
    the known range are clustered and the result is flagged non-exhaustive.
    """
    j = _base(j)
    if j.period is not None:
        per_a, per_b = j.periodic_part()
        p = j.period
        out = []
        for s in range(p):
            w = periodic_window(per_a, per_b, W, s, center=j.window - p + s)
            if not any(_sup(w.a, o.a) <= tol and _sup(w.b, o.b) <= tol for o in out):
                out.append(w)
        return RightLimits(out, exact=True)
    depth = j.window if probe_depth is None else min(probe_depth, j.window)
    hi = min(depth - W - 1, j.a.size - W)
    lo = max(W, depth // 2)
    wins = []
    for c in range(lo, hi):
        wins.append(WholeLineWindow(j.a[c - W:c + W], j.b[c - W:c + W + 1], c))
    clusters = _cluster(wins, lambda w: np.concatenate([w.a, w.b]), tol, 2)
    return RightLimits([c[-1] for c in clusters], exact=False)


def strong_limit_tails(j, subsequence=None, window: int = 50, tol: float = 1e-9) -> RightLimits:
    """Strong limit points of the tails ``J^[n]`` along ``subsequence``.

    Eventually periodic input gives the ``p`` phase half-lines of the
    periodic part (exact).  Otherwise the first ``window`` sites of each
    tail are clustered; each cluster with at least two members yields its
    latest member, flagged non-exhaustive.
    """
    j = _base(j)
    if j.period is not None:
        per_a, per_b = j.periodic_part()
        out = []
        for s in range(j.period):
            h = HalfLineJacobi(np.roll(per_a, -s), np.roll(per_b, -s), period=j.period)
            if not any(_sup(h.a, o.a) <= tol and _sup(h.b, o.b) <= tol for o in out):
                out.append(h)
        return RightLimits(out, exact=True)
    if subsequence is None:
        subsequence = range(j.window // 2, j.window - window)
    shifts = [n for n in subsequence if n + window <= j.window and n + window - 1 <= j.a.size]
    clusters = _cluster(shifts, lambda n: np.concatenate([j.a[n:n + window - 1], j.b[n:n + window]]), tol, 2)
    out = [HalfLineJacobi(j.a[c[-1]:c[-1] + window - 1], j.b[c[-1]:c[-1] + window]) for c in clusters]
    return RightLimits(out, exact=False)


# ------------------------------------------------------------ certification


def chain_operator(a, b, ends: str = "both") -> JacobiOperator:
    """Jacobi operator on a path with couplings ``a`` and diagonal ``b``.

    ``ends`` marks which ends are truncation boundaries: ``"both"`` for a
    whole-line window, ``"right"`` for a half-line truncation.
    """
    b = np.asarray(b, dtype=float)
    m = b.size
    g = build_line_segment(m)
    boundary = {0, m - 1} if ends == "both" else {m - 1}
    g = Graph(g.n, g.edges, frozenset(boundary))
    return JacobiOperator(g, np.asarray(a, dtype=float)[:m - 1], b)


def _spread(lo: int, hi: int, count: int) -> list:
    if hi < lo:
        return []
    return sorted(set(np.linspace(lo, hi, count).round().astype(int).tolist()))


def certify_window(w: WholeLineWindow, radius: int, tol: float, centers: int = 3) -> SpectrumApproximation:
    """Certified values of a whole-line window at interior centers."""
    H = chain_operator(w.a, w.b, "both")
    return approx_spectrum(H, _spread(radius + 1, H.n - radius - 2, centers), radius, tol)


def certify_halfline(j, size: int, radius: int, tol: float, centers: int = 3,
                     include_edge: bool = True) -> SpectrumApproximation:
    """Certified values of a half-line truncation of length ``size``.

    The ball at site 0 picks up edge states; interior centers see the bands.
    """
    j = _base(j)
    if j.period is None:
        size = min(size, j.window)
    idx = np.arange(size)
    a = j.a_at(idx[:-1]) if size > 1 else np.zeros(0)
    H = chain_operator(a, j.b_at(idx), "right")
    cs = _spread(radius, H.n - radius - 2, centers)
    if include_edge:
        cs = sorted(set([0] + cs))
    return approx_spectrum(H, cs, radius, tol)


def truncation_ess_spectrum(j, size: int = 400, radius: int = 80, tol: float = 0.25,
                            centers: int = 3) -> np.ndarray:
    """Certified values of a half-line truncation from balls far from site 0."""
    j = _base(j)
    idx = np.arange(size)
    H = chain_operator(j.a_at(idx[:-1]), j.b_at(idx), "right")
    cs = _spread(size // 4, 3 * size // 4, centers)
    return approx_spectrum(H, cs, radius, tol).certified


@dataclass
class PropAResult:
    right_limits: list
    strong_limits: list
    right_limit_values: np.ndarray
    strong_limit_values: np.ndarray
    exact: bool
    multiplicity: object = None
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.unique(np.concatenate([self.right_limit_values, self.strong_limit_values]))

    def to_json(self) -> dict:
        return {
            "exact": self.exact,
            "right_limits": [w.to_json() for w in self.right_limits],
            "strong_limits": [h.to_json() for h in self.strong_limits],
            "right_limit_values": self.right_limit_values.tolist(),
            "strong_limit_values": self.strong_limit_values.tolist(),
            "meta": self.meta,
        }


def ess_spectrum_prop_a(j, multiplicity=None, W: int = 200, radius: int = 80, tol: float = 0.25,
                        subsequence=None, size: int = 400, centers: int = 3,
                        probe_depth: int | None = None) -> PropAResult:
    """Certified essential spectrum of a direct sum of tails of ``j``.

    The set is the union of the spectra of the right limits of ``j`` and of
    the strong limits of the chosen tails.  The multiplicities of the
    tails do not enter the formula; they are recorded only.
    """
    rls = right_limits_1d(j, W, 1e-9, probe_depth)
    sls = strong_limit_tails(j, subsequence, window=min(size, 2 * radius + 2), tol=1e-9)
    rv = [certify_window(w, min(radius, w.W - 1), tol, centers).certified for w in rls]
    sv = [certify_halfline(h, size, radius, tol, centers).certified for h in sls]
    cat = lambda xs: np.unique(np.concatenate(xs)) if xs else np.zeros(0)
    return PropAResult(
        list(rls), list(sls), cat(rv), cat(sv), rls.exact and sls.exact, multiplicity,
        {"W": W, "radius": radius, "tol": tol, "size": size},
    )


def _dist_to_set(x, pts) -> float:
    pts = np.asarray(pts)
    return float(np.min(np.abs(pts - x))) if pts.size else np.inf


def sigma_set_prop_b(j, subsequence, window: int = 40, pad: int = 40, tol: float = 0.05,
                     cert_tol: float = 1e-6, ess=None, min_hits: int | None = None) -> list:
    """Accumulation points of discrete eigenvalues of tails along ``subsequence``.

    Each tail is truncated to ``window`` sites and its eigenvalues are kept
    when certified (residual ``<= cert_tol``) against a truncation
    ``pad`` sites longer and when farther than ``tol`` from ``ess``.
    Values recurring (within ``tol``) in at least ``min_hits`` tails are
    reported; the default is half the subsequence, and at least two.
    """
    j = _base(j)
    subsequence = list(subsequence)
    if ess is None:
        ess = ess_spectrum_prop_a(j).right_limit_values
    hits = []
    for n in subsequence:
        m = window + pad
        if j.period is None and n + m > j.window:
            continue
        idx = np.arange(n, n + m)
        H = chain_operator(j.a_at(idx[:-1]), j.b_at(idx), "right")
        w, V = symmetric_eigen(halfline_matrix(tail(j, n), window))
        psi = np.zeros((m, len(w)))
        psi[:window] = V
        res = np.linalg.norm(H.apply(psi) - psi * w, axis=0)
        for lam in w[res <= cert_tol]:
            if _dist_to_set(lam, ess) > tol:
                hits.append((float(lam), n))
    if min_hits is None:
        min_hits = max(2, (len(subsequence) + 1) // 2)
    hits.sort()
    groups, cur = [], []
    for lam, n in hits:
        if cur and lam - cur[-1][0] > tol:
            groups.append(cur)
            cur = []
        cur.append((lam, n))
    if cur:
        groups.append(cur)
    return [float(np.mean([x for x, _ in g])) for g in groups if len({n for _, n in g}) >= min_hits]


# ------------------------------------------------------------ operator from a right limit


def first_child_ray(g: Graph, depth: int) -> tuple:
    """Root, then the smallest-numbered child repeatedly, down to a leaf."""
    dist = bfs_distances(g, 0)
    ray = [0]
    for _ in range(depth):
        u = ray[-1]
        ray.append(min(w for w in g.adjacency[u] if dist[w] == dist[u] + 1))
    return tuple(ray)


def build_L_from_right_limit(Jr: WholeLineWindow, d: int, depth: int):
    """Tree operator whose radial profile is read off a right limit.

    On ``build_regular_tree(d, depth)`` take the ray ``v_0' = root`` down to
    the leaf ``v_depth'`` and ``h(x) = dist(x, v_depth') - depth``.  Then
    ``L_xx = Jr[h(x)]`` and ``L_xy = Jr_{h(x), h(y)} / sqrt(d - 1)``.

    Returns ``(L, ray)``.
    """
    if Jr.W < depth:
        raise ValueError(f"window half-width {Jr.W} is smaller than depth {depth}")
    g = build_regular_tree(d, depth)
    ray = first_child_ray(g, depth)
    dist = bfs_distances(g, ray[-1])
    h = np.array([dist[v] - depth for v in range(g.n)])
    e = np.asarray(g.edges, dtype=int).reshape(-1, 2)
    lo = np.minimum(h[e[:, 0]], h[e[:, 1]])
    a = Jr.a_at(lo) / np.sqrt(d - 1)
    return JacobiOperator(g, a, Jr.b_at(h)), ray


def transplant_h_m(g, N: int, m: int) -> np.ndarray:
    """Shift a whole-line vector onto the half-line.

    ``g`` is indexed by sites ``-W..W`` (``g[i + W]``).  The result ``h``
    is indexed by half-line sites ``1, 2, ...`` (``h[n - 1]``) and equals
    ``g(n - m - 1)`` for ``|n - m - 1| < N``, zero elsewhere.
    """
    g = np.asarray(g, dtype=float)
    W = (g.size - 1) // 2
    if m < N:
        raise ValueError(f"shift m={m} is smaller than N={N}; the support would be clipped")
    if N - 1 > W:
        raise ValueError("N exceeds the window of g")
    h = np.zeros(m + N)
    for i in range(-(N - 1), N):
        h[m + i] = g[i + W]
    return h


def h_m_residual_check(Jr: WholeLineWindow, g, lam: float, N: int, m: int) -> tuple:
    """Both sides of the residual bound for ``h_m`` on the shifted half-line.

    The half-line operator at site ``n`` carries ``Jr`` at ``n - m - 1``,
    which is what the tree sectors far from the root look like.
    Returns ``(lhs, rhs)``.
    """
    g = np.asarray(g, dtype=float)
    W = Jr.W
    h = transplant_h_m(g, N, m)
    size = h.size + 1
    sites = np.arange(1, size + 1) - m - 1
    if sites.min() < -W or sites.max() > W - 1:
        raise ValueError("window of Jr too small for this shift")
    Hh = chain_operator(Jr.a_at(sites[:-1]), Jr.b_at(sites), "both")
    hh = np.concatenate([h, [0.0]])
    lhs = float(np.linalg.norm(Hh.apply(hh) - lam * hh))
    J = Jr.matrix()
    inside = np.zeros_like(g)
    inside[W - (N - 1):W + N] = 1.0
    eps = float(np.linalg.norm(g * (1 - inside)))
    normJ = float(np.max(np.abs(symmetric_eigen(J, vectors=False))))
    rhs = float(np.linalg.norm(J @ g - lam * g)) + (normJ + abs(lam)) * eps + eps
    return lhs, rhs


def lift_sector_vector(g: Graph, u, children=None) -> np.ndarray:
    """Lift a half-line vector into the sector below the root's first two children.

    ``u[k]`` is placed on level ``k + 1``: with weight ``+1`` below the
    first child and ``-1`` below the second, normalised per level.
    """
    u = np.asarray(u, dtype=float)
    dist = bfs_distances(g, 0)
    kids = sorted(g.adjacency[0])[:2] if children is None else list(children)
    f = np.zeros(g.n)
    for sign, c in zip((1.0, -1.0), kids):
        layer = [c]
        for k in range(len(u)):
            if k:
                layer = [w for x in layer for w in g.adjacency[x] if dist[w] == dist[x] + 1]
            if not layer:
                raise ValueError("tree too shallow for the vector")
            f[layer] = sign * u[k] / np.sqrt(2 * len(layer))
    return f


def containment_check(Jr: WholeLineWindow, d: int, depth: int = 8, tol: float = 0.05,
                   cert_tol: float = 0.5) -> dict:
    """Desk check that certified values of ``Jr`` are certified for ``L``.

    ``Jr`` is certified with sub-windows of length ``depth - 1``, the
    longest sector that fits in the ball of radius ``depth - 1`` around
    the root of ``L``.  As a second route, eigenvectors of shorter windows
    are shifted by :func:`transplant_h_m`, lifted into the sector below two
    children of the root, and their residual under ``L`` is compared with
    the one-dimensional bound.  The lift assumes ``L`` is radial around the
    root, which holds for constant ``Jr``.
    """
    L, ray = build_L_from_right_limit(Jr, d, depth)
    rho = (depth - 2) // 2
    Hj = chain_operator(Jr.a, Jr.b, "both")
    jr_cert = approx_spectrum(Hj, _spread(rho + 1, Hj.n - rho - 2, 3), rho, cert_tol)
    l_cert = approx_spectrum(L, [0], depth - 1, cert_tol)
    gaps = [_dist_to_set(x, l_cert.certified) for x in jr_cert.certified]

    # h_m leaves site 1 empty, so the lifted window is two sites shorter
    N = (depth - 1) // 2
    W = Jr.W
    w, V = symmetric_eigen(Jr.matrix()[W - N + 1:W + N, W - N + 1:W + N])
    lifted, bounds = [], []
    for lam, v in zip(w, V.T):
        g = np.zeros(2 * W + 1)
        g[W - N + 1:W + N] = v
        h = transplant_h_m(g, N, N)
        _, rhs = h_m_residual_check(Jr, g, lam, N, N)
        f = lift_sector_vector(L.graph, h)
        lifted.append(float(np.linalg.norm(L.apply(f) - lam * f)))
        bounds.append(rhs)
    return {
        "jr_certified": jr_cert.certified.tolist(),
        "L_certified": l_cert.certified.tolist(),
        "max_gap": max(gaps) if gaps else 0.0,
        "contained": bool(gaps) and max(gaps) <= tol,
        "lifted_residuals": lifted,
        "lifted_bounds": bounds,
        "lifted_ok": all(x <= y + 1e-12 for x, y in zip(lifted, bounds)),
        "window_length": 2 * rho + 1,
        "ray": list(ray),
        "L_size": L.n,
    }


# ------------------------------------------------------------ partition of unity


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Annular partition of unity on ``build_regular_tree(d, depth)``.

    ``psi[a, l]`` (exact rationals in ``psi_exact``), ``w[l]`` and
    ``j[a, l]`` are indexed by ``alpha = alphas[a]`` and level ``l``.
    """

    d: int
    depth: int
    L: int
    alphas: tuple
    psi_exact: tuple
    w_exact: tuple
    psi: np.ndarray
    w: np.ndarray
    j: np.ndarray
    c2: Fraction

    @property
    def graph(self) -> Graph:
        return build_regular_tree(self.d, self.depth)

    def levels(self) -> np.ndarray:
        return tree_levels(self.graph)

    def identity_error(self) -> float:
        return float(np.max(np.abs((self.j ** 2).sum(axis=0) - 1.0)))

    def c2_expected(self) -> Fraction:
        return Fraction(2 * self.L ** 2 + 1, 3 * self.L)

    def on_vertices(self, a: int, lev=None) -> np.ndarray:
        lev = self.levels() if lev is None else lev
        return self.j[a, lev]


def partition_of_unity(d: int, depth: int, L: int) -> PartitionOfUnity:
    """``psi_alpha = (1 - ||v| - alpha| / L)_+`` for ``alpha = 0, 1, ...``.

    ``w = sum psi^2`` and ``j = psi / sqrt(w)``; ``c(L)^2`` is ``w`` on
    any level beyond ``L``.
    """
    if L < 1:
        raise ValueError("width must be at least 1")
    if depth <= 2 * L:
        raise ValueError(f"depth {depth} must exceed 2L = {2 * L}")
    alphas = tuple(range(depth + L))
    levels = range(depth + 1)
    psi_ex = tuple(tuple(max(Fraction(0), 1 - Fraction(abs(ell - a), L)) for ell in levels) for a in alphas)
    w_ex = tuple(sum(psi_ex[a][ell] ** 2 for a in range(len(alphas))) for ell in levels)
    psi = np.array([[float(x) for x in row] for row in psi_ex])
    w = np.array([float(x) for x in w_ex])
    j = psi / np.sqrt(w)
    return PartitionOfUnity(d, depth, L, alphas, psi_ex, w_ex, psi, w, j, w_ex[L + 1])


@dataclass(frozen=True, eq=False)
class SubtreeSplit:
    alpha: int
    roots: tuple
    pieces: np.ndarray
    count: int
    closed_form_count: int

    def square_sum(self) -> np.ndarray:
        return (self.pieces ** 2).sum(axis=0)


def subtree_split(pou: PartitionOfUnity, alpha: int, L: int | None = None) -> SubtreeSplit:
    """Cut ``j_alpha`` along the subtrees rooted on level ``alpha - L``.

    The number of pieces is read off the tree; ``closed_form_count`` is the
    closed form ``d * d**(alpha - L - 1)`` kept for comparison.
    """
    L = pou.L if L is None else L
    if L != pou.L:
        raise ValueError("width does not match the partition")
    if alpha <= L:
        raise ValueError("need alpha > L")
    g = pou.graph
    lev = tree_levels(g)
    top = alpha - L
    parent = np.full(g.n, -1)
    for u, v in g.edges:
        if lev[u] < lev[v]:
            parent[v] = u
        else:
            parent[u] = v
    roots = tuple(int(v) for v in np.flatnonzero(lev == top))
    owner = np.full(g.n, -1)
    for v in np.argsort(lev, kind="stable"):
        if lev[v] == top:
            owner[v] = v
        elif lev[v] > top:
            owner[v] = owner[parent[v]]
    jv = pou.on_vertices(pou.alphas.index(alpha), lev)
    pieces = np.zeros((len(roots), g.n))
    for b, r in enumerate(roots):
        mask = owner == r
        pieces[b, mask] = jv[mask]
    return SubtreeSplit(alpha, roots, pieces, len(roots), pou.d * pou.d ** (alpha - L - 1))


def _commutators(H: JacobiOperator, pou: PartitionOfUnity):
    lev = tree_levels(H.graph)
    S = H.sparse.tocoo()
    off = S.row != S.col
    rows, cols, vals = S.row[off], S.col[off], S.data[off]
    for a in range(len(pou.alphas)):
        jv = pou.on_vertices(a, lev)
        dj = jv[cols] - jv[rows]
        if np.any(dj):
            yield sp.csr_matrix((vals * dj, (rows, cols)), shape=S.shape)


@dataclass
class CommutatorResult:
    C: object
    norm: float
    max_range: int
    range_ok: bool


def commutator_C(H: JacobiOperator, pou: PartitionOfUnity, check_range: bool = True) -> CommutatorResult:
    """``C = -2 sum_alpha [H, j_alpha]^2`` assembled on the truncated tree."""
    C = sp.csr_matrix(H.sparse.shape)
    for K in _commutators(H, pou):
        C = C + 2.0 * (K.T @ K)
    C = C.tocsr()
    C.eliminate_zeros()
    dense = C.toarray()
    norm = float(np.max(np.abs(symmetric_eigen((dense + dense.T) / 2, vectors=False)))) if dense.size else 0.0
    max_range = 0
    if check_range:
        Cc = C.tocoo()
        dist_cache = {}
        for u, v, x in zip(Cc.row, Cc.col, Cc.data):
            if abs(x) < 1e-15:
                continue
            if u not in dist_cache:
                dist_cache[u] = bfs_distances(H.graph, int(u), limit=3)
            max_range = max(max_range, dist_cache[u].get(int(v), 99))
    return CommutatorResult(C, norm, max_range, max_range <= 2)


def commutator_norm_sectors(d: int, A, pou: PartitionOfUnity) -> float:
    """``||C||`` for a radial operator through the sector blocks.

    On ``S_n`` each commutator is the antisymmetric tridiagonal matrix with
    entries ``c_k (j(k+1) - j(k))``, and ``C`` restricts to
    ``2 sum K^T K``.
    """
    R = pou.depth
    best = 0.0
    for n in range(1, R + 2):
        ell = R - n + 2
        if ell < 2:
            continue
        c = sector_couplings(d, A, n, ell)
        Cn = np.zeros((ell, ell))
        for a in range(len(pou.alphas)):
            jl = pou.j[a, n - 1:n - 1 + ell]
            dj = c * np.diff(jl)
            if not np.any(dj):
                continue
            K = np.diag(dj, 1) - np.diag(dj, -1)
            Cn += 2.0 * K.T @ K
        best = max(best, float(np.max(np.abs(symmetric_eigen(Cn, vectors=False)))))
    return best


def localization_slack(H: JacobiOperator, pou: PartitionOfUnity, C, n_vectors: int = 50, seed: int = 0) -> np.ndarray:
    """``2||H phi||^2 + (phi, C phi) - sum_alpha ||H j_alpha phi||^2`` for random ``phi``."""
    rng = np.random.default_rng(seed)
    lev = tree_levels(H.graph)
    Phi = rng.standard_normal((H.n, n_vectors))
    HPhi = H.apply(Phi)
    rhs = 2 * np.sum(HPhi ** 2, axis=0) + np.sum(Phi * (C @ Phi), axis=0)
    lhs = np.zeros(n_vectors)
    for a in range(len(pou.alphas)):
        jv = pou.on_vertices(a, lev)[:, None]
        lhs += np.sum(H.apply(jv * Phi) ** 2, axis=0)
    return rhs - lhs


def tree_size_check(d: int, R: int) -> bool:
    return build_regular_tree(d, R).n == tree_size(d, R) == 1 + d * ((d - 1) ** R - 1) // (d - 2)
