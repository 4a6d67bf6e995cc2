"""R-limit germs: finite-radius snapshots of limit operators along a path.

Ball matrices along a path are taken in the label-invariant canonical form
of ``B_R``.  Balls with equal codes are compared entrywise; when a ball
automorphism combines with asymmetric coefficients the canonical
coordinates may disagree, and a layer-preserving matcher searches for a
coherent isomorphism that aligns the entries.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph_core import PathToInfinity, RootedBall, canonical_form
from .operator_core import BallMatrix, JacobiOperator, restrict_to

LABELS = ("line", "tree", "glued", "unknown")

# node budget for the alignment search
_MATCH_BUDGET = 200_000


@dataclass(frozen=True, eq=False)
class RLimitGerm:
    """Germ of radius ``R``: a rooted ball with matrix data and provenance.

    ``witnesses`` are path indices in increasing order and ``centers`` the
    corresponding graph vertices.  ``deviations[r][k]`` is the sup-distance
    between witness ``k`` and the final witness on the radius-``r`` prefix.
    """

    radius: int
    rooted_ball: RootedBall
    entries: np.ndarray
    witnesses: tuple
    centers: tuple
    deviations: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def code(self) -> tuple:
        return self.rooted_ball.code

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.size, dtype=int)
        for i, j in self.rooted_ball.induced_edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_tree(self) -> bool:
        return len(self.rooted_ball.induced_edges) == self.size - 1

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "ball": {"n": self.size, "edges": [list(e) for e in self.rooted_ball.induced_edges]},
            "root": 0,
            "layer": list(self.rooted_ball.layer),
            "entries": self.entries.tolist(),
            "witnesses": [int(c) for c in self.centers],
            "deviations": [[r, max(v)] for r, v in sorted(self.deviations.items())],
        }


@dataclass(frozen=True)
class ConvergenceReport:
    shape_match: dict
    deviation: dict
    subsequence: tuple


def ball_matrix_sequence(H: JacobiOperator, path, r: int, start: int = 0) -> list:
    """Canonical-form ball matrices ``M_r`` at ``path[start:]``.

    Clipped balls (reaching the truncation boundary) are returned with
    ``clipped=True`` rather than dropped.
    """
    vs = path.vertices if isinstance(path, PathToInfinity) else tuple(path)
    return [restrict_to(H, canonical_form(H.graph, v, r)) for v in vs[start:]]


def _adjacency(rb: RootedBall):
    nb = [set() for _ in range(rb.size)]
    for i, j in rb.induced_edges:
        nb[i].add(j)
        nb[j].add(i)
    return nb


def align(src: RootedBall, M_src, dst: RootedBall, M_dst, tol: float, fixed=None):
    """Search for a layer-preserving isomorphism ``pi`` with ``M_src[pi, pi] ~ M_dst``.

    Returns an index array ``pi`` (``dst`` position ``i`` corresponds to
    ``src`` position ``pi[i]``) or ``None``.  ``fixed`` pins some positions,
    as a dict ``{dst_pos: src_pos}``.  Entry tolerance ``tol`` may be
    ``np.inf`` for a purely structural match.
    """
    n = dst.size
    if src.size != n or len(src.induced_edges) != len(dst.induced_edges):
        return None
    if sorted(src.layer) != sorted(dst.layer):
        return None
    fixed = dict(fixed or {})
    fixed.setdefault(0, 0)
    nb_s, nb_d = _adjacency(src), _adjacency(dst)
    M_src = np.asarray(M_src)
    M_dst = np.asarray(M_dst)
    pi = [-1] * n
    used = [False] * n
    # earliest neighbour of each position fixes its candidate list
    anchor = [min(nb_d[i]) if nb_d[i] and min(nb_d[i]) < i else -1 for i in range(n)]

    def candidates(i):
        if i in fixed:
            cs = [fixed[i]]
        elif anchor[i] >= 0:
            cs = sorted(nb_s[pi[anchor[i]]])
        else:
            cs = range(n)
        out = []
        for c in cs:
            if used[c] or src.layer[c] != dst.layer[i] or len(nb_s[c]) != len(nb_d[i]):
                continue
            if abs(M_src[c, c] - M_dst[i, i]) > tol:
                continue
            ok = True
            for k in range(i):
                adj = k in nb_d[i]
                if adj != (pi[k] in nb_s[c]):
                    ok = False
                    break
                if adj and abs(M_src[c, pi[k]] - M_dst[i, k]) > tol:
                    ok = False
                    break
            if ok:
                out.append(c)
        return out

    stack = [iter(candidates(0))]
    nodes = 0
    while stack:
        i = len(stack) - 1
        if pi[i] >= 0:
            used[pi[i]] = False
            pi[i] = -1
        c = next(stack[-1], None)
        if c is None:
            stack.pop()
            continue
        nodes += 1
        if nodes > _MATCH_BUDGET:
            return None
        pi[i] = c
        used[c] = True
        if i + 1 == n:
            return np.array(pi)
        stack.append(iter(candidates(i + 1)))
    return None


def _permute(bm: BallMatrix, pi) -> tuple:
    rb = bm.ball
    verts = tuple(rb.vertices[p] for p in pi)
    inv = {p: i for i, p in enumerate(pi)}
    edges = tuple(sorted(tuple(sorted((inv[i], inv[j]))) for i, j in rb.induced_edges))
    new = RootedBall(rb.center, rb.radius, verts, edges, tuple(rb.layer[p] for p in pi))
    return new, bm.entries[np.ix_(pi, pi)]


def _sup(A, B) -> float:
    return float(np.max(np.abs(A - B))) if A.size else 0.0


def _prefix_devs(rb, A, B, R) -> list:
    return [_sup(A[:rb.prefix_size(r), :rb.prefix_size(r)], B[:rb.prefix_size(r), :rb.prefix_size(r)])
            for r in range(R + 1)]


def _aligned_to(bm: BallMatrix, ref_ball, ref_M, tol):
    """``bm`` expressed in the coordinates of a reference ball, or None."""
    if bm.ball.code == ref_ball.code and _sup(bm.entries, ref_M) <= tol:
        return bm.ball, bm.entries
    pi = align(bm.ball, bm.entries, ref_ball, ref_M, tol)
    if pi is None:
        return None
    return _permute(bm, pi)


def detect_germs(H: JacobiOperator, path, R: int, tol: float = 1e-8,
                 min_witnesses: int = 3, skip: int = 0) -> list:
    """Cluster radius-``R`` ball matrices along ``path`` into germs.

    Parameters
    ----------
    H : JacobiOperator
    path : PathToInfinity or sequence of vertices
    R : int
        Germ radius.
    tol : float
        Entrywise matching tolerance.
    min_witnesses : int
        Smallest cluster that yields a germ.
    skip : int
        Path indices ``< skip`` are ignored (a limit along a path does not
        see any finite prefix).

    Returns
    -------
    list of (RLimitGerm, ConvergenceReport)
        Ordered by first witness index.
    """
    if R < 1:
        raise ValueError("radius must be at least 1")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if min_witnesses < 2:
        raise ValueError("min_witnesses must be at least 2")
    vs = path.vertices if isinstance(path, PathToInfinity) else tuple(path)
    mats = ball_matrix_sequence(H, vs, R, start=skip)

    # clusters: [ref_ball, ref_M, [(index, ball, M)]]; compare with latest member
    clusters = []
    by_code = {}
    for k, bm in enumerate(mats):
        if bm.clipped:
            continue
        idx = skip + k
        placed = False
        for c in by_code.get(len(bm.ball.layer), []):
            _, last_ball, last_M = c[2][-1]
            hit = _aligned_to(bm, last_ball, last_M, tol)
            if hit is not None:
                c[2].append((idx, hit[0], hit[1]))
                placed = True
                break
        if not placed:
            c = [bm.ball, bm.entries, [(idx, bm.ball, bm.entries)]]
            clusters.append(c)
            by_code.setdefault(len(bm.ball.layer), []).append(c)

    results = []
    for _, _, members in clusters:
        if len(members) < min_witnesses:
            continue
        f_idx, f_ball, f_M = members[-1]
        # realign every member to the final witness
        aligned = []
        for idx, b, M in members:
            pi = align(b, M, f_ball, f_M, np.inf) if b.code != f_ball.code else None
            if pi is not None:
                b, M = _permute(BallMatrix(b, M), pi)
            aligned.append((idx, b, M, _prefix_devs(f_ball, M, f_M, R)))
        # keep a subsequence with non-increasing deviations at every radius
        keep = [aligned[-1]]
        for item in reversed(aligned[:-1]):
            if all(x >= y for x, y in zip(item[3], keep[-1][3])):
                keep.append(item)
        keep.reverse()
        if len(keep) < min_witnesses:
            continue
        devs = {r: [it[3][r] for it in keep] for r in range(R + 1)}
        germ = RLimitGerm(
            radius=R,
            rooted_ball=f_ball,
            entries=f_M,
            witnesses=tuple(it[0] for it in keep),
            centers=tuple(vs[it[0]] for it in keep),
            deviations=devs,
        )
        report = ConvergenceReport(
            shape_match={r: True for r in range(R + 1)},
            deviation={r: max(devs[r]) for r in range(R + 1)},
            subsequence=germ.witnesses,
        )
        if not any(germ_equals(germ, g, tol) for g, _ in results):
            results.append((germ, report))
    results.sort(key=lambda gr: gr[0].witnesses[0])
    return results


def germ_equals(g1: RLimitGerm, g2: RLimitGerm, tol: float) -> bool:
    """Equal shapes and entries within ``tol`` under some coherent isomorphism."""
    if g1.radius != g2.radius:
        raise ValueError(f"radius mismatch: {g1.radius} vs {g2.radius}")
    if g1.size != g2.size or sorted(g1.code[0]) != sorted(g2.code[0]):
        return False
    if g1.code == g2.code and _sup(g1.entries, g2.entries) <= tol:
        return True
    return align(g1.rooted_ball, g1.entries, g2.rooted_ball, g2.entries, tol) is not None


def classify_counterexample_germs(germs, d: int) -> list:
    """Label germs of the gluing counterexample as line, tree, glued or unknown.

    Only vertices strictly inside the ball (layer ``< R``) have their full
    degree visible, so the rules read those.
    """
    labels = []
    for item in germs:
        g = item[0] if isinstance(item, tuple) else item
        layer = np.asarray(g.rooted_ball.layer)
        deg = g.degrees()[layer < g.radius]
        vals = Counter(deg.tolist())
        if not g.is_tree():
            labels.append("unknown")
        elif set(vals) == {2}:
            labels.append("line")
        elif set(vals) == {d}:
            labels.append("tree")
        elif vals.get(d + 1, 0) == 1 and set(vals) <= {2, d, d + 1}:
            labels.append("glued")
        elif set(vals) == {2, d}:
            labels.append("glued")
        else:
            labels.append("unknown")
    return labels


def transplant(phi, germ: RLimitGerm, H: JacobiOperator, u: int) -> np.ndarray:
    """Move a vector on the germ ball to ``B_R(u)`` in ``H``'s graph.

    Raises ``ValueError`` if ``B_R(u)`` does not have the germ's shape.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != germ.size:
        raise ValueError("vector does not live on the germ ball")
    rb = canonical_form(H.graph, u, germ.radius)
    if rb.code != germ.code:
        pi = align(rb, np.zeros((rb.size, rb.size)), germ.rooted_ball,
                   np.zeros((germ.size, germ.size)), np.inf)
        if pi is None:
            raise ValueError(f"ball of radius {germ.radius} at {u} does not match the germ shape")
        verts = [rb.vertices[p] for p in pi]
    else:
        verts = list(rb.vertices)
    chi = np.zeros(H.n)
    chi[verts] = phi
    return chi


def transfer_bound(phi, lam: float, germ: RLimitGerm, H: JacobiOperator, u: int) -> tuple:
    """Both sides of the residual transfer inequality for ``phi`` in ``B_{R-1}``.

    Returns ``(lhs, rhs)`` with ``lhs = ||(H - lam) chi||`` and
    ``rhs = ||(M_u - M_germ) phi|| + ||(M_germ - lam) phi||``.
    """
    phi = np.asarray(phi, dtype=float)
    layer = np.asarray(germ.rooted_ball.layer)
    if np.any(phi[layer >= germ.radius] != 0):
        raise ValueError("vector must vanish on the outer layer of the germ ball")
    chi = transplant(phi, germ, H, u)
    lhs = float(np.linalg.norm(H.apply(chi) - lam * chi))
    rb = canonical_form(H.graph, u, germ.radius)
    pi = align(rb, restrict_to(H, rb).entries, germ.rooted_ball, germ.entries, np.inf)
    M_u = _permute(restrict_to(H, rb), pi)[1]
    rhs = float(np.linalg.norm((M_u - germ.entries) @ phi) + np.linalg.norm(germ.entries @ phi - lam * phi))
    return lhs, rhs


@dataclass(frozen=True)
class AncestorRay:
    germ_index: int
    ray: tuple | None
    votes: int
    error: str | None = None


def ancestors_sequence(H: JacobiOperator, path, germs) -> list:
    """Germ-ball rays traced by the path ancestors of each witness.

    For witness ``u_j = path[p_j]`` the ``n``-th ancestor is
    ``path[p_j - n]``.  The final witness proposes a ray of positions; every
    other witness votes for it if its ball aligns with the germ while
    sending its own ancestors onto that ray.  A ray is reported once a
    strict majority of the witnesses agree.
    """
    vs = path.vertices if isinstance(path, PathToInfinity) else tuple(path)
    out = []
    for gi, item in enumerate(germs):
        g = item[0] if isinstance(item, tuple) else item
        R = g.radius
        if not g.is_tree():
            out.append(AncestorRay(gi, None, 0, "germ ball is not a tree"))
            continue
        wit = [p for p in g.witnesses if p >= R]
        if len(wit) < 2:
            out.append(AncestorRay(gi, None, len(wit), "witness tail too short to stabilise"))
            continue
        pos = g.rooted_ball.position()
        try:
            ray = tuple(pos[vs[wit[-1] - n]] for n in range(R + 1))
        except KeyError:
            out.append(AncestorRay(gi, None, 0, "final witness ancestors leave the germ ball"))
            continue
        votes = 1
        for p in wit[:-1]:
            rb = canonical_form(H.graph, vs[p], R)
            bpos = rb.position()
            anc = [bpos.get(vs[p - n]) for n in range(R + 1)]
            if None in anc:
                continue
            fixed = {ray[n]: anc[n] for n in range(R + 1)}
            M = restrict_to(H, rb).entries
            if align(rb, M, g.rooted_ball, g.entries, 1e-8, fixed=fixed) is not None:
                votes += 1
        if 2 * votes > len(wit):
            out.append(AncestorRay(gi, ray, votes))
        else:
            out.append(AncestorRay(gi, None, votes, "ancestor rays did not stabilise"))
    return out

