"""Closed-form m-functions for the half-line, the regular tree and the
tree with a half-line attached at its root.

All three are diagonal resolvent elements ``(delta, (H - z)^{-1} delta)``
and hence Herglotz: ``Im m(z) > 0`` for ``Im z > 0``.  The square roots
are evaluated on the principal branch and then flipped when the Herglotz
condition fails, which singles out the physical (decaying) branch.  Real
arguments are only accepted outside the band, where the branch with the
sign of ``Re z`` is the decaying one.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph_core import build_glued_tree, build_half_line, build_regular_tree, tree_size
from .operator_core import adjacency_operator

POLE_TOL = 1e-12


def _band_check(z, edge):
    if z.imag == 0 and abs(z.real) <= edge:
        raise ValueError(f"real argument {z.real} lies on the band [-{edge}, {edge}]; use z + i*eps")


def _root(z, w, build):
    """``build(s)`` with ``s = sqrt(w)`` on the branch that makes it Herglotz."""
    if z.imag == 0:
        return build(np.sign(z.real) * np.sqrt(w.real + 0j))
    s = np.sqrt(w)
    m = build(s)
    if m.imag * z.imag <= 0:
        m = build(-s)
    return m


def m_halfline(z) -> complex:
    """``m_N(z) = (-z + sqrt(z^2 - 4)) / 2``.

    Evaluated as ``-2 / (z + sqrt(z^2 - 4))``, which avoids cancellation
    for large ``|z|`` on the decaying branch.
    """
    z = complex(z)
    _band_check(z, 2.0)
    return complex(_root(z, z * z - 4, lambda s: -2 / (z + s)))


def m_tree(z, d: int) -> complex:
    """``m_T(z) = -2(d-1) / ((d-2) z + d sqrt(z^2 - 4(d-1)))``."""
    if d < 3:
        raise ValueError("degree must be at least 3")
    z = complex(z)
    _band_check(z, 2 * np.sqrt(d - 1))
    return complex(_root(z, z * z - 4 * (d - 1), lambda s: -2 * (d - 1) / ((d - 2) * z + d * s)))


def glued_denominator(z, d: int) -> complex:
    return 1 - m_tree(z, d) * m_halfline(z)


def m_glued(z, d: int) -> complex:
    """``m_T / (1 - m_T m_N)``, the m-function at the junction vertex.

    A denominator below ``1e-12`` in modulus is a pole candidate; it is
    reported with a warning and ``inf`` is returned.
    """
    mt = m_tree(z, d)
    den = 1 - mt * m_halfline(z)
    if abs(den) < POLE_TOL:
        warnings.warn(f"glued denominator {abs(den):.3e} at z={z}: pole candidate", RuntimeWarning)
        return complex(np.inf, 0.0)
    return complex(mt / den)


def resolvent_element(H, v: int, z) -> complex:
    """``(delta_v, (H - z)^{-1} delta_v)`` for a finite operator."""
    M = (H.sparse - complex(z) * sp.identity(H.n, format="csr")).tocsc()
    e = np.zeros(H.n, dtype=complex)
    e[v] = 1.0
    return complex(spla.spsolve(M, e)[v])


def truncation_checks(d: int = 3, halfline_n: int = 2000, z_half=3 + 0.1j,
                      tree_depth: int = 9, z_tree=5 + 0.5j) -> dict:
    """Closed forms against resolvents of finite truncations."""
    Hn = adjacency_operator(build_half_line(halfline_n))
    Ht = adjacency_operator(build_regular_tree(d, tree_depth))
    half = abs(m_halfline(z_half) - resolvent_element(Hn, 0, z_half))
    tree = abs(m_tree(z_tree, d) - resolvent_element(Ht, 0, z_tree))
    return {"halfline_error": float(half), "tree_error": float(tree)}


def glued_spectrum_check(d: int, depth: int = 10, tail: int | None = None, tol: float | None = None) -> dict:
    """Residual-certified spectrum of a truncated glued tree above the band.

    Balls around the junction and along the attached path are certified;
    nothing should be certified in ``(2 sqrt(d-1) + delta, d + 1]`` with
    ``delta`` half the gap ``d - 2 sqrt(d-1)``.
    """
    from .spectral import approx_spectrum

    tail = 4 * depth if tail is None else tail
    band = 2 * np.sqrt(d - 1)
    delta = (d - band) / 2
    tol = delta if tol is None else tol
    g = build_glued_tree(d, depth, tail)
    H = adjacency_operator(g)
    r = depth - 1
    n0 = g.n - tail
    centers = [0] + [n0 + k for k in range(0, max(tail - r - 1, 0), max(1, r))]
    approx = approx_spectrum(H, centers, r, tol)
    cert = approx.certified
    bad = cert[(cert > band + delta) & (cert <= d + 1)]
    return {
        "certified_max": float(cert.max()) if cert.size else -np.inf,
        "violations": bad.tolist(),
        "band_edge": float(band),
        "delta": float(delta),
        "tol": float(tol),
        "ok": bad.size == 0,
    }


def default_depth(d: int, max_vertices: int = 4000) -> int:
    """Deepest truncation of the ``d``-regular tree with at most ``max_vertices``."""
    depth = 1
    while tree_size(d, depth + 1) <= max_vertices:
        depth += 1
    return depth


def gap_certificate(d: int, eps_list=None, depth: int | None = None, cross_check: bool = True) -> dict:
    """Evidence that ``d`` is not in the spectrum of the glued tree.

    Tabulates ``m_glued(d + i eps)``; the imaginary part must decrease to
    zero roughly linearly in ``eps`` while ``|1 - m_T m_N|`` stays away
    from zero.  Optionally adds :func:`glued_spectrum_check`.
    """
    if eps_list is None:
        eps_list = [10.0 ** -k for k in range(1, 7)]
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    rows = []
    for e in eps_list:
        z = complex(d, e)
        m = m_glued(z, d)
        rows.append({"eps": e, "re": m.real, "im": m.imag, "denominator": abs(glued_denominator(z, d))})
    im = np.array([r["im"] for r in rows])
    ratio = im / np.array(eps_list)
    checks = {
        "im_positive": bool(np.all(im > 0)),
        "im_decreasing": bool(np.all(np.diff(im) < 0)),
        "im_small": bool(im[-1] < 1e-4),
        # Im m / eps settles when Im m vanishes linearly
        "linear_decay": bool(len(ratio) < 3 or abs(ratio[-1] - ratio[-2]) <= 0.05 * abs(ratio[-2]) + 1e-12),
        "denominator_bounded": bool(min(r["denominator"] for r in rows) > 0.5),
    }
    out = {"d": d, "table": rows, "gap": float(d - 2 * np.sqrt(d - 1)), "checks": checks}
    if cross_check:
        cc = glued_spectrum_check(d, default_depth(d) if depth is None else depth)
        out["truncation"] = cc
        checks["truncation"] = cc["ok"]
    out["ok"] = all(checks.values())
    return out


def gap_table_csv(report: dict) -> str:
    lines = ["eps,re_m,im_m,abs_denominator"]
    lines += [f"{r['eps']!r},{r['re']!r},{r['im']!r},{r['denominator']!r}" for r in report["table"]]
    return "\n".join(lines) + "\n"


def remark_probe(d: int, points: int = 2000, span: float = 4.0) -> dict:
    """Scan real ``lam`` outside the band for zeros of ``1 - m_T m_N``.

    A zero would be an eigenvalue of the glued tree outside the tree band;
    the scan reports the smallest modulus found.
    """
    edge = 2 * np.sqrt(d - 1)
    grid = np.concatenate([np.linspace(edge + 1e-9, edge + span, points),
                           -np.linspace(edge + 1e-9, edge + span, points)])
    vals = np.array([abs(glued_denominator(x, d)) for x in grid])
    i = int(np.argmin(vals))
    return {"min_abs_denominator": float(vals[i]), "at": float(grid[i]), "band_edge": float(edge)}
