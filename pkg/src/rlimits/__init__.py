"""Right limits and essential spectra of Jacobi operators on graphs.

Modules
-------
graph_core
    Graphs, balls with coherent and canonical enumerations, builders.
operator_core
    Jacobi operators on graphs and half-lines.
rlimit
    Germs of R-limits along paths to infinity.
spectral
    Residual-certified spectra, Weyl checks, the girth-gluing experiment.
tree_spherical
    Spherical decomposition, one-dimensional limits, partitions of unity.
mfunction
    Closed-form m-functions and the spectral gap certificate.
"""
from .graph_core import Graph, PathToInfinity, RootedBall, ball, canonical_form
from .operator_core import HalfLineJacobi, JacobiOperator, WholeLineWindow, adjacency_operator
from .spectral import SpectrumApproximation, approx_spectrum, weyl_check

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "HalfLineJacobi",
    "JacobiOperator",
    "PathToInfinity",
    "RootedBall",
    "SpectrumApproximation",
    "WholeLineWindow",
    "adjacency_operator",
    "approx_spectrum",
    "ball",
    "canonical_form",
    "weyl_check",
]
