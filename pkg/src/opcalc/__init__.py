"""Commutator expansions ``[B, f(A)]`` for commuting Hermitian tuples.

Submodules: ``multiindex``, ``symdiff``, ``operator_model``, ``functions``,
``aae``, ``hs_calculus``, ``expansion``, ``harness`` and ``cli``.  Nothing is
imported eagerly so that the command line can cap BLAS threads first.
"""

__version__ = "0.1.0"
