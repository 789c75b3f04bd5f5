"""Bautin (generalized Hopf) bifurcation analysis for delay differential systems.

Pipeline: :mod:`spectrum` -> :mod:`eigenbasis` -> :mod:`manifold` ->
:mod:`normalform`, with :mod:`ddesim` as an independent simulation check and
:mod:`cli` as the batch front end.
"""

__version__ = "0.1.0"
