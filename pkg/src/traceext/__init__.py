"""Discrete tools for traces of sphere-valued Sobolev maps on half-spaces.

Submodules: ``cubical`` (cube lattices and skeleta), ``simplicial`` (finite
complexes and the regularity ratio), ``fields`` (discrete maps and energies),
``extension`` (retractions, extensions, minimization), ``density`` (extension
energy densities and averaging lemmas) and ``experiments`` (scans, suites and
reports behind the ``traceext`` command).
"""

__version__ = "0.1.0"
