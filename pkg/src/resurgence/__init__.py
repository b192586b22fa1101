"""Endlessly continuable germs in the Borel plane.

Modules: :mod:`~resurgence.dfs` (discrete filtered sets),
:mod:`~resurgence.pathgeo` (allowed paths), :mod:`~resurgence.germs`
(Borel transform and disk-chain continuation), :mod:`~resurgence.convflow`
(convolution along paths by the node-deformation flow),
:mod:`~resurgence.substitution` and :mod:`~resurgence.cli`.
"""

from .errors import (ContinuationError, DFSError, FlowError, PathError, PathNotFound,
                     QuadratureError, ResurgenceError, SubstitutionError)

__version__ = "0.1.0"

__all__ = [
    "ContinuationError", "DFSError", "FlowError", "PathError", "PathNotFound",
    "QuadratureError", "ResurgenceError", "SubstitutionError", "__version__",
]
