"""Exact sum-of-squares certificates for polynomials positive on semialgebraic sets.

Submodules: :mod:`qmcert.poly` (exact polynomials), :mod:`qmcert.bounds`
(interval branch and bound), :mod:`qmcert.averkov` (multiplier parameters),
:mod:`qmcert.sos` (exact SOS decompositions), :mod:`qmcert.lasserre`
(globally positive case), :mod:`qmcert.putinar` (the full pipeline) and
:mod:`qmcert.cli`.
"""

__version__ = "0.1.0"

from .poly import Polynomial, parse  # noqa: E402
from .rational import Q  # noqa: E402

__all__ = ["Polynomial", "parse", "Q", "__version__"]
