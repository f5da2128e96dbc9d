"""Donsker-type approximation of fractional SDEs: drivers, fBm, solvers and moment checks."""

__version__ = "0.1.0"

from .errors import AccuracyError, DivergenceError, DomainError  # noqa: E402,F401
from .kernels import BACKEND_NAME, set_num_threads  # noqa: E402,F401
