"""Backend selection for the hot loops.

The compiled extension is used when importable; ``DONSKERFBM_PURE=1`` forces
the NumPy fallback. Both expose the same functions.
"""

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("DONSKERFBM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else pure
BACKEND_NAME = "cython" if compiled is not None else "numpy"

keyed_uint64 = backend.keyed_uint64
eta_matrix = backend.eta_matrix
eta_weighted_sum = backend.eta_weighted_sum
normal_matrix = backend.normal_matrix
pairwise_dist_rowsums = backend.pairwise_dist_rowsums
holder_full_rowmax = backend.holder_full_rowmax
count_compositions = backend.count_compositions


def set_num_threads(n):
    """Cap worker threads in both backends; outputs never depend on it."""
    pure.set_num_threads(n)
    if compiled is not None:
        compiled.set_num_threads(n)


def get_num_threads():
    return backend.get_num_threads()
