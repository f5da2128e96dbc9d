# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Every routine here has a bit-for-bit twin in :mod:`donskerfbm._pykernels`
(up to libm rounding in the Gaussian transform). Outputs are written
element-wise, so results do not depend on the OpenMP thread count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, log, cos, fabs, pow

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 GAMMA = 0x9E3779B97F4A7C15ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0

cdef int _num_threads = 1


def set_num_threads(int n):
    global _num_threads
    _num_threads = max(1, n)


def get_num_threads():
    return _num_threads


cdef inline u64 mix64(u64 z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 row_key(u64 base, u64 sample) noexcept nogil:
    return mix64(base ^ mix64((sample + 1) * GAMMA))


cdef inline double to_unit(u64 x) noexcept nogil:
    return <double>(x >> 11) * INV_2_53


cdef inline double draw_eta(u64 rk, u64 counter, int law, const double* atoms,
                            const double* cum, Py_ssize_t n_atoms) noexcept nogil:
    cdef u64 x = mix64(rk + counter * GAMMA)
    cdef double u
    cdef Py_ssize_t a
    if law == 0:
        return 1.0 if (x >> 63) else -1.0
    u = to_unit(x)
    if law == 1:
        return 1.7320508075688772 * (2.0 * u - 1.0)
    for a in range(n_atoms - 1):
        if u < cum[a]:
            return atoms[a]
    return atoms[n_atoms - 1]


def keyed_uint64(u64 base, long long sample0, Py_ssize_t n_samples,
                 long long c0, Py_ssize_t n):
    """Raw counter hashes, shape (n_samples, n)."""
    out = np.empty((n_samples, n), dtype=np.uint64)
    cdef u64[:, ::1] o = out
    cdef Py_ssize_t s, k
    cdef u64 rk
    for s in prange(n_samples, nogil=True, num_threads=_num_threads, schedule="static"):
        rk = row_key(base, <u64>(sample0 + s))
        for k in range(n):
            o[s, k] = mix64(rk + <u64>(c0 + k) * GAMMA)
    return out


def eta_matrix(u64 base, long long sample0, Py_ssize_t n_samples, long long k0,
               Py_ssize_t n_blocks, int law, double[::1] atoms, double[::1] cum):
    out = np.empty((n_samples, n_blocks), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t s, k, na = atoms.shape[0]
    cdef u64 rk
    cdef const double* pa = &atoms[0]
    cdef const double* pc = &cum[0]
    for s in prange(n_samples, nogil=True, num_threads=_num_threads, schedule="static"):
        rk = row_key(base, <u64>(sample0 + s))
        for k in range(n_blocks):
            o[s, k] = draw_eta(rk, <u64>(k0 + k), law, pa, pc, na)
    return out


def eta_weighted_sum(u64 base, long long sample0, Py_ssize_t n_samples, long long k0,
                     double[::1] weights, int law, double[::1] atoms, double[::1] cum):
    """S[s] = sum_k weights[k] * eta(s, k0 + k), summed in ascending k."""
    out = np.empty(n_samples, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t s, k, nb = weights.shape[0], na = atoms.shape[0]
    cdef u64 rk
    cdef double acc
    cdef const double* pa = &atoms[0]
    cdef const double* pc = &cum[0]
    for s in prange(n_samples, nogil=True, num_threads=_num_threads, schedule="static"):
        rk = row_key(base, <u64>(sample0 + s))
        acc = 0.0
        for k in range(nb):
            acc = acc + weights[k] * draw_eta(rk, <u64>(k0 + k), law, pa, pc, na)
        o[s] = acc
    return out


def normal_matrix(u64 base, long long sample0, Py_ssize_t n_samples, Py_ssize_t n):
    """Standard normals by Box-Muller on counters (2c, 2c + 1)."""
    out = np.empty((n_samples, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t s, c
    cdef u64 rk
    cdef double u1, u2
    for s in prange(n_samples, nogil=True, num_threads=_num_threads, schedule="static"):
        rk = row_key(base, <u64>(sample0 + s))
        for c in range(n):
            u1 = to_unit(mix64(rk + <u64>(2 * c) * GAMMA))
            u2 = to_unit(mix64(rk + <u64>(2 * c + 1) * GAMMA))
            o[s, c] = sqrt(-2.0 * log(1.0 - u1)) * cos(TWO_PI * u2)
    return out


def pairwise_dist_rowsums(double[:, ::1] x, double[:, ::1] y):
    """Row sums of the Euclidean distance matrix between x and y."""
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], p = x.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, q
    cdef double acc, sq, diff
    for i in prange(n, nogil=True, num_threads=_num_threads, schedule="static"):
        acc = 0.0
        for j in range(m):
            sq = 0.0
            for q in range(p):
                diff = x[i, q] - y[j, q]
                sq = sq + diff * diff
            acc = acc + sqrt(sq)
        o[i] = acc
    return out


def holder_full_rowmax(double[:, ::1] values, double[::1] times, double mu):
    """For each i, max over j > i of |values[j] - values[i]| / (t_j - t_i)^mu."""
    cdef Py_ssize_t n = values.shape[0], p = values.shape[1]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, q
    cdef double best, sq, diff, r
    for i in prange(n, nogil=True, num_threads=_num_threads, schedule="dynamic"):
        best = 0.0
        for j in range(i + 1, n):
            sq = 0.0
            for q in range(p):
                diff = values[j, q] - values[i, q]
                sq = sq + diff * diff
            r = sqrt(sq) / pow(times[j] - times[i], mu)
            if r > best:
                best = r
        o[i] = best
    return out


cdef long long _count(int remaining, int min_part) noexcept nogil:
    cdef long long total = 0
    cdef int part
    if remaining == 0:
        return 1
    for part in range(min_part, remaining + 1):
        total += _count(remaining - part, min_part)
    return total


def count_compositions(int n, int min_part=2):
    """Enumerate ordered compositions of n into parts >= min_part, counting leaves."""
    cdef long long r
    if n <= 0:
        return 0
    with nogil:
        r = _count(n, min_part)
    return r
