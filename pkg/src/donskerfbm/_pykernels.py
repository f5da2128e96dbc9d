"""NumPy twins of the compiled kernels in ``_ckernels.pyx``.

Same hash, same summation order, same output layout. Used when the
extension is not built or when ``DONSKERFBM_PURE=1`` is set.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S11, _S63 = np.uint64(11), np.uint64(63)
_INV_2_53 = 1.0 / 9007199254740992.0
_ROWS = 4096

_num_threads = 1


def set_num_threads(n):
    global _num_threads
    _num_threads = max(1, int(n))


def get_num_threads():
    return _num_threads


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _row_keys(base, sample0, n_samples):
    s = np.arange(sample0, sample0 + n_samples, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(base) ^ mix64((s + np.uint64(1)) * GAMMA))


def _hash(rk, counters):
    with np.errstate(over="ignore"):
        return mix64(rk[:, None] + counters[None, :] * GAMMA)


def _to_unit(x):
    return (x >> _S11).astype(np.float64) * _INV_2_53


def _eta_from_hash(x, law, atoms, cum):
    if law == 0:
        return np.where((x >> _S63) == 1, 1.0, -1.0)
    u = _to_unit(x)
    if law == 1:
        return 1.7320508075688772 * (2.0 * u - 1.0)
    idx = np.searchsorted(cum[:-1], u, side="right")
    return np.asarray(atoms)[idx]


def keyed_uint64(base, sample0, n_samples, c0, n):
    rk = _row_keys(base, sample0, n_samples)
    return _hash(rk, np.arange(c0, c0 + n, dtype=np.uint64))


def eta_matrix(base, sample0, n_samples, k0, n_blocks, law, atoms, cum):
    out = np.empty((n_samples, n_blocks))
    counters = np.arange(k0, k0 + n_blocks, dtype=np.uint64)
    for lo in range(0, n_samples, _ROWS):
        hi = min(n_samples, lo + _ROWS)
        rk = _row_keys(base, sample0 + lo, hi - lo)
        out[lo:hi] = _eta_from_hash(_hash(rk, counters), law, atoms, cum)
    return out


def eta_weighted_sum(base, sample0, n_samples, k0, weights, law, atoms, cum):
    weights = np.asarray(weights, dtype=np.float64)
    out = np.empty(n_samples)
    for lo in range(0, n_samples, _ROWS):
        hi = min(n_samples, lo + _ROWS)
        eta = eta_matrix(base, sample0 + lo, hi - lo, k0, len(weights), law, atoms, cum)
        acc = np.zeros(hi - lo)
        # ascending-k accumulation, matching the compiled loop
        for k in range(len(weights)):
            acc += weights[k] * eta[:, k]
        out[lo:hi] = acc
    return out


def normal_matrix(base, sample0, n_samples, n):
    out = np.empty((n_samples, n))
    c = np.arange(n, dtype=np.uint64)
    for lo in range(0, n_samples, _ROWS):
        hi = min(n_samples, lo + _ROWS)
        rk = _row_keys(base, sample0 + lo, hi - lo)
        u1 = _to_unit(_hash(rk, np.uint64(2) * c))
        u2 = _to_unit(_hash(rk, np.uint64(2) * c + np.uint64(1)))
        out[lo:hi] = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)
    return out


def pairwise_dist_rowsums(x, y):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    out = np.empty(len(x))
    step = max(1, 2_000_000 // max(1, len(y)))
    for lo in range(0, len(x), step):
        diff = x[lo:lo + step, None, :] - y[None, :, :]
        out[lo:lo + step] = np.sqrt((diff * diff).sum(axis=2)).sum(axis=1)
    return out


def holder_full_rowmax(values, times, mu):
    values = np.ascontiguousarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    n = len(values)
    out = np.zeros(n)
    for i in range(n - 1):
        d = values[i + 1:] - values[i]
        r = np.sqrt((d * d).sum(axis=1)) / (times[i + 1:] - times[i]) ** mu
        out[i] = r.max()
    return out


def count_compositions(n, min_part=2):
    if n <= 0:
        return 0
    total = 0
    stack = [n]
    while stack:
        remaining = stack.pop()
        if remaining == 0:
            total += 1
            continue
        stack.extend(remaining - part for part in range(min_part, remaining + 1))
    return total
