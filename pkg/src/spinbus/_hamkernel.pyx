# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled XXZ Hamiltonian action on a bit-string basis.

Same contract as ``spinbus._hamkernel_py.apply_hamiltonian``.  For a
fixed-particle basis the hop targets are ranked once per (basis, bonds)
and cached; the product itself is a single gather pass.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint64_t

cnp.import_array()

_CACHE = {}


cdef extern from *:
    int _popcount "__builtin_popcountll"(unsigned long long x) nogil


def _rank_tables(int n_sites, const int64_t[:, ::1] binom):
    # colex rank split as low[s & lo_mask] + high[s >> n_low, popcount(low bits)]
    cdef int n_low = n_sites // 2
    cdef int n_high = n_sites - n_low
    low = np.zeros(1 << n_low, dtype=np.int64)
    high = np.zeros((1 << n_high, n_sites + 1), dtype=np.int64)
    cdef int64_t[::1] lo = low
    cdef int64_t[:, ::1] hi = high
    cdef Py_ssize_t x
    cdef int pos, k, c
    cdef int64_t r
    for x in range(1 << n_low):
        r = 0
        k = 0
        for pos in range(n_low):
            if (x >> pos) & 1:
                k += 1
                r += binom[pos, k]
        lo[x] = r
    for x in range(1 << n_high):
        for c in range(n_low + 1):
            r = 0
            k = c
            for pos in range(n_high):
                if (x >> pos) & 1:
                    k += 1
                    if k <= n_sites:
                        r += binom[n_low + pos, k]
            hi[x, c] = r
    return low, high


def _flip_targets(
    const uint64_t[::1] states,
    int n_sites,
    const int64_t[:, ::1] binom,
    const int64_t[::1] bond_i,
    const int64_t[::1] bond_j,
):
    """(dim, n_bonds) table: rank of the hopped state, or the state's own rank."""
    cdef Py_ssize_t dim = states.shape[0]
    cdef Py_ssize_t nb = bond_i.shape[0]
    cdef int n_low = n_sites // 2
    cdef uint64_t lo_mask = ((<uint64_t>1) << n_low) - 1
    low, high = _rank_tables(n_sites, binom)
    cdef int64_t[::1] lo = low
    cdef int64_t[:, ::1] hi = high
    table = np.empty((dim, nb), dtype=np.int32)
    cdef int32_t[:, ::1] tab = table
    cdef Py_ssize_t idx, b
    cdef uint64_t s, t, mi, mj
    with nogil:
        for idx in range(dim):
            s = states[idx]
            for b in range(nb):
                mi = (<uint64_t>1) << (n_sites - 1 - bond_i[b])
                mj = (<uint64_t>1) << (n_sites - 1 - bond_j[b])
                if ((s & mi) != 0) != ((s & mj) != 0):
                    t = s ^ (mi | mj)
                    tab[idx, b] = <int32_t>(lo[t & lo_mask] + hi[t >> n_low, _popcount(t & lo_mask)])
                else:
                    tab[idx, b] = <int32_t>idx
    return table


def _cached_targets(states, n_sites, binom, bond_i, bond_j):
    key = (id(states), n_sites, bond_i.tobytes(), bond_j.tobytes())
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is states:
        return hit[1]
    table = _flip_targets(states, n_sites, binom, bond_i, bond_j)
    if len(_CACHE) > 8:
        _CACHE.clear()
    _CACHE[key] = (states, table)
    return table


def apply_hamiltonian(
    const uint64_t[::1] states,
    const double complex[::1] v,
    double complex[::1] out,
    int n_sites,
    bint sector,
    const int64_t[:, ::1] binom,
    const int64_t[::1] bond_i,
    const int64_t[::1] bond_j,
    const double[::1] hop,
    const double[::1] zz,
    const double[::1] hz,
):
    """out = H v for one basis (full register or fixed particle number)."""
    cdef Py_ssize_t dim = v.shape[0]
    cdef Py_ssize_t nb = bond_i.shape[0]
    cdef Py_ssize_t idx, b
    cdef uint64_t s, mi, mj
    cdef int site
    cdef double diag, acc_re, acc_im, w, flip
    cdef Py_ssize_t r
    cdef int32_t[:, ::1] tab
    # interleaved (re, im) views avoid the C99 complex multiply
    cdef const double[::1] vd = np.asarray(v).view(np.float64)
    cdef double[::1] od = np.asarray(out).view(np.float64)
    if sector:
        tab = _cached_targets(states.base, n_sites, binom, bond_i.base, bond_j.base)
    with nogil:
        for idx in range(dim):
            if sector:
                s = states[idx]
            else:
                s = <uint64_t>idx
            diag = 0.0
            for site in range(n_sites):
                if hz[site] != 0.0:
                    if (s >> (n_sites - 1 - site)) & 1:
                        diag -= hz[site]
                    else:
                        diag += hz[site]
            acc_re = 0.0
            acc_im = 0.0
            # branch-free: aligned bonds gather their own amplitude with weight 0
            for b in range(nb):
                mi = (<uint64_t>1) << (n_sites - 1 - bond_i[b])
                mj = (<uint64_t>1) << (n_sites - 1 - bond_j[b])
                flip = <double>(((s & mi) != 0) ^ ((s & mj) != 0))
                diag += zz[b] * (1.0 - 2.0 * flip)
                if sector:
                    r = tab[idx, b]
                else:
                    r = <Py_ssize_t>(s ^ (mi | mj))
                    r = idx + <Py_ssize_t>flip * (r - idx)
                # H is real symmetric, so gathering from the hopped state works
                w = hop[b] * flip
                acc_re = acc_re + w * vd[2 * r]
                acc_im = acc_im + w * vd[2 * r + 1]
            od[2 * idx] = diag * vd[2 * idx] + acc_re
            od[2 * idx + 1] = diag * vd[2 * idx + 1] + acc_im
    return np.asarray(out)
