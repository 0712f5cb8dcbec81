"""Vectorised numpy version of the XXZ Hamiltonian action.

``apply_hamiltonian`` computes ``out = H v`` where

    H = sum_b hop_b (s+_i s-_j + s-_i s+_j) + sum_b zz_b sz_i sz_j + sum_s hz_s sz_s

(``hop_b`` is the full off-diagonal element, i.e. twice the bond
coupling).  Basis states are bit strings with site 0 as the most
significant bit and bit 1 meaning spin down.
"""

import numpy as np

_CACHE: dict = {}


def _tables(states, dim, n_sites, sector, bond_i, bond_j):
    key = (id(states), dim, n_sites, sector, bond_i.tobytes(), bond_j.tobytes())
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is states:
        return hit[1]
    s = states if sector else np.arange(dim, dtype=np.uint64)
    shifts = np.uint64(n_sites - 1) - np.arange(n_sites, dtype=np.uint64)
    spins = 1 - 2 * ((s[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)
    flips = []
    for i, j in zip(bond_i, bond_j):
        mask = np.uint64((1 << (n_sites - 1 - int(i))) | (1 << (n_sites - 1 - int(j))))
        src = np.nonzero(spins[:, i] != spins[:, j])[0]
        tgt = s[src] ^ mask
        dst = np.searchsorted(s, tgt) if sector else tgt.astype(np.int64)
        flips.append((src, dst))
    zzsign = (spins[:, bond_i] * spins[:, bond_j]).astype(float)
    tables = (spins.astype(float), zzsign, flips)
    if len(_CACHE) > 8:
        _CACHE.clear()
    _CACHE[key] = (states, tables)
    return tables


def apply_hamiltonian(states, v, out, n_sites, sector, binom, bond_i, bond_j, hop, zz, hz):
    spins, zzsign, flips = _tables(states, v.shape[0], n_sites, sector, bond_i, bond_j)
    diag = zzsign @ zz + spins @ hz
    out[:] = diag * v
    for b, (src, dst) in enumerate(flips):
        if hop[b] != 0.0:
            out[dst] += hop[b] * v[src]
    return out
