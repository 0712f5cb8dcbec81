"""Shared builders for the test modules."""

import numpy as np

from spinbus import ffq, mbq

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict = {}


def random_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def det_to_dense(orbitals, layout, sites=None):
    """Spin-basis image of a determinant, restricted to ``sites`` (default: all)."""
    sites = tuple(range(layout.n_sites)) if sites is None else tuple(sites)
    basis = mbq.Basis(len(sites), orbitals.shape[1])
    k = len(sites)
    configs = np.zeros((basis.dim, layout.n_sites), dtype=bool)
    for pos, site in enumerate(sites):
        configs[:, site] = (basis.states >> np.uint64(k - 1 - pos)) & np.uint64(1)
    return mbq.DenseState(basis, ffq.slater_amplitudes(orbitals, layout, configs), sites)
