import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from helpers import random_state
from spinbus import kernels, mbq
from spinbus.model import ChainSpec, ControlSchedule, PiecewiseLinear

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)


def _op(single, site, n):
    out = np.ones((1, 1), dtype=complex)
    for s in range(n):
        out = np.kron(out, single if s == site else np.eye(2))
    return out


def pauli_hamiltonian(terms):
    """Kronecker-product reference for the XXZ terms (site 0 leftmost)."""
    n = terms.n_sites
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i, j, hop, zz in zip(terms.bond_i, terms.bond_j, terms.hop, terms.zz):
        c = hop / 2
        h += c * (_op(X, i, n) @ _op(X, j, n) + _op(Y, i, n) @ _op(Y, j, n))
        h += zz * _op(Z, i, n) @ _op(Z, j, n)
    for s, f in enumerate(terms.hz):
        h += f * _op(Z, s, n)
    return h


def random_terms(rng, n, nb=None):
    nb = nb or n + 2
    bi = rng.integers(0, n, size=nb)
    bj = (bi + rng.integers(1, n, size=nb)) % n
    return mbq.HamiltonianTerms(
        n, bi.astype(np.int64), bj.astype(np.int64),
        rng.normal(size=nb), rng.normal(size=nb), rng.normal(size=n),
    )


def test_two_site_spectrum():
    # H = XX + YY + lam ZZ on two sites: {lam, lam, 2 - lam, -2 - lam}
    lam = 0.3
    terms = mbq.HamiltonianTerms(2, np.array([0]), np.array([1]), np.array([2.0]),
                                 np.array([lam]), np.zeros(2))
    w = np.linalg.eigvalsh(mbq.ManyBodyHamiltonian(terms, mbq.Basis(2)).to_dense())
    assert np.allclose(w, sorted([lam, lam, 2 - lam, -2 - lam]))
    gs, e = mbq.ground_state(terms, (0, 1))
    assert e == pytest.approx(-2 - lam)
    assert np.allclose(np.abs(gs.vector), [2**-0.5, 2**-0.5])


@pytest.mark.parametrize("n", [3, 5])
def test_full_space_matches_pauli_reference(rng, n):
    terms = random_terms(rng, n)
    h = mbq.ManyBodyHamiltonian(terms, mbq.Basis(n))
    assert np.allclose(h.to_dense(), pauli_hamiltonian(terms), atol=1e-12)


@pytest.mark.parametrize("n,m", [(5, 2), (6, 3), (7, 0), (7, 7)])
def test_sector_blocks_match_reference(rng, n, m):
    terms = random_terms(rng, n)
    ref = pauli_hamiltonian(terms)
    basis = mbq.Basis(n, m)
    idx = basis.states.astype(np.int64)
    block = mbq.ManyBodyHamiltonian(terms, basis).to_dense()
    assert np.allclose(block, ref[np.ix_(idx, idx)], atol=1e-12)


@pytest.mark.skipif(kernels.apply_hamiltonian_ext is None, reason="compiled kernel not built")
@pytest.mark.parametrize("n,m", [(12, 6), (13, None), (16, 5)])
def test_compiled_kernel_matches_fallback(rng, n, m):
    terms = random_terms(rng, n)
    basis = mbq.Basis(n, m)
    v = random_state(rng, basis.dim)
    a = mbq.ManyBodyHamiltonian(terms, basis, kernels.apply_hamiltonian_ext).matvec(v)
    b = mbq.ManyBodyHamiltonian(terms, basis, kernels.apply_hamiltonian_py).matvec(v)
    assert np.allclose(a, b, atol=1e-12)


def test_basis_indexing():
    basis = mbq.Basis(6, 3)
    assert basis.dim == 20
    assert np.all(mbq._popcount(basis.states) == 3)
    assert np.all(np.diff(basis.states.astype(np.int64)) > 0)
    assert np.array_equal(basis.index(basis.states[[4, 0, 7]]), [4, 0, 7])
    assert mbq.Basis(6, 3) == basis and mbq.Basis(6) != basis
    assert mbq.Basis(6).dim == 64


def test_size_cap():
    with pytest.raises(mbq.SizeCapError):
        mbq.hamiltonian_terms(ChainSpec(n_bus=30), cap_sites=24)
    with pytest.raises(mbq.SizeCapError):
        mbq.build_hamiltonian(ChainSpec(n_bus=12)).to_dense()


def test_odd_bus_is_degenerate():
    with pytest.raises(mbq.DegenerateGroundState):
        mbq.bus_ground_state(ChainSpec(n_bus=5))


def test_bus_ground_state_and_parity():
    gs, e = mbq.bus_ground_state(ChainSpec(n_bus=8))
    assert e == pytest.approx(-4 * sum(np.cos(np.pi * k / 9) for k in range(1, 5)))
    assert gs.sites == tuple(range(1, 9))
    assert gs.basis.n_particles == 4
    assert mbq.parity(gs) == pytest.approx(1.0)
    assert mbq.parity_exponent(gs) == 0


def test_large_ground_state_uses_lanczos():
    # 12 sites, 6 particles -> 924 states (sparse path)
    gs, e = mbq.bus_ground_state(ChainSpec(n_bus=12))
    assert gs.basis.dim == 924
    assert e == pytest.approx(-4 * sum(np.cos(np.pi * k / 13) for k in range(1, 7)), abs=1e-9)


def test_product_state_places_bits():
    gs, _ = mbq.bus_ground_state(ChainSpec(n_bus=4))
    st_ = mbq.product_state(6, [gs], {0: 1, 5: 0})
    assert st_.norm == pytest.approx(1.0)
    assert st_.basis.n_particles == 3
    assert np.all(st_.basis.states[np.abs(st_.vector) > 0] & np.uint64(1 << 5))


@pytest.mark.parametrize("tau", [0.05, 1.3, 7.0])
def test_expm_krylov_matches_scipy(rng, tau):
    terms = random_terms(rng, 10)
    h = mbq.ManyBodyHamiltonian(terms, mbq.Basis(10, 5))
    v = random_state(rng, h.dim)
    ref = expm_multiply(-1j * tau * h.to_dense(), v)
    out = mbq.expm_krylov(h, v, tau, m=20, tol=1e-12)
    assert np.max(np.abs(out - ref)) < 1e-9


def test_krylov_exact_for_tiny_space(rng):
    terms = random_terms(rng, 3)
    h = mbq.ManyBodyHamiltonian(terms, mbq.Basis(3, 1))
    v = random_state(rng, 3)
    assert np.allclose(mbq.expm_krylov(h, v, 2.0, m=10), expm(-2j * h.to_dense()) @ v)


def test_evolve_mixed_sectors(rng):
    spec = ChainSpec(n_bus=4, j0=0.6, lam=0.4)
    state = mbq.DenseState(mbq.Basis(6), random_state(rng, 64))
    out = mbq.evolve(state, spec, None, 0.0, 2.5)
    ref = expm(-2.5j * mbq.build_hamiltonian(spec).to_dense()) @ state.vector
    assert np.allclose(out.to_full().vector, ref, atol=1e-9)


def test_evolve_ramp_matches_brute_force(rng):
    spec = ChainSpec(n_bus=3, j0=0.8, lam=0.2)
    sched = ControlSchedule(PiecewiseLinear.ramp(0.0, 0.8, 0.0, 1.0))
    state = mbq.DenseState(mbq.Basis(5, 2), random_state(rng, 10))
    out = mbq.evolve(state, spec, sched, 0.0, 1.5, ramp_tol=1e-10)
    vec = state.vector
    n = 4000
    for k in range(n):
        h = mbq.build_hamiltonian(spec, sched, (k + 0.5) / n, mbq.Basis(5, 2)).to_dense()
        vec = expm(-1j / n * h) @ vec
    vec = expm(-0.5j * mbq.build_hamiltonian(spec, sched, 1.2, mbq.Basis(5, 2)).to_dense()) @ vec
    assert np.max(np.abs(out.vector - vec)) < 1e-6


def test_reduced_state_of_product(rng):
    gs, _ = mbq.bus_ground_state(ChainSpec(n_bus=4))
    spec = ChainSpec(n_bus=4, j0=0.5)
    c = random_state(rng, 4)
    parts = [mbq.product_state(6, [gs], {0: a, 5: b}) for a in (0, 1) for b in (0, 1)]
    vec = sum(ck * p.to_full().vector for ck, p in zip(c, parts))
    rho = mbq.reduced_two_qubit(mbq.DenseState(mbq.Basis(6), vec), spec)
    assert np.allclose(rho, np.outer(c, c.conj()), atol=1e-12)
    x = mbq.cross_tensor(parts, 0, 5)
    assert np.allclose(np.einsum("kl,klij->ij", np.outer(c, c.conj()), x), rho)


def test_bus_projection(rng):
    gs, _ = mbq.bus_ground_state(ChainSpec(n_bus=4))
    st_ = mbq.product_state(6, [gs], {0: 1, 5: 1})
    assert mbq.bus_overlap_fidelity(st_, gs) == pytest.approx(1.0)
    assert mbq.cross_overlap(st_, st_, gs) == pytest.approx(1.0)


def test_single_excitation_amplitude_three_sites():
    c = 0.7
    amp = mbq.single_excitation_amplitude(ChainSpec(n_bus=1, j=c, j0=c), 1.3)
    assert abs(amp) == pytest.approx(abs(np.cos(2 * np.sqrt(2) * c * 1.3) - 1) / 2, abs=1e-10)


@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_hamiltonian_is_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    terms = random_terms(rng, n)
    basis = mbq.Basis(n, n // 2)
    h = mbq.ManyBodyHamiltonian(terms, basis)
    u, v = random_state(rng, basis.dim), random_state(rng, basis.dim)
    assert np.vdot(u, h.matvec(v)) == pytest.approx(np.conj(np.vdot(v, h.matvec(u))), abs=1e-10)


@given(st.integers(2, 8), st.floats(-0.5, 0.5), st.floats(0.0, 10.0), st.integers(0, 1000))
def test_evolution_conserves_norm_and_energy(n, lam, t, seed):
    rng = np.random.default_rng(seed)
    spec = ChainSpec(n_bus=n, j0=0.6, lam=lam)
    basis = mbq.Basis(n + 2, (n + 2) // 2)
    state = mbq.DenseState(basis, random_state(rng, basis.dim))
    out = mbq.evolve(state, spec, None, 0.0, t)
    h = mbq.build_hamiltonian(spec, basis=basis)
    assert out.norm == pytest.approx(1.0, abs=1e-9)
    assert h.expectation(out.vector) == pytest.approx(h.expectation(state.vector), abs=1e-8)
