import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from helpers import det_to_dense, random_state
from spinbus import ffq, mbq
from spinbus.model import ChainSpec, ControlSchedule, PiecewiseLinear, validate_spec


def test_single_particle_matrix():
    spec = ChainSpec(n_bus=3, j=1.0, j0=0.4)
    h = ffq.build_single_particle(spec)
    assert h.shape == (5, 5)
    assert h[0, 1] == pytest.approx(-0.8) and h[1, 2] == pytest.approx(-2.0)
    assert np.allclose(h, h.T)
    assert np.allclose(np.diag(h), 0)


def test_field_enters_diagonal():
    spec = ChainSpec(n_bus=2, extra_left=2, cut_fields=((1, 3.0),))
    h = ffq.build_single_particle(spec)
    assert h[1, 1] == pytest.approx(6.0)


def test_rejects_anisotropy_and_outer_coupling():
    with pytest.raises(ffq.EngineError):
        ffq.build_single_particle(ChainSpec(n_bus=2, j0=0.5, lam=0.1))
    with pytest.raises(ffq.EngineError):
        ffq.build_single_particle(ChainSpec(n_bus=2, j0=0.5, extra_left=1))


@pytest.mark.parametrize("t", [0.0, 0.3, 1.1, 2.7])
def test_three_site_closed_form(t):
    # uniform three-site chain: <3|exp(-iht)|1> = (cos(2 sqrt2 c t) - 1)/2
    c = 0.7
    spec = ChainSpec(n_bus=1, j=c, j0=c)
    amp = ffq.transfer_amplitude(spec, t=t)
    assert amp == pytest.approx((np.cos(2 * np.sqrt(2) * c * t) - 1) / 2, abs=1e-13)


def test_transfer_amplitude_vectorised():
    spec = ChainSpec(n_bus=6, j0=0.7)
    ts = np.linspace(0, 5, 7)
    amps = ffq.transfer_amplitude(spec, t=ts)
    assert amps.shape == (7,)
    assert amps[3] == pytest.approx(ffq.transfer_amplitude(spec, t=ts[3]))
    assert np.all(np.abs(amps) <= 1 + 1e-12)


def test_static_propagator_matches_expm():
    spec = ChainSpec(n_bus=5, j0=0.6)
    u = ffq.propagator(spec, None, 0.0, 1.7)
    assert np.allclose(u, expm(-1j * 1.7 * ffq.build_single_particle(spec)), atol=1e-12)


def test_ramp_propagator_converges_and_is_unitary():
    spec = ChainSpec(n_bus=4, j0=0.6)
    sched = ControlSchedule(PiecewiseLinear.ramp(0.0, 0.6, 0.0, 1.5))
    u = ffq.propagator(spec, sched, 0.0, 2.0, tol=1e-11)
    assert np.allclose(u.conj().T @ u, np.eye(6), atol=1e-10)
    # brute force: many tiny midpoint steps
    ref = np.eye(6, dtype=complex)
    n = 6000
    dt = 1.5 / n
    for k in range(n):
        h = ffq.build_single_particle(spec, sched, (k + 0.5) * dt)
        ref = expm(-1j * dt * h) @ ref
    ref = expm(-1j * 0.5 * ffq.build_single_particle(spec, sched, 1.6)) @ ref
    assert np.max(np.abs(u - ref)) < 1e-6


def test_cf4_is_fourth_order():
    spec = ChainSpec(n_bus=3, j0=0.5)
    sched = ControlSchedule(PiecewiseLinear.ramp(0.0, 1.0, 0.0, 1.0))
    ref = ffq._cf4(spec, sched, 0.0, 1.0, 512)
    e1 = np.max(np.abs(ffq._cf4(spec, sched, 0.0, 1.0, 8) - ref))
    e2 = np.max(np.abs(ffq._cf4(spec, sched, 0.0, 1.0, 16) - ref))
    assert 12 < e1 / e2 < 20


def test_unconverged_ramp_raises():
    spec = ChainSpec(n_bus=3, j0=0.5)
    sched = ControlSchedule(PiecewiseLinear.ramp(0.0, 1.0, 0.0, 5.0))
    with pytest.raises(ffq.ConvergenceError):
        ffq.propagator(spec, sched, 0.0, 5.0, dt=1.0, tol=1e-15, max_halvings=1)


def test_zero_mode_requires_choice():
    spec = ChainSpec(n_bus=3, j0=0.5)
    with pytest.raises(ffq.ZeroModeError):
        ffq.bus_ground_state(spec)
    gs = ffq.bus_ground_state(spec, occupy_zero_mode=False)
    assert gs.n_particles == 1 and gs.parity_p == 2


def test_bus_ground_state_half_filling():
    gs = ffq.bus_ground_state(ChainSpec(n_bus=8))
    assert gs.n_particles == 4 and gs.parity_p == 4
    assert gs.energy == pytest.approx(-4 * sum(np.cos(np.pi * k / 9) for k in range(1, 5)))
    assert np.allclose(gs.orbitals[[0, 9]], 0)


def test_slater_amplitudes_match_dense_ground_state():
    spec = ChainSpec(n_bus=6)
    gs = ffq.bus_ground_state(spec)
    layout = validate_spec(spec)
    dense = det_to_dense(gs.orbitals, layout, layout.bus)
    ref, _ = mbq.bus_ground_state(spec)
    assert dense.norm == pytest.approx(1.0)
    assert abs(dense.overlap(ref)) == pytest.approx(1.0, abs=1e-10)


def test_overlap_matches_dense_vectors(rng):
    spec = ChainSpec(n_bus=4, j0=0.8)
    layout = validate_spec(spec)
    a = np.linalg.qr(rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3)))[0]
    b = np.linalg.qr(rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3)))[0]
    sa, sb = ffq.SlaterDeterminant(a), ffq.SlaterDeterminant(b)
    assert ffq.overlap(sa, sb) == pytest.approx(det_to_dense(a, layout).overlap(det_to_dense(b, layout)))
    assert ffq.overlap(sa, ffq.SlaterDeterminant(b[:, :2])) == 0


def test_product_determinants_are_spin_products():
    spec = ChainSpec(n_bus=4, j0=0.8)
    layout = validate_spec(spec)
    core = ffq.bus_ground_state(spec)
    core_dense = det_to_dense(core.orbitals, layout, layout.bus)
    signs = []
    for k, det in enumerate(ffq.basis_determinants(core, layout)):
        a, b = divmod(k, 2)
        img = det_to_dense(det.orbitals, layout)
        spin = mbq.product_state(6, [core_dense], {0: a, 5: b})
        ov = img.overlap(spin)
        assert abs(ov) == pytest.approx(1.0, abs=1e-12)
        signs.append(ov)
    assert np.allclose(signs, signs[0])


def test_init_state_validation():
    spec = ChainSpec(n_bus=2, j0=0.5)
    layout = validate_spec(spec)
    core = ffq.bus_ground_state(spec)
    with pytest.raises(ValueError):
        ffq.init_state([1, 1, 0, 0], core, layout)
    st_ = ffq.init_state([0, 1, 0, 0], core, layout)
    assert st_.labels == ["01"] and st_.norm2() == pytest.approx(1.0)


def test_rdm_and_bus_fidelity_at_t0(rng):
    spec = ChainSpec(n_bus=4, j0=0.7)
    layout = validate_spec(spec)
    core = ffq.bus_ground_state(spec)
    c = random_state(rng, 4)
    state = ffq.init_state(c, core, layout)
    assert np.allclose(ffq.two_qubit_rdm(state), np.outer(c, c.conj()), atol=1e-12)
    assert ffq.bus_fidelity(state, core) == pytest.approx(1.0)


def test_normal_order_rejects_bad_words():
    with pytest.raises(ffq.MalformedWord):
        ffq.normal_order([("cr", 1), ("an", 1)], 3)
    with pytest.raises(ffq.MalformedWord):
        ffq.normal_order([("bogus", 0)], 3)


def test_projector_needs_contiguous_block():
    spec = ChainSpec(n_bus=4, j0=0.7)
    layout = validate_spec(spec)
    core = ffq.bus_ground_state(spec)
    bad = ffq.GroundOrbitals(core.orbitals, (1, 3), core.energy, 0)
    with pytest.raises(ffq.EngineError):
        ffq.projector_matrix(ffq.basis_determinants(core, layout), bad, layout)


@given(st.integers(1, 8), st.floats(0.05, 2.0), st.floats(0.0, 30.0))
def test_propagator_unitary(n, j0, t):
    u = ffq.propagator(ChainSpec(n_bus=n, j0=j0), None, 0.0, t)
    assert np.allclose(u.conj().T @ u, np.eye(n + 2), atol=1e-10)


@given(st.integers(2, 12).filter(lambda n: n % 2 == 0), st.floats(0.1, 1.5), st.floats(0.0, 20.0))
def test_cross_tensor_is_trace_preserving(n, j0, t):
    spec = ChainSpec(n_bus=n, j0=j0)
    layout = validate_spec(spec)
    core = ffq.bus_ground_state(spec)
    u = ffq.propagator(spec, None, 0.0, t)
    dets = [ffq.SlaterDeterminant(u @ d.orbitals) for d in ffq.basis_determinants(core, layout)]
    x = ffq.cross_tensor(dets, layout)
    traces = np.einsum("klii->kl", x)
    assert np.allclose(traces, np.eye(4), atol=1e-9)
