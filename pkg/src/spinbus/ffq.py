"""Free-fermion engine for the XX (lambda = 0) chain.

States are superpositions of Slater determinants.  An orbital matrix has
one row per *site index* and one column per particle; the column order is
the creation order, ``phi_1^+ phi_2^+ ... phi_M^+ |vac>``.  Jordan-Wigner
strings follow ``Layout.jw_order`` (A first, B last).

Matrix elements of operator words are evaluated by normal ordering the
word into ``annihilators . Gaussian . creators`` and taking a single
determinant of the augmented overlap matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    HOPPING_SIGN,
    ChainSpec,
    ControlSchedule,
    Layout,
    validate_spec,
)

# process-wide default for ramp refinement (max-norm change between halvings)
RAMP_TOL = {"ramp": 1e-9}

CF4_A1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
CF4_A2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0
CF4_C1 = 0.5 - math.sqrt(3.0) / 6.0
CF4_C2 = 0.5 + math.sqrt(3.0) / 6.0


class EngineError(RuntimeError):
    """The engine cannot represent the requested problem."""


class ConvergenceError(EngineError):
    """Step refinement failed to reach the requested tolerance."""


class ZeroModeError(EngineError):
    """Ground state is ambiguous because of an exact zero-energy mode."""


class MalformedWord(ValueError):
    """An operator word contains a pair that cannot be absorbed."""


# -- single-particle Hamiltonian ------------------------------------------


def build_single_particle(
    spec: ChainSpec, schedule: ControlSchedule | None = None, t: float = 0.0
) -> np.ndarray:
    """Fermionised Hamiltonian at time ``t`` (rows/cols are site indices)."""
    layout = validate_spec(spec)
    if spec.lam != 0:
        raise EngineError("ffq requires lambda = 0")
    schedule = schedule or ControlSchedule.from_spec(spec)
    j0 = schedule.j0(t)
    if spec.has_outer and j0 != 0:
        raise EngineError(
            "ffq cannot couple the qubits while outer segments are present "
            "(the qubit bonds are non-local in Jordan-Wigner order)"
        )
    h = np.zeros((layout.n_sites, layout.n_sites))
    for i, k, kind in layout.bonds:
        c = j0 if kind == "qubit" else spec.j
        h[i, k] = h[k, i] = HOPPING_SIGN * 2.0 * c
    h[np.diag_indices_from(h)] = 2.0 * schedule.fields(t, layout.n_sites)
    return h


def eigensystem(h: np.ndarray):
    """Return ``(omegas, modes)``; column ``k`` of ``modes`` is mode ``k``."""
    return np.linalg.eigh(h)


def _expm_herm(h: np.ndarray, tau: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


def _polar(u: np.ndarray) -> np.ndarray:
    # nearest unitary; removes accumulated drift
    w, s, vh = np.linalg.svd(u)
    return w @ vh


def _cf4(spec, schedule, t0, t1, nsteps, reortho_every=100):
    dt = (t1 - t0) / nsteps
    u = np.eye(spec.n_sites, dtype=complex)
    for step in range(nsteps):
        t = t0 + step * dt
        h1 = build_single_particle(spec, schedule, t + CF4_C1 * dt)
        h2 = build_single_particle(spec, schedule, t + CF4_C2 * dt)
        u = _expm_herm(CF4_A2 * h1 + CF4_A1 * h2, dt) @ u
        u = _expm_herm(CF4_A1 * h1 + CF4_A2 * h2, dt) @ u
        if (step + 1) % reortho_every == 0:
            u = _polar(u)
    return u


def propagator(
    spec: ChainSpec,
    schedule: ControlSchedule | None,
    t0: float,
    t1: float,
    dt: float = 0.01,
    tol: float | None = None,
    max_halvings: int = 8,
) -> np.ndarray:
    """Single-particle propagator ``U(t1, t0)``.

    Static stretches are exponentiated exactly.  Ramps use a fourth-order
    commutator-free Magnus scheme; the step is halved until two successive
    results differ by less than ``tol`` (max norm).
    """
    if t1 < t0:
        raise ValueError("t1 >= t0 required")
    tol = RAMP_TOL["ramp"] if tol is None else tol
    schedule = schedule or ControlSchedule.from_spec(spec)
    u = np.eye(spec.n_sites, dtype=complex)
    for a, b in schedule.segments(t0, t1):
        if schedule.is_static_on(a, b):
            u = _expm_herm(build_single_particle(spec, schedule, a), b - a) @ u
            continue
        n = max(1, math.ceil((b - a) / dt))
        prev = _cf4(spec, schedule, a, b, n)
        for _ in range(max_halvings):
            n *= 2
            cur = _cf4(spec, schedule, a, b, n)
            if np.max(np.abs(cur - prev)) < tol:
                break
            prev = cur
        else:
            raise ConvergenceError(
                f"ramp propagation on [{a}, {b}] not converged to {tol}"
            )
        u = cur @ u
    return u


def transfer_amplitude(spec: ChainSpec, j0: float | None = None, t=0.0):
    """End-to-end amplitude ``<B| exp(-i h t) |A>`` for a static coupling.

    ``t`` may be an array; the result then has the same shape.
    """
    if j0 is not None:
        spec = spec.replace(j0=j0)
    if spec.has_outer:
        raise EngineError("transfer amplitude needs the plain qubit-bus-qubit chain")
    w, v = eigensystem(build_single_particle(spec))
    t = np.asarray(t, dtype=float)
    weights = v[spec.site_b] * v[spec.site_a]
    amp = np.exp(-1j * np.multiply.outer(t, w)) @ weights
    return amp if amp.ndim else complex(amp)


# -- states ----------------------------------------------------------------


@dataclass(frozen=True)
class SlaterDeterminant:
    orbitals: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.orbitals.shape[1]

    def norm2(self) -> float:
        return float(np.real(np.linalg.det(self.orbitals.conj().T @ self.orbitals)))


@dataclass(frozen=True)
class GroundOrbitals:
    """Filled Fermi sea of a block of sites, embedded in the full chain."""

    orbitals: np.ndarray
    sites: tuple[int, ...]
    energy: float
    parity_p: int

    @property
    def n_particles(self) -> int:
        return self.orbitals.shape[1]


@dataclass
class FermionicSuperposition:
    """``sum_k c_k |SD_k>`` plus the parity exponent of the bus factor."""

    terms: list[tuple[complex, SlaterDeterminant]]
    parity_p: int
    layout: Layout
    labels: list[str] = field(default_factory=list)

    def norm2(self) -> float:
        total = 0.0
        for (ck, dk) in self.terms:
            for (cl, dl) in self.terms:
                if dk.n_particles == dl.n_particles:
                    total += np.real(np.conj(cl) * ck * overlap(dl, dk))
        return float(total)


def ground_orbitals(
    spec: ChainSpec,
    sites,
    schedule: ControlSchedule | None = None,
    t: float = 0.0,
    occupy_zero_mode: bool | None = None,
    zero_tol: float = 1e-10,
) -> GroundOrbitals:
    """Fill every negative-energy mode of the Hamiltonian block on ``sites``.

    ``parity_p`` is the number of unoccupied (up-spin) sites in the block,
    i.e. ``prod(-sigma^z) = (-1)^p``.
    """
    sites = tuple(sites)
    spec0 = spec.replace(j0=0.0)
    sched = schedule
    if sched is not None:
        sched = ControlSchedule(
            type(sched.j0_profile).constant(0.0), sched.field_profiles, sched.horizon
        )
    h = build_single_particle(spec0, sched, t)[np.ix_(sites, sites)]
    w, v = eigensystem(h)
    zero = np.abs(w) < zero_tol
    if np.any(zero) and occupy_zero_mode is None:
        raise ZeroModeError(
            f"{int(zero.sum())} zero mode(s) in the block spectrum; "
            "pass occupy_zero_mode=True/False"
        )
    occ = (w < -zero_tol) | (zero & bool(occupy_zero_mode))
    orb = np.zeros((spec.n_sites, int(occ.sum())), dtype=complex)
    orb[list(sites), :] = v[:, occ]
    m = orb.shape[1]
    return GroundOrbitals(orb, sites, float(w[occ].sum()), len(sites) - m)


def bus_ground_state(spec: ChainSpec, occupy_zero_mode: bool | None = None):
    """Ground state of the isolated bus (qubits and outer segments cut off)."""
    layout = validate_spec(spec)
    return ground_orbitals(spec, layout.bus, occupy_zero_mode=occupy_zero_mode)


def _delta(n_sites, site, sign=1.0):
    col = np.zeros((n_sites, 1), dtype=complex)
    col[site, 0] = sign
    return col


def product_determinant(a: int, b: int, core: GroundOrbitals, layout: Layout):
    """Determinant for the spin product state ``|a>_A |core> |b>_B``.

    Delta columns carry ``(-1)^position`` so that the determinant equals the
    spin state up to a sign shared by all four ``ab`` (the core creators
    always see an empty A).
    """
    pos = layout.positions
    cols = []
    if a:
        cols.append(_delta(layout.n_sites, layout.a, (-1.0) ** pos[layout.a]))
    cols.append(core.orbitals)
    if b:
        cols.append(_delta(layout.n_sites, layout.b, (-1.0) ** pos[layout.b]))
    return SlaterDeterminant(np.hstack(cols))


def basis_determinants(core: GroundOrbitals, layout: Layout):
    return [product_determinant(a, b, core, layout) for a in (0, 1) for b in (0, 1)]


def init_state(amplitudes, core: GroundOrbitals, layout: Layout, atol=1e-10):
    """Superposition ``sum_ab c_ab |a> |core> |b>``; zero amplitudes dropped."""
    c = np.asarray(amplitudes, dtype=complex)
    if c.shape != (4,):
        raise ValueError("four amplitudes (00, 01, 10, 11) required")
    if abs(np.vdot(c, c).real - 1.0) > atol:
        raise ValueError("two-qubit amplitudes must be normalised")
    dets = basis_determinants(core, layout)
    labels = ["00", "01", "10", "11"]
    terms, used = [], []
    for k in range(4):
        if c[k] != 0:
            terms.append((complex(c[k]), dets[k]))
            used.append(labels[k])
    return FermionicSuperposition(terms, core.parity_p, layout, used)


def propagate_orbitals(state, spec, schedule, t0, t1, **kw):
    u = propagator(spec, schedule, t0, t1, **kw)
    return apply_propagator(state, u)


def apply_propagator(state: FermionicSuperposition, u: np.ndarray):
    terms = [(c, SlaterDeterminant(u @ d.orbitals)) for c, d in state.terms]
    return FermionicSuperposition(terms, state.parity_p, state.layout, list(state.labels))


# -- matrix elements -------------------------------------------------------


def overlap(bra: SlaterDeterminant, ket: SlaterDeterminant) -> complex:
    if bra.n_particles != ket.n_particles:
        return 0.0j
    return complex(np.linalg.det(bra.orbitals.conj().T @ ket.orbitals))


def string_word(site: int, layout: Layout):
    """Tokens for ``prod (-sigma^z)`` over sites preceding ``site`` in JW order."""
    pos = layout.positions
    g = np.ones(layout.n_sites)
    g[pos < pos[site]] = -1.0
    return [("scalar", (-1.0) ** pos[site]), ("gauss", g)]


def normal_order(word, n_sites: int):
    """Rewrite a word as ``coeff * an... G cr...``.

    Tokens are ``("cr", site)``, ``("an", site)``, ``("gauss", diag)`` and
    ``("scalar", value)``.  A Gaussian ``exp(sum x_i n_i)`` is given by its
    diagonal ``g = exp(x)``; zeros are allowed (empty-site projectors).
    """
    coeff = 1.0 + 0j
    ans: list[int] = []
    crs: list[int] = []
    g = np.ones(n_sites, dtype=complex)
    for kind, arg in word:
        if kind == "scalar":
            coeff *= arg
        elif kind == "cr":
            crs.append(arg)
        elif kind == "gauss":
            gn = np.array(arg, dtype=complex)
            # cr_y G = G|_{g_y=1} cr_y
            gn[crs] = 1.0
            g = g * gn
        elif kind == "an":
            if arg in crs:
                raise MalformedWord(f"annihilator at site {arg} meets a creator at the same site")
            coeff *= (-1.0) ** len(crs)
            # G an_x = an_x G|_{g_x=1}
            g[arg] = 1.0
            ans.append(arg)
        else:
            raise MalformedWord(f"unknown token {kind!r}")
    return coeff, ans, g, crs


def sd_matrix_element(bra: SlaterDeterminant, word, ket: SlaterDeterminant) -> complex:
    """``<bra| word |ket>`` for a word of creators, annihilators and Gaussians."""
    n = bra.orbitals.shape[0]
    coeff, ans, g, crs = normal_order(word, n)
    if bra.n_particles + len(ans) != ket.n_particles + len(crs):
        return 0.0j
    eye = np.eye(n)
    left = np.hstack([eye[:, ans[::-1]], bra.orbitals]) if ans else bra.orbitals
    right = np.hstack([eye[:, crs], ket.orbitals]) if crs else ket.orbitals
    if left.shape[1] == 0:
        return coeff
    return complex(coeff * np.linalg.det(left.conj().T @ (g[:, None] * right)))


def _qubit_op(site: int, s_out: int, s_in: int, layout: Layout):
    """``|s_out><s_in|`` on one qubit as a list of (weight, word)."""
    n = layout.n_sites
    empty = np.ones(n)
    empty[site] = 0.0
    if s_out == 0 and s_in == 0:
        return [(1.0, [("gauss", empty)])]
    if s_out == 1 and s_in == 1:
        return [(1.0, []), (-1.0, [("gauss", empty)])]
    if s_out == 1 and s_in == 0:  # sigma^- = S c^+
        return [(1.0, string_word(site, layout) + [("cr", site)])]
    return [(1.0, [("an", site)] + string_word(site, layout))]  # sigma^+ = c S


def cross_rdm(ket: SlaterDeterminant, bra: SlaterDeterminant, layout: Layout):
    """``Tr_rest |ket><bra|`` on qubits (A, B), basis order 00, 01, 10, 11."""
    out = np.zeros((4, 4), dtype=complex)
    dn = bra.n_particles - ket.n_particles
    for i in range(4):
        a, b = divmod(i, 2)
        for j in range(4):
            a2, b2 = divmod(j, 2)
            # <bra| (|j><i|) |ket> changes particle number by |j| - |i|
            if (a2 + b2) - (a + b) != dn:
                continue
            val = 0.0j
            for wa, word_a in _qubit_op(layout.a, a2, a, layout):
                for wb, word_b in _qubit_op(layout.b, b2, b, layout):
                    val += wa * wb * sd_matrix_element(bra, word_a + word_b, ket)
            out[i, j] = val
    return out


def cross_tensor(dets, layout: Layout) -> np.ndarray:
    """``X[k, l] = Tr_rest |D_k><D_l|`` for a list of determinants."""
    k = len(dets)
    x = np.zeros((k, k, 4, 4), dtype=complex)
    for p in range(k):
        for q in range(k):
            x[p, q] = cross_rdm(dets[p], dets[q], layout)
    return x


def two_qubit_rdm(state: FermionicSuperposition) -> np.ndarray:
    rho = np.zeros((4, 4), dtype=complex)
    for ck, dk in state.terms:
        for cl, dl in state.terms:
            rho += ck * np.conj(cl) * cross_rdm(dk, dl, state.layout)
    return rho


def _check_contiguous(sites, layout: Layout):
    pos = np.sort(layout.positions[list(sites)])
    if pos.size and np.any(np.diff(pos) != 1):
        raise EngineError("reference block must be contiguous in Jordan-Wigner order")


def projector_element(
    bra: SlaterDeterminant, ket: SlaterDeterminant, ref: GroundOrbitals
) -> complex:
    """``<bra| (|ref><ref| (x) 1) |ket>`` with ``ref`` living on ``ref.sites``.

    Inside the block the projector equals ``prod_P n prod_Q (1 - n)``; its
    particle-number constraint is enforced with a discrete Fourier sum of
    Gaussian operators, each a single determinant.
    """
    if bra.n_particles != ket.n_particles:
        return 0.0j
    m = ref.n_particles
    sites = list(ref.sites)
    phi = ref.orbitals[sites, :]
    proj = phi @ phi.conj().T
    base = bra.orbitals.conj().T @ ket.orbitals
    bra_r = bra.orbitals[sites, :].conj().T
    ket_r = ket.orbitals[sites, :]
    outside = base - bra_r @ ket_r
    inside = bra_r @ proj @ ket_r
    total = 0.0j
    for jj in range(m + 1):
        theta = 2 * np.pi * jj / (m + 1)
        total += np.exp(-1j * theta * m) * np.linalg.det(outside + np.exp(1j * theta) * inside)
    return complex(total / (m + 1))


def projector_matrix(dets, ref: GroundOrbitals, layout: Layout) -> np.ndarray:
    """``B[k, l] = <D_l| P_ref |D_k>``."""
    _check_contiguous(ref.sites, layout)
    k = len(dets)
    out = np.zeros((k, k), dtype=complex)
    for p in range(k):
        for q in range(k):
            out[p, q] = projector_element(dets[q], dets[p], ref)
    return out


def bus_fidelity(state: FermionicSuperposition, ref: GroundOrbitals) -> float:
    """Overlap of the reduced state on ``ref.sites`` with the reference state."""
    _check_contiguous(ref.sites, state.layout)
    total = 0.0j
    for ck, dk in state.terms:
        for cl, dl in state.terms:
            total += ck * np.conj(cl) * projector_element(dl, dk, ref)
    return float(np.real(total))


def slater_amplitudes(orbitals: np.ndarray, layout: Layout, configs: np.ndarray):
    """Spin-basis amplitudes of a determinant.

    ``configs`` is a boolean array (n_configs, n_sites) of occupied (down)
    sites.  All configurations must hold ``orbitals.shape[1]`` particles.
    """
    configs = np.asarray(configs, dtype=bool)
    m = orbitals.shape[1]
    order = np.array(layout.jw_order)
    pos = layout.positions
    occ_in_order = configs[:, order]
    out = np.zeros(configs.shape[0], dtype=complex)
    if m == 0:
        out[:] = 1.0
        return out
    rows = np.nonzero(occ_in_order)[1].reshape(-1, m)
    sites = order[rows]
    mats = orbitals[sites, :]
    sign = (-1.0) ** pos[sites].sum(axis=1)
    return sign * np.linalg.det(mats)
