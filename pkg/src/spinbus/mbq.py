"""Dense many-body engine for the XXZ chain (any lambda).

Basis states are integers whose bit ``n_sites-1-s`` is the spin of site
``s`` (site 0 is the most significant bit); bit 1 means ``|1> = |down>``.
A :class:`Basis` is either the full register or a fixed-particle-number
sector.  Evolution splits states into sectors because the Hamiltonian
conserves total ``sigma^z``; results do not depend on that split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla

from . import kernels
from .model import ChainSpec, ControlSchedule, validate_spec

DEFAULT_CAP_SITES = 24
# process-wide defaults used when evolve() is called without explicit tolerances
TOLERANCES = {"krylov": 1e-10, "ramp": 1e-8}
CF4_A1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
CF4_A2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0
CF4_C1 = 0.5 - math.sqrt(3.0) / 6.0
CF4_C2 = 0.5 + math.sqrt(3.0) / 6.0


class SizeCapError(ValueError):
    pass


class KrylovError(RuntimeError):
    pass


class DegenerateGroundState(RuntimeError):
    pass


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return c


class Basis:
    """Full register (``n_particles=None``) or a fixed-particle sector."""

    def __init__(self, n_sites: int, n_particles: int | None = None):
        self.n_sites = int(n_sites)
        self.n_particles = n_particles
        if n_particles is not None and not 0 <= n_particles <= n_sites:
            raise ValueError("particle number out of range")

    @property
    def is_sector(self) -> bool:
        return self.n_particles is not None

    @cached_property
    def states(self) -> np.ndarray:
        if not self.is_sector:
            return np.arange(1 << self.n_sites, dtype=np.uint64)
        return _sector_states(self.n_sites, self.n_particles)

    @property
    def kernel_states(self) -> np.ndarray:
        if self.is_sector:
            return self.states
        return np.empty(0, dtype=np.uint64)

    @property
    def dim(self) -> int:
        if not self.is_sector:
            return 1 << self.n_sites
        return math.comb(self.n_sites, self.n_particles)

    @cached_property
    def binom(self) -> np.ndarray:
        n = self.n_sites
        table = np.zeros((n + 1, n + 2), dtype=np.int64)
        for p in range(n + 1):
            for k in range(min(p, n + 1) + 1):
                table[p, k] = math.comb(p, k)
        return table

    def index(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.uint64)
        if not self.is_sector:
            return states.astype(np.int64)
        idx = np.searchsorted(self.states, states)
        idx = np.minimum(idx, self.dim - 1)
        if np.any(self.states[idx] != states):
            raise KeyError("state outside this sector")
        return idx

    def __eq__(self, other):
        return (
            isinstance(other, Basis)
            and self.n_sites == other.n_sites
            and self.n_particles == other.n_particles
        )

    def __hash__(self):
        return hash((self.n_sites, self.n_particles))

    def __repr__(self):
        return f"Basis(n_sites={self.n_sites}, n_particles={self.n_particles})"


_SECTOR_CACHE: dict = {}


def _build_sector(n: int, m: int) -> np.ndarray:
    # ascending: top bit clear first, then top bit set
    table = [np.zeros(1, dtype=np.uint64)] + [np.empty(0, dtype=np.uint64)] * m
    for k in range(1, n + 1):
        top = np.uint64(1 << (k - 1))
        new = [np.zeros(1, dtype=np.uint64)]
        for j in range(1, min(k, m) + 1):
            new.append(np.concatenate([table[j], table[j - 1] | top]))
        new += [np.empty(0, dtype=np.uint64)] * (m + 1 - len(new))
        table = new
    return table[m]


def _sector_states(n: int, m: int) -> np.ndarray:
    key = (n, m)
    if key not in _SECTOR_CACHE:
        _SECTOR_CACHE[key] = _build_sector(n, m)
        if len(_SECTOR_CACHE) > 32:
            _SECTOR_CACHE.pop(next(iter(_SECTOR_CACHE)))
    return _SECTOR_CACHE[key]


@dataclass
class DenseState:
    """Amplitudes over ``basis`` for the spins on ``sites`` (in that order)."""

    basis: Basis
    vector: np.ndarray
    sites: tuple[int, ...] | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=complex)
        if self.sites is None:
            self.sites = tuple(range(self.basis.n_sites))
        if self.vector.shape != (self.basis.dim,):
            raise ValueError("vector length does not match the basis")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def bits(self) -> np.ndarray:
        """Basis bit strings (uint64) matching ``vector``."""
        return self.basis.states

    def to_full(self) -> "DenseState":
        if not self.basis.is_sector:
            return self
        full = Basis(self.basis.n_sites)
        vec = np.zeros(full.dim, dtype=complex)
        vec[self.basis.states.astype(np.int64)] = self.vector
        return DenseState(full, vec, self.sites)

    def sector_parts(self, atol=0.0):
        """Split into fixed-particle components, skipping zero components."""
        if self.basis.is_sector:
            return [self]
        counts = _popcount(self.basis.states)
        parts = []
        for m in range(self.basis.n_sites + 1):
            sel = counts == m
            vec = self.vector[sel]
            if np.any(np.abs(vec) > atol):
                parts.append(DenseState(Basis(self.basis.n_sites, m), vec, self.sites))
        return parts

    def overlap(self, other: "DenseState") -> complex:
        """``<self|other>`` for states on the same sites."""
        a, b = _as_map(self), _as_map(other)
        common, ia, ib = np.intersect1d(a[0], b[0], assume_unique=True, return_indices=True)
        return complex(np.vdot(a[1][ia], b[1][ib]))


def _as_map(state: DenseState):
    return state.basis.states, state.vector


def combine(parts) -> DenseState:
    """Sum of states over the same sites (result on the full register)."""
    parts = list(parts)
    n = parts[0].basis.n_sites
    if len(parts) == 1:
        return parts[0]
    full = Basis(n)
    vec = np.zeros(full.dim, dtype=complex)
    for p in parts:
        vec[p.basis.states.astype(np.int64)] += p.vector
    return DenseState(full, vec, parts[0].sites)


# -- Hamiltonian -----------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianTerms:
    """Site-local coefficients of the XXZ Hamiltonian.

    ``hop`` is the off-diagonal matrix element of each bond (twice its
    coupling), ``zz`` the sigma^z sigma^z coefficient and ``hz`` the
    per-site sigma^z coefficient.
    """

    n_sites: int
    bond_i: np.ndarray
    bond_j: np.ndarray
    hop: np.ndarray
    zz: np.ndarray
    hz: np.ndarray

    def combine(self, other: "HamiltonianTerms", a: float, b: float) -> "HamiltonianTerms":
        return HamiltonianTerms(
            self.n_sites,
            self.bond_i,
            self.bond_j,
            a * self.hop + b * other.hop,
            a * self.zz + b * other.zz,
            a * self.hz + b * other.hz,
        )

    def restrict(self, sites) -> "HamiltonianTerms":
        """Terms acting only inside ``sites``, re-indexed to local positions."""
        sites = list(sites)
        local = {s: k for k, s in enumerate(sites)}
        keep = [b for b in range(len(self.bond_i)) if self.bond_i[b] in local and self.bond_j[b] in local]
        return HamiltonianTerms(
            len(sites),
            np.array([local[self.bond_i[b]] for b in keep], dtype=np.int64),
            np.array([local[self.bond_j[b]] for b in keep], dtype=np.int64),
            self.hop[keep].copy(),
            self.zz[keep].copy(),
            self.hz[sites].copy(),
        )


def hamiltonian_terms(
    spec: ChainSpec,
    schedule: ControlSchedule | None = None,
    t: float = 0.0,
    cap_sites: int = DEFAULT_CAP_SITES,
) -> HamiltonianTerms:
    layout = validate_spec(spec)
    if layout.n_sites > cap_sites:
        raise SizeCapError(f"{layout.n_sites} sites exceed the cap of {cap_sites}")
    schedule = schedule or ControlSchedule.from_spec(spec)
    j0 = schedule.j0(t)
    bi, bj, hop, zz = [], [], [], []
    for i, k, kind in layout.bonds:
        c = j0 if kind == "qubit" else spec.j
        bi.append(i)
        bj.append(k)
        hop.append(2.0 * c)
        zz.append(spec.lam * c)
    return HamiltonianTerms(
        layout.n_sites,
        np.array(bi, dtype=np.int64),
        np.array(bj, dtype=np.int64),
        np.array(hop),
        np.array(zz),
        -schedule.fields(t, layout.n_sites),
    )


class ManyBodyHamiltonian:
    """Matrix-free Hamiltonian on one basis."""

    def __init__(self, terms: HamiltonianTerms, basis: Basis, backend=None):
        if basis.n_sites != terms.n_sites:
            raise ValueError("basis and terms disagree on the number of sites")
        self.terms = terms
        self.basis = basis
        self._apply = backend or kernels.apply_hamiltonian

    @property
    def dim(self) -> int:
        return self.basis.dim

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=complex)
        out = np.empty_like(v)
        t = self.terms
        self._apply(
            self.basis.kernel_states,
            v,
            out,
            t.n_sites,
            self.basis.is_sector,
            self.basis.binom,
            t.bond_i,
            t.bond_j,
            np.ascontiguousarray(t.hop, dtype=float),
            np.ascontiguousarray(t.zz, dtype=float),
            np.ascontiguousarray(t.hz, dtype=float),
        )
        return out

    def as_linear_operator(self):
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=complex)

    def to_dense(self) -> np.ndarray:
        if self.dim > 4096:
            raise SizeCapError("dense matrix requested for a large basis")
        eye = np.eye(self.dim, dtype=complex)
        return np.column_stack([self.matvec(eye[:, k]) for k in range(self.dim)])

    def expectation(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.matvec(v))))


def build_hamiltonian(
    spec: ChainSpec,
    schedule: ControlSchedule | None = None,
    t: float = 0.0,
    basis: Basis | None = None,
    cap_sites: int = DEFAULT_CAP_SITES,
) -> ManyBodyHamiltonian:
    terms = hamiltonian_terms(spec, schedule, t, cap_sites)
    return ManyBodyHamiltonian(terms, basis or Basis(terms.n_sites))


# -- ground states ---------------------------------------------------------


def _lowest(h: ManyBodyHamiltonian, tol: float):
    if h.dim <= 600:
        w, v = np.linalg.eigh(h.to_dense())
        return w[0], v[:, 0], (w[1] - w[0]) if h.dim > 1 else np.inf
    rng = np.random.default_rng(1234)
    v0 = rng.standard_normal(h.dim) + 0j
    w, v = spla.eigsh(h.as_linear_operator(), k=2, which="SA", tol=tol * 1e-2, v0=v0, ncv=min(h.dim, 40))
    order = np.argsort(w)
    return w[order[0]], v[:, order[0]], w[order[1]] - w[order[0]]


def ground_state(
    terms: HamiltonianTerms,
    sites,
    n_particles: int | None = None,
    tol: float = 1e-10,
    degeneracy_tol: float = 1e-8,
):
    """Lowest eigenpair of the Hamiltonian restricted to ``sites``.

    Without ``n_particles`` every sector is searched and a tie between
    sectors raises :class:`DegenerateGroundState`.  Returns
    ``(DenseState, energy)``; the residual is checked against ``tol``.
    """
    sites = tuple(sites)
    local = terms.restrict(sites)
    sectors = [n_particles] if n_particles is not None else range(len(sites) + 1)
    found = []
    for m in sectors:
        h = ManyBodyHamiltonian(local, Basis(len(sites), m))
        e, v, gap = _lowest(h, tol)
        found.append((e, m, v, gap, h))
    found.sort(key=lambda item: item[0])
    e, m, v, gap, h = found[0]
    if len(found) > 1 and found[1][0] - e < degeneracy_tol:
        raise DegenerateGroundState(
            f"sectors {m} and {found[1][1]} tie at energy {e:.12g}"
        )
    if gap < degeneracy_tol:
        raise DegenerateGroundState(f"degenerate ground state in sector {m}")
    v = v / np.linalg.norm(v)
    # fix the global phase: largest amplitude real positive
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    resid = np.linalg.norm(h.matvec(v) - e * v)
    if resid > tol:
        raise KrylovError(f"ground-state residual {resid:.2e} above {tol:.0e}")
    return DenseState(Basis(len(sites), m), v, sites), float(e)


def bus_ground_state(spec: ChainSpec, tol: float = 1e-10):
    layout = validate_spec(spec)
    terms = hamiltonian_terms(spec.replace(j0=0.0), ControlSchedule.from_spec(spec.replace(j0=0.0)), 0.0, cap_sites=10**6)
    return ground_state(terms, layout.bus, tol=tol)


def parity(state: DenseState, sites=None) -> float:
    """Expectation of ``prod (-sigma^z)`` over ``sites`` (default: all)."""
    sites = state.sites if sites is None else tuple(sites)
    where = {s: k for k, s in enumerate(state.sites)}
    n = state.basis.n_sites
    mask = 0
    for s in sites:
        mask |= 1 << (n - 1 - where[s])
    ups = len(sites) - _popcount(state.basis.states & np.uint64(mask))
    return float(np.sum(np.abs(state.vector) ** 2 * (-1.0) ** ups))


def parity_exponent(state: DenseState, sites=None, tol: float = 1e-8) -> int:
    p = parity(state, sites)
    if abs(abs(p) - 1) > tol:
        raise ValueError(f"state has no definite parity (<P> = {p})")
    return 0 if p > 0 else 1


# -- state assembly --------------------------------------------------------


def _global_bits(local_states: np.ndarray, sites, n_sites: int) -> np.ndarray:
    k = len(sites)
    out = np.zeros(local_states.shape, dtype=np.uint64)
    for pos, s in enumerate(sites):
        bit = (local_states >> np.uint64(k - 1 - pos)) & np.uint64(1)
        out |= bit << np.uint64(n_sites - 1 - s)
    return out


def product_state(n_sites: int, parts, bits=None, atol=0.0) -> DenseState:
    """Tensor product of states on disjoint site sets plus fixed spins.

    ``parts`` is a list of :class:`DenseState` (each knows its sites);
    ``bits`` maps further sites to 0/1.  Sites not mentioned are up.
    """
    bits = dict(bits or {})
    glob = np.zeros(1, dtype=np.uint64)
    amp = np.ones(1, dtype=complex)
    for s, bit in bits.items():
        if bit:
            glob |= np.uint64(1 << (n_sites - 1 - s))
    for part in parts:
        keep = np.abs(part.vector) > atol
        g = _global_bits(part.basis.states[keep], part.sites, n_sites)
        glob = (glob[:, None] | g[None, :]).ravel()
        amp = (amp[:, None] * part.vector[keep][None, :]).ravel()
    counts = np.unique(_popcount(glob))
    basis = Basis(n_sites, int(counts[0])) if counts.size == 1 else Basis(n_sites)
    vec = np.zeros(basis.dim, dtype=complex)
    vec[basis.index(glob)] = amp
    return DenseState(basis, vec)


# -- time evolution --------------------------------------------------------


def expm_krylov(h: ManyBodyHamiltonian, v: np.ndarray, tau: float, m: int = 30, tol: float = 1e-10):
    """``exp(-i tau H) v`` by Lanczos with adaptive substeps.

    Each substep length is the largest one whose a-posteriori error
    estimate ``beta_m |[exp(-i T s)]_{m,1}| |v|`` stays below ``tol``.
    """
    w = np.array(v, dtype=complex)
    done = 0.0
    nrm0 = np.linalg.norm(w)
    if nrm0 == 0 or tau == 0:
        return w
    substeps = 0
    while tau - done > 1e-15 * max(1.0, tau):
        beta = np.linalg.norm(w)
        basis = np.empty((m + 1, w.size), dtype=complex)
        basis[0] = w / beta
        alpha = np.zeros(m)
        betas = np.zeros(m)
        k = m
        for jj in range(m):
            u = h.matvec(basis[jj])
            alpha[jj] = np.real(np.vdot(basis[jj], u))
            u = u - alpha[jj] * basis[jj]
            if jj > 0:
                u = u - betas[jj - 1] * basis[jj - 1]
            # full reorthogonalisation
            u = u - basis[: jj + 1].T @ (u.conj() @ basis[: jj + 1].T).conj()
            betas[jj] = np.linalg.norm(u)
            if betas[jj] < 1e-12 * max(1.0, abs(alpha[jj])):
                k = jj + 1
                break
            basis[jj + 1] = u / betas[jj]
        tmat = np.diag(alpha[:k]) + np.diag(betas[: k - 1], 1) + np.diag(betas[: k - 1], -1)
        theta, svec = np.linalg.eigh(tmat)
        exact = k < m

        def coeffs(s):
            return svec @ (np.exp(-1j * theta * s) * svec[0].conj())

        def err(s):
            if exact:
                return 0.0
            return beta * betas[k - 1] * abs(coeffs(s)[k - 1])

        step = tau - done
        while err(step) > tol:
            step *= 0.6
            if step < 1e-12 * max(1.0, tau):
                raise KrylovError("Krylov substep collapsed; increase the dimension")
        w = beta * (basis[:k].T @ coeffs(step))
        done += step
        substeps += 1
        if substeps > 100000:
            raise KrylovError("too many Krylov substeps")
    return w


def _evolve_sector(
    state: DenseState, spec, schedule, t0, t1, cap_sites, krylov_dim, tol, ramp_dt, ramp_tol
) -> DenseState:
    basis = state.basis
    vec = state.vector
    for a, b in schedule.segments(t0, t1):
        if schedule.is_static_on(a, b):
            h = ManyBodyHamiltonian(hamiltonian_terms(spec, schedule, a, cap_sites), basis)
            vec = expm_krylov(h, vec, b - a, krylov_dim, tol)
            continue
        n = max(1, math.ceil((b - a) / ramp_dt))
        prev = _cf4_dense(vec, basis, spec, schedule, a, b, n, cap_sites, krylov_dim, tol)
        for _ in range(8):
            n *= 2
            cur = _cf4_dense(vec, basis, spec, schedule, a, b, n, cap_sites, krylov_dim, tol)
            if np.max(np.abs(cur - prev)) < ramp_tol:
                break
            prev = cur
        else:
            raise KrylovError(f"ramp on [{a}, {b}] did not converge")
        vec = cur
    return DenseState(basis, vec, state.sites)


def _cf4_dense(vec, basis, spec, schedule, a, b, n, cap_sites, krylov_dim, tol):
    dt = (b - a) / n
    for step in range(n):
        t = a + step * dt
        h1 = hamiltonian_terms(spec, schedule, t + CF4_C1 * dt, cap_sites)
        h2 = hamiltonian_terms(spec, schedule, t + CF4_C2 * dt, cap_sites)
        vec = expm_krylov(ManyBodyHamiltonian(h1.combine(h2, CF4_A2, CF4_A1), basis), vec, dt, krylov_dim, tol)
        vec = expm_krylov(ManyBodyHamiltonian(h1.combine(h2, CF4_A1, CF4_A2), basis), vec, dt, krylov_dim, tol)
    return vec


def evolve(
    state: DenseState,
    spec: ChainSpec,
    schedule: ControlSchedule | None,
    t0: float,
    t1: float,
    cap_sites: int = DEFAULT_CAP_SITES,
    krylov_dim: int = 30,
    tol: float | None = None,
    ramp_dt: float = 0.1,
    ramp_tol: float | None = None,
    use_sectors: bool = True,
) -> DenseState:
    """Propagate ``state`` (on the whole chain) from ``t0`` to ``t1``."""
    if t1 < t0:
        raise ValueError("t1 >= t0 required")
    tol = TOLERANCES["krylov"] if tol is None else tol
    ramp_tol = TOLERANCES["ramp"] if ramp_tol is None else ramp_tol
    schedule = schedule or ControlSchedule.from_spec(spec)
    parts = state.sector_parts() if use_sectors else [state]
    out = [
        _evolve_sector(p, spec, schedule, t0, t1, cap_sites, krylov_dim, tol, ramp_dt, ramp_tol)
        for p in parts
    ]
    if len(out) == 1 and state.basis == out[0].basis:
        return out[0]
    return combine(out)


# -- reduced quantities ----------------------------------------------------


def _split_ab(state: DenseState, a: int, b: int):
    n = state.basis.n_sites
    where = {s: k for k, s in enumerate(state.sites)}
    ma = np.uint64(1 << (n - 1 - where[a]))
    mb = np.uint64(1 << (n - 1 - where[b]))
    s = state.basis.states
    bit_a = ((s & ma) != 0).astype(int)
    bit_b = ((s & mb) != 0).astype(int)
    rest = s & ~(ma | mb)
    groups = {}
    for q in range(4):
        qa, qb = divmod(q, 2)
        sel = (bit_a == qa) & (bit_b == qb)
        keys = rest[sel]
        order = np.argsort(keys)
        groups[q] = (keys[order], state.vector[sel][order])
    return groups


def split_qubits(state: DenseState, a: int, b: int):
    """Amplitudes grouped by the (a, b) bits and sorted by the remaining bits."""
    return _split_ab(state, a, b)


def cross_reduced(ket: DenseState, bra: DenseState, a: int, b: int) -> np.ndarray:
    """``Tr_rest |ket><bra|`` on qubits (a, b), basis order 00, 01, 10, 11."""
    gk = _split_ab(ket, a, b)
    gb = gk if bra is ket else _split_ab(bra, a, b)
    return cross_from_splits(gk, gb)


def cross_from_splits(gk, gb) -> np.ndarray:
    out = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        ki, vi = gk[i]
        for j in range(4):
            kj, vj = gb[j]
            if ki.size == 0 or kj.size == 0:
                continue
            _, ii, jj = np.intersect1d(ki, kj, assume_unique=True, return_indices=True)
            out[i, j] = np.sum(vi[ii] * np.conj(vj[jj]))
    return out


def cross_tensor(states, a: int, b: int) -> np.ndarray:
    """``X[k, l] = Tr_rest |psi_k><psi_l|`` for a list of states."""
    splits = [_split_ab(st, a, b) for st in states]
    keys = np.unique(np.concatenate([g[q][0] for g in splits for q in range(4)]))
    dense = np.zeros((len(states), 4, keys.size), dtype=complex)
    for k, g in enumerate(splits):
        for q in range(4):
            dense[k, q, np.searchsorted(keys, g[q][0])] = g[q][1]
    flat = dense.reshape(-1, keys.size)
    gram = flat @ flat.conj().T
    n = len(states)
    return gram.reshape(n, 4, n, 4).transpose(0, 2, 1, 3)


def reduced_two_qubit(state: DenseState, spec: ChainSpec) -> np.ndarray:
    """Partial trace over every site except the two qubits."""
    return cross_reduced(state, state, spec.site_a, spec.site_b)


def _project_onto(state: DenseState, ref: DenseState):
    """Vector ``<ref|psi>`` indexed by configurations of the other sites."""
    n = state.basis.n_sites
    where = {s: k for k, s in enumerate(state.sites)}
    s = state.basis.states
    k = len(ref.sites)
    local = np.zeros(s.shape, dtype=np.uint64)
    mask = np.uint64(0)
    for pos, site in enumerate(ref.sites):
        m = np.uint64(1 << (n - 1 - where[site]))
        mask |= m
        local |= ((s & m) != 0).astype(np.uint64) << np.uint64(k - 1 - pos)
    rest = s & ~mask
    ref_states, ref_vec = ref.basis.states, ref.vector
    idx = np.searchsorted(ref_states, local)
    idx = np.minimum(idx, ref_states.size - 1)
    hit = ref_states[idx] == local
    weights = np.where(hit, np.conj(ref_vec[idx]), 0.0) * state.vector
    keys, inv = np.unique(rest[hit], return_inverse=True)
    proj = np.zeros(keys.size, dtype=complex)
    np.add.at(proj, inv, weights[hit])
    return keys, proj


def bus_overlap_fidelity(state: DenseState, ref: DenseState) -> float:
    """``<ref| rho_R |ref>`` where R = ``ref.sites``."""
    _, proj = _project_onto(state, ref)
    return float(np.sum(np.abs(proj) ** 2))


def project_onto(state: DenseState, ref: DenseState):
    """``(keys, <ref|psi>)`` indexed by configurations of the other sites."""
    return _project_onto(state, ref)


def cross_overlap(ket: DenseState, bra: DenseState, ref: DenseState) -> complex:
    """``<bra| (|ref><ref| (x) 1) |ket>``."""
    return cross_from_projections(_project_onto(ket, ref), _project_onto(bra, ref))


def cross_from_projections(pk_, pb_) -> complex:
    kk, pk = pk_
    kb, pb = pb_
    _, ii, jj = np.intersect1d(kk, kb, assume_unique=True, return_indices=True)
    return complex(np.sum(pk[ii] * np.conj(pb[jj])))


def single_excitation_amplitude(spec: ChainSpec, t: float, **kw) -> complex:
    """Spin amplitude ``<down_B| exp(-iHt) |down_A>`` with every other spin up."""
    n = spec.n_sites
    basis = Basis(n, 1)
    vec = np.zeros(basis.dim, dtype=complex)
    vec[basis.index([1 << (n - 1 - spec.site_a)])] = 1.0
    out = evolve(DenseState(basis, vec), spec, None, 0.0, t, **kw)
    return complex(out.vector[basis.index([1 << (n - 1 - spec.site_b)])][0])
