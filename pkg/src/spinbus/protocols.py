"""End-to-end experiments built on the two engines.

Every run prepares the bus (or the whole lattice) in a ground state, puts
the two qubits in the four computational basis states and evolves each of
the four product states once.  The cross tensor of the evolved states gives
the full process map by linearity, so no separate tomography runs are
needed.  ``F_M`` is always measured for the ``|++>`` qubit input.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import ffq, maps, mbq
from .model import (
    ChainSpec,
    ControlSchedule,
    PiecewiseLinear,
    ideal_gate,
    optimal_coupling_estimate,
    transfer_time_estimate,
    validate_spec,
)

log = logging.getLogger(__name__)

PLUS_PLUS = np.full(4, 0.5, dtype=complex)
ENGINES = ("auto", "ffq", "mbq")


class ProtocolError(RuntimeError):
    pass


def parallel_map(fn, items, workers: int = 1):
    """``[fn(x) for x in items]``, optionally on a thread pool (order kept)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def choose_engine(spec: ChainSpec, engine: str = "auto", schedule=None) -> str:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    j0_zero = (schedule.j0_is_zero() if schedule is not None else spec.j0 == 0)
    if engine == "ffq":
        if spec.lam != 0:
            raise ffq.EngineError("ffq requires lambda=0")
        if spec.has_outer and not j0_zero:
            raise ffq.EngineError("ffq cannot couple qubits to a bus with outer segments")
        return "ffq"
    if engine == "mbq":
        return "mbq"
    if spec.lam == 0 and (not spec.has_outer or j0_zero):
        return "ffq"
    return "mbq"


# -- result types ----------------------------------------------------------


@dataclass
class GateRunResult:
    times: np.ndarray
    f_g: np.ndarray
    f_m: np.ndarray
    maps: dict
    alpha: float | None
    parity_p: int
    t_star: float
    j0: float
    engine: str

    def at(self, t: float):
        """``(F_G, F_M)`` at the grid time closest to ``t``."""
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.f_g[k]), float(self.f_m[k])

    def peak(self):
        k = int(np.argmax(self.f_g))
        return float(self.times[k]), float(self.f_g[k])


@dataclass
class Optimum:
    n: int
    j0_opt: float
    t_opt: float
    peak: float
    boundary_hit: bool = False


@dataclass
class CutRunResult:
    times: np.ndarray
    delta_e: np.ndarray
    f_m_cut: np.ndarray
    glue_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    f_glue: np.ndarray = field(default_factory=lambda: np.empty(0))
    f_g_post_cut: float | None = None
    static_overlap: float | None = None


@dataclass
class ScalingFit:
    prefactor: float
    exponent: float
    a: float
    b: float
    j0_residuals: np.ndarray
    t_residuals: np.ndarray


# -- optimisation ----------------------------------------------------------


def _amp(n, j0, t):
    return np.abs(ffq.transfer_amplitude(ChainSpec(n_bus=n, j0=j0), t=t))


def _argmax_tiebreak(values, t_grid, j0_grid, rtol=1e-12):
    best = values.max()
    cand = np.argwhere(values >= best - rtol * max(1.0, best))
    # rows are j0 indices, columns t indices: smallest t first, then j0
    cand = sorted(cand.tolist(), key=lambda ij: (t_grid[ij[1]], j0_grid[ij[0]]))
    i, k = cand[0]
    return j0_grid[i], t_grid[k]


def _optimize_in_box(n, j0_box, t_box, n_j0, n_t):
    j0_grid = np.linspace(*j0_box, n_j0)
    t_grid = np.linspace(*t_box, n_t)
    values = np.array([_amp(n, j0, t_grid) for j0 in j0_grid])
    j0_start, t_start = _argmax_tiebreak(values, t_grid, j0_grid)
    res = minimize(
        lambda x: -_amp(n, x[0], x[1]),
        x0=[j0_start, t_start],
        method="Nelder-Mead",
        bounds=[j0_box, t_box],
        options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000},
    )
    return float(res.x[0]), float(res.x[1]), float(-res.fun)


def _on_boundary(x, box, tol=1e-6):
    width = box[1] - box[0]
    return x - box[0] < tol * width or box[1] - x < tol * width


def optimize(
    n: int,
    j0_box=(0.2, 1.5),
    t_window=(0.8, 1.3),
    n_j0: int = 27,
    n_t: int = 301,
    widen: bool = True,
) -> Optimum:
    """Maximise the end-to-end transfer magnitude over ``(j0, t)``.

    The search box is ``j0_box`` (units of J) by ``t_window`` times the
    closed-form arrival time.  A coarse grid seeds a bounded Nelder-Mead
    refinement.  If the optimum lands on the box edge the box is widened
    once (unless ``widen`` is false) and the flag ``boundary_hit`` is set.
    """
    if n < 1:
        raise ValueError("n >= 1 required")
    t_est = transfer_time_estimate(n)
    j0_box = tuple(map(float, j0_box))
    t_box = (t_window[0] * t_est, t_window[1] * t_est)
    j0, t, peak = _optimize_in_box(n, j0_box, t_box, n_j0, n_t)
    hit = _on_boundary(j0, j0_box) or _on_boundary(t, t_box)
    if hit:
        log.warning("optimum for n=%d on the search box boundary", n)
        if widen:
            wj = 0.5 * (j0_box[1] - j0_box[0])
            wt = 0.5 * (t_box[1] - t_box[0])
            j0_box = (max(1e-3, j0_box[0] - wj), j0_box[1] + wj)
            t_box = (max(1e-3, t_box[0] - wt), t_box[1] + wt)
            j0, t, peak = _optimize_in_box(n, j0_box, t_box, n_j0, n_t)
    return Optimum(n, j0, t, peak, hit)


def peak_time(n: int, j0: float, t_window=(0.8, 1.3), n_t: int = 2001) -> float:
    """Arrival time maximising the transfer magnitude at fixed ``j0``."""
    t_est = transfer_time_estimate(n)
    grid = np.linspace(t_window[0] * t_est, t_window[1] * t_est, n_t)
    t0 = grid[int(np.argmax(_amp(n, j0, grid)))]
    h = grid[1] - grid[0]
    res = minimize(
        lambda x: -_amp(n, j0, x[0]),
        x0=[t0],
        method="Nelder-Mead",
        bounds=[(t0 - h, t0 + h)],
        options={"xatol": 1e-10, "fatol": 1e-14},
    )
    return float(res.x[0])


def checkpoint(n: int, timing: str = "optimized"):
    """``(j0, t*)`` for a bus of ``n`` sites.

    ``optimized`` uses :func:`optimize`; ``formula`` uses the closed-form
    estimates.
    """
    if timing == "optimized":
        opt = optimize(n)
        return opt.j0_opt, opt.t_opt
    if timing == "formula":
        return optimal_coupling_estimate(n), transfer_time_estimate(n)
    raise ValueError(f"unknown timing {timing!r}")


def fit_scaling(ns, optima) -> ScalingFit:
    """Fit ``j0_opt = c N^e`` (log space) and ``t_opt = a N + b N^(1/3)``."""
    ns = np.asarray(ns, dtype=float)
    if ns.size < 6:
        raise ValueError("at least 6 sizes required")
    if ns.max() < 10 * ns.min():
        raise ValueError("sizes must span at least one decade")
    j0 = np.array([o.j0_opt for o in optima])
    t = np.array([o.t_opt for o in optima])
    design = np.column_stack([np.ones_like(ns), np.log(ns)])
    coef, *_ = np.linalg.lstsq(design, np.log(j0), rcond=None)
    j0_res = np.log(j0) - design @ coef
    tdesign = np.column_stack([ns, ns ** (1.0 / 3.0)])
    (a, b), *_ = np.linalg.lstsq(tdesign, t, rcond=None)
    return ScalingFit(
        float(np.exp(coef[0])), float(coef[1]), float(a), float(b), j0_res, t - tdesign @ [a, b]
    )


# -- gate runs -------------------------------------------------------------


class _FfqRunner:
    """Four evolved determinants (one per qubit basis input)."""

    def __init__(self, spec, schedule, core, bus_ref):
        self.spec = spec
        self.layout = validate_spec(spec)
        self.schedule = schedule
        self.dets = ffq.basis_determinants(core, self.layout)
        self.bus_ref = bus_ref
        self.t = 0.0
        self.static = schedule.is_static_on(0.0, math.inf)
        if self.static:
            w, v = ffq.eigensystem(ffq.build_single_particle(spec, schedule, 0.0))
            self._eig = (w, v)
            self._orb0 = [v.conj().T @ d.orbitals for d in self.dets]

    def advance(self, t):
        if t < self.t:
            raise ValueError("times must be non-decreasing")
        if self.static:
            w, v = self._eig
            phase = np.exp(-1j * w * t)[:, None]
            self.dets = [ffq.SlaterDeterminant(v @ (phase * o)) for o in self._orb0]
        elif t > self.t:
            u = ffq.propagator(self.spec, self.schedule, self.t, t)
            self.dets = [ffq.SlaterDeterminant(u @ d.orbitals) for d in self.dets]
        self.t = t

    def cross(self):
        return ffq.cross_tensor(self.dets, self.layout)

    def bus_matrix(self):
        return ffq.projector_matrix(self.dets, self.bus_ref, self.layout)


class _MbqRunner:
    def __init__(self, spec, schedule, core_state, bus_ref, cap_sites):
        self.spec = spec
        self.schedule = schedule
        self.cap_sites = cap_sites
        n = spec.n_sites
        self.states = [
            mbq.product_state(n, [core_state], {spec.site_a: a, spec.site_b: b})
            for a in (0, 1)
            for b in (0, 1)
        ]
        self.bus_ref = bus_ref
        self.t = 0.0

    def advance(self, t):
        if t < self.t:
            raise ValueError("times must be non-decreasing")
        if t > self.t:
            self.states = [
                mbq.evolve(s, self.spec, self.schedule, self.t, t, cap_sites=self.cap_sites)
                for s in self.states
            ]
        self.t = t

    def cross(self):
        return mbq.cross_tensor(self.states, self.spec.site_a, self.spec.site_b)

    def bus_matrix(self):
        proj = [mbq.project_onto(st, self.bus_ref) for st in self.states]
        out = np.zeros((4, 4), dtype=complex)
        for k in range(4):
            for l in range(4):
                out[k, l] = mbq.cross_from_projections(proj[k], proj[l])
        return out


def _make_runner(spec, engine, schedule, cap_sites, core=None):
    """Runner plus parity; ``core`` overrides the bus ground state."""
    if engine == "ffq":
        bus_ref = ffq.bus_ground_state(spec)
        core = core if core is not None else bus_ref
        return _FfqRunner(spec, schedule, core, bus_ref), core.parity_p % 2
    if spec.n_sites > cap_sites:
        raise mbq.SizeCapError(f"{spec.n_sites} sites exceed the cap of {cap_sites}")
    bus_ref, _ = mbq.bus_ground_state(spec)
    core = core if core is not None else bus_ref
    layout = validate_spec(spec)
    p = mbq.parity(core, layout.bus) if set(layout.bus) <= set(core.sites) else 1.0
    return _MbqRunner(spec, schedule, core, bus_ref, cap_sites), (0 if p >= 0 else 1)


def measure_alpha(spec: ChainSpec, j0: float, t: float, engine: str) -> float:
    """Phase of the end-to-end single-particle amplitude (fermionic convention)."""
    if spec.has_outer:
        return float("nan")
    s = spec.replace(j0=j0)
    if engine == "ffq":
        return float(np.angle(ffq.transfer_amplitude(s, t=t)))
    amp = mbq.single_excitation_amplitude(s, t)
    pos = validate_spec(s).positions
    return float(np.angle(amp * (-1.0) ** (pos[s.site_a] + pos[s.site_b])))


def run_gate(
    spec: ChainSpec,
    engine: str = "auto",
    j0: float | None = None,
    t_end: float | None = None,
    checkpoints=(),
    times=None,
    n_times: int = 201,
    schedule: ControlSchedule | None = None,
    t_star: float | None = None,
    cap_sites: int = mbq.DEFAULT_CAP_SITES,
    core=None,
    parity_p: int | None = None,
    gate_power: int = 1,
) -> GateRunResult:
    """Simulate the gate and record ``F_G(t)`` and ``F_M(t)``.

    ``times`` (or an even grid of ``n_times`` points up to ``t_end``) is
    merged with ``checkpoints``; process maps are kept for the checkpoints.
    ``t_star`` defaults to the peak transfer time for ``j0``.  With
    ``gate_power=k`` the target is the k-th power of the ideal gate.
    """
    j0 = spec.j0 if j0 is None else float(j0)
    spec = spec.replace(j0=j0)
    layout = validate_spec(spec)
    if schedule is None:
        schedule = ControlSchedule.from_spec(spec)
    engine = choose_engine(spec, engine, schedule)
    if t_star is None:
        t_star = peak_time(spec.n_bus, j0) if j0 > 0 else transfer_time_estimate(spec.n_bus)
    grid = set(float(c) for c in checkpoints)
    if times is not None:
        grid.update(float(t) for t in times)
    elif t_end is not None:
        grid.update(np.linspace(0.0, t_end, n_times).tolist())
    if not grid:
        grid = {float(t_star)}
        checkpoints = (float(t_star),)
    grid = np.array(sorted(grid))
    runner, p = _make_runner(spec, engine, schedule, cap_sites, core)
    if parity_p is not None:
        p = parity_p
    gate = ideal_gate(spec.n_bus, p)
    target = gate.power(gate_power)
    f_g = np.empty(grid.size)
    f_m = np.empty(grid.size)
    stored = {}
    keep = set(float(c) for c in checkpoints)
    for idx, t in enumerate(grid):
        runner.advance(float(t))
        pm = maps.from_cross_tensor(runner.cross())
        pm.check()
        f_g[idx] = maps.average_gate_fidelity(pm, target)
        bm = runner.bus_matrix()
        f_m[idx] = float(np.real(PLUS_PLUS @ bm @ PLUS_PLUS.conj()))
        if t in keep:
            stored[float(t)] = pm
    for arr in (f_g, f_m):
        if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
            raise ProtocolError("fidelity outside [0, 1]")
    alpha = measure_alpha(spec, j0, t_star, engine) if not layout.outer_left else None
    return GateRunResult(grid, f_g, f_m, stored, alpha, p, float(t_star), j0, engine)


def peak_fidelity(
    spec: ChainSpec,
    engine: str,
    centre: float,
    window: float = 0.15,
    n_grid: int = 61,
    **run_kw,
):
    """``(t_peak, F_G(t_peak))`` searched within ``centre * (1 +- window)``.

    The free-fermion engine refines the best grid point with a bounded
    scalar search; the dense engine keeps the grid maximum.
    """
    grid = np.linspace((1 - window) * centre, (1 + window) * centre, n_grid)
    res = run_gate(spec, engine, times=grid, **run_kw)
    k = int(np.argmax(res.f_g))
    best_t, best_f = float(grid[k]), float(res.f_g[k])
    if res.engine != "ffq":
        return best_t, best_f
    h = grid[1] - grid[0]

    def neg(t):
        return -run_gate(spec, engine, checkpoints=[t], **run_kw).at(t)[0]

    refined = minimize_scalar(neg, bounds=(best_t - h, best_t + h), method="bounded",
                              options={"xatol": 1e-7})
    if -refined.fun > best_f:
        return float(refined.x), float(-refined.fun)
    return best_t, best_f


# -- repeated use ----------------------------------------------------------


def _dense_propagator(spec, t, cap_sites):
    h = mbq.build_hamiltonian(spec, cap_sites=cap_sites).to_dense()
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def run_repeated(
    spec: ChainSpec,
    k_max: int = 8,
    j0: float | None = None,
    t_star: float | None = None,
    mode: str = "continuous",
    engine: str = "auto",
    cap_sites: int = mbq.DEFAULT_CAP_SITES,
):
    """Rows ``(k, F_G, F_M)`` for ``k = 1..k_max`` uses of one bus.

    ``continuous``: one uninterrupted evolution, compared with the k-th
    power of the gate at ``k t*``.  ``reprepare``: the bus is never reset
    and the coupling stays on, but the qubits are freshly prepared before
    every use; use ``k`` is compared with a single gate.
    """
    j0 = spec.j0 if j0 is None else float(j0)
    spec = spec.replace(j0=j0)
    if t_star is None:
        t_star = peak_time(spec.n_bus, j0)
    if mode == "continuous":
        rows = []
        for k in range(1, k_max + 1):
            res = run_gate(
                spec, engine, checkpoints=[k * t_star], t_star=t_star,
                cap_sites=cap_sites, gate_power=k,
            )
            rows.append((k, *res.at(k * t_star)))
        return rows
    if mode != "reprepare":
        raise ValueError(f"unknown mode {mode!r}")
    if spec.has_outer:
        raise ProtocolError("repeated use needs the plain qubit-bus-qubit chain")
    n = spec.n_bus
    dim_bus = 1 << n
    if 4 * dim_bus > 4096:
        raise mbq.SizeCapError("re-preparation mode is limited to n_bus <= 10")
    g_state, _ = mbq.bus_ground_state(spec)
    g = g_state.to_full().vector
    p = mbq.parity_exponent(g_state)
    gate = ideal_gate(n, p).matrix
    u = _dense_propagator(spec, t_star, cap_sites)
    # full index = a * 2^(n+1) + m * 2 + b; regroup to [q_out, m_out, q_in, m_in]
    u = u.reshape(2, dim_bus, 2, 2, dim_bus, 2).transpose(0, 2, 1, 3, 5, 4)
    u = u.reshape(4, dim_bus, 4, dim_bus)
    rho = np.outer(g, g.conj())
    rows = []
    for k in range(1, k_max + 1):
        ur = np.einsum("qmin,np->qmip", u, rho, optimize=True)
        x = np.einsum("qmip,rmjp->ijqr", ur, u.conj(), optimize=True)
        pm = maps.from_cross_tensor(x)
        pm.check()
        f_g = maps.average_gate_fidelity(pm, gate)
        v = np.einsum("qmin,i->qmn", u, PLUS_PLUS)
        rho = np.einsum("qmn,np,qrp->mr", v, rho, v.conj(), optimize=True)
        f_m = float(np.real(g.conj() @ rho @ g))
        rows.append((k, f_g, f_m))
    return rows


# -- gradual switching -----------------------------------------------------


def run_gradual(
    spec: ChainSpec,
    tau: float,
    t_star: float | None = None,
    engine: str = "auto",
    retime: bool = False,
    cap_sites: int = mbq.DEFAULT_CAP_SITES,
) -> float:
    """``F_G(t*)`` when the coupling is ramped linearly to ``spec.j0`` over ``tau``.

    ``t*`` is measured from the start of the ramp.  With ``retime`` the
    fidelity is maximised over a window around ``t* + tau/2``.
    """
    if tau < 0:
        raise ValueError("tau >= 0 required")
    j0 = spec.j0
    if t_star is None:
        t_star = peak_time(spec.n_bus, j0)
    if tau == 0:
        prof = PiecewiseLinear.constant(j0)
    else:
        prof = PiecewiseLinear.ramp(0.0, j0, 0.0, tau)
    fields = {s: PiecewiseLinear.constant(v) for s, v in spec.cut_fields}
    schedule = ControlSchedule(prof, fields)
    if not retime:
        res = run_gate(spec, engine, checkpoints=[t_star], schedule=schedule,
                       t_star=t_star, cap_sites=cap_sites)
        return res.at(t_star)[0]
    return peak_fidelity(spec, engine, t_star + 0.5 * tau, schedule=schedule,
                         t_star=t_star, cap_sites=cap_sites)[1]


# -- cutting and gluing ----------------------------------------------------


def default_cut_sites(spec: ChainSpec):
    """Outer sites adjacent to the bus."""
    layout = validate_spec(spec)
    sites = []
    if layout.outer_left:
        sites.append(layout.outer_left[-1])
    if layout.outer_right:
        sites.append(layout.outer_right[0])
    return tuple(sites)


def _field_schedule(sites, prof):
    return ControlSchedule(PiecewiseLinear.constant(0.0), {s: prof for s in sites})


def run_cut_glue(
    spec: ChainSpec,
    delta_e_max: float = 30.0,
    ramp_time: float = 100.0,
    n_times: int = 101,
    glue: bool = True,
    cut_sites=None,
) -> CutRunResult:
    """Adiabatic cut of the bus out of the lattice, then the reverse glue ramp.

    Free-fermion engine; the qubits stay decoupled.  ``F_M`` is the
    overlap of the bus reduced state with the isolated-bus ground state;
    the glue fidelity is the overlap with the whole-lattice ground state.
    """
    layout = validate_spec(spec)
    if not spec.has_outer:
        raise ProtocolError("cutting needs outer segments")
    if spec.lam != 0:
        raise ffq.EngineError("ffq requires lambda=0")
    spec = spec.replace(j0=0.0, cut_fields=())
    sites = tuple(cut_sites) if cut_sites is not None else default_cut_sites(spec)
    cut = _field_schedule(sites, PiecewiseLinear.ramp(0.0, delta_e_max, 0.0, ramp_time))
    lattice_gs = ffq.ground_orbitals(spec, layout.lattice)
    bus_ref = ffq.bus_ground_state(spec)
    times = np.linspace(0.0, ramp_time, n_times)
    det = ffq.SlaterDeterminant(lattice_gs.orbitals)
    f_cut = np.empty(n_times)
    for idx, t in enumerate(times):
        if idx:
            u = ffq.propagator(spec, cut, times[idx - 1], t)
            det = ffq.SlaterDeterminant(u @ det.orbitals)
        f_cut[idx] = np.real(ffq.projector_element(det, det, bus_ref))
    result = CutRunResult(times, delta_e_max * times / ramp_time, f_cut)
    result.static_overlap = float(f_cut[0])
    if glue:
        down = _field_schedule(sites, PiecewiseLinear.ramp(delta_e_max, 0.0, 0.0, ramp_time))
        ref = ffq.SlaterDeterminant(lattice_gs.orbitals)
        f_glue = np.empty(n_times)
        for idx, t in enumerate(times):
            if idx:
                u = ffq.propagator(spec, down, times[idx - 1], t)
                det = ffq.SlaterDeterminant(u @ det.orbitals)
            f_glue[idx] = abs(ffq.overlap(ref, det)) ** 2
        result.glue_times = times + ramp_time
        result.f_glue = f_glue
    return result


def prepare_cut_lattice(
    spec: ChainSpec,
    delta_e: float,
    ramp_time: float = 100.0,
    cut_sites=None,
    adiabatic: bool = False,
) -> mbq.DenseState:
    """Dense lattice state after cutting with fields ``delta_e``.

    For lambda = 0 the cut ramp is simulated with free fermions and the
    resulting determinant is expanded in the spin basis.  Otherwise (or
    with ``adiabatic``) the instantaneous ground state at the final field
    is used.
    """
    layout = validate_spec(spec)
    sites = tuple(cut_sites) if cut_sites is not None else default_cut_sites(spec)
    lattice = layout.lattice
    if adiabatic or spec.lam != 0:
        fields = tuple((s, delta_e) for s in sites)
        terms = mbq.hamiltonian_terms(spec.replace(j0=0.0, cut_fields=fields), cap_sites=10**6)
        state, _ = mbq.ground_state(terms, lattice)
        return state
    s0 = spec.replace(j0=0.0, cut_fields=())
    gs = ffq.ground_orbitals(s0, lattice)
    orb = gs.orbitals
    if delta_e != 0:
        sched = _field_schedule(sites, PiecewiseLinear.ramp(0.0, delta_e, 0.0, ramp_time))
        orb = ffq.propagator(s0, sched, 0.0, ramp_time) @ orb
    m = orb.shape[1]
    basis = mbq.Basis(len(lattice), m)
    local = basis.states
    configs = np.zeros((basis.dim, spec.n_sites), dtype=bool)
    k = len(lattice)
    for pos, site in enumerate(lattice):
        configs[:, site] = (local >> np.uint64(k - 1 - pos)) & np.uint64(1)
    amps = ffq.slater_amplitudes(orb, layout, configs)
    return mbq.DenseState(basis, amps, tuple(lattice))


def run_post_cut_gate(
    spec: ChainSpec,
    delta_e: float,
    t_star: float | None = None,
    ramp_time: float = 100.0,
    cut_sites=None,
    cap_sites: int = mbq.DEFAULT_CAP_SITES,
    adiabatic: bool = False,
    retime: bool = False,
    window: float = 0.15,
    n_grid: int = 31,
) -> float:
    """``F_G(t*)`` for a gate run on a bus cut out with static fields ``delta_e``.

    The outer segments remain in the dynamics (dense engine).  With
    ``retime`` the peak of ``F_G`` near ``t*`` is reported instead.
    """
    sites = tuple(cut_sites) if cut_sites is not None else default_cut_sites(spec)
    lattice = prepare_cut_lattice(spec, delta_e, ramp_time, sites, adiabatic)
    layout = validate_spec(spec)
    p = 0 if mbq.parity(lattice, layout.bus) >= 0 else 1
    gate_spec = spec.replace(cut_fields=tuple((s, delta_e) for s in sites))
    if t_star is None:
        t_star = peak_time(spec.n_bus, spec.j0)
    kw = dict(t_star=t_star, cap_sites=cap_sites, core=lattice, parity_p=p)
    if retime:
        return peak_fidelity(gate_spec, "mbq", t_star, window, n_grid, **kw)[1]
    res = run_gate(gate_spec, "mbq", checkpoints=[t_star], **kw)
    return res.at(t_star)[0]


# -- anisotropy ------------------------------------------------------------


def sweep_lambda(
    spec: ChainSpec,
    lambdas,
    t_star: float | None = None,
    cap_sites: int = mbq.DEFAULT_CAP_SITES,
    workers: int = 1,
    retime: bool = False,
    window: float = 0.2,
    n_grid: int = 41,
):
    """Dense-engine ``F_G(t*)`` for each anisotropy; returned in input order.

    ``t*`` is the lambda = 0 arrival time.  The interaction shifts the
    arrival, so ``retime`` reports the ``F_G`` peak within ``t* (1 +- window)``
    instead.
    """
    if t_star is None:
        t_star = peak_time(spec.n_bus, spec.j0)

    def one(lam):
        s = spec.replace(lam=float(lam))
        if retime:
            return peak_fidelity(s, "mbq", t_star, window, n_grid, t_star=t_star,
                                 cap_sites=cap_sites)[1]
        res = run_gate(s, "mbq", checkpoints=[t_star], t_star=t_star, cap_sites=cap_sites)
        return res.at(t_star)[0]

    return parallel_map(one, lambdas, workers)
