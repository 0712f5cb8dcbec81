"""Chain geometry, control schedules and the ideal two-qubit gate.

Site layout
-----------
Sites are indexed ``0 .. n_sites-1``::

    [outer left] A [bus 1..N] B [outer right]

Qubit A sits at ``extra_left`` and qubit B at ``extra_left + n_bus + 1``.
With no outer segments this is the plain ``0 .. N+1`` chain.  When outer
segments are present the lattice is uninterrupted (the last outer-left
site is bonded directly to the first bus site) and the qubits hang off the
bus ends through the switchable ``j0`` bonds.

Spin/fermion conventions
------------------------
* ``|0> = |up>``, ``|1> = |down>``; a down spin is an occupied fermion
  mode, ``n = (1 - sigma^z)/2``.
* Fermion operators carry the string ``prod (-sigma^z)`` over the sites
  that precede them in Jordan-Wigner order.  With that string a bond
  ``c (XX + YY)`` becomes the hopping ``HOPPING_SIGN * 2c``.
* A local field ``dE`` enters the spin Hamiltonian as ``-dE sigma^z``;
  in fermion language it is the diagonal entry ``+2 dE`` (a positive
  field penalises occupation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# Hopping sign that pairs with the (-sigma^z) string.  Flipping it conjugates
# every transfer amplitude (the measured alpha_N changes sign).
HOPPING_SIGN = -1.0


class SpecError(ValueError):
    """Raised when a chain description violates its invariants."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ChainSpec:
    """Static description of qubits + bus (+ optional outer lattice)."""

    n_bus: int
    j: float = 1.0
    j0: float = 0.0
    lam: float = 0.0
    extra_left: int = 0
    extra_right: int = 0
    cut_fields: tuple[tuple[int, float], ...] = ()

    def replace(self, **changes) -> "ChainSpec":
        from dataclasses import replace

        return replace(self, **changes)

    @property
    def n_sites(self) -> int:
        return self.extra_left + self.n_bus + 2 + self.extra_right

    @property
    def site_a(self) -> int:
        return self.extra_left

    @property
    def site_b(self) -> int:
        return self.extra_left + self.n_bus + 1

    @property
    def has_outer(self) -> bool:
        return self.extra_left > 0 or self.extra_right > 0


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping derived from a validated :class:`ChainSpec`."""

    n_sites: int
    a: int
    b: int
    bus: tuple[int, ...]
    outer_left: tuple[int, ...]
    outer_right: tuple[int, ...]
    # (i, j, kind) with kind in {"lattice", "qubit"}
    bonds: tuple[tuple[int, int, str], ...]
    # sites in Jordan-Wigner order: A, whole lattice, B
    jw_order: tuple[int, ...]

    @property
    def lattice(self) -> tuple[int, ...]:
        return self.outer_left + self.bus + self.outer_right

    @property
    def positions(self) -> np.ndarray:
        pos = np.empty(self.n_sites, dtype=int)
        pos[list(self.jw_order)] = np.arange(self.n_sites)
        return pos


def validate_spec(spec: ChainSpec) -> Layout:
    """Check invariants and return the derived index layout.

    Raises
    ------
    SpecError
        Listing every violated invariant.
    """
    problems = []
    if not isinstance(spec.n_bus, (int, np.integer)) or spec.n_bus < 1:
        problems.append("n_bus >= 1 required")
    if not spec.j > 0:
        problems.append("j > 0 required")
    if spec.j0 < 0:
        problems.append("j0 >= 0 required")
    if spec.extra_left < 0 or spec.extra_right < 0:
        problems.append("outer segment lengths must be >= 0")
    if problems:
        raise SpecError(problems)

    a, b = spec.site_a, spec.site_b
    bus = tuple(range(a + 1, b))
    outer_left = tuple(range(0, a))
    outer_right = tuple(range(b + 1, spec.n_sites))
    outer = set(outer_left) | set(outer_right)
    for site, _ in spec.cut_fields:
        if site not in outer:
            problems.append(f"cut-field site {site} is not an outer-segment site")
    if problems:
        raise SpecError(problems)

    bonds = []
    for s in outer_left[:-1]:
        bonds.append((s, s + 1, "lattice"))
    if outer_left:
        bonds.append((outer_left[-1], bus[0], "lattice"))
    bonds.append((a, bus[0], "qubit"))
    for s in bus[:-1]:
        bonds.append((s, s + 1, "lattice"))
    bonds.append((bus[-1], b, "qubit"))
    if outer_right:
        bonds.append((bus[-1], outer_right[0], "lattice"))
    for s in outer_right[:-1]:
        bonds.append((s, s + 1, "lattice"))

    return Layout(
        n_sites=spec.n_sites,
        a=a,
        b=b,
        bus=bus,
        outer_left=outer_left,
        outer_right=outer_right,
        bonds=tuple(bonds),
        jw_order=(a,) + outer_left + bus + outer_right + (b,),
    )


class PiecewiseLinear:
    """Piecewise-linear profile with constant extrapolation."""

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ValueError("times and values must be equal-length 1-d sequences")
        if np.any(np.diff(times) < 0):
            raise ValueError("knot times must be non-decreasing")
        self.times = times
        self.values = values

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinear":
        return cls([0.0], [value])

    @classmethod
    def ramp(cls, v0: float, v1: float, t0: float, t1: float) -> "PiecewiseLinear":
        if t1 <= t0:
            return cls([t0], [v1])
        return cls([t0, t1], [v0, v1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def is_constant_on(self, t0: float, t1: float) -> bool:
        inside = (self.times > t0) & (self.times < t1)
        if np.any(inside):
            return False
        return bool(np.isclose(self(t0), self(t1), rtol=0, atol=0))

    def __repr__(self):
        return f"PiecewiseLinear({self.times.tolist()}, {self.values.tolist()})"


@dataclass
class ControlSchedule:
    """Time profiles of the qubit coupling and of local z-fields."""

    j0_profile: PiecewiseLinear
    field_profiles: Mapping[int, PiecewiseLinear] = field(default_factory=dict)
    horizon: float = math.inf

    @classmethod
    def from_spec(cls, spec: ChainSpec) -> "ControlSchedule":
        """Sudden quench: j0 and cut fields held constant from t=0."""
        fields = {s: PiecewiseLinear.constant(v) for s, v in spec.cut_fields}
        return cls(PiecewiseLinear.constant(spec.j0), fields)

    def j0(self, t: float) -> float:
        return float(self.j0_profile(t))

    def fields(self, t: float, n_sites: int) -> np.ndarray:
        out = np.zeros(n_sites)
        for site, prof in self.field_profiles.items():
            out[site] += prof(t)
        return out

    def profiles(self):
        return [self.j0_profile, *self.field_profiles.values()]

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Knot times strictly inside ``(t0, t1)``, sorted."""
        knots = set()
        for prof in self.profiles():
            knots.update(float(x) for x in prof.times if t0 < x < t1)
        return sorted(knots)

    def segments(self, t0: float, t1: float):
        """Consecutive ``(a, b)`` pieces between knots.

        Pieces shorter than ~1e-13 of the time scale are dropped: their
        effect is below round-off, and interpolating across them overflows.
        """
        edges = [t0, *self.breakpoints(t0, t1), t1]
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a > 1e-13 * max(1.0, abs(a), abs(b)):
                yield a, b

    def is_static_on(self, t0: float, t1: float) -> bool:
        return all(p.is_constant_on(t0, t1) for p in self.profiles())

    def j0_is_zero(self) -> bool:
        return bool(np.all(self.j0_profile.values == 0))


def optimal_coupling_estimate(n: int, j: float = 1.0) -> float:
    """Closed-form estimate of the best boundary coupling, ``1.05 j n^(-1/6)``."""
    if n < 1:
        raise ValueError("n >= 1 required")
    return 1.05 * j * n ** (-1.0 / 6.0)


def transfer_time_estimate(n: int, j: float = 1.0) -> float:
    """Closed-form arrival time ``(0.25 n + 0.52 n^(1/3)) / j``."""
    if n < 1:
        raise ValueError("n >= 1 required")
    return (0.25 * n + 0.52 * n ** (1.0 / 3.0)) / j


def wrap_phase(phi):
    """Map angles to (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.pi - np.mod(np.pi - phi, 2 * np.pi)
    return out if out.ndim else float(out)


def phase_distance(a, b) -> float:
    """Distance between two angles modulo 2 pi."""
    return float(abs(wrap_phase(a - b)))


@dataclass(frozen=True)
class IdealGate:
    """``G|ab> = exp(i phi_ab)|ba>`` with phases ordered (00, 01, 10, 11)."""

    alpha_n: float
    parity_p: int
    phases: tuple[float, float, float, float]

    @property
    def matrix(self) -> np.ndarray:
        g = np.zeros((4, 4), dtype=complex)
        for ab in range(4):
            a, b = divmod(ab, 2)
            g[2 * b + a, ab] = np.exp(1j * self.phases[ab])
        return g

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, k)


def ideal_gate(n: int, parity_p: int) -> IdealGate:
    """Ideal mirror-inversion gate for a bus of ``n`` sites.

    ``parity_p`` is the exponent of the bus-state eigenvalue of
    ``prod_bus (-sigma^z)`` and must come from the engine that prepared the
    bus.  ``alpha_n = pi (n+1)/2`` is the phase of the end-to-end
    single-particle amplitude under the conventions above; the creation
    operator picks that phase up with a plus sign, so
    ``phi_01 = phi_10 = (p+1) pi + alpha_n`` and ``phi_11 = pi - 2 alpha_n``.
    """
    alpha = wrap_phase(np.pi * (n + 1) / 2)
    phi_10 = wrap_phase((parity_p + 1) * np.pi + alpha)
    phi_11 = wrap_phase(np.pi - 2 * alpha)
    return IdealGate(alpha, int(parity_p), (0.0, phi_10, phi_10, phi_11))
