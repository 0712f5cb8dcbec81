"""Time the compiled and numpy Hamiltonian kernels on the same problems.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from spinbus import kernels, mbq
from spinbus.model import ChainSpec

CASES = [
    ("bus 10 + qubits, half filling", ChainSpec(n_bus=10, j0=0.7, lam=0.2), 6),
    ("bus 14 + qubits, half filling", ChainSpec(n_bus=14, j0=0.6, lam=0.2), 8),
    ("bus 10 + 4+4 lattice, 10 up", ChainSpec(n_bus=10, j0=0.7, extra_left=4, extra_right=4), 10),
    ("bus 14 + qubits, full space", ChainSpec(n_bus=14, j0=0.6, lam=0.2), None),
]


def _time(h, v, repeat):
    h.matvec(v)  # table setup
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        h.matvec(v)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    if kernels.apply_hamiltonian_ext is None:
        print("compiled kernel not available; timing the numpy fallback only")
    print(f"{'case':34s} {'dim':>9s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, spec, m in CASES:
        basis = mbq.Basis(spec.n_sites, m)
        terms = mbq.hamiltonian_terms(spec)
        v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        t_py = _time(mbq.ManyBodyHamiltonian(terms, basis, kernels.apply_hamiltonian_py), v, args.repeat)
        if kernels.apply_hamiltonian_ext is None:
            print(f"{label:34s} {basis.dim:9d} {1e3 * t_py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        h_ext = mbq.ManyBodyHamiltonian(terms, basis, kernels.apply_hamiltonian_ext)
        t_ext = _time(h_ext, v, args.repeat)
        print(f"{label:34s} {basis.dim:9d} {1e3 * t_py:10.2f} {1e3 * t_ext:10.2f} {t_py / t_ext:8.2f}")


if __name__ == "__main__":
    main()
