"""Two-qubit process maps, gate fidelity and entanglement.

A process map is stored as ``eps[i, j, k, l]``: the output density matrix
element ``(i, j)`` produced by the input operator ``|k><l|``.  Basis order
is ``|ab> -> 2a + b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProcessMapError(ValueError):
    pass


@dataclass
class ProcessMap:
    eps: np.ndarray
    hermiticity_error: float = 0.0
    trace_error: float = 0.0
    min_choi_eigenvalue: float = 0.0

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=complex)
        if self.eps.shape != (4, 4, 4, 4):
            raise ProcessMapError("process map must have shape (4, 4, 4, 4)")
        self.hermiticity_error = float(
            np.max(np.abs(self.eps - np.conj(self.eps.transpose(1, 0, 3, 2))))
        )
        traces = np.einsum("iikl->kl", self.eps)
        self.trace_error = float(np.max(np.abs(traces - np.eye(4))))
        self.min_choi_eigenvalue = float(np.linalg.eigvalsh(self.hermitian_choi())[0])

    def choi(self) -> np.ndarray:
        """``C[(k,i),(l,j)] = eps[i,j,k,l]`` (unnormalised)."""
        return self.eps.transpose(2, 0, 3, 1).reshape(16, 16)

    def hermitian_choi(self) -> np.ndarray:
        c = self.choi()
        return 0.5 * (c + c.conj().T)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("ijkl,kl->ij", self.eps, rho)

    def check(self, herm_tol=1e-9, trace_tol=1e-8, pos_tol=1e-8, trace_fatal=1e-6) -> list[str]:
        """Return warnings; raise if trace preservation is badly broken."""
        if self.trace_error > trace_fatal:
            raise ProcessMapError(f"trace not preserved (error {self.trace_error:.2e})")
        warnings = []
        if self.hermiticity_error > herm_tol:
            warnings.append(f"hermiticity error {self.hermiticity_error:.2e}")
        if self.trace_error > trace_tol:
            warnings.append(f"trace error {self.trace_error:.2e}")
        if self.min_choi_eigenvalue < -pos_tol:
            warnings.append(f"Choi eigenvalue {self.min_choi_eigenvalue:.2e}")
        return warnings


def tomography_inputs():
    """Sixteen pure input states spanning the two-qubit operator space.

    Returns ``(states, coeffs)`` with ``states`` of shape (16, 4) and
    ``coeffs`` of shape (4, 4, 16) such that
    ``|k><l| = sum_s coeffs[k, l, s] |psi_s><psi_s|``.
    """
    eye = np.eye(4, dtype=complex)
    states = [eye[k] for k in range(4)]
    coeffs = np.zeros((4, 4, 16), dtype=complex)
    for k in range(4):
        coeffs[k, k, k] = 1.0
    for k in range(4):
        for l in range(k + 1, 4):
            iu = len(states)
            states.append((eye[k] + eye[l]) / np.sqrt(2))
            iv = len(states)
            states.append((eye[k] + 1j * eye[l]) / np.sqrt(2))
            # |k><l| = |u><u| + i|v><v| - (1+i)/2 (P_k + P_l)
            coeffs[k, l, iu] = 1.0
            coeffs[k, l, iv] = 1j
            coeffs[k, l, k] += -(1 + 1j) / 2
            coeffs[k, l, l] += -(1 + 1j) / 2
            coeffs[l, k] = coeffs[k, l].conj()
    return np.array(states), coeffs


def assemble_process_map(outputs) -> ProcessMap:
    """Process map from the 16 output density matrices of the tomography inputs."""
    outputs = np.asarray(outputs, dtype=complex)
    _, coeffs = tomography_inputs()
    eps = np.einsum("kls,sij->ijkl", coeffs, outputs)
    return ProcessMap(eps)


def from_cross_tensor(x: np.ndarray) -> ProcessMap:
    """Process map from ``X[k, l] = Tr_rest |psi_k><psi_l|`` (shape 4x4x4x4).

    ``psi_k`` is the evolved state whose qubit input was ``|k>``; by
    linearity this is the same map the sixteen tomography inputs give.
    """
    return ProcessMap(np.asarray(x).transpose(2, 3, 0, 1))


def unitary_channel(u: np.ndarray) -> ProcessMap:
    u = np.asarray(u, dtype=complex)
    return ProcessMap(np.einsum("ik,jl->ijkl", u, u.conj()))


def compose(second: ProcessMap, first: ProcessMap) -> ProcessMap:
    """Channel ``second o first``."""
    return ProcessMap(np.einsum("ijmn,mnkl->ijkl", second.eps, first.eps))


def average_gate_fidelity(process: ProcessMap, gate: np.ndarray) -> float:
    """Haar-averaged fidelity of ``process`` with the unitary ``gate`` (d = 4)."""
    g = np.asarray(gate, dtype=complex)
    overlap = np.einsum("ik,ijkl,jl->", g.conj(), process.eps, g)
    return float(np.real(overlap + 4.0) / 20.0)


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(np.vdot(psi, rho @ psi)))


_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    tilde = _YY @ rho.conj() @ _YY
    ev = np.linalg.eigvals(rho @ tilde)
    lam = np.sort(np.sqrt(np.clip(np.real(ev), 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))
