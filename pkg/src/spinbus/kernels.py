"""Backend selection for the many-body Hamiltonian kernel.

The compiled extension is used when it imports; setting the environment
variable ``SPINBUS_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _hamkernel_py

apply_hamiltonian_py = _hamkernel_py.apply_hamiltonian

try:
    if os.environ.get("SPINBUS_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from ._hamkernel import apply_hamiltonian as apply_hamiltonian_ext
except ImportError:
    apply_hamiltonian_ext = None

if apply_hamiltonian_ext is not None:
    apply_hamiltonian = apply_hamiltonian_ext
    BACKEND = "cython"
else:
    apply_hamiltonian = apply_hamiltonian_py
    BACKEND = "python"
