"""Hot numeric kernels.

Two interchangeable implementations live here: ``_numba`` (compiled loops) and
``_numpy`` (vectorized numpy/scipy). The numba path is used unless the
``SLEVEL_DISABLE_NUMBA`` environment variable is set to a truthy value or numba
cannot be imported. The choice is made once, at import time.
"""

import os

from . import _numpy as numpy_impl

numba_impl = None
if os.environ.get("SLEVEL_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no"):
    BACKEND = "numpy"
else:
    try:
        from . import _numba as numba_impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is an optional accelerator
        BACKEND = "numpy"

_impl = numba_impl if BACKEND == "numba" else numpy_impl

csr_rows_matmul = _impl.csr_rows_matmul
csr_rows_tmatmul = _impl.csr_rows_tmatmul
kahan_mean = _impl.kahan_mean
mdp_transition = _impl.mdp_transition
mdp_stage_cost = _impl.mdp_stage_cost
perishable_basis = _impl.perishable_basis

__all__ = [
    "BACKEND",
    "csr_rows_matmul",
    "csr_rows_tmatmul",
    "kahan_mean",
    "mdp_transition",
    "mdp_stage_cost",
    "perishable_basis",
    "numpy_impl",
    "numba_impl",
]
