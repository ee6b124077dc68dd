"""Backend selection for the hot inner loops.

The compiled Cython extension is used when it was built and imports cleanly;
otherwise the numpy implementations are used. Set ``NOISYCTL_PURE_PYTHON=1``
to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("NOISYCTL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

# Above this dimension the batched BLAS update in the numpy kernel beats the
# per-trajectory compiled loop (see benchmarks/bench_kernels.py).
KICK_COMPILED_MAX_DIM = 4

phase_variance_grad = _impl.phase_variance_grad


def apply_kicks(psi, vecs, lams, dw):
    """In-place unitary kicks psi[m] <- prod_k exp(-i dw[m, k] X_k) psi[m]."""
    if psi.shape[1] <= KICK_COMPILED_MAX_DIM:
        return _impl.apply_kicks(psi, vecs, lams, dw)
    return _kernels_py.apply_kicks(psi, vecs, lams, dw)


def available_backends():
    """Return a mapping of backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
