"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def phase_variance_grad(r, phi, xe, x2e):
    """Variance of X at amplitudes ``r`` and phases ``phi``, and its phase gradient.

    ``xe`` and ``x2e`` are X and X² in the expansion basis.
    """
    c = r * np.exp(1j * phi)
    a = xe @ c
    b = x2e @ c
    m1 = float(np.vdot(c, a).real)
    m2 = float(np.vdot(c, b).real)
    cc = c.conj()
    grad = 2.0 * (cc * b).imag - 4.0 * m1 * (cc * a).imag
    return m2 - m1 * m1, grad


def apply_kicks(psi, vecs, lams, dw):
    """Apply exp(-i dw[m, k] X_k) to every row of ``psi`` in place, k in order.

    ``vecs[k]`` holds the eigenvectors of X_k as columns, ``lams[k]`` its eigenvalues.
    """
    for k in range(vecs.shape[0]):
        v = vecs[k]
        c = psi @ v.conj()
        c *= np.exp(-1j * dw[:, k, None] * lams[k][None, :])
        psi[...] = c @ v.T
