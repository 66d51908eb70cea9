"""Pure-NumPy reference implementations of the pointwise hot kernels.

Both kernels operate on flattened arrays: ``a`` holds one flattened N*2
Jacobian per row, ``p`` holds the matching exponent per row.  The compiled
Cython backend (`vexflow.backends._kernels`) implements the same contracts;
either one is picked at import time by :mod:`vexflow.backends`.
"""

import numpy as np

BACKEND = "python"


def flux(a, p, eps):
    """Regularized diffusion flux |A|^(2p-2) A / (eps + |A|^p), rowwise.

    Parameters
    ----------
    a : (M, d) float64 array
        Flattened Jacobians, one per row.
    p : (M,) float64 array
        Exponent per row, p >= 1.
    eps : float
        Regularization, > 0.

    Returns
    -------
    (M, d) float64 array. Rows with |A| = 0 are exactly zero (explicit
    branch; avoids 0**negative for p < 2).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    s = np.sqrt(np.einsum("ij,ij->i", a, a))
    out = np.zeros_like(a)
    m = s > 0.0
    sm = s[m]
    pm = p[m]
    coef = sm ** (2.0 * pm - 2.0) / (eps + sm**pm)
    out[m] = a[m] * coef[:, None]
    return out


def potential(a, p, eps):
    """Smoothed convex potential |A|^p/p - (eps/p) log(eps + |A|^p), rowwise.

    The raw convention is used (the constant -(eps/p) log eps is not
    subtracted), so the value at A = 0 is -(eps/p) log eps.
    The flux kernel above is exactly the gradient of this potential.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    s = np.sqrt(np.einsum("ij,ij->i", a, a))
    sp = s**p
    return sp / p - (eps / p) * np.log(eps + sp)
