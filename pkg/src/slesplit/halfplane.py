"""Conformal building blocks on the upper half-plane.

Everything downstream is a composition of two maps.  For the vertical slit
of half-length 2*sqrt(t) grown at a real anchor A, the forward (hull-removing)
centred map and its inverse are

    forward:  z -> A + sqrt((z - A)^2 + 4t)
    reverse:  z -> A + sqrt((z - A)^2 - 4t)

where sqrt is the branch with image in the closed upper half-plane H.  The
reverse map is also the exact flow of dz/dt = -2/(z - A), which is why the
splitting scheme spends its whole drift budget here.

The branch convention matters: for w on the negative real axis we take
sqrt(w) = i*sqrt(|w|), and for w >= 0 the usual non-negative root.  With that
choice H maps into H and the slit maps are each other's inverses wherever
both are defined.
"""
from __future__ import annotations

import cmath

import numpy as np

__all__ = ["sqrt_h", "slit_forward", "slit_reverse"]


def sqrt_h(w):
    """Square root with image in the closed upper half-plane.

    Accepts a scalar (returns ``complex``) or an array_like (returns a
    complex ndarray).  The principal root already lands in H except on the
    lower branch, where we negate; the C library root is scaled internally,
    so magnitudes out to ~1e300 are safe.
    """
    if isinstance(w, (complex, float, int)):
        r = cmath.sqrt(w)
        return -r if r.imag < 0.0 else r
    r = np.sqrt(np.asarray(w, dtype=np.complex128))
    np.negative(r, out=r, where=r.imag < 0.0)
    return r


def slit_forward(z, anchor=0.0, t=0.0):
    """Map that removes the slit grown over time t at the real anchor.

    slit_forward(z, A, t) = A + sqrt_h((z - A)^2 + 4 t).  Points on the slit
    land on the real axis; the tip A + 2i*sqrt(t) lands on A.
    """
    if t < 0.0:
        raise ValueError("slit duration must be >= 0")
    d = z - anchor
    return anchor + sqrt_h(d * d + 4.0 * t)


def slit_reverse(z, anchor=0.0, t=0.0):
    """Inverse of :func:`slit_forward`: grows the slit back.

    slit_reverse(z, A, t) = A + sqrt_h((z - A)^2 - 4 t), the time-t flow of
    dz/dt = -2/(z - A) started from z.
    """
    if t < 0.0:
        raise ValueError("slit duration must be >= 0")
    d = z - anchor
    return anchor + sqrt_h(d * d - 4.0 * t)
