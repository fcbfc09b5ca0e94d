"""Coefficient matrix of the domain map and its derivative.

The physical domain ``0 < x2 < 1 + g(x1)`` is pulled back to the unit square.
With ``g`` the profile value and ``dg`` its slope at ``x1``::

    A = [[1 + g,      -dg*x2               ],
         [-dg*x2,     (1 + (dg*x2)**2)/(1+g)]]

All functions broadcast over array arguments and return arrays with two
trailing axes of size 2.
"""

from __future__ import annotations

import numpy as np

#: 1 + g below this value is treated as a collapsed domain.
COLLAPSE_TOL = 1e-8


class DegenerateGeometryError(ValueError):
    """The free boundary touched the bottom of the domain (1 + g <= 0)."""


def _check(one_plus_g):
    bad = np.asarray(one_plus_g) <= COLLAPSE_TOL
    if np.any(bad):
        worst = float(np.min(one_plus_g))
        raise DegenerateGeometryError(f"physical domain collapsed: min(1 + G) = {worst:.3e}")


def eval_A(gamma_val, dgamma_val, x2):
    g, dg, x2 = np.broadcast_arrays(
        np.asarray(gamma_val, float), np.asarray(dgamma_val, float), np.asarray(x2, float)
    )
    onepg = 1.0 + g
    _check(onepg)
    off = -dg * x2
    out = np.empty(g.shape + (2, 2))
    out[..., 0, 0] = onepg
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    out[..., 1, 1] = (1.0 + off * off) / onepg
    return out


def eval_A1(gamma_val, dgamma_val, x2):
    """Partial derivative of ``A`` with respect to the profile value."""
    g, dg, x2 = np.broadcast_arrays(
        np.asarray(gamma_val, float), np.asarray(dgamma_val, float), np.asarray(x2, float)
    )
    onepg = 1.0 + g
    _check(onepg)
    s = dg * x2
    out = np.zeros(g.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = -(1.0 + s * s) / (onepg * onepg)
    return out


def eval_A2(gamma_val, dgamma_val, x2):
    """Partial derivative of ``A`` with respect to the profile slope."""
    g, dg, x2 = np.broadcast_arrays(
        np.asarray(gamma_val, float), np.asarray(dgamma_val, float), np.asarray(x2, float)
    )
    onepg = 1.0 + g
    _check(onepg)
    out = np.empty(g.shape + (2, 2))
    out[..., 0, 0] = 0.0
    out[..., 0, 1] = -x2
    out[..., 1, 0] = -x2
    out[..., 1, 1] = 2.0 * dg * x2 * x2 / onepg
    return out


def eval_DA(gamma_val, dgamma_val, x2, h_val, dh_val):
    """Directional derivative ``A1*h + A2*dh`` of ``A`` in direction ``h``."""
    h = np.asarray(h_val, float)[..., None, None]
    dh = np.asarray(dh_val, float)[..., None, None]
    return eval_A1(gamma_val, dgamma_val, x2) * h + eval_A2(gamma_val, dgamma_val, x2) * dh
