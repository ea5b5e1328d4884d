"""Compiled vector fields.

Every kernel has the signature ``(y, x, args) -> dx`` with float64 arrays.
Profile kernels take ``args = ModelParams.as_array()``, i.e.
``(k, ell, p, sigma)``; the general-C kernel takes ``args = (C,)``.
"""

import math

import numpy as np
from numba import njit, types

KERNEL_SIGNATURE = types.float64[:](types.float64, types.float64[:], types.float64[:])
KernelType = types.FunctionType(KERNEL_SIGNATURE)


@njit(cache=True, error_model="numpy")
def ipow(base, n):
    result = 1.0
    b = base
    while n > 0:
        if n & 1:
            result *= b
        n >>= 1
        if n > 0:
            b *= b
    return result


@njit(cache=True, error_model="numpy")
def _weighted_coefficients(y, mod_u2, mod_v2, coupling, k, ell, p):
    """F and G expressed in the weighted variables at the point y."""
    density = mod_u2 / (1.0 + y) ** (1.0 / p) + mod_v2 / (1.0 - y) ** (1.0 / p)
    one_m_y2 = (1.0 - y) * (1.0 + y)
    if ell == 0:
        F = 0.0
    else:
        F = ell * ipow(density, k) * ipow(coupling, ell - 1) / one_m_y2 ** ((ell - 1) / (2.0 * p))
    if k == 0:
        G = 0.0
    else:
        G = k * ipow(density, k - 1) * ipow(coupling, ell) / one_m_y2 ** (ell / (2.0 * p))
    return F, G


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def cartesian_rhs(y, x, args):
    k = int(args[0])
    ell = int(args[1])
    sigma = args[3]
    ur, ui, vr, vi = x[0], x[1], x[2], x[3]
    density = ur * ur + ui * ui + vr * vr + vi * vi
    coupling = 2.0 * (ur * vr + ui * vi)
    F = 0.0 if ell == 0 else ell * ipow(density, k) * ipow(coupling, ell - 1)
    G = 0.0 if k == 0 else k * ipow(density, k - 1) * ipow(coupling, ell)
    # -i * (a + ib) = b - ia
    ar = F * vr + G * ur
    ai = F * vi + G * ui
    br = F * ur + G * vr
    bi = F * ui + G * vi
    out = np.empty(4)
    out[0] = (ai - sigma * ur) / (y + 1.0)
    out[1] = (-ar - sigma * ui) / (y + 1.0)
    out[2] = (bi - sigma * vr) / (y - 1.0)
    out[3] = (-br - sigma * vi) / (y - 1.0)
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def weighted_rhs(y, x, args):
    k = int(args[0])
    ell = int(args[1])
    p = args[2]
    s = args[3]
    ur, ui, vr, vi = x[0], x[1], x[2], x[3]
    F, G = _weighted_coefficients(
        y, ur * ur + ui * ui, vr * vr + vi * vi, 2.0 * (ur * vr + ui * vi), k, ell, p
    )
    wp = (1.0 + y) ** (-s)
    wm = (1.0 - y) ** (-s)
    ar = F * vr * wm + G * ur * wp
    ai = F * vi * wm + G * ui * wp
    br = F * ur * wp + G * vr * wm
    bi = F * ui * wp + G * vi * wm
    cu = (1.0 + y) ** (s - 1.0)
    cv = (1.0 - y) ** (s - 1.0)
    out = np.empty(4)
    # u' = -i cu A ;  v' = i cv B
    out[0] = cu * ai
    out[1] = -cu * ar
    out[2] = -cv * bi
    out[3] = cv * br
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def polar_rhs(y, x, args):
    k = int(args[0])
    ell = int(args[1])
    p = args[2]
    s = args[3]
    a, b, alpha, beta = x[0], x[1], x[2], x[3]
    delta = beta - alpha
    c = math.cos(delta)
    sn = math.sin(delta)
    F, G = _weighted_coefficients(y, a * a, b * b, 2.0 * a * b * c, k, ell, p)
    opy = 1.0 + y
    omy = 1.0 - y
    wu = 1.0 / (opy ** (1.0 - s) * omy**s)
    wv = 1.0 / (opy**s * omy ** (1.0 - s))
    out = np.empty(4)
    out[0] = F * b * sn * wu
    out[1] = F * a * sn * wv
    out[2] = -(F * b * c * wu + G * a / opy) / a
    out[3] = (F * a * c * wv + G * b / omy) / b
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def polar_lifted_rhs(y, x, args):
    """Polar system in (amp_u, amp_v, alpha, sin delta, cos delta).

    Near the lines cos(beta - alpha) = 0 the difference of two O(1) phases
    cannot resolve cos(beta - alpha); carrying it as a state keeps full
    relative precision because its derivative is proportional to itself.
    """
    k = int(args[0])
    ell = int(args[1])
    p = args[2]
    s = args[3]
    a, b, sn, c = x[0], x[1], x[3], x[4]
    F, G = _weighted_coefficients(y, a * a, b * b, 2.0 * a * b * c, k, ell, p)
    opy = 1.0 + y
    omy = 1.0 - y
    wu = 1.0 / (opy ** (1.0 - s) * omy**s)
    wv = 1.0 / (opy**s * omy ** (1.0 - s))
    ddelta = F * c * (a / b * wv + b / a * wu) + G * (1.0 / omy + 1.0 / opy)
    out = np.empty(5)
    out[0] = F * b * sn * wu
    out[1] = F * a * sn * wv
    out[2] = -(F * b * c * wu + G * a / opy) / a
    out[3] = c * ddelta
    out[4] = -sn * ddelta
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def planar_rhs(t, x, args):
    xi, eta = x[0], x[1]
    out = np.empty(2)
    out[0] = 2.0 * xi**3 * eta
    out[1] = 8.0 * xi**2 * (1.0 - eta * eta)
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def planar_lifted_rhs(t, x, args):
    """Planar flow in (xi, eta, c) with c = cos(beta - alpha) carried explicitly.

    On the invariant set eta^2 + c^2 = 1 this is the (xi, eta) system; carrying
    c keeps 1 - eta^2 = c^2 resolvable after eta has rounded to +-1.
    """
    xi, eta, c = x[0], x[1], x[2]
    out = np.empty(3)
    out[0] = 2.0 * xi**3 * eta
    out[1] = 8.0 * xi**2 * c * c
    out[2] = -8.0 * xi**2 * eta * c
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def general_c_rhs(y, x, args):
    C = args[0]
    b, delta = x[0], x[1]
    b2 = b * b
    amp_u = math.sqrt(C + b2)
    one_m_y2 = (1.0 - y) * (1.0 + y)
    w = one_m_y2 * math.sqrt(one_m_y2)
    out = np.empty(2)
    out[0] = amp_u * math.sin(delta) / w * (2.0 * b2 + C * (1.0 - y))
    out[1] = (
        math.cos(delta)
        / (w * b * amp_u)
        * (8.0 * b2 * b2 + 2.0 * C * (4.0 - y) * b2 + C * C * (1.0 - y))
    )
    return out


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def zero_rhs(t, x, args):
    return np.zeros_like(x)


@njit(KERNEL_SIGNATURE, cache=True, error_model="numpy")
def exp_rhs(t, x, args):
    return x.copy()
