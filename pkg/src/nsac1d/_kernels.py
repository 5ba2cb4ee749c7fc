"""Compiled inner loops: semi-discrete right-hand side, RK4 stepping and the
running time integrals carried along with every accepted step.

Everything here works on raw float64 arrays so it can be jitted. The public,
readable versions of the same operators live in ``discretization``; the test
suite checks the two against each other.
"""

import math

import numpy as np
from numba import njit

# status codes returned by the stepping kernels
OK = 0
BAD_V = 1
BAD_THETA = 2
BAD_CHI = 3
DT_UNDERFLOW = 4

DT_MIN = 1e-14

# value-safe fast-math subset: no nnan/ninf, so floor checks still see NaN
FAST = {"contract", "reassoc", "arcp", "nsz"}


@njit(cache=True, error_model="numpy")
def power(x, a):
    if a == 0.0:
        return 1.0
    if a == 1.0:
        return x
    if a == 2.0:
        return x * x
    return math.exp(a * math.log(x))


@njit(cache=True, error_model="numpy", fastmath=FAST)
def rhs(v, u, chi, th, dx, alpha, beta, dv, du, dchi, dth, mu, scratch):
    """Semi-discrete right-hand side; ``scratch`` is a (5, n_cells + 1) work array."""
    n = v.shape[0] - 1
    idx = 1.0 / dx
    ihalf = 2.0 * idx

    fu = scratch[0]
    fq = scratch[1]
    fh = scratch[2]
    eta = scratch[3]
    kap = scratch[4]
    for i in range(n + 1):
        eta[i] = power(chi[i], alpha)
        kap[i] = power(th[i], beta)
    # dv and dchi double as per-node 1/v and theta/v until overwritten
    for i in range(n + 1):
        dv[i] = 1.0 / v[i]
        dchi[i] = th[i] * dv[i]
    # face fluxes, j = 0..n-1 sits between nodes j and j+1
    for j in range(n):
        ivf = 2.0 / (v[j] + v[j + 1])
        pf = 0.5 * (dchi[j] + dchi[j + 1])
        etaf = 0.5 * (eta[j] + eta[j + 1])
        kapf = 0.5 * (kap[j] + kap[j + 1])
        ux = (u[j + 1] - u[j]) * idx
        cx = (chi[j + 1] - chi[j]) * idx
        tx = (th[j + 1] - th[j]) * idx
        q = cx * ivf
        fu[j] = -pf + etaf * ux * ivf - 0.5 * q * q
        fq[j] = q
        fh[j] = kapf * tx * ivf

    mu[0] = -fq[0] * ihalf
    mu[n] = fq[n - 1] * ihalf
    for i in range(1, n):
        mu[i] = -(fq[i] - fq[i - 1]) * idx
    for i in range(n + 1):
        c = chi[i]
        mu[i] += c * c * c - c

    # theta equation, using the nodal velocity gradient that also drives v
    ux0 = (u[1] - u[0]) * idx
    uxn = (u[n] - u[n - 1]) * idx
    dth[0] = (-dchi[0] * ux0 + fh[0] * ihalf + eta[0] * ux0 * ux0 * dv[0]
              + v[0] * mu[0] * mu[0])
    dth[n] = (-dchi[n] * uxn - fh[n - 1] * ihalf + eta[n] * uxn * uxn * dv[n]
              + v[n] * mu[n] * mu[n])
    h2 = 0.5 * idx
    for i in range(1, n):
        ux = (u[i + 1] - u[i - 1]) * h2
        dth[i] = (-dchi[i] * ux + (fh[i] - fh[i - 1]) * idx + eta[i] * ux * ux * dv[i]
                  + v[i] * mu[i] * mu[i])
        dv[i] = ux
    dv[0] = ux0
    dv[n] = uxn

    for i in range(n + 1):
        dchi[i] = -v[i] * mu[i]
    du[0] = 0.0
    du[n] = 0.0
    for i in range(1, n):
        du[i] = (fu[i] - fu[i - 1]) * idx


@njit(cache=True, error_model="numpy")
def check_floors(v, chi, th, v_floor, theta_floor, chi_floor, alpha):
    """Return (status, node) for the first floor violation, (OK, -1) if none."""
    for i in range(v.shape[0]):
        if not v[i] > v_floor:
            return BAD_V, i
        if not th[i] > theta_floor:
            return BAD_THETA, i
        if alpha != 0.0 and not chi[i] > chi_floor:
            return BAD_CHI, i
    return OK, -1


@njit(cache=True, error_model="numpy")
def stable_dt_coef(v, eta, kap, dx, cfl):
    """Stable step from nodal eta(chi) and kappa(theta) already at hand."""
    cmax = 0.0
    for i in range(v.shape[0]):
        c = max(eta[i], kap[i], 1.0) / v[i]
        if c > cmax:
            cmax = c
    return cfl * dx * dx / (2.0 * cmax)


@njit(cache=True, error_model="numpy")
def stable_dt(v, chi, th, dx, alpha, beta, cfl):
    cmax = 0.0
    for i in range(v.shape[0]):
        c = max(power(chi[i], alpha), power(th[i], beta), 1.0) / v[i]
        if c > cmax:
            cmax = c
    return cfl * dx * dx / (2.0 * cmax)


@njit(cache=True, error_model="numpy", fastmath=FAST)
def _axpy(y, c, src, dst):
    """dst = y + c * src for the stacked state, pinning u = 0 at both ends."""
    m = y.shape[1]
    for r in range(4):
        yr = y[r]
        sr = src[r]
        dr = dst[r]
        for i in range(m):
            dr[i] = yr[i] + c * sr[i]
    dst[1, 0] = 0.0
    dst[1, m - 1] = 0.0


@njit(cache=True, error_model="numpy", fastmath=FAST)
def rk4_step(y, k1, dt, dx, alpha, beta, floors, out, work, scratch):
    """One classical RK4 step of the stacked state ``y`` (rows v, u, chi, theta).

    ``k1`` holds the right-hand side at ``y`` (rows dv, du, dchi, dtheta).
    ``work`` is a (5, 4, m) buffer. Returns (status, node); ``out`` is only
    meaningful when status is OK.
    """
    m = y.shape[1]
    k2 = work[0]
    k3 = work[1]
    k4 = work[2]
    ys = work[3]
    mu = work[4, 0]

    _axpy(y, 0.5 * dt, k1, ys)
    st, node = check_floors(ys[0], ys[2], ys[3], floors[0], floors[1], floors[2], alpha)
    if st != OK:
        return st, node
    rhs(ys[0], ys[1], ys[2], ys[3], dx, alpha, beta, k2[0], k2[1], k2[2], k2[3], mu, scratch)

    _axpy(y, 0.5 * dt, k2, ys)
    st, node = check_floors(ys[0], ys[2], ys[3], floors[0], floors[1], floors[2], alpha)
    if st != OK:
        return st, node
    rhs(ys[0], ys[1], ys[2], ys[3], dx, alpha, beta, k3[0], k3[1], k3[2], k3[3], mu, scratch)

    _axpy(y, dt, k3, ys)
    st, node = check_floors(ys[0], ys[2], ys[3], floors[0], floors[1], floors[2], alpha)
    if st != OK:
        return st, node
    rhs(ys[0], ys[1], ys[2], ys[3], dx, alpha, beta, k4[0], k4[1], k4[2], k4[3], mu, scratch)

    w = dt / 6.0
    for r in range(4):
        yr = y[r]
        a = k1[r]
        b = k2[r]
        c = k3[r]
        d = k4[r]
        o = out[r]
        for i in range(m):
            o[i] = yr[i] + w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])
    out[1, 0] = 0.0
    out[1, m - 1] = 0.0
    return check_floors(out[0], out[2], out[3], floors[0], floors[1], floors[2], alpha)


@njit(cache=True, error_model="numpy")
def integrands(y, k, mu, dx, alpha, beta, f_phi):
    """Time integrands tracked by the history at one instant.

    Fills ``f_phi`` with the per-node integrand of the representation
    potential and returns (B integrand, dissipation rate W). ``k`` and ``mu``
    are the right-hand side and chemical potential at ``y``.
    """
    m = y.shape[1]
    eta = np.empty(m)
    kap = np.empty(m)
    for i in range(m):
        eta[i] = power(y[2, i], alpha)
        kap[i] = power(y[3, i], beta)
    return integrands_coef(y, k, mu, eta, kap, dx, alpha, f_phi)


@njit(cache=True, error_model="numpy", fastmath=FAST)
def integrands_coef(y, k, mu, eta, kap, dx, alpha, f_phi):
    """``integrands`` with nodal eta(chi) and kappa(theta) supplied."""
    v = y[0]
    u = y[1]
    chi = y[2]
    th = y[3]
    chit = k[2]
    ux = k[0]
    n = v.shape[0] - 1
    h2 = 0.5 / dx

    b_int = 0.0
    w_int = 0.0
    cum = 0.0
    g_prev = 0.0
    for i in range(n + 1):
        if i == 0 or i == n:
            cx = 0.0
            tx = 0.0
        else:
            cx = (chi[i + 1] - chi[i - 1]) * h2
            tx = (th[i + 1] - th[i - 1]) * h2
        iv = 1.0 / v[i]
        ith = 1.0 / th[i]
        ieta = 1.0 if alpha == 0.0 else 1.0 / eta[i]
        cap = 0.5 * cx * cx * iv
        if alpha == 0.0:
            g = 0.0
        else:
            # (1/eta)_t = -a1 chi_t, (1/eta)_x = -a1 chi_x, eta_x/eta = alpha chi_x/chi
            a1 = alpha * ieta / chi[i]
            g = (a1 * (u[i] * chit[i] + (th[i] + cap) * iv * cx)
                 - alpha * cx / chi[i] * ux[i] * iv)
        if i > 0:
            cum += 0.5 * dx * (g_prev + g)
        g_prev = g
        f_phi[i] = ux[i] * iv - (th[i] + cap) * iv * ieta - cum

        wt = dx if 0 < i < n else 0.5 * dx
        b_int += wt * ((th[i] + u[i] * u[i] + cap) * ieta)
        w_int += wt * ith * iv * (kap[i] * tx * tx * ith
                                  + ux[i] * ux[i] / ieta + v[i] * v[i] * mu[i] * mu[i])
    return b_int, w_int


@njit(cache=True, error_model="numpy")
def integrate(y, t, t_target, dt_cur, dx, alpha, beta, cfl, floors,
              acc_phi, acc, f_phi, f_scal, counters):
    """Advance ``y`` in place from ``t`` to exactly ``t_target``.

    ``acc_phi`` / ``acc`` (B, W) are running trapezoid accumulators and
    ``f_phi`` / ``f_scal`` the matching integrands at the current time; all
    are updated in place. ``counters`` = [accepted, rejected].
    Returns (t, dt_cur, status, node).
    """
    m = y.shape[1]
    k = np.empty_like(y)
    mu = np.empty(m)
    out = np.empty_like(y)
    f_new = np.empty(m)
    work = np.empty((5, 4, m))
    scratch = np.empty((5, m))
    # rhs work rows at the accepted state; rows 3 and 4 hold eta and kappa
    coef = np.empty((5, m))

    rhs(y[0], y[1], y[2], y[3], dx, alpha, beta, k[0], k[1], k[2], k[3], mu, coef)
    while t < t_target:
        dt_lim = stable_dt_coef(y[0], coef[3], coef[4], dx, cfl)
        if dt_cur > dt_lim:
            dt_cur = dt_lim
        dt = dt_cur
        last = False
        if t + dt >= t_target:
            dt = t_target - t
            last = True
        st, node = rk4_step(y, k, dt, dx, alpha, beta, floors, out, work, scratch)
        if st != OK:
            counters[1] += 1
            dt_cur = 0.5 * dt
            if dt_cur < DT_MIN:
                return t, dt_cur, DT_UNDERFLOW, node
            continue

        for r in range(4):
            for i in range(m):
                y[r, i] = out[r, i]
        t = t_target if last else t + dt
        counters[0] += 1
        dt_cur = 1.1 * dt_cur

        rhs(y[0], y[1], y[2], y[3], dx, alpha, beta, k[0], k[1], k[2], k[3], mu, coef)
        b_new, w_new = integrands_coef(y, k, mu, coef[3], coef[4], dx, alpha, f_new)
        h = 0.5 * dt
        for i in range(m):
            acc_phi[i] += h * (f_phi[i] + f_new[i])
            f_phi[i] = f_new[i]
        acc[0] += h * (f_scal[0] + b_new)
        acc[1] += h * (f_scal[1] + w_new)
        f_scal[0] = b_new
        f_scal[1] = w_new
    return t, dt_cur, OK, -1
