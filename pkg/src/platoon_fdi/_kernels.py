"""Numba kernels for the platoon and driver integrators.

Everything here works on flat float64 arrays so the same code path serves a
single run and the hypothesis bank of the identifier.
"""

import numpy as np
from numba import njit

PF = 0
SB = 1


@njit(cache=True)
def driver_derivative(x1, x2, u, a0, a1):
    return x2, -a0 * x1 - a1 * x2 + u


@njit(cache=True)
def driver_advance(x1, x2, u, a0, a1, dt):
    """One RK4 step of the driver's controllable-canonical state, input held."""
    k1a, k1b = driver_derivative(x1, x2, u, a0, a1)
    k2a, k2b = driver_derivative(x1 + 0.5 * dt * k1a, x2 + 0.5 * dt * k1b, u, a0, a1)
    k3a, k3b = driver_derivative(x1 + 0.5 * dt * k2a, x2 + 0.5 * dt * k2b, u, a0, a1)
    k4a, k4b = driver_derivative(x1 + dt * k3a, x2 + dt * k3b, u, a0, a1)
    x1n = x1 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    x2n = x2 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
    return x1n, x2n


@njit(cache=True)
def _autonomous_controls(e, ed, k0, b0, arch, u):
    n = e.shape[0]
    for i in range(n):
        front = e[i - 1] if i > 0 else 0.0
        front_d = ed[i - 1] if i > 0 else 0.0
        u[i] = -k0 * (e[i] - front) - b0 * (ed[i] - front_d)
        if arch == SB and i < n - 1:
            u[i] += -k0 * (e[i] - e[i + 1]) - b0 * (ed[i] - ed[i + 1])


@njit(cache=True)
def simulate_platoon(p_init, v_init, ref_p, ref_v, offsets, k0, b0, arch,
                     w, fault_k, fault_step, a_saf, drv, delay, sever_both,
                     start, stop, dt):
    """Integrate the platoon from step ``start`` to ``stop`` inclusive.

    ``ref_p``/``ref_v`` hold the virtual leader at absolute step indices;
    ``offsets`` are cumulative desired gaps. ``fault_k`` is zero-based, or -1
    for no fault. ``drv`` = (c0, c1, a0, a1) of the driver realization.
    Controls are computed from the state at each step start and held.
    """
    n = p_init.shape[0]
    steps = stop - start + 1
    P = np.empty((steps, n))
    V = np.empty((steps, n))
    U = np.empty((steps, n))
    p = p_init.copy()
    v = v_init.copy()
    e = np.empty(n)
    ed = np.empty(n)
    u = np.empty(n)
    x1 = 0.0
    x2 = 0.0
    buf = np.zeros(max(delay, 1))
    head = 0
    c0, c1, a0, a1 = drv[0], drv[1], drv[2], drv[3]
    for j in range(steps):
        idx = start + j
        for i in range(n):
            e[i] = p[i] - (ref_p[idx] - offsets[i])
            ed[i] = v[i] - ref_v[idx]
        faulted = fault_k >= 0 and idx >= fault_step
        if faulted and sever_both and arch == SB and fault_k > 0:
            # vehicle k-1 loses its follower term as well
            _autonomous_controls(e, ed, k0, b0, arch, u)
            km = fault_k - 1
            u[km] += k0 * (e[km] - e[fault_k]) + b0 * (ed[km] - ed[fault_k])
        else:
            _autonomous_controls(e, ed, k0, b0, arch, u)
        drv_in = 0.0
        if faulted:
            front_v = v[fault_k - 1] if fault_k > 0 else ref_v[idx]
            rel = front_v - v[fault_k]
            if delay > 0:
                drv_in = buf[head]
                buf[head] = rel
                head = (head + 1) % delay
            else:
                drv_in = rel
            u[fault_k] = c0 * x1 + c1 * x2 - a_saf
        for i in range(n):
            P[j, i] = p[i]
            V[j, i] = v[i]
            U[j, i] = u[i]
        if j == steps - 1:
            break
        for i in range(n):
            acc = u[i] + w[idx, i]
            # RK4 on (p, v) with constant acceleration reduces to this exactly
            p[i] = p[i] + dt * v[i] + 0.5 * dt * dt * acc
            v[i] = v[i] + dt * acc
        if faulted:
            x1, x2 = driver_advance(x1, x2, drv_in, a0, a1, dt)
    return P, V, U


@njit(cache=True)
def head_response(forcing, drv, delay, dt):
    """Deviation of a taken-over vehicle whose predecessor holds its nominal path.

    Solves d'' = forcing - G_h[d'] with the same discretization as
    ``simulate_platoon`` (driver input is the relative-velocity deviation -d').
    """
    steps = forcing.shape[0]
    out = np.empty(steps)
    d = 0.0
    dv = 0.0
    x1 = 0.0
    x2 = 0.0
    buf = np.zeros(max(delay, 1))
    head = 0
    c0, c1, a0, a1 = drv[0], drv[1], drv[2], drv[3]
    for j in range(steps):
        rel = -dv
        if delay > 0:
            drv_in = buf[head]
            buf[head] = rel
            head = (head + 1) % delay
        else:
            drv_in = rel
        acc = c0 * x1 + c1 * x2 + forcing[j]
        out[j] = d
        d = d + dt * dv + 0.5 * dt * dt * acc
        dv = dv + dt * acc
        x1, x2 = driver_advance(x1, x2, drv_in, a0, a1, dt)
    return out


@njit(cache=True)
def linear_response(phi, gam, C, D, u):
    """Zero-state response of ``x+ = phi x + gam u``, ``y = C x + D u``."""
    n = phi.shape[0]
    out = np.empty(u.shape[0])
    x = np.zeros(n)
    xn = np.empty(n)
    for j in range(u.shape[0]):
        acc = D * u[j]
        for i in range(n):
            acc += C[i] * x[i]
        out[j] = acc
        for i in range(n):
            s = gam[i] * u[j]
            for l in range(n):
                s += phi[i, l] * x[l]
            xn[i] = s
        x[:] = xn
    return out
