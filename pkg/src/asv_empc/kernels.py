"""Flat-array kernels for the prediction model and the MPC objectives.

Everything here works on float64 arrays and scalars so the same source runs
under numba or as plain Python. Layouts:

``par``  : m11, m22, m33, Xu, Yv, Nr, l, T_max, T_min, alpha, T_w
``state``: u, v, r, x, y, psi
``geo``  : x_prev, y_prev, x_active, y_active, r_coa
``cfg``  : dt, n, y_weight, penalty_weight, u_floor, sinc_eps
``z``    : T1_0, T2_0, ..., T1_{H-1}, T2_{H-1}, t_d, t_s   (EMPC)
           T1_0, T2_0, ..., T1_{H-1}, T2_{H-1}             (NMPC)

Breakdown vector written by :func:`empc_terms`:
stage, E_d, E_s, Y, penalty, time-split residual.
"""

import math

import numpy as np

from ._jit import njit

P_M11, P_M22, P_M33, P_XU, P_YV, P_NR, P_L, P_TMAX, P_TMIN, P_ALPHA, P_TW = range(11)
N_PAR = 11

C_DT, C_N, C_YW, C_PEN, C_UFLOOR, C_SINC = range(6)
N_CFG = 6

B_STAGE, B_ED, B_ES, B_Y, B_PEN, B_RES = range(6)
N_BREAKDOWN = 6

TWO_PI = 2.0 * math.pi


@njit
def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


@njit
def sinc(x, eps):
    if abs(x) < eps:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return math.sin(x) / x


@njit
def derivative(s, t1, t2, fu, fv, mr, par, out):
    u = s[0]
    v = s[1]
    r = s[2]
    psi = s[5]
    m11 = par[P_M11]
    m22 = par[P_M22]
    m33 = par[P_M33]
    out[0] = (t1 + t2 + m22 * v * r - par[P_XU] * u + fu) / m11
    out[1] = (-m11 * u * r - par[P_YV] * v + fv) / m22
    out[2] = ((t1 - t2) * par[P_L] - (m22 - m11) * u * v - par[P_NR] * r + mr) / m33
    c = math.cos(psi)
    sn = math.sin(psi)
    out[3] = c * u - sn * v
    out[4] = sn * u + c * v
    out[5] = r


@njit
def rk4_step(s, t1, t2, fu, fv, mr, dt, par, out):
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    derivative(s, t1, t2, fu, fv, mr, par, k1)
    for i in range(6):
        tmp[i] = s[i] + 0.5 * dt * k1[i]
    derivative(tmp, t1, t2, fu, fv, mr, par, k2)
    for i in range(6):
        tmp[i] = s[i] + 0.5 * dt * k2[i]
    derivative(tmp, t1, t2, fu, fv, mr, par, k3)
    for i in range(6):
        tmp[i] = s[i] + dt * k3[i]
    derivative(tmp, t1, t2, fu, fv, mr, par, k4)
    for i in range(6):
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit
def rollout(x0, z, wrench, dt, par, start, states):
    """Propagate rows ``start..H`` of ``states``; row ``start`` must already be filled.

    When ``start == 0`` row 0 is set from ``x0``.
    """
    horizon = states.shape[0] - 1
    if start == 0:
        for i in range(6):
            states[0, i] = x0[i]
    nxt = np.empty(6)
    for k in range(start, horizon):
        rk4_step(states[k], z[2 * k], z[2 * k + 1], wrench[0], wrench[1], wrench[2], dt, par, nxt)
        for i in range(6):
            states[k + 1, i] = nxt[i]


@njit
def thruster_pair_power(t1, t2, alpha):
    return alpha * (t1 * t1 + t2 * t2)


@njit
def turn_state_power(u, r, rdot, par):
    """Thruster power (no task power) of the inverse-dynamics thrust at (u, r, rdot)."""
    s = par[P_XU] * u
    d = (par[P_M33] * rdot + par[P_NR] * r) / par[P_L]
    t1 = 0.5 * (s + d)
    t2 = 0.5 * (s - d)
    return par[P_ALPHA] * (t1 * t1 + t2 * t2)


@njit
def dynamic_mode_power(u, r_h, psi_d, t_d, n, par):
    r_max = 2.0 * psi_d / t_d - r_h / n
    a1 = n * (r_max - r_h) / t_d
    a2 = -n * r_max / ((n - 1.0) * t_d)
    p0 = turn_state_power(u, r_h, a1, par)
    p1 = turn_state_power(u, r_max, a1, par)
    p2 = turn_state_power(u, r_max, a2, par)
    p3 = turn_state_power(u, 0.0, a2, par)
    return par[P_TW] + 0.5 * (p0 + p1) / n + 0.5 * (n - 1.0) * (p2 + p3) / n


@njit
def gated_cross_track(x, y, geo):
    xp = geo[0]
    yp = geo[1]
    xa = geo[2]
    ya = geo[3]
    r_f = min(math.hypot(x - xa, y - ya), math.hypot(x - xp, y - yp))
    if r_f <= geo[4]:
        return 0.0
    dx = xa - xp
    dy = ya - yp
    seg = math.hypot(dx, dy)
    if seg < 1e-12:
        return 0.0
    return abs(dx * (y - yp) - dy * (x - xp)) / seg


@njit
def terminal_terms(s_h, t_d, t_s, par, geo, cfg, out):
    """Fill E_d, E_s, Y and the time-split residual of ``out`` from the terminal state."""
    u = s_h[0]
    v = s_h[1]
    r = s_h[2]
    x = s_h[3]
    y = s_h[4]
    psi = s_h[5]
    dx = geo[2] - x
    dy = geo[3] - y
    dpsi = wrap_angle(math.atan2(dy, dx) - math.atan2(v, u) - psi)
    alpha = par[P_ALPHA]
    xu = par[P_XU]
    p_sur = 2.0 * alpha * (0.5 * xu * u) ** 2
    p_s = p_sur + par[P_TW]
    p_d = dynamic_mode_power(u, r, dpsi, t_d, cfg[C_N], par)
    e = gated_cross_track(x, y, geo)
    out[B_ED] = p_d * t_d
    out[B_ES] = p_s * t_s
    # e / u * P_sur written without the division so trial points with u <= 0 stay finite
    out[B_Y] = cfg[C_YW] * e * 0.5 * alpha * xu * xu * u
    out[B_RES] = u * (t_d * sinc(dpsi, cfg[C_SINC]) + t_s) - math.hypot(dx, dy)


@njit
def stage_and_penalty(z, states, par, cfg, out):
    horizon = states.shape[0] - 1
    dt = cfg[C_DT]
    alpha = par[P_ALPHA]
    stage = 0.0
    for k in range(horizon):
        stage += (thruster_pair_power(z[2 * k], z[2 * k + 1], alpha) + par[P_TW]) * dt
    pen = 0.0
    floor = cfg[C_UFLOOR]
    for k in range(1, horizon + 1):
        gap = floor - states[k, 0]
        if gap > 0.0:
            pen += gap * gap
    out[B_STAGE] = stage
    out[B_PEN] = cfg[C_PEN] * pen


@njit
def empc_terms(z, x0, wrench, par, geo, cfg, states, out):
    """Roll out the horizon into ``states`` and write the cost breakdown into ``out``."""
    horizon = states.shape[0] - 1
    rollout(x0, z, wrench, cfg[C_DT], par, 0, states)
    stage_and_penalty(z, states, par, cfg, out)
    terminal_terms(states[horizon], z[2 * horizon], z[2 * horizon + 1], par, geo, cfg, out)


@njit
def breakdown_objective(b):
    return b[B_STAGE] + b[B_ED] + b[B_ES] + b[B_Y] + b[B_PEN]


@njit
def empc_value(z, x0, wrench, par, geo, cfg, horizon):
    states = np.empty((horizon + 1, 6))
    b = np.empty(N_BREAKDOWN)
    empc_terms(z, x0, wrench, par, geo, cfg, states, b)
    return breakdown_objective(b), b[B_RES]


@njit
def _empc_partial(z, x0, wrench, par, geo, cfg, nominal, work, first_step, b):
    horizon = nominal.shape[0] - 1
    for k in range(first_step + 1):
        for i in range(6):
            work[k, i] = nominal[k, i]
    rollout(x0, z, wrench, cfg[C_DT], par, first_step, work)
    stage_and_penalty(z, work, par, cfg, b)
    terminal_terms(work[horizon], z[2 * horizon], z[2 * horizon + 1], par, geo, cfg, b)
    return breakdown_objective(b), b[B_RES]


@njit
def empc_fd(z, x0, wrench, par, geo, cfg, h_rel, grad, jac):
    """Objective and residual at ``z`` plus central-difference gradient and Jacobian row.

    Perturbing thrust step k only re-integrates the horizon from k on.
    """
    dim = z.shape[0]
    horizon = (dim - 2) // 2
    nominal = np.empty((horizon + 1, 6))
    work = np.empty((horizon + 1, 6))
    b = np.empty(N_BREAKDOWN)
    empc_terms(z, x0, wrench, par, geo, cfg, nominal, b)
    f0 = breakdown_objective(b)
    c0 = b[B_RES]
    zp = z.copy()
    for j in range(dim):
        h = h_rel * (1.0 + abs(z[j]))
        first = j // 2 if j < 2 * horizon else horizon
        zp[j] = z[j] + h
        fp, cp = _empc_partial(zp, x0, wrench, par, geo, cfg, nominal, work, first, b)
        zp[j] = z[j] - h
        fm, cm = _empc_partial(zp, x0, wrench, par, geo, cfg, nominal, work, first, b)
        zp[j] = z[j]
        grad[j] = (fp - fm) / (2.0 * h)
        jac[j] = (cp - cm) / (2.0 * h)
    return f0, c0


@njit
def nmpc_value(z, x0, wrench, par, ref, qdiag, rdiag, dt):
    horizon = ref.shape[0]
    states = np.empty((horizon + 1, 6))
    rollout(x0, z, wrench, dt, par, 0, states)
    return _nmpc_cost(z, states, ref, qdiag, rdiag)


@njit
def _nmpc_cost(z, states, ref, qdiag, rdiag):
    horizon = ref.shape[0]
    cost = 0.0
    for k in range(horizon):
        for i in range(5):
            d = states[k + 1, i] - ref[k, i]
            cost += qdiag[i] * d * d
        d = wrap_angle(states[k + 1, 5] - ref[k, 5])
        cost += qdiag[5] * d * d
        cost += rdiag[0] * z[2 * k] * z[2 * k] + rdiag[1] * z[2 * k + 1] * z[2 * k + 1]
    return cost


@njit
def nmpc_fd(z, x0, wrench, par, ref, qdiag, rdiag, dt, h_rel, grad):
    dim = z.shape[0]
    horizon = dim // 2
    nominal = np.empty((horizon + 1, 6))
    work = np.empty((horizon + 1, 6))
    rollout(x0, z, wrench, dt, par, 0, nominal)
    f0 = _nmpc_cost(z, nominal, ref, qdiag, rdiag)
    zp = z.copy()
    for j in range(dim):
        h = h_rel * (1.0 + abs(z[j]))
        first = j // 2
        for k in range(first + 1):
            for i in range(6):
                work[k, i] = nominal[k, i]
        zp[j] = z[j] + h
        rollout(x0, zp, wrench, dt, par, first, work)
        fp = _nmpc_cost(zp, work, ref, qdiag, rdiag)
        zp[j] = z[j] - h
        rollout(x0, zp, wrench, dt, par, first, work)
        fm = _nmpc_cost(zp, work, ref, qdiag, rdiag)
        zp[j] = z[j]
        grad[j] = (fp - fm) / (2.0 * h)
    return f0
