"""Jitted stepping kernels.

Everything here is plain float64 arithmetic on preallocated arrays so numba
can compile it; the public modules wrap these cores with validated, typed
interfaces.  If numba is unavailable the decorators degrade to no-ops and
the cores still run (slowly) as pure Python.

Conventions shared by all finite-difference cores: nodal arrays include
both boundary nodes, interface j sits between nodes j and j+1 (j = 0..N),
every divergence term is an interface-flux difference, and nonlinear nodal
quantities are moved to interfaces by arithmetic averaging.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except Exception:  # pragma: no cover - numba is a hard dependency in practice
    def njit(*args, **kwargs):
        def deco(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return deco


# ---------------------------------------------------------------------------
# scalar family evaluators
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _phi_val(m: float, x: float) -> float:
    """Power law extended oddly to the negative axis."""
    if m == 1.0:
        return x
    if x == 0.0:
        return 0.0
    if x > 0.0:
        return x ** m
    return -((-x) ** m)


@njit(cache=True, inline="always")
def _sig_base(code: int, q: float, u: float) -> float:
    if code == 0:
        return 0.0
    if code == 1:
        return u ** q if u > 0.0 else 0.0
    return u / (1.0 + u) if u > 0.0 else 0.0


@njit(cache=True, inline="always")
def _sig_base_prime(code: int, q: float, u: float) -> float:
    if code == 0:
        return 0.0
    if code == 1:
        if u <= 0.0:
            return 0.0
        return q * u ** (q - 1.0)
    if u <= 0.0:
        return 0.0
    return 1.0 / ((1.0 + u) * (1.0 + u))


@njit(cache=True, inline="always")
def _cutoff(hi: float, x: float) -> float:
    """Smooth descent from 1 at x<=hi to 0 at x>=2*hi (hi=inf disables)."""
    if not math.isfinite(hi) or x <= hi:
        return 1.0
    t = (x - hi) / hi
    if t >= 1.0:
        return 0.0
    a = math.exp(-1.0 / (1.0 - t))
    b = math.exp(-1.0 / t)
    return a / (a + b)


@njit(cache=True, inline="always")
def _sig_val(code: int, q: float, lo: float, hi: float, mid_off: float,
             slope_lo: float, val_hi: float, slope_hi: float,
             tail_x: np.ndarray, tail_cum: np.ndarray, x: float) -> float:
    """Mollified (or plain, when lo=0 and hi=inf) diffusion coefficient."""
    if x <= 0.0 or code == 0:
        return 0.0
    if x <= lo:
        return slope_lo * x
    if x <= hi:
        return _sig_base(code, q, x) + mid_off
    xt = x if x < 2.0 * hi else 2.0 * hi
    n = tail_x.shape[0]
    dxt = (tail_x[n - 1] - tail_x[0]) / (n - 1)
    pos = (xt - tail_x[0]) / dxt
    i = int(pos)
    if i >= n - 1:
        return val_hi + slope_hi * tail_cum[n - 1]
    w = pos - i
    return val_hi + slope_hi * ((1.0 - w) * tail_cum[i] + w * tail_cum[i + 1])


@njit(cache=True, inline="always")
def _sig_prime(code: int, q: float, lo: float, hi: float, x: float) -> float:
    if x <= 0.0 or code == 0:
        return 0.0
    u = x
    if u < lo:
        u = lo
    if u > hi:
        u = hi
    return _sig_base_prime(code, q, u) * _cutoff(hi, x)


# ---------------------------------------------------------------------------
# one conservative finite-difference step
# ---------------------------------------------------------------------------

@njit(cache=True)
def flux_form_step(rho, w_nodal, g_nodal, dt, h, m_exp, alpha, nu_a,
                   eps, sqrt_eps, F1, F2,
                   scode, sq, slo, shi, smid, sslope_lo, sval_hi, sslope_hi,
                   stail_x, stail_cum,
                   has_noise, has_correction, has_control,
                   g_total_out):
    """Advance ``rho`` in place by one explicit step of the conservative
    scheme and record the accumulated interface fluxes.

    g_total_out (N+1 entries) receives the *time-integrated* total flux at
    each interface, so the discrete mass identity reads
        h * sum_i (rho_new_i - rho_i)  =  g_total_out[N] - g_total_out[0].
    Returns 0 on success, 1 on a non-finite update.
    """
    n_nodes = rho.shape[0]
    n_int = n_nodes - 2
    inv_h = 1.0 / h

    # nodal quantities
    for j in range(n_nodes - 1):
        rl = rho[j]
        rr = rho[j + 1]
        # diffusive + viscous flux
        g = (_phi_val(m_exp, rr) - _phi_val(m_exp, rl)) * inv_h
        g += alpha * (rr - rl) * inv_h
        # transport
        g -= 0.5 * nu_a * (rl + rr)
        sl = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                      sslope_hi, stail_x, stail_cum, rl)
        sr = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                      sslope_hi, stail_x, stail_cum, rr)
        sbar = 0.5 * (sl + sr)
        if has_correction:
            spl = _sig_prime(scode, sq, slo, shi, rl)
            spr = _sig_prime(scode, sq, slo, shi, rr)
            c1 = 0.5 * (F1[j] * spl * spl + F1[j + 1] * spr * spr)
            c2 = 0.5 * (sl * spl * F2[j] + sr * spr * F2[j + 1])
            g += 0.5 * eps * (c1 * (rr - rl) * inv_h + c2)
        if has_control:
            g -= sbar * 0.5 * (g_nodal[j] + g_nodal[j + 1])
        total = dt * g
        if has_noise:
            total -= sqrt_eps * sbar * 0.5 * (w_nodal[j] + w_nodal[j + 1])
        g_total_out[j] = total

    ok = 0
    for i in range(1, n_int + 1):
        rho[i] = rho[i] + inv_h * (g_total_out[i] - g_total_out[i - 1])
        if not math.isfinite(rho[i]):
            ok = 1
    return ok


@njit(cache=True)
def spde_run(rho, rho_b, n_steps, dt, h, m_exp, alpha, nu_a, eps, sqrt_eps,
             E, dB, F1, F2,
             scode, sq, slo, shi, smid, sslope_lo, sval_hi, sslope_hi,
             stail_x, stail_cum,
             g_slabs, ctrl_steps_per_slab,
             save_every, frames, times, mass, has_correction):
    """Explicit trajectory of the conservative (stochastic) equation.

    rho: (N+2,) initial state including boundary entries (= rho_b).
    E:   (K, N+2) noise mode values; K may be zero.
    dB:  (n_steps, K) Brownian increments with variance dt.
    g_slabs: (n_slabs, N+2) control on the solver grid, piecewise constant
             over ``ctrl_steps_per_slab`` steps; n_slabs = 0 disables it.
    frames/times/mass: outputs, frame 0 is the initial state.

    Returns (status, bad_step, run_min, run_max) where status 1 flags the
    first non-finite step.
    """
    n_nodes = rho.shape[0]
    K = E.shape[0]
    has_noise = K > 0
    has_control = g_slabs.shape[0] > 0

    w_nodal = np.zeros(n_nodes)
    g_nodal = np.zeros(n_nodes)
    g_total = np.zeros(n_nodes - 1)

    frames[0, :] = rho
    times[0] = 0.0
    acc = 0.0
    for i in range(1, n_nodes - 1):
        acc += rho[i]
    mass[0] = acc * h

    run_min = 1e300
    run_max = -1e300
    for i in range(1, n_nodes - 1):
        if rho[i] < run_min:
            run_min = rho[i]
        if rho[i] > run_max:
            run_max = rho[i]

    frame = 1
    for step in range(n_steps):
        if has_noise:
            for i in range(n_nodes):
                acc = 0.0
                for k in range(K):
                    acc += dB[step, k] * E[k, i]
                w_nodal[i] = acc
        if has_control:
            slab = step // ctrl_steps_per_slab
            if slab >= g_slabs.shape[0]:
                slab = g_slabs.shape[0] - 1
            for i in range(n_nodes):
                g_nodal[i] = g_slabs[slab, i]

        bad = flux_form_step(rho, w_nodal, g_nodal, dt, h, m_exp, alpha, nu_a,
                             eps, sqrt_eps, F1, F2,
                             scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                             sslope_hi, stail_x, stail_cum,
                             has_noise, has_correction, has_control, g_total)
        if bad != 0:
            return 1, step, run_min, run_max

        rho[0] = rho_b
        rho[n_nodes - 1] = rho_b

        for i in range(1, n_nodes - 1):
            if rho[i] < run_min:
                run_min = rho[i]
            if rho[i] > run_max:
                run_max = rho[i]

        if (step + 1) % save_every == 0 and frame < frames.shape[0]:
            frames[frame, :] = rho
            times[frame] = (step + 1) * dt
            acc = 0.0
            for i in range(1, n_nodes - 1):
                acc += rho[i]
            mass[frame] = acc * h
            frame += 1

    return 0, -1, run_min, run_max


@njit(cache=True)
def heun_stratonovich_run(rho, rho_b, n_steps, dt, h, m_exp, alpha, nu_a,
                          sqrt_eps, E, dB,
                          scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                          sslope_hi, stail_x, stail_cum):
    """Diagnostic midpoint (Heun) integrator for the Stratonovich form:
    no correction drift, the noise coefficient is averaged between the
    predictor and the corrector.  Returns (status, final state)."""
    n_nodes = rho.shape[0]
    K = E.shape[0]
    inv_h = 1.0 / h
    w_nodal = np.zeros(n_nodes)
    pred = np.zeros(n_nodes)
    det_flux = np.zeros(n_nodes - 1)
    sto_flux = np.zeros(n_nodes - 1)

    for step in range(n_steps):
        for i in range(n_nodes):
            acc = 0.0
            for k in range(K):
                acc += dB[step, k] * E[k, i]
            w_nodal[i] = acc

        for j in range(n_nodes - 1):
            rl, rr = rho[j], rho[j + 1]
            g = (_phi_val(m_exp, rr) - _phi_val(m_exp, rl)) * inv_h
            g += alpha * (rr - rl) * inv_h - 0.5 * nu_a * (rl + rr)
            det_flux[j] = dt * g
            sl = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                          sslope_hi, stail_x, stail_cum, rl)
            sr = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                          sslope_hi, stail_x, stail_cum, rr)
            sto_flux[j] = -sqrt_eps * 0.5 * (sl + sr) * 0.5 * (w_nodal[j] + w_nodal[j + 1])

        pred[0] = rho_b
        pred[n_nodes - 1] = rho_b
        for i in range(1, n_nodes - 1):
            pred[i] = rho[i] + inv_h * (det_flux[i] - det_flux[i - 1]
                                        + sto_flux[i] - sto_flux[i - 1])
            if not math.isfinite(pred[i]):
                return 1, rho

        for j in range(n_nodes - 1):
            rl, rr = pred[j], pred[j + 1]
            sl = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                          sslope_hi, stail_x, stail_cum, rl)
            sr = _sig_val(scode, sq, slo, shi, smid, sslope_lo, sval_hi,
                          sslope_hi, stail_x, stail_cum, rr)
            half = -sqrt_eps * 0.5 * (sl + sr) * 0.5 * (w_nodal[j] + w_nodal[j + 1])
            sto_flux[j] = 0.5 * (sto_flux[j] + half)

        for i in range(1, n_nodes - 1):
            rho[i] = rho[i] + inv_h * (det_flux[i] - det_flux[i - 1]
                                       + sto_flux[i] - sto_flux[i - 1])
            if not math.isfinite(rho[i]):
                return 1, rho
        rho[0] = rho_b
        rho[n_nodes - 1] = rho_b
    return 0, rho


# ---------------------------------------------------------------------------
# spectral Galerkin path of the linear fluctuation equation
# ---------------------------------------------------------------------------

@njit(cache=True)
def linear_run(A, B, n_steps, dt, dB, save_every, frames):
    """Euler-Maruyama for dv = A v dt + B dW, zero initial data.

    A: (K, K); B: (K, Kd); dB: (n_steps, Kd); frames: (n_frames, K) with
    frame 0 left at zero (the initial state).
    """
    K = A.shape[0]
    Kd = B.shape[1]
    v = np.zeros(K)
    new = np.zeros(K)
    frame = 1
    for step in range(n_steps):
        for i in range(K):
            acc = v[i]
            for j in range(K):
                acc += dt * A[i, j] * v[j]
            for j in range(Kd):
                acc += B[i, j] * dB[step, j]
            new[i] = acc
        for i in range(K):
            v[i] = new[i]
        if (step + 1) % save_every == 0 and frame < frames.shape[0]:
            for i in range(K):
                frames[frame, i] = v[i]
            frame += 1
    return frames


# ---------------------------------------------------------------------------
# zero range process: continuous-time kinetic Monte Carlo
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _fenwick_add(tree, i, delta):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True, inline="always")
def _fenwick_total(tree):
    n = tree.shape[0] - 1
    acc = 0.0
    j = n
    while j > 0:
        acc += tree[j]
        j -= j & (-j)
    return acc


@njit(cache=True, inline="always")
def _fenwick_search(tree, value):
    """Smallest index i with prefix_sum(0..i) > value."""
    n = tree.shape[0] - 1
    pos = 0
    bit = 1
    while bit * 2 <= n:
        bit *= 2
    rem = value
    while bit > 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] <= rem:
            rem -= tree[nxt]
            pos = nxt
        bit //= 2
    return pos  # 0-based site index


@njit(cache=True)
def zrp_run(eta, r_table, inj_left, inj_right, t_end, snap_times, snaps,
            periodic, occupancy_cap, seed):
    """Exact event-driven trajectory of the zero range process.

    eta: (N,) int64 occupancies, modified in place.
    r_table: jump rate by occupancy, r_table[0] = 0.
    snap_times: increasing microscopic times; snaps (n_snap, N) filled with
    the state *at* each snapshot time.
    Returns (status, n_bulk, n_absorbed, n_injected) with status 1 when the
    occupancy cap is exceeded (rate table overflow).
    """
    np.random.seed(seed)
    n = eta.shape[0]
    tree = np.zeros(n + 1)
    for x in range(n):
        if eta[x] > occupancy_cap:
            return 1, 0, 0, 0
        _fenwick_add(tree, x, r_table[eta[x]])

    n_bulk = 0
    n_abs = 0
    n_inj = 0
    t = 0.0
    snap_i = 0
    n_snap = snap_times.shape[0]

    while True:
        site_total = _fenwick_total(tree)
        r_tot = site_total + inj_left + inj_right
        if r_tot <= 0.0:
            t_next = t_end
        else:
            u = np.random.random()
            while u <= 0.0:
                u = np.random.random()
            t_next = t + (-math.log(u) / r_tot)

        # the state is constant on [t, t_next): record every snapshot due
        t_record = t_next if t_next < t_end else t_end
        while snap_i < n_snap and snap_times[snap_i] <= t_record:
            for x in range(n):
                snaps[snap_i, x] = eta[x]
            snap_i += 1
        if t_next >= t_end:
            while snap_i < n_snap:  # trailing snapshots at the horizon
                for x in range(n):
                    snaps[snap_i, x] = eta[x]
                snap_i += 1
            return 0, n_bulk, n_abs, n_inj
        t = t_next

        u2 = np.random.random() * r_tot
        if u2 < inj_left:
            x = 0
            eta[x] += 1
            if eta[x] > occupancy_cap:
                return 1, n_bulk, n_abs, n_inj
            _fenwick_add(tree, x, r_table[eta[x]] - r_table[eta[x] - 1])
            n_inj += 1
        elif u2 < inj_left + inj_right:
            x = n - 1
            eta[x] += 1
            if eta[x] > occupancy_cap:
                return 1, n_bulk, n_abs, n_inj
            _fenwick_add(tree, x, r_table[eta[x]] - r_table[eta[x] - 1])
            n_inj += 1
        else:
            v = u2 - inj_left - inj_right
            if v >= site_total:
                v = site_total * (1.0 - 1e-16)
            x = _fenwick_search(tree, v)
            step = 1 if np.random.random() < 0.5 else -1
            tgt = x + step
            eta[x] -= 1
            _fenwick_add(tree, x, r_table[eta[x]] - r_table[eta[x] + 1])
            if tgt < 0 or tgt >= n:
                if periodic:
                    tgt = tgt % n
                    eta[tgt] += 1
                    if eta[tgt] > occupancy_cap:
                        return 1, n_bulk, n_abs, n_inj
                    _fenwick_add(tree, tgt, r_table[eta[tgt]] - r_table[eta[tgt] - 1])
                    n_bulk += 1
                else:
                    n_abs += 1
            else:
                eta[tgt] += 1
                if eta[tgt] > occupancy_cap:
                    return 1, n_bulk, n_abs, n_inj
                _fenwick_add(tree, tgt, r_table[eta[tgt]] - r_table[eta[tgt] - 1])
                n_bulk += 1
