"""Compiled fixed-step integration kernel.

One step = one controller sample (zero-order-held converter voltage)
followed by one classical RK4 advance of the plant ODEs.  The controller
arithmetic here mirrors ``blocks``/``control`` operation-for-operation so
that a pure-Python replay of recorded measurements reproduces the
recorded controller outputs bit-exactly.

Node indexing inside the kernel: DER terminals are ``0..nd-1``, the PCC
is node ``nd``.  State vector: ``[i_l x nd, v_t x nd, i_line x nl,
v_pcc]``.

Recorded channel ids (per DER ``d``): ``7*d + {0: v_t, 1: i_l,
2: i_out, 3: p_inst, 4: p_filtered, 5: e_ref, 6: v_ref}``; then ``7*nd +
j`` for line ``j`` current, then ``i_1phi``, ``i_cpl``, ``pcc.v``.
"""

import math

import numpy as np
from numba import njit

MODE_VCM = 0
MODE_CCM = 1
MODE_HCM = 2

INJ_NONE = 0
INJ_VREF = 1
INJ_IREFH = 2

STATUS_OK = 0
STATUS_COLLAPSE = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def _derivatives(t, y, e_cmd,
                 lf, ct, line_r, line_l, line_a, line_b,
                 cpcc, cpl_power, v_floor,
                 h_idc, h_ih, h_w, h_phase, h_node,
                 dy):
    nd = lf.shape[0]
    nl = line_r.shape[0]
    i1phi = 0.0
    if h_node >= 0:
        i1phi = h_idc + h_ih * math.sin(h_w * t + h_phase)
    for d in range(nd):
        i_out = i1phi if d == h_node else 0.0
        for j in range(nl):
            if line_a[j] == d:
                i_out += y[2 * nd + j]
            elif line_b[j] == d:
                i_out -= y[2 * nd + j]
        dy[d] = (e_cmd[d] - y[nd + d]) / lf[d]
        dy[nd + d] = (y[d] - i_out) / ct[d]
    vp = y[2 * nd + nl]
    for j in range(nl):
        va = y[nd + line_a[j]] if line_a[j] < nd else vp
        vb = y[nd + line_b[j]] if line_b[j] < nd else vp
        dy[2 * nd + j] = (va - line_r[j] * y[2 * nd + j] - vb) / line_l[j]
    inflow = 0.0
    for j in range(nl):
        if line_b[j] == nd:
            inflow += y[2 * nd + j]
        elif line_a[j] == nd:
            inflow -= y[2 * nd + j]
    dy[2 * nd + nl] = (inflow - cpl_power / max(vp, v_floor)) / cpcc


@njit(cache=True)
def _controller_pass(t, dt, y,
                     lf, line_a, line_b, cpl_power, v_floor,
                     h_idc, h_ih, h_w, h_phase, h_node,
                     mode, vmax, slope, lpf_a,
                     pi_kp, pi_ki, pi_lo, pi_hi,
                     r_b0, r_a1, r_a2, p_kp, comp, i_lim, elim,
                     vref_frozen, vref_val,
                     inj_port, inj_der, inj_amp, inj_w, inj_t0,
                     lpf_s, pi_int, pi_eprev, r_s1, r_s2,
                     chan, e_cmd, advance):
    nd = lf.shape[0]
    nl = line_a.shape[0]
    i1phi = 0.0
    if h_node >= 0:
        i1phi = h_idc + h_ih * math.sin(h_w * t + h_phase)
    inj = 0.0
    if inj_port != INJ_NONE:
        if inj_w > 0.0:
            inj = inj_amp * math.sin(inj_w * (t - inj_t0))
        else:
            inj = inj_amp
    for d in range(nd):
        i_l = y[d]
        v_t = y[nd + d]
        i_out = i1phi if d == h_node else 0.0
        for j in range(nl):
            if line_a[j] == d:
                i_out += y[2 * nd + j]
            elif line_b[j] == d:
                i_out -= y[2 * nd + j]

        p = v_t * i_out
        a = lpf_a[d]
        p_filt = a * lpf_s[d] + (1.0 - a) * p
        if advance:
            lpf_s[d] = p_filt
        if vref_frozen[d]:
            v_ref = vref_val[d]
        else:
            v_ref = vmax[d] - slope[d] * p_filt
        if inj_port == INJ_VREF and d == inj_der:
            v_ref = v_ref + inj

        if mode[d] != MODE_CCM:
            err = v_ref - v_t
            raw = pi_kp[d] * err + pi_int[d]
            out_pi = min(max(raw, pi_lo[d]), pi_hi[d])
            if advance:
                delta = 0.5 * pi_ki[d] * (err + pi_eprev[d]) * dt
                if (raw > pi_hi[d] and delta > 0.0) or (raw < pi_lo[d] and delta < 0.0):
                    delta = 0.0
                pi_int[d] = min(max(pi_int[d] + delta, pi_lo[d]), pi_hi[d])
                pi_eprev[d] = err
        else:
            out_pi = 0.0

        if mode[d] != MODE_VCM:
            target = comp[d] * (i1phi if d == h_node else 0.0)
            if inj_port == INJ_IREFH and d == inj_der:
                target = target + inj
            err_r = target - i_out
            yr = r_b0[d] * err_r + r_s1[d]
            if advance:
                r_s1[d] = r_s2[d] - r_a1[d] * yr
                r_s2[d] = -r_b0[d] * err_r - r_a2[d] * yr
            out_r = yr
        else:
            out_r = 0.0

        i_l_ref = min(max(out_pi + out_r, -i_lim[d]), i_lim[d])
        e_ref = v_t + p_kp[d] * (i_l_ref - i_l)
        e_cmd[d] = min(max(e_ref, -elim[d]), elim[d])

        base = 7 * d
        chan[base] = v_t
        chan[base + 1] = i_l
        chan[base + 2] = i_out
        chan[base + 3] = p
        chan[base + 4] = p_filt
        chan[base + 5] = e_ref
        chan[base + 6] = v_ref
    for j in range(nl):
        chan[7 * nd + j] = y[2 * nd + j]
    vp = y[2 * nd + nl]
    chan[7 * nd + nl] = i1phi
    chan[7 * nd + nl + 1] = cpl_power / max(vp, v_floor)
    chan[7 * nd + nl + 2] = vp


@njit(cache=True)
def run_chunk(t0, dt, nsteps, gstep0,
              lf, ct, elim, line_r, line_l, line_a, line_b,
              cpcc, cpl_power, v_floor,
              h_idc, h_ih, h_w, h_phase, h_node,
              mode, vmax, slope, lpf_a,
              pi_kp, pi_ki, pi_lo, pi_hi,
              r_b0, r_a1, r_a2, p_kp, comp, i_lim,
              vref_frozen, vref_val,
              inj_port, inj_der, inj_amp, inj_w, inj_t0,
              y, lpf_s, pi_int, pi_eprev, r_s1, r_s2,
              rec, rec_cols, rec_dec, rec_row0, record_final):
    """Advance ``nsteps`` fixed steps; returns (status, where, step, rec_row).

    ``status``: 0 ok, 1 voltage collapse (``where`` = node index, pcc =
    nd), 2 non-finite state (``where`` = state index).  Recording happens
    whenever the global step index is a multiple of ``rec_dec`` (> 0).
    """
    nd = lf.shape[0]
    nl = line_r.shape[0]
    ny = y.shape[0]
    ncols = rec_cols.shape[0]
    k1 = np.empty(ny)
    k2 = np.empty(ny)
    k3 = np.empty(ny)
    k4 = np.empty(ny)
    ytmp = np.empty(ny)
    chan = np.empty(7 * nd + nl + 3)
    e_cmd = np.empty(nd)
    row = rec_row0

    for k in range(nsteps):
        t = t0 + k * dt
        for i in range(ny):
            if not np.isfinite(y[i]):
                return STATUS_NONFINITE, i, k, row
        for d in range(nd):
            if y[nd + d] <= v_floor:
                return STATUS_COLLAPSE, d, k, row
        if y[ny - 1] <= v_floor:
            return STATUS_COLLAPSE, nd, k, row

        _controller_pass(t, dt, y,
                         lf, line_a, line_b, cpl_power, v_floor,
                         h_idc, h_ih, h_w, h_phase, h_node,
                         mode, vmax, slope, lpf_a,
                         pi_kp, pi_ki, pi_lo, pi_hi,
                         r_b0, r_a1, r_a2, p_kp, comp, i_lim, elim,
                         vref_frozen, vref_val,
                         inj_port, inj_der, inj_amp, inj_w, inj_t0,
                         lpf_s, pi_int, pi_eprev, r_s1, r_s2,
                         chan, e_cmd, True)

        if rec_dec > 0 and ((gstep0 + k) % rec_dec) == 0:
            for j in range(ncols):
                rec[row, j] = chan[rec_cols[j]]
            row += 1

        _derivatives(t, y, e_cmd, lf, ct, line_r, line_l, line_a, line_b,
                     cpcc, cpl_power, v_floor, h_idc, h_ih, h_w, h_phase, h_node, k1)
        for i in range(ny):
            ytmp[i] = y[i] + 0.5 * dt * k1[i]
        _derivatives(t + 0.5 * dt, ytmp, e_cmd, lf, ct, line_r, line_l, line_a, line_b,
                     cpcc, cpl_power, v_floor, h_idc, h_ih, h_w, h_phase, h_node, k2)
        for i in range(ny):
            ytmp[i] = y[i] + 0.5 * dt * k2[i]
        _derivatives(t + 0.5 * dt, ytmp, e_cmd, lf, ct, line_r, line_l, line_a, line_b,
                     cpcc, cpl_power, v_floor, h_idc, h_ih, h_w, h_phase, h_node, k3)
        for i in range(ny):
            ytmp[i] = y[i] + dt * k3[i]
        _derivatives(t + dt, ytmp, e_cmd, lf, ct, line_r, line_l, line_a, line_b,
                     cpcc, cpl_power, v_floor, h_idc, h_ih, h_w, h_phase, h_node, k4)
        for i in range(ny):
            y[i] += (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])

    if record_final:
        t = t0 + nsteps * dt
        for i in range(ny):
            if not np.isfinite(y[i]):
                return STATUS_NONFINITE, i, nsteps, row
        for d in range(nd):
            if y[nd + d] <= v_floor:
                return STATUS_COLLAPSE, d, nsteps, row
        if y[ny - 1] <= v_floor:
            return STATUS_COLLAPSE, nd, nsteps, row
        if rec_dec > 0 and ((gstep0 + nsteps) % rec_dec) == 0:
            _controller_pass(t, dt, y,
                             lf, line_a, line_b, cpl_power, v_floor,
                             h_idc, h_ih, h_w, h_phase, h_node,
                             mode, vmax, slope, lpf_a,
                             pi_kp, pi_ki, pi_lo, pi_hi,
                             r_b0, r_a1, r_a2, p_kp, comp, i_lim, elim,
                             vref_frozen, vref_val,
                             inj_port, inj_der, inj_amp, inj_w, inj_t0,
                             lpf_s, pi_int, pi_eprev, r_s1, r_s2,
                             chan, e_cmd, False)
            for j in range(ncols):
                rec[row, j] = chan[rec_cols[j]]
            row += 1
    return STATUS_OK, -1, nsteps, row
