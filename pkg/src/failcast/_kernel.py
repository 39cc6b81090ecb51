"""Compiled Metropolis sweeps for the failure/occurrence/observation network.

Mirrors the generic block loop in :mod:`failcast.mcmc` step for step and
consumes the same pre-drawn random numbers (standard normals for the
proposals, standard exponentials whose negatives serve as log-uniforms), so both paths walk the same chain
(up to floating-point summation order).

Parameter slots: 0 alpha, 1 beta, 2 r, 3 sigma1, 4 m, 5 sigma2.
Transform codes: 0 log (lower bound ``lo``), 1 logit on ``(lo, hi)``.
"""

import math

import numpy as np
from numba import njit

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@njit(cache=True)
def _forward(x, lo, hi, kind):
    if kind == 0:
        return math.log(x - lo)
    p = (x - lo) / (hi - lo)
    return math.log(p) - math.log1p(-p)


@njit(cache=True)
def _backward(y, lo, hi, kind):
    if kind == 0:
        return lo + math.exp(y)
    return lo + (hi - lo) / (1.0 + math.exp(-y))


@njit(cache=True)
def _log_jac(x, y, lo, hi, kind):
    if kind == 0:
        return y
    if x <= lo or x >= hi:
        return -np.inf
    return math.log(x - lo) + math.log(hi - x) - math.log(hi - lo)


@njit(cache=True)
def _w_sum(alpha, beta, lf):
    # lf holds log cycles; -inf marks a non-positive value
    lb = math.log(beta)
    la = math.log(alpha)
    tot = 0.0
    for e in range(lf.shape[0]):
        z = lf[e] - lb
        tot += la - lb + (alpha - 1.0) * z - math.exp(alpha * z)
    return tot


@njit(cache=True)
def _log_cycles(f):
    out = np.empty(f.shape[0])
    for e in range(f.shape[0]):
        out[e] = math.log(f[e]) if f[e] > 0.0 else -np.inf
    return out


@njit(cache=True)
def _i_sum(r, sd, f, i):
    sse = 0.0
    for e in range(f.shape[0]):
        d = i[e] - (f[e] - f[e] * r)
        sse += d * d
    return -f.shape[0] * (math.log(sd) + LOG_SQRT_2PI) - 0.5 * sse / (sd * sd)


@njit(cache=True)
def _s_sum(m, sd, f, i, s):
    sse = 0.0
    for e in range(f.shape[0]):
        d = s[e] - ((f[e] - i[e]) * m + i[e])
        sse += d * d
    return -f.shape[0] * (math.log(sd) + LOG_SQRT_2PI) - 0.5 * sse / (sd * sd)


@njit(cache=True)
def _latent_f_terms(x, lx, alpha, la, lb, r, s1, m, s2, i_e, s_e, has_i, has_s):
    z = lx - lb
    out = la - lb + (alpha - 1.0) * z - math.exp(alpha * z)
    if has_i:
        d = (i_e - (x - x * r)) / s1
        out -= 0.5 * d * d
    if has_s:
        d = (s_e - ((x - i_e) * m + i_e)) / s2
        out -= 0.5 * d * d
    return out


@njit(cache=True)
def _latent_i_terms(x, f_e, r, s1, m, s2, s_e):
    a = (x - (f_e - f_e * r)) / s1
    b = (s_e - ((f_e - x) * m + x)) / s2
    return -0.5 * (a * a + b * b)


@njit(cache=True)
def network_sweeps(theta, active, lo, hi, kind, has_i, has_s,
                   F, I, S, lat_f, lat_i,
                   ls_theta, ls_f, ls_i,
                   z_theta, u_theta, z_f, u_f, z_i, u_i,
                   rec, acc_theta, acc_f, acc_i, hist, sum_f, sum_i):
    L = z_theta.shape[0]
    C = theta.shape[0]
    n = F.shape[1]
    for c in range(C):
        f = F[c]
        ii = I[c]
        lf = _log_cycles(f)
        li = _log_cycles(ii)
        sc_f = np.exp(ls_f[c])
        sc_i = np.exp(ls_i[c])
        w_cur = _w_sum(theta[c, 0], theta[c, 1], lf)
        i_cur = _i_sum(theta[c, 2], theta[c, 3], f, ii) if has_i else 0.0
        s_cur = _s_sum(theta[c, 4], theta[c, 5], f, ii, S) if has_s else 0.0
        for t in range(L):
            for p in range(6):
                if not active[p]:
                    continue
                x = theta[c, p]
                y = _forward(x, lo[p], hi[p], kind[p])
                y2 = y + math.exp(ls_theta[c, p]) * z_theta[t, c, p]
                x2 = _backward(y2, lo[p], hi[p], kind[p])
                log_u = -u_theta[t, c, p]
                if not (x2 > lo[p] and x2 < hi[p]):
                    continue
                if p < 2:
                    a = x2 if p == 0 else theta[c, 0]
                    b = x2 if p == 1 else theta[c, 1]
                    cur = w_cur
                    new = _w_sum(a, b, lf)
                elif p < 4:
                    rr = x2 if p == 2 else theta[c, 2]
                    sd = x2 if p == 3 else theta[c, 3]
                    cur = i_cur
                    new = _i_sum(rr, sd, f, ii)
                else:
                    mm = x2 if p == 4 else theta[c, 4]
                    sd = x2 if p == 5 else theta[c, 5]
                    cur = s_cur
                    new = _s_sum(mm, sd, f, ii, S)
                ratio = (new + _log_jac(x2, y2, lo[p], hi[p], kind[p])) - (
                    cur + _log_jac(x, y, lo[p], hi[p], kind[p])
                )
                if log_u < ratio:
                    theta[c, p] = x2
                    acc_theta[c, p] += 1
                    if p < 2:
                        w_cur = new
                    elif p < 4:
                        i_cur = new
                    else:
                        s_cur = new
            alpha, beta = theta[c, 0], theta[c, 1]
            r, s1, m, s2 = theta[c, 2], theta[c, 3], theta[c, 4], theta[c, 5]
            if lat_f:
                la = math.log(alpha)
                lb = math.log(beta)
                for e in range(n):
                    x = f[e]
                    y = lf[e]
                    y2 = y + sc_f[e] * z_f[t, c, e]
                    x2 = math.exp(y2)
                    log_u = -u_f[t, c, e]
                    if not x2 > 0.0:
                        continue
                    s_e = S[e] if has_s else 0.0
                    cur = _latent_f_terms(x, y, alpha, la, lb, r, s1, m, s2, ii[e], s_e, has_i, has_s)
                    new = _latent_f_terms(x2, y2, alpha, la, lb, r, s1, m, s2, ii[e], s_e, has_i, has_s)
                    if log_u < (new + y2) - (cur + y):
                        f[e] = x2
                        lf[e] = y2
                        acc_f[c, e] += 1
            if lat_i:
                for e in range(n):
                    x = ii[e]
                    y = li[e]
                    y2 = y + sc_i[e] * z_i[t, c, e]
                    x2 = math.exp(y2)
                    log_u = -u_i[t, c, e]
                    if not x2 > 0.0:
                        continue
                    cur = _latent_i_terms(x, f[e], r, s1, m, s2, S[e])
                    new = _latent_i_terms(x2, f[e], r, s1, m, s2, S[e])
                    if log_u < (new + y2) - (cur + y):
                        ii[e] = x2
                        li[e] = y2
                        acc_i[c, e] += 1
            if lat_f:
                w_cur = _w_sum(alpha, beta, lf)
            if lat_f or lat_i:
                if has_i:
                    i_cur = _i_sum(r, s1, f, ii)
                if has_s:
                    s_cur = _s_sum(m, s2, f, ii, S)
            for p in range(6):
                hist[t, c, p] = theta[c, p]
            if rec[t]:
                for e in range(n):
                    sum_f[c, e] += f[e]
                    sum_i[c, e] += ii[e]
