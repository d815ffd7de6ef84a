"""Compiled inner loops for the samplers.

All randomness is pre-generated by the caller and passed in as arrays, so
these kernels are deterministic functions of their inputs; the RNG-stream
contract lives entirely in Python code.  Shapes follow the in-memory
convention of time as the trailing axis.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Proposals beyond this log-volatility magnitude are rejected outright to
# keep exp(±h) comfortably inside double range.
H_BOUND = 40.0


@njit(cache=True, nogil=True)
def h_path_sweep(f2, h, mu, phi, delta2, steps, normals, log_unifs,
                 adapt_gamma, target_acc):
    """One forward single-site random-walk Metropolis sweep over h.

    ``f2`` holds squared factor values, ``steps`` per-site proposal sds
    (mutated in place when ``adapt_gamma > 0``), ``normals``/``log_unifs``
    the pre-generated innovations and log-uniforms.  ``h`` is updated in
    place.  Returns (accepted sites, guard rejections).
    """
    t_len = h.shape[0]
    n_acc = 0
    n_guard = 0
    inv2d = 1.0 / (2.0 * delta2)
    for t in range(t_len):
        cur = h[t]
        prop = cur + steps[t] * normals[t]
        accepted = False
        if prop > H_BOUND or prop < -H_BOUND:
            n_guard += 1
        else:
            if t_len == 1:
                d = (1.0 - phi * phi) * inv2d * (
                    (cur - mu) ** 2 - (prop - mu) ** 2
                )
            elif t == 0:
                d = (1.0 - phi * phi) * inv2d * (
                    (cur - mu) ** 2 - (prop - mu) ** 2
                )
                m_cur = mu + phi * (cur - mu)
                m_prop = mu + phi * (prop - mu)
                d += ((h[1] - m_cur) ** 2 - (h[1] - m_prop) ** 2) * inv2d
            elif t == t_len - 1:
                m = mu + phi * (h[t - 1] - mu)
                d = ((cur - m) ** 2 - (prop - m) ** 2) * inv2d
            else:
                m = mu + phi * (h[t - 1] - mu)
                d = ((cur - m) ** 2 - (prop - m) ** 2) * inv2d
                m_cur = mu + phi * (cur - mu)
                m_prop = mu + phi * (prop - mu)
                d += ((h[t + 1] - m_cur) ** 2 - (h[t + 1] - m_prop) ** 2) * inv2d
            d += 0.5 * (cur - prop)
            d += 0.5 * f2[t] * (np.exp(-cur) - np.exp(-prop))
            if log_unifs[t] < d:
                accepted = True
        if accepted:
            h[t] = prop
            n_acc += 1
        if adapt_gamma > 0.0:
            move = adapt_gamma * ((1.0 if accepted else 0.0) - target_acc)
            s = steps[t] * np.exp(move)
            if s < 1e-3:
                s = 1e-3
            elif s > 10.0:
                s = 10.0
            steps[t] = s
    return n_acc, n_guard


@njit(cache=True, nogil=True)
def factor_draws(aty, btb, h, xi, out):
    """Draw every f_t from its Gaussian conditional, writing into ``out``.

    ``aty`` is Lambda' Gamma^{-1} y (K, T), ``btb`` the K-by-K matrix
    Lambda' Gamma^{-1} Lambda, ``h`` log-volatilities (K, T), ``xi``
    standard normals (K, T).  The per-time precision is
    btb + diag(exp(-h_t)); a hand-rolled Cholesky keeps the small-K loop
    allocation-free.  Returns 0 on success, 1 when a precision matrix
    fails to factor (numerical failure upstream).
    """
    k_len, t_len = aty.shape
    chol = np.empty((k_len, k_len))
    w = np.empty(k_len)
    m = np.empty(k_len)
    u = np.empty(k_len)
    for t in range(t_len):
        for i in range(k_len):
            for j in range(i + 1):
                chol[i, j] = btb[i, j]
            chol[i, i] = btb[i, i] + np.exp(-h[i, t])
        for i in range(k_len):
            for j in range(i + 1):
                s = chol[i, j]
                for r in range(j):
                    s -= chol[i, r] * chol[j, r]
                if i == j:
                    if not (s > 0.0) or not np.isfinite(s):
                        return 1
                    chol[i, i] = np.sqrt(s)
                else:
                    chol[i, j] = s / chol[j, j]
        for i in range(k_len):
            s = aty[i, t]
            for j in range(i):
                s -= chol[i, j] * w[j]
            w[i] = s / chol[i, i]
        for i in range(k_len - 1, -1, -1):
            s = w[i]
            for j in range(i + 1, k_len):
                s -= chol[j, i] * m[j]
            m[i] = s / chol[i, i]
        for i in range(k_len - 1, -1, -1):
            s = xi[i, t]
            for j in range(i + 1, k_len):
                s -= chol[j, i] * u[j]
            u[i] = s / chol[i, i]
        for i in range(k_len):
            out[i, t] = m[i] + u[i]
    return 0


@njit(cache=True, nogil=True)
def loading_sweep(resid, f, inv_s2, cond_of_t, lam, z, logit_pi, tau2,
                  normals, unifs):
    """One spike-and-slab Gibbs sweep over all loadings of one subject.

    ``resid`` (N, T_total) is the full residual y - Lambda f across the
    concatenated conditions and is kept consistent in place as entries
    switch.  ``inv_s2`` (N, G) are inverse noise variances and
    ``cond_of_t`` maps each column to its condition.  Entries with
    ``logit_pi`` at +/-inf are forced in or out deterministically.
    """
    n_len, k_len = lam.shape
    t_len = resid.shape[1]
    inv_tau2 = 1.0 / tau2
    for n in range(n_len):
        for k in range(k_len):
            lam_old = lam[n, k]
            prec = 0.0
            mean_acc = 0.0
            for t in range(t_len):
                iv = inv_s2[n, cond_of_t[t]]
                ft = f[k, t]
                r = resid[n, t] + lam_old * ft
                prec += ft * ft * iv
                mean_acc += ft * r * iv
            v = 1.0 / (prec + inv_tau2)
            lo = logit_pi[n, k]
            if np.isfinite(lo):
                lo += 0.5 * (mean_acc * mean_acc * v - np.log1p(tau2 * prec))
                if lo >= 0.0:
                    p1 = 1.0 / (1.0 + np.exp(-lo))
                else:
                    e = np.exp(lo)
                    p1 = e / (1.0 + e)
                new_z = 1 if unifs[n, k] < p1 else 0
            else:
                new_z = 1 if lo > 0.0 else 0
            if new_z == 1:
                lam_new = mean_acc * v + np.sqrt(v) * normals[n, k]
            else:
                lam_new = 0.0
            if lam_new != lam_old:
                for t in range(t_len):
                    resid[n, t] += (lam_old - lam_new) * f[k, t]
            lam[n, k] = lam_new
            z[n, k] = new_z


@njit(cache=True, nogil=True)
def marginal_loglik(aty, btb, h, ytgy, logdet_gamma, n_regions):
    """Observed-data log-likelihood with factors integrated out.

    Uses the matrix-determinant and Woodbury identities so the per-time
    cost is K^3 instead of N^3: with M_t = diag(exp(-h_t)) + btb,
    log|Sigma_t| = logdet_gamma + sum(h_t) + log|M_t| and
    y'Sigma^{-1}y = ytgy - a' M^{-1} a for a = aty[:, t].
    Returns NaN when a factorization fails.
    """
    k_len, t_len = h.shape
    chol = np.empty((k_len, k_len))
    w = np.empty(k_len)
    log2pi = 1.8378770664093453
    total = 0.0
    for t in range(t_len):
        hsum = 0.0
        for i in range(k_len):
            hsum += h[i, t]
            for j in range(i + 1):
                chol[i, j] = btb[i, j]
            chol[i, i] = btb[i, i] + np.exp(-h[i, t])
        logdet_m = 0.0
        for i in range(k_len):
            for j in range(i + 1):
                s = chol[i, j]
                for r in range(j):
                    s -= chol[i, r] * chol[j, r]
                if i == j:
                    if not (s > 0.0) or not np.isfinite(s):
                        return np.nan
                    chol[i, i] = np.sqrt(s)
                    logdet_m += 2.0 * np.log(chol[i, i])
                else:
                    chol[i, j] = s / chol[j, j]
        quad = ytgy[t]
        for i in range(k_len):
            s = aty[i, t]
            for j in range(i):
                s -= chol[i, j] * w[j]
            w[i] = s / chol[i, i]
            quad -= w[i] * w[i]
        total += -0.5 * (
            n_regions * log2pi + logdet_gamma + hsum + logdet_m + quad
        )
    return total
