"""Compiled building blocks for the Metropolis-within-Gibbs sweep.

Every random quantity is passed in pre-drawn (standard normals, uniforms,
standard gammas) so the kernels stay deterministic and the Python-facing
single-step functions in ``car`` and ``localcluster`` share the exact same
arithmetic as the sampler.
"""

import math

import numpy as np
from numba import njit

# block indices for acceptance bookkeeping and random streams
BETA, ALPHA, THETA, RHO, LAMBDA, DELTA, GAMMA, TAU2, ALLOC = range(9)
N_BLOCKS = 9

RESID_NONE, RESID_CAR, RESID_LOCAL, RESID_HH = 0, 1, 2, 3


@njit(cache=True)
def theta_conditional(k, theta, rho, tau2, indptr, indices):
    s = 0.0
    for j in range(indptr[k], indptr[k + 1]):
        s += theta[indices[j]]
    denom = rho * (indptr[k + 1] - indptr[k]) + 1.0 - rho
    return rho * s / denom, tau2 / denom


@njit(cache=True)
def edge_sums(theta, edges):
    """Return (sum over edges of squared differences, sum of squares)."""
    s_edge = 0.0
    for j in range(edges.shape[0]):
        d = theta[edges[j, 0]] - theta[edges[j, 1]]
        s_edge += d * d
    s_sq = 0.0
    for k in range(theta.size):
        s_sq += theta[k] * theta[k]
    return s_edge, s_sq


@njit(cache=True)
def leroux_log_det(rho, lap_eig):
    out = 0.0
    for j in range(lap_eig.size):
        out += math.log(rho * lap_eig[j] + 1.0 - rho)
    return out


@njit(cache=True)
def reflect(x, lo, hi):
    """Fold ``x`` back into ``(lo, hi)``; either bound may be infinite."""
    lo_inf = math.isinf(lo)
    hi_inf = math.isinf(hi)
    if lo_inf and hi_inf:
        return x
    if lo_inf:
        return x if x < hi else 2.0 * hi - x
    if hi_inf:
        return x if x > lo else 2.0 * lo - x
    width = hi - lo
    y = (x - lo) % (2.0 * width)
    if y > width:
        y = 2.0 * width - y
    return lo + y


@njit(cache=True)
def allocation_log_prior(delta, G):
    centre = 0.5 * (G - 1)
    out = np.empty(G)
    m = -np.inf
    for g in range(G):
        out[g] = -delta * (g - centre) ** 2
        if out[g] > m:
            m = out[g]
    s = 0.0
    for g in range(G):
        s += math.exp(out[g] - m)
    lse = m + math.log(s)
    for g in range(G):
        out[g] -= lse
    return out


@njit(cache=True)
def draw_allocation(logw, u):
    """Sample an index with probability proportional to ``exp(logw)``.

    Returns -1 if every weight is zero or undefined.
    """
    G = logw.size
    m = -np.inf
    for g in range(G):
        if logw[g] > m:
            m = logw[g]
    if math.isnan(m) or m == -np.inf:
        return -1
    if m == np.inf:
        n_top = 0
        for g in range(G):
            if logw[g] == np.inf:
                n_top += 1
        pick = min(int(u * n_top), n_top - 1)
        for g in range(G):
            if logw[g] == np.inf:
                if pick == 0:
                    return g
                pick -= 1
    total = 0.0
    cum = np.empty(G)
    for g in range(G):
        v = logw[g] - m
        total += math.exp(v) if not math.isnan(v) else 0.0
        cum[g] = total
    target = u * total
    for g in range(G):
        if cum[g] > target:
            return g
    return G - 1


@njit(cache=True)
def delta_log_target(delta, alloc, G):
    lp = allocation_log_prior(delta, G)
    out = 0.0
    for k in range(alloc.size):
        out += lp[alloc[k]]
    return out


@njit(cache=True)
def delta_step(delta, alloc, G, delta_max, step, z, u):
    prop = reflect(delta + step * z, 0.0, delta_max)
    d = delta_log_target(prop, alloc, G) - delta_log_target(delta, alloc, G)
    if math.log(u) < d:
        return prop, True
    return delta, False


@njit(cache=True)
def lambda_step(i, lam, y_class, s_class, step, z, u):
    """One Metropolis move of ``lam[i]`` within its ordering neighbours.

    ``y_class`` and ``s_class`` are the summed counts and summed
    ``E_k exp(eta_k - lambda)`` of the areas allocated to class ``i``.
    """
    G = lam.size
    lo = lam[i - 1] if i > 0 else -np.inf
    hi = lam[i + 1] if i < G - 1 else np.inf
    prop = reflect(lam[i] + step * z, lo, hi)
    if s_class > 0.0:
        d = y_class * (prop - lam[i]) - s_class * (math.exp(prop) - math.exp(lam[i]))
    else:
        d = 0.0
    if math.log(u) < d:
        return prop, True
    return lam[i], False


_FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}
_LOG2E = 1.4426950408889634
_LN2_HI = 0.6931471803691238
_LN2_LO = 1.9082149292705877e-10


@njit(cache=True, fastmath=_FAST)
def vector_exp(alpha, dev, out, bits):
    """out[j] = exp(alpha * dev[j]) for |alpha * dev[j]| <= 700, written to vectorise."""
    for j in range(dev.size):
        t = alpha * dev[j]
        kf = math.floor(t * _LOG2E + 0.5)
        r = (t - kf * _LN2_HI) - kf * _LN2_LO
        q = 1.0 / 479001600.0
        q = q * r + 1.0 / 39916800.0
        q = q * r + 1.0 / 3628800.0
        q = q * r + 1.0 / 362880.0
        q = q * r + 1.0 / 40320.0
        q = q * r + 1.0 / 5040.0
        q = q * r + 1.0 / 720.0
        q = q * r + 1.0 / 120.0
        q = q * r + 1.0 / 24.0
        q = q * r + 1.0 / 6.0
        q = q * r + 0.5
        q = q * r + 1.0
        out[j] = q * r + 1.0
        bits[j] = (np.int64(kf) + 1023) << 52
    scale = bits.view(np.float64)
    for j in range(dev.size):
        out[j] *= scale[j]


@njit(cache=True, fastmath=_FAST)
def _dot(a, b, lo, hi):
    s = 0.0
    for j in range(lo, hi):
        s += a[j] * b[j]
    return s


@njit(cache=True)
def log_links(kind, alpha, muhat, dev, span, p, ptr, out, ex, bits):
    """Per-area log links; ``dev`` holds cell deviations from the area mean ``muhat``.

    ``span`` is ``max |dev|``; ``ex`` (float) and ``bits`` (int64) are scratch
    buffers the size of ``dev``.
    """
    n = muhat.size
    if kind == 0:
        for k in range(n):
            out[k] = muhat[k] * alpha
        return
    if span * abs(alpha) <= 700.0:
        vector_exp(alpha, dev, ex, bits)
        for k in range(n):
            out[k] = muhat[k] * alpha + math.log(_dot(p, ex, ptr[k], ptr[k + 1]))
        return
    for k in range(n):
        m = -np.inf
        for j in range(ptr[k], ptr[k + 1]):
            if p[j] > 0.0 and dev[j] * alpha > m:
                m = dev[j] * alpha
        s = 0.0
        for j in range(ptr[k], ptr[k + 1]):
            s += p[j] * math.exp(dev[j] * alpha - m)
        out[k] = muhat[k] * alpha + m + math.log(s)


@njit(cache=True)
def poisson_kernel(y, loge, eta):
    """sum_k y_k eta_k - E_k exp(eta_k), i.e. the log-likelihood without constants."""
    out = 0.0
    for k in range(y.size):
        out += y[k] * eta[k] - math.exp(loge[k] + eta[k])
    return out


@njit(cache=True)
def _mu_refresh(loge, xb, phi, link, mu):
    for k in range(mu.size):
        mu[k] = math.exp(loge[k] + xb[k] + phi[k] + link[k])


@njit(cache=True)
def run_batch(
    n_iter,
    resid,
    # data
    y, loge, x, link_kind, muhat, cell_dev, cell_span, cell_p, cell_ptr,
    indptr, indices, edges, lap_eig, hh_basis,
    # priors: beta_var, alpha_var, tau_a, tau_b, delta_max, gamma_var
    priors,
    # state
    beta, scal, theta, lam, alloc, gamma, xb, link, phi, mu,
    # proposal geometry
    scales, beta_chol, gamma_chol, shear,
    # per-block on/off switches and likelihood weight (0 gives prior-only runs)
    active, lik_w,
    # random tapes
    zb, ub, za, ua, zt, ut, gt, zr, ur, zl, ul, uz, zd, ud, zg, ug,
    # bookkeeping
    acc, tries, keep, out_beta, out_scal, out_lam, out_phi, out_ll, out_pos,
):
    """Run ``n_iter`` sweeps in place. ``scal`` holds ``[alpha, tau2, rho, delta]``."""
    n = y.size
    p = beta.size
    G = lam.size
    q = gamma.size
    beta_var, alpha_var, tau_a, tau_b, delta_max, gamma_var = (
        priors[0], priors[1], priors[2], priors[3], priors[4], priors[5],
    )
    has_theta = resid == RESID_CAR or resid == RESID_LOCAL
    has_local = resid == RESID_LOCAL
    has_hh = resid == RESID_HH and q > 0

    xb_new = np.empty(n)
    link_new = np.empty(n)
    ex_buf = np.empty(cell_dev.size)
    bits_buf = np.empty(cell_dev.size, np.int64)
    phi_new = np.empty(n)
    beta_new = np.empty(p)
    gamma_new = np.empty(q)
    logw = np.empty(G)
    y_class = np.empty(G)
    s_class = np.empty(G)

    for it in range(n_iter):
        alpha = scal[0]
        tau2 = scal[1]
        rho = scal[2]
        delta = scal[3]

        # --- beta: block random walk ---
        if active[BETA]:
            for j in range(p):
                acc_z = 0.0
                for l in range(j + 1):
                    acc_z += beta_chol[j, l] * zb[it, l]
                beta_new[j] = beta[j] + scales[BETA] * acc_z
            d = 0.0
            for k in range(n):
                s = 0.0
                for j in range(p):
                    s += x[k, j] * beta_new[j]
                xb_new[k] = s
                mu_new = math.exp(loge[k] + s + phi[k] + link[k])
                d += y[k] * (s - xb[k]) - (mu_new - mu[k])
            d *= lik_w
            for j in range(p):
                d -= 0.5 * (beta_new[j] ** 2 - beta[j] ** 2) / beta_var
            tries[BETA] += 1
            if math.log(ub[it]) < d:
                acc[BETA] += 1
                for j in range(p):
                    beta[j] = beta_new[j]
                for k in range(n):
                    xb[k] = xb_new[k]
                _mu_refresh(loge, xb, phi, link, mu)

        # --- alpha: random walk, intercept sheared to keep the mean level ---
        if active[ALPHA]:
            step = scales[ALPHA] * za[it]
            a_new = alpha + step
            b0_new = beta[0] - step * shear
            log_links(link_kind, a_new, muhat, cell_dev, cell_span, cell_p, cell_ptr, link_new, ex_buf, bits_buf)
            d = 0.0
            for k in range(n):
                xb_new[k] = xb[k] - step * shear
                eta_new = xb_new[k] + phi[k] + link_new[k]
                eta_old = xb[k] + phi[k] + link[k]
                d += y[k] * (eta_new - eta_old) - (math.exp(loge[k] + eta_new) - mu[k])
            d *= lik_w
            d -= 0.5 * (a_new * a_new - alpha * alpha) / alpha_var
            d -= 0.5 * (b0_new * b0_new - beta[0] * beta[0]) / beta_var
            tries[ALPHA] += 1
            if math.log(ua[it]) < d:
                acc[ALPHA] += 1
                alpha = a_new
                beta[0] = b0_new
                for k in range(n):
                    xb[k] = xb_new[k]
                    link[k] = link_new[k]
                _mu_refresh(loge, xb, phi, link, mu)

        # --- theta: single-site random walk against the Leroux conditional ---
        if has_theta:
            for k in range(n):
                if not active[THETA]:
                    break
                m, v = theta_conditional(k, theta, rho, tau2, indptr, indices)
                sd = scales[THETA] / math.sqrt(lik_w * y[k] + 1.0 / v)
                t_new = theta[k] + sd * zt[it, k]
                dt = t_new - theta[k]
                d = lik_w * (y[k] * dt - mu[k] * (math.exp(dt) - 1.0))
                d -= ((t_new - m) ** 2 - (theta[k] - m) ** 2) / (2.0 * v)
                tries[THETA] += 1
                if math.log(ut[it, k]) < d:
                    acc[THETA] += 1
                    theta[k] = t_new
                    phi[k] = (lam[alloc[k]] + t_new) if has_local else t_new
                    mu[k] = math.exp(loge[k] + xb[k] + phi[k] + link[k])

            # --- tau2: conjugate inverse-gamma draw ---
            s_edge, s_sq = edge_sums(theta, edges)
            qf = rho * s_edge + (1.0 - rho) * s_sq
            if active[TAU2]:
                tau2 = (tau_b + 0.5 * qf) / gt[it]

            # --- rho: random walk on the logit scale ---
            lr = math.log(rho / (1.0 - rho)) + scales[RHO] * zr[it]
            r_new = 1.0 / (1.0 + math.exp(-lr))
            if active[RHO] and 0.0 < r_new < 1.0:
                qf_new = r_new * s_edge + (1.0 - r_new) * s_sq
                d = 0.5 * (leroux_log_det(r_new, lap_eig) - leroux_log_det(rho, lap_eig))
                d -= (qf_new - qf) / (2.0 * tau2)
                d += math.log(r_new * (1.0 - r_new)) - math.log(rho * (1.0 - rho))
                tries[RHO] += 1
                if math.log(ur[it]) < d:
                    acc[RHO] += 1
                    rho = r_new

        # --- orthogonal basis coefficients ---
        if has_hh and active[GAMMA]:
            for j in range(q):
                acc_z = 0.0
                for l in range(j + 1):
                    acc_z += gamma_chol[j, l] * zg[it, l]
                gamma_new[j] = gamma[j] + scales[GAMMA] * acc_z
            d = 0.0
            for k in range(n):
                s = 0.0
                for j in range(q):
                    s += hh_basis[k, j] * gamma_new[j]
                phi_new[k] = s
                mu_new = math.exp(loge[k] + xb[k] + s + link[k])
                d += y[k] * (s - phi[k]) - (mu_new - mu[k])
            d *= lik_w
            for j in range(q):
                d -= 0.5 * (gamma_new[j] ** 2 - gamma[j] ** 2) / gamma_var
            tries[GAMMA] += 1
            if math.log(ug[it]) < d:
                acc[GAMMA] += 1
                for j in range(q):
                    gamma[j] = gamma_new[j]
                for k in range(n):
                    phi[k] = phi_new[k]
                _mu_refresh(loge, xb, phi, link, mu)

        if has_local:
            # --- lambda: per-class moves inside the ordering constraint ---
            for g in range(G):
                y_class[g] = 0.0
                s_class[g] = 0.0
            for k in range(n):
                g = alloc[k]
                y_class[g] += lik_w * y[k]
                s_class[g] += lik_w * math.exp(loge[k] + xb[k] + theta[k] + link[k])
            for g in range(G):
                if not active[LAMBDA]:
                    break
                sd = scales[LAMBDA] / math.sqrt(y_class[g] + 1.0)
                new, ok = lambda_step(g, lam, y_class[g], s_class[g], sd, zl[it, g], ul[it, g])
                if s_class[g] > 0.0:
                    tries[LAMBDA] += 1
                    if ok:
                        acc[LAMBDA] += 1
                lam[g] = new

            # --- allocations: discrete Gibbs ---
            lp = allocation_log_prior(delta, G)
            for k in range(n):
                if not active[ALLOC]:
                    break
                base = loge[k] + xb[k] + theta[k] + link[k]
                for g in range(G):
                    logw[g] = lik_w * (y[k] * lam[g] - math.exp(base + lam[g])) + lp[g]
                g = draw_allocation(logw, uz[it, k])
                if g < 0:
                    raise FloatingPointError("allocation probabilities underflowed")
                alloc[k] = g
                phi[k] = lam[g] + theta[k]
                mu[k] = math.exp(base + lam[g])

            # --- delta: reflecting random walk on [0, M] ---
            if active[DELTA]:
                new, ok = delta_step(delta, alloc, G, delta_max, scales[DELTA], zd[it], ud[it])
                tries[DELTA] += 1
                if ok:
                    acc[DELTA] += 1
                delta = new

        scal[0] = alpha
        scal[1] = tau2
        scal[2] = rho
        scal[3] = delta

        if keep[it]:
            r = out_pos[0]
            for j in range(p):
                out_beta[r, j] = beta[j]
            for j in range(4):
                out_scal[r, j] = scal[j]
            ref = 0.0
            if has_local:
                for k in range(n):
                    ref += lam[alloc[k]]
                ref /= n
            for g in range(G):
                out_lam[r, g] = lam[g]
            out_scal[r, 4] = ref
            ll = 0.0
            for k in range(n):
                out_phi[r, k] = phi[k]
                ll += y[k] * (loge[k] + xb[k] + phi[k] + link[k]) - mu[k]
            out_ll[r] = ll
            out_pos[0] = r + 1
