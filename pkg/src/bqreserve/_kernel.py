"""Compiled inner loop of the sampler for :class:`bqreserve.model.Model`.

The kernel keeps per-cell linear predictors and log-likelihood terms, so a
proposal for one coefficient only touches the cells whose design column is
nonzero.  It mirrors the pure-Python loop in :mod:`bqreserve.mcmc` step for
step and consumes the same pre-generated random numbers.
"""

import math

import numba
import numpy as np

from .dists import pp_cell_loglik

FAM_AL = 0
FAM_PP = 1
FAM_GB2 = 2
FAM_GG = 3

KIND_LOC = 0
KIND_SCALE = 1
KIND_SHAPE = 2
KIND_DIST = 3

_LOG_2PI = math.log(2.0 * math.pi)
RESYNC_EVERY = 10


@numba.njit(cache=True)
def _betaln(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@numba.njit(cache=True)
def _logaddexp0(t):
    if t > 0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@numba.njit(cache=True)
def dist_terms(fam, a_fixed, d, cfg, consts):
    """Log prior of the distribution parameters; fills per-family constants.

    ``cfg`` holds ``(coef_var, a_var, g_shape, g_rate, gamma1_max, eps)``.
    Returns ``-inf`` off support.
    """
    a_var, g_shape, g_rate, gmax = cfg[1], cfg[2], cfg[3], cfg[4]
    if fam == FAM_AL:
        if d.shape[0] > 0:
            if not (0.0 < d[0] < 1.0):
                return -np.inf
        return 0.0
    if fam == FAM_PP:
        if not (0.0 < d[0] <= gmax and d[1] > 0.0):
            return -np.inf
        return 0.0
    gconst = g_shape * math.log(g_rate) - math.lgamma(g_shape)
    lp = 0.0
    if fam == FAM_GB2:
        a, p, q = d[0], d[1], d[2]
        if a == 0.0 or p <= 0.0 or q <= 0.0 or p + 1.0 / a <= 0.0 or q - 1.0 / a <= 0.0:
            return -np.inf
        lp += -0.5 * (math.log(2.0 * math.pi * a_var)) - 0.5 * a * a / a_var
        lp += gconst + (g_shape - 1.0) * math.log(p) - g_rate * p
        lp += gconst + (g_shape - 1.0) * math.log(q) - g_rate * q
        lb = _betaln(p, q)
        consts[0] = lb
        consts[1] = lb - _betaln(p + 1.0 / a, q - 1.0 / a)
        return lp
    # generalized gamma; plain gamma when a is fixed at 1
    if a_fixed:
        a, p = 1.0, d[0]
    else:
        a, p = d[0], d[1]
        if a == 0.0:
            return -np.inf
        lp += -0.5 * (math.log(2.0 * math.pi * a_var)) - 0.5 * a * a / a_var
    if p <= 0.0 or p + 1.0 / a <= 0.0:
        return -np.inf
    lp += gconst + (g_shape - 1.0) * math.log(p) - g_rate * p
    lg = math.lgamma(p)
    consts[0] = lg
    consts[1] = lg - math.lgamma(p + 1.0 / a)
    return lp


@numba.njit(cache=True)
def cell_ll(fam, a_fixed, y, logy, mu, lsig2, pc, d, consts, eps):
    """Log-likelihood of one cell; ``-inf`` off support, nan on solver failure."""
    if fam == FAM_AL:
        if not (0.0 < pc < 1.0):
            return -np.inf
        r = (y - mu) * math.exp(-0.5 * lsig2)
        ind = 1.0 if r <= 0.0 else 0.0
        return math.log(pc * (1.0 - pc)) - 0.5 * lsig2 - r * (pc - ind)
    if fam == FAM_PP:
        if not mu < y:
            return -np.inf
        s2 = math.exp(lsig2)
        if not s2 > eps:
            return -np.inf
        return pp_cell_loglik(y, mu, math.sqrt(s2), d[0], d[1])
    if fam == FAM_GB2:
        a, p, q = d[0], d[1], d[2]
        t = a * (logy - (mu + consts[1]))
        return math.log(abs(a)) - consts[0] - logy + p * t - (p + q) * _logaddexp0(t)
    if a_fixed:
        a, p = 1.0, d[0]
    else:
        a, p = d[0], d[1]
    t = a * (logy - (mu + consts[1]))
    return math.log(abs(a)) - consts[0] - logy + p * t - math.exp(t)


@numba.njit(cache=True)
def full_state(theta, fam, a_fixed, al_p_free, u_fixed, y, logy, X, S, P,
               loc0, sc0, sh0, dist0, nd, cfg, mu, lsig2, pc, ll):
    """Fill per-cell predictors and log-likelihood terms; return (log_prior, status).

    ``status`` is 0 on success, 1 when the state is off support, 2 when a
    cell log-likelihood is nan.
    """
    n = y.shape[0]
    coef_var = cfg[0]
    consts = np.zeros(2)
    d = theta[dist0:dist0 + nd]
    lp = dist_terms(fam, a_fixed, d, cfg, consts)
    ncoef = theta.shape[0] - nd
    for k in range(ncoef):
        lp += -0.5 * (math.log(2.0 * math.pi * coef_var)) - 0.5 * theta[k] * theta[k] / coef_var
    status = 0 if lp > -np.inf else 1
    for c in range(n):
        m = 0.0
        for k in range(X.shape[1]):
            m += X[c, k] * theta[loc0 + k]
        mu[c] = m
        s = 0.0
        for k in range(S.shape[1]):
            s += S[c, k] * theta[sc0 + k]
        lsig2[c] = s
        if P.shape[1] > 0:
            v = 0.0
            for k in range(P.shape[1]):
                v += P[c, k] * theta[sh0 + k]
            pc[c] = v
        elif fam == FAM_AL:
            pc[c] = d[0] if al_p_free else u_fixed
        if status == 0:
            ll[c] = cell_ll(fam, a_fixed, y[c], logy[c], mu[c], lsig2[c], pc[c], d, consts, cfg[5])
            if np.isnan(ll[c]):
                status = 2
            elif ll[c] == -np.inf:
                status = 1
    return lp, status


@numba.njit(cache=True)
def run_segment(it0, it1, c0, theta, mu, lsig2, pc, ll,
                fam, a_fixed, al_p_free, u_fixed, y, logy, X, S, P,
                loc0, sc0, sh0, dist0, nd, cfg,
                blk_start, blk_size, blk_kind, cell_ptr, cell_idx, chol_ptr, chol,
                log_s, targets, n_base, acc_burn, acc_main,
                z, logu, mult, burn_in, thin,
                draws, dev, lps, iters, kept, burn_store, err):
    """Advance the chain over iterations ``[it0, it1)``.

    ``c0`` is the row of ``it0`` in the random-number chunk.  On a solver
    failure ``err`` receives ``(iteration, block)`` and the function returns
    early.
    """
    n = y.shape[0]
    nb = blk_start.shape[0]
    coef_var = cfg[0]
    consts = np.zeros(2)
    d_cur = theta[dist0:dist0 + nd].copy()
    dist_terms(fam, a_fixed, d_cur, cfg, consts)
    new_mu = np.empty(n)
    new_ls = np.empty(n)
    new_pc = np.empty(n)
    new_ll = np.empty(n)
    delta = np.empty(theta.shape[0])
    new_consts = np.zeros(2)
    for it in range(it0, it1):
        c = c0 + it - it0
        in_burn = it < burn_in
        for b in range(nb):
            st = blk_start[b]
            sz = blk_size[b]
            kind = blk_kind[b]
            m = mult[c, b]
            s = math.exp(log_s[b]) * m
            cp = chol_ptr[b]
            for k in range(sz):
                acc = 0.0
                for l in range(sz):
                    acc += chol[cp + k * sz + l] * z[c, st + l]
                delta[k] = s * acc
            diff = 0.0
            ok = True
            p0 = cell_ptr[b]
            p1 = cell_ptr[b + 1]
            if kind != KIND_DIST:
                for k in range(sz):
                    old = theta[st + k]
                    new = old + delta[k]
                    diff += -0.5 * (new * new - old * old) / coef_var
                for q in range(p0, p1):
                    cc = cell_idx[q]
                    nm = mu[cc]
                    nl = lsig2[cc]
                    npc = pc[cc]
                    if kind == KIND_LOC:
                        for k in range(sz):
                            nm += X[cc, st - loc0 + k] * delta[k]
                    elif kind == KIND_SCALE:
                        for k in range(sz):
                            nl += S[cc, st - sc0 + k] * delta[k]
                    else:
                        for k in range(sz):
                            npc += P[cc, st - sh0 + k] * delta[k]
                    v = cell_ll(fam, a_fixed, y[cc], logy[cc], nm, nl, npc, d_cur, consts, cfg[5])
                    if np.isnan(v):
                        err[0] = it + 1
                        err[1] = b
                        return
                    if v == -np.inf:
                        ok = False
                        break
                    new_mu[cc] = nm
                    new_ls[cc] = nl
                    new_pc[cc] = npc
                    new_ll[cc] = v
                    diff += v - ll[cc]
            else:
                d_new = d_cur.copy()
                for k in range(sz):
                    d_new[st - dist0 + k] += delta[k]
                lp_new = dist_terms(fam, a_fixed, d_new, cfg, new_consts)
                if lp_new == -np.inf:
                    ok = False
                else:
                    diff += lp_new - dist_terms(fam, a_fixed, d_cur, cfg, consts)
                    for cc in range(n):
                        npc = pc[cc]
                        if fam == FAM_AL and al_p_free:
                            npc = d_new[0]
                        v = cell_ll(fam, a_fixed, y[cc], logy[cc], mu[cc], lsig2[cc], npc,
                                    d_new, new_consts, cfg[5])
                        if np.isnan(v):
                            err[0] = it + 1
                            err[1] = b
                            return
                        if v == -np.inf:
                            ok = False
                            break
                        new_pc[cc] = npc
                        new_ll[cc] = v
                        diff += v - ll[cc]
            if ok:
                accept = diff >= 0.0 or logu[c, b] < diff
            else:
                accept = False
            if accept:
                for k in range(sz):
                    theta[st + k] += delta[k]
                if kind != KIND_DIST:
                    for q in range(p0, p1):
                        cc = cell_idx[q]
                        mu[cc] = new_mu[cc]
                        lsig2[cc] = new_ls[cc]
                        pc[cc] = new_pc[cc]
                        ll[cc] = new_ll[cc]
                else:
                    for k in range(nd):
                        d_cur[k] = theta[dist0 + k]
                    consts[0] = new_consts[0]
                    consts[1] = new_consts[1]
                    for cc in range(n):
                        pc[cc] = new_pc[cc]
                        ll[cc] = new_ll[cc]
            if in_burn and m == 1.0:
                n_base[b] += 1.0
                if accept:
                    acc_burn[b] += 1.0
                if not ok:
                    alpha = 0.0
                elif diff >= 0.0:
                    alpha = 1.0
                else:
                    alpha = math.exp(diff)
                log_s[b] += n_base[b] ** -0.6 * (alpha - targets[b])
            elif not in_burn and accept:
                acc_main[b] += 1.0
        retain = not in_burn and (it + 1 - burn_in) % thin == 0
        if retain or (it + 1) % RESYNC_EVERY == 0:
            # rebuild the cell terms from theta so rounding in the incremental
            # updates cannot accumulate
            _, status = full_state(theta, fam, a_fixed, al_p_free, u_fixed, y, logy, X, S, P,
                                   loc0, sc0, sh0, dist0, nd, cfg, new_mu, new_ls, new_pc, new_ll)
            if status == 0:
                for cc in range(n):
                    mu[cc] = new_mu[cc]
                    lsig2[cc] = new_ls[cc]
                    pc[cc] = new_pc[cc]
                    ll[cc] = new_ll[cc]
        if in_burn:
            for k in range(theta.shape[0]):
                burn_store[it, k] = theta[k]
        elif retain:
            j = kept[0]
            total = 0.0
            for cc in range(n):
                total += ll[cc]
            lp = dist_terms(fam, a_fixed, d_cur, cfg, new_consts)
            for k in range(theta.shape[0] - nd):
                lp += -0.5 * (math.log(2.0 * math.pi * coef_var)) - 0.5 * theta[k] * theta[k] / coef_var
            for k in range(theta.shape[0]):
                draws[j, k] = theta[k]
            dev[j] = -2.0 * total
            lps[j] = lp + total
            iters[j] = it + 1
            kept[0] = j + 1
