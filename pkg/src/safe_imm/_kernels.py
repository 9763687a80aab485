"""Compiled numeric core shared by the public filtering API and the fused IMM cycle.

Banks are stored padded: ``means`` is ``(M, N)`` and ``covs`` is ``(M, N, N)``
with ``N`` the largest model dimension; ``dims[i]`` says how much of row ``i``
is live. Measurements are always the leading three components.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MEAS = 3
MAX_CONDITION = 1e12
LOG_2PI = math.log(2.0 * math.pi)
DEGENERATE_MASS = 1e-12
MIN_TPM_ENTRY = 1e-6

# Failure codes of chol3.
OK = 0
NOT_PD = 1
ILL_CONDITIONED = 2


@njit(cache=True)
def chol3(S):
    """Packed lower Cholesky factor of a 3x3 SPD matrix plus a status code."""
    L = np.zeros(6)
    a = S[0, 0]
    if not a > 0.0:
        return L, NOT_PD
    l00 = math.sqrt(a)
    l10 = S[1, 0] / l00
    l20 = S[2, 0] / l00
    r1 = S[1, 1] - l10 * l10
    if not r1 > 0.0:
        return L, NOT_PD
    l11 = math.sqrt(r1)
    l21 = (S[2, 1] - l20 * l10) / l11
    r2 = S[2, 2] - l20 * l20 - l21 * l21
    if not r2 > 0.0:
        return L, NOT_PD
    l22 = math.sqrt(r2)
    lo = min(l00, min(l11, l22))
    hi = max(l00, max(l11, l22))
    L[0] = l00
    L[1] = l10
    L[2] = l20
    L[3] = l11
    L[4] = l21
    L[5] = l22
    if (hi / lo) ** 2 > MAX_CONDITION:
        return L, ILL_CONDITIONED
    return L, OK


@njit(cache=True)
def maha_logdet3(L, v):
    u0 = v[0] / L[0]
    u1 = (v[1] - L[1] * u0) / L[3]
    u2 = (v[2] - L[2] * u0 - L[4] * u1) / L[5]
    return u0 * u0 + u1 * u1 + u2 * u2, 2.0 * math.log(L[0] * L[3] * L[5])


@njit(cache=True)
def chol3_inverse(L):
    m00 = 1.0 / L[0]
    m11 = 1.0 / L[3]
    m22 = 1.0 / L[5]
    m10 = -L[1] * m00 * m11
    m21 = -L[4] * m11 * m22
    m20 = -(L[2] * m00 + L[4] * m10) * m22
    Si = np.empty((3, 3))
    Si[0, 0] = m00 * m00 + m10 * m10 + m20 * m20
    Si[0, 1] = m10 * m11 + m20 * m21
    Si[0, 2] = m20 * m22
    Si[1, 1] = m11 * m11 + m21 * m21
    Si[1, 2] = m21 * m22
    Si[2, 2] = m22 * m22
    Si[1, 0] = Si[0, 1]
    Si[2, 0] = Si[0, 2]
    Si[2, 1] = Si[1, 2]
    return Si


@njit(cache=True)
def symmetrize(P, n):
    for a in range(n):
        for b in range(a + 1, n):
            s = 0.5 * (P[a, b] + P[b, a])
            P[a, b] = s
            P[b, a] = s


@njit(cache=True)
def kf_predict(x, P, n, F, Q):
    """In-place ``x <- F x``, ``P <- F P F^T + Q`` on the leading ``n`` block."""
    xn = np.zeros(n)
    FP = np.zeros((n, n))
    for a in range(n):
        s = 0.0
        for k in range(n):
            f = F[a, k]
            if f != 0.0:
                s += f * x[k]
                for b in range(n):
                    FP[a, b] += f * P[k, b]
        xn[a] = s
    for a in range(n):
        x[a] = xn[a]
        for b in range(a, n):
            s = Q[a, b]
            for k in range(n):
                f = F[b, k]
                if f != 0.0:
                    s += FP[a, k] * f
            P[a, b] = s
            P[b, a] = s


@njit(cache=True)
def kf_update(x, P, n, z, R):
    """In-place Joseph-form update with a position measurement.

    Returns ``(status, v, S, mahalanobis2, logdet)``; on a non-zero status
    the state is left untouched.
    """
    v = np.empty(3)
    S = np.empty((3, 3))
    for a in range(3):
        v[a] = z[a] - x[a]
        for b in range(3):
            S[a, b] = P[a, b] + R[a, b]
    L, status = chol3(S)
    if status != OK:
        return status, v, S, np.nan, np.nan
    maha, logdet = maha_logdet3(L, v)
    Si = chol3_inverse(L)
    K = np.zeros((n, 3))
    for a in range(n):
        for b in range(3):
            s = 0.0
            for k in range(3):
                s += P[a, k] * Si[k, b]
            K[a, b] = s
    for a in range(n):
        x[a] += K[a, 0] * v[0] + K[a, 1] * v[1] + K[a, 2] * v[2]
    # A = I - K H, with H selecting the first three components
    A = np.zeros((n, n))
    for a in range(n):
        A[a, a] = 1.0
        for b in range(3):
            A[a, b] -= K[a, b]
    AP = np.zeros((n, n))
    for a in range(n):
        for k in range(n):
            f = A[a, k]
            if f != 0.0:
                for b in range(n):
                    AP[a, b] += f * P[k, b]
    KR = np.zeros((n, 3))
    for a in range(n):
        for b in range(3):
            KR[a, b] = K[a, 0] * R[0, b] + K[a, 1] * R[1, b] + K[a, 2] * R[2, b]
    for a in range(n):
        for b in range(a, n):
            s = 0.0
            for k in range(n):
                s += AP[a, k] * A[b, k]
            s += KR[a, 0] * K[b, 0] + KR[a, 1] * K[b, 1] + KR[a, 2] * K[b, 2]
            P[a, b] = s
            P[b, a] = s
    return OK, v, S, maha, logdet


@njit(cache=True)
def gaussian_loglik(maha, logdet, d):
    return -0.5 * (d * LOG_2PI + logdet + maha)


@njit(cache=True)
def student_t_loglik(maha, logdet, d, nu, const):
    return const - 0.5 * logdet - 0.5 * (nu + d) * math.log1p(maha / nu)


@njit(cache=True)
def map_into(x, P, n_src, n_dst, pad_var, xo, Po):
    """Write the ``n_src`` estimate into ``n_dst`` space (truncate or zero-pad)."""
    k = min(n_src, n_dst)
    for a in range(n_dst):
        xo[a] = x[a] if a < k else 0.0
        for b in range(n_dst):
            Po[a, b] = P[a, b] if (a < k and b < k) else 0.0
    for a in range(k, n_dst):
        Po[a, a] = pad_var


@njit(cache=True)
def moment_match(means, covs, alphas, n, xo, Po):
    """Single-Gaussian match of already-mapped components into ``xo``, ``Po``.

    Sums run as offsets from the heaviest component, so identical
    components reproduce that component bit for bit.
    """
    K = alphas.shape[0]
    r = argmax_first(alphas)
    for a in range(n):
        s = 0.0
        for i in range(K):
            s += alphas[i] * (means[i, a] - means[r, a])
        xo[a] = means[r, a] + s
    for a in range(n):
        for b in range(a, n):
            Po[a, b] = 0.0
    for i in range(K):
        al = alphas[i]
        if al == 0.0:
            continue
        for a in range(n):
            da = means[i, a] - xo[a]
            for b in range(a, n):
                Po[a, b] += al * ((covs[i, a, b] - covs[r, a, b]) + da * (means[i, b] - xo[b]))
    for a in range(n):
        for b in range(a, n):
            Po[a, b] += covs[r, a, b]
            Po[b, a] = Po[a, b]


@njit(cache=True)
def mixture_into(means, covs, dims, w, n, pad_var, xo, Po):
    M = means.shape[0]
    N = means.shape[1]
    tm = np.zeros((M, N))
    tc = np.zeros((M, N, N))
    for i in range(M):
        map_into(means[i], covs[i], dims[i], n, pad_var, tm[i], tc[i])
    moment_match(tm, tc, w, n, xo, Po)


@njit(cache=True)
def mix(means, covs, dims, w, tpm, pad_var):
    """IMM interaction step; returns mixed ``(means, covs, degenerate)``."""
    M = means.shape[0]
    N = means.shape[1]
    om = np.zeros((M, N))
    oc = np.zeros((M, N, N))
    degenerate = False
    if M == 1:
        om[:] = means
        oc[:] = covs
        return om, oc, degenerate
    alpha = np.empty(M)
    for j in range(M):
        cbar = 0.0
        for i in range(M):
            cbar += tpm[i, j] * w[i]
        if cbar < DEGENERATE_MASS:
            degenerate = True
            om[j] = means[j]
            oc[j] = covs[j]
            continue
        for i in range(M):
            alpha[i] = tpm[i, j] * w[i] / cbar
        mixture_into(means, covs, dims, alpha, dims[j], pad_var, om[j], oc[j])
    return om, oc, degenerate


@njit(cache=True)
def priors(w, tpm):
    M = w.shape[0]
    c = np.zeros(M)
    for j in range(M):
        for i in range(M):
            c[j] += tpm[i, j] * w[i]
    s = c.sum()
    for j in range(M):
        c[j] /= s
    return c


@njit(cache=True)
def posterior(prior, logliks, floor):
    """Log-space normalisation of ``prior * exp(loglik)`` with a probability floor."""
    M = prior.shape[0]
    lp = np.empty(M)
    top = -np.inf
    for j in range(M):
        if prior[j] > 0.0:
            lp[j] = math.log(prior[j]) + logliks[j]
        else:
            lp[j] = -np.inf
        if lp[j] > top:
            top = lp[j]
    w = np.empty(M)
    fallback = False
    if not np.isfinite(top):
        fallback = True
        for j in range(M):
            w[j] = prior[j]
    else:
        s = 0.0
        for j in range(M):
            w[j] = math.exp(lp[j] - top)
            s += w[j]
        for j in range(M):
            w[j] /= s
    if floor > 0.0 and M > 1:
        floor_simplex(w, floor)
    return w, fallback


@njit(cache=True)
def floor_simplex(p, floor):
    """Raise entries of the probability vector ``p`` to ``floor`` in place.

    The added mass is taken from the largest entry, so the result keeps
    summing to one and no entry ends up below ``floor``.
    """
    deficit = 0.0
    for j in range(p.shape[0]):
        if p[j] < floor:
            deficit += floor - p[j]
            p[j] = floor
    if deficit > 0.0:
        p[argmax_first(p)] -= deficit


@njit(cache=True)
def argmax_first(w):
    best = 0
    for i in range(1, w.shape[0]):
        if w[i] > w[best]:
            best = i
    return best


@njit(cache=True)
def cholesky_jitter(P, n):
    """Lower Cholesky factor of ``P[:n, :n]``; adds growing jitter until it succeeds."""
    tr = 0.0
    for a in range(n):
        tr += P[a, a]
    lam = 0.0
    # absolute floor keeps tr(P) * d^2 finite when P collapses to zero
    base = max(1e-9 * tr / n, 1e-15)
    L = np.zeros((n, n))
    for attempt in range(14):
        ok = True
        for a in range(n):
            for b in range(a + 1):
                s = P[a, b] + (lam if a == b else 0.0)
                for k in range(b):
                    s -= L[a, k] * L[b, k]
                if a == b:
                    if not s > 0.0:
                        ok = False
                        break
                    L[a, a] = math.sqrt(s)
                else:
                    L[a, b] = s / L[b, b]
            if not ok:
                break
        if ok:
            return L, lam
        lam = base if lam == 0.0 else lam * 10.0
    return L, np.inf


@njit(cache=True)
def forward_mahalanobis(L, d, n):
    s = 0.0
    u = np.empty(n)
    for a in range(n):
        t = d[a]
        for k in range(a):
            t -= L[a, k] * u[k]
        u[a] = t / L[a, a]
        s += u[a] * u[a]
    return s


@njit(cache=True)
def drift_bound(means, covs, dims, w, pad_var, scale):
    """``(B, dbar2, tail, winner, Pbar)`` in the (optionally scaled) winner space."""
    M = means.shape[0]
    N = means.shape[1]
    win = argmax_first(w)
    tail = 1.0 - w[win]
    n = dims[win]
    pbar = np.zeros((n, n))
    if M == 1 or tail <= 0.0:
        return 0.0, 0.0, max(tail, 0.0), win, pbar
    for a in range(n):
        for b in range(n):
            pbar[a, b] = covs[win, a, b] * scale[a] * scale[b]
    deltas = np.zeros((M, n))
    wt = np.zeros(M)
    xm = np.zeros(N)
    Pm = np.zeros((N, N))
    for i in range(M):
        if i == win:
            continue
        wt[i] = w[i] / tail
        map_into(means[i], covs[i], dims[i], n, pad_var, xm, Pm)
        for a in range(n):
            deltas[i, a] = (xm[a] - means[win, a]) * scale[a]
            for b in range(n):
                pbar[a, b] += wt[i] * Pm[a, b] * scale[a] * scale[b]
    tr = 0.0
    for a in range(n):
        for b in range(n):
            pbar[a, b] *= 0.5
        tr += pbar[a, a]
    symmetrize(pbar, n)
    L, lam = cholesky_jitter(pbar, n)
    dbar2 = 0.0
    for i in range(M):
        if i == win:
            continue
        dbar2 += wt[i] * forward_mahalanobis(L, deltas[i], n)
    B = tail * math.sqrt(tr * dbar2)
    return B, dbar2, tail, win, pbar


@njit(cache=True)
def glr(ll_hist, win_hist, count):
    if count == 0:
        return 0.0
    inc = win_hist[count - 1]
    M = ll_hist.shape[1]
    total = 0.0
    for k in range(count):
        li = ll_hist[k, inc]
        if not np.isfinite(li):
            continue
        best = -np.inf
        for j in range(M):
            x = ll_hist[k, j]
            if np.isfinite(x) and x > best:
                best = x
        total += best - li
    return total


@njit(cache=True)
def entropy(w):
    M = w.shape[0]
    if M < 2:
        return 0.0
    h = 0.0
    for j in range(M):
        if w[j] > 0.0:
            h -= w[j] * math.log(w[j])
    h /= math.log(M)
    return min(max(h, 0.0), 1.0)


@njit(cache=True)
def winner_streak(win_hist, count):
    if count == 0:
        return 0
    last = win_hist[count - 1]
    n = 0
    for k in range(count - 1, -1, -1):
        if win_hist[k] != last:
            break
        n += 1
    return n


@njit(cache=True)
def adapt_tpm(pi_base, params, cv_idx, ca_idx, ll_hist, win_hist, count, window, w):
    """Adapted TPM; ``params`` = (alpha_max, g_glr, g_ent, winner_bias, ca_boost, cv_boost, cap, glr_threshold)."""
    alpha_max, g_glr, g_ent, bias, ca_boost, cv_boost, cap, glr_thr = (
        params[0], params[1], params[2], params[3], params[4], params[5], params[6], params[7])
    M = pi_base.shape[0]
    win = argmax_first(w)
    g = glr(ll_hist, win_hist, count)
    alpha = min(alpha_max, g_glr * g + g_ent * entropy(w))
    pi = pi_base.copy()
    if alpha > 0.0 and M > 1:
        for r in range(M):
            for c in range(M):
                polar = (1.0 - cap) if c == win else cap / (M - 1)
                pi[r, c] = (1.0 - alpha) * pi_base[r, c] + alpha * polar
    if winner_streak(win_hist, count) >= 2:
        pi[win, win] += bias
    if M > max(ca_idx, cv_idx):
        if g > glr_thr:
            for r in range(M):
                pi[r, ca_idx] += ca_boost
        elif count >= window and g == 0.0:
            for r in range(M):
                pi[r, cv_idx] += cv_boost
    for r in range(M):
        s = 0.0
        for c in range(M):
            s += pi[r, c]
        excess = 0.0
        for c in range(M):
            pi[r, c] /= s
            if c != r and pi[r, c] > cap:
                excess += pi[r, c] - cap
                pi[r, c] = cap
        pi[r, r] += excess
        floor_simplex(pi[r], MIN_TPM_ENTRY)
    return pi


@njit(cache=True)
def push_history(ll_hist, win_hist, count, logliks, winner):
    window = ll_hist.shape[0]
    lh = ll_hist.copy()
    wh = win_hist.copy()
    if count < window:
        lh[count] = logliks
        wh[count] = winner
        return lh, wh, count + 1
    for k in range(window - 1):
        lh[k] = lh[k + 1]
        wh[k] = wh[k + 1]
    lh[window - 1] = logliks
    wh[window - 1] = winner
    return lh, wh, count


@njit(cache=True)
def gate(means, covs, dims, w, logliks, has_ll, pad_var, scale, n_out,
         epsilon, margin_min, streak_len, enabled, prev_streak, prev_winner):
    """Gated output. Returns ``(x_out, P_out, stats, ints, flags)``.

    stats = (B, dbar2, tail, winner_prob, actual_drift, margin, loglik_margin)
    ints = (winner, streak)
    flags = (fired, margin_ok, bound_ok)
    """
    M = means.shape[0]
    B, dbar2, tail, win, _ = drift_bound(means, covs, dims, w, pad_var, scale)
    n_w = dims[win]
    n_mix = max(n_out, n_w)
    xm = np.zeros(n_mix)
    Pm = np.zeros((n_mix, n_mix))
    mixture_into(means, covs, dims, w, n_mix, pad_var, xm, Pm)
    actual = 0.0
    for a in range(n_w):
        d = (xm[a] - means[win, a]) * scale[a]
        actual += d * d
    actual = math.sqrt(actual)

    runner = 0.0
    ll_runner = -np.inf
    for i in range(M):
        if i != win:
            if w[i] > runner:
                runner = w[i]
            if logliks[i] > ll_runner:
                ll_runner = logliks[i]
    margin = w[win] - runner
    ll_margin = np.nan
    if has_ll and M > 1:
        ll_margin = logliks[win] - ll_runner

    bound_ok = B <= epsilon
    margin_ok = margin >= margin_min
    if bound_ok and margin_ok:
        streak = prev_streak + 1 if prev_winner == win else 1
    else:
        streak = 0
    fired = enabled and bound_ok and margin_ok and streak >= streak_len

    xo = np.zeros(n_out)
    Po = np.zeros((n_out, n_out))
    if fired:
        map_into(means[win], covs[win], n_w, n_out, pad_var, xo, Po)
    else:
        map_into(xm, Pm, n_mix, n_out, pad_var, xo, Po)
    stats = np.array([B, dbar2, tail, w[win], actual, margin, ll_margin])
    return xo, Po, stats, (win, streak), (fired, margin_ok, bound_ok)


@njit(cache=True)
def predict_bank(means, covs, dims, w, tpm, F, Q, pad_var):
    pr = priors(w, tpm)
    om, oc, degenerate = mix(means, covs, dims, w, tpm, pad_var)
    for j in range(means.shape[0]):
        kf_predict(om[j], oc[j], dims[j], F[j], Q[j])
    return om, oc, pr, degenerate


@njit(cache=True)
def correct_bank(pmeans, pcovs, dims, pr, z, R, lik_kind, nu, t_const, floor):
    """Per-model update + likelihoods + posterior; failed models keep the prediction."""
    M = pmeans.shape[0]
    means = pmeans.copy()
    covs = pcovs.copy()
    logliks = np.empty(M)
    for j in range(M):
        status, v, S, maha, logdet = kf_update(means[j], covs[j], dims[j], z, R)
        if status != OK:
            means[j] = pmeans[j]
            covs[j] = pcovs[j]
            logliks[j] = -np.inf
        elif lik_kind == 0:
            logliks[j] = gaussian_loglik(maha, logdet, 3)
        else:
            logliks[j] = student_t_loglik(maha, logdet, 3, nu, t_const)
    w, fallback = posterior(pr, logliks, floor)
    return means, covs, logliks, w, fallback


@njit(cache=True)
def maha_batch(x, P, R, Z):
    """Squared Mahalanobis distance of each row of ``Z`` to the predicted position."""
    S = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            S[a, b] = P[a, b] + R[a, b]
    L, status = chol3(S)
    K = Z.shape[0]
    out = np.empty(K)
    if status != OK:
        out[:] = np.inf
        return out
    v = np.empty(3)
    for k in range(K):
        for a in range(3):
            v[a] = Z[k, a] - x[a]
        out[k] = maha_logdet3(L, v)[0]
    return out
