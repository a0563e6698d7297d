"""Compiled SISO Kalman-filter kernels.

These are the hot paths behind posterior gradients and Fisher-information
accumulation: a plain log-likelihood filter and a forward-sensitivity filter
that propagates derivatives of the filter state with respect to an arbitrary
set of parameter directions (dA, dB, dC, dD, dSigma, dGamma).  Everything is
written with explicit loops over the (small) state dimension so numba can
compile allocation-free step bodies.

The numpy reference implementation lives in :mod:`canon_lti.kalman`; the
test suite pins both paths together to ~1e-12.
"""

import numpy as np
from numba import njit

NUGGET = 1e-12


@njit(cache=True, nogil=True)
def filter_loglik(A, B, C, D, Sigma, Gamma, P0, u, y):
    """Marginal log likelihood for a SISO system; nan signals a filter failure."""
    dx = A.shape[0]
    T = y.shape[0]
    x = np.zeros(dx)
    P = P0.copy()
    xp = np.zeros(dx)
    Pp = np.zeros((dx, dx))
    K = np.zeros(dx)
    W = np.zeros((dx, dx))
    ll = 0.0
    u_prev = 0.0
    # With Sigma = 0 the filter covariance decays geometrically; once it is
    # negligible the recursion reduces to the deterministic mean propagation.
    sigma_zero = True
    for i in range(dx):
        for j in range(dx):
            if Sigma[i, j] != 0.0:
                sigma_zero = False
    frozen = False
    S_frozen = Gamma + NUGGET
    log_term = 0.0
    for t in range(T):
        for i in range(dx):
            s = B[i] * u_prev
            for j in range(dx):
                s += A[i, j] * x[j]
            xp[i] = s
        if frozen:
            cy = D * u[t]
            for j in range(dx):
                cy += C[j] * xp[j]
            nu = y[t] - cy
            ll += -0.5 * (log_term + nu * nu / S_frozen)
            for i in range(dx):
                x[i] = xp[i]
            u_prev = u[t]
            continue
        for i in range(dx):
            for j in range(dx):
                s = 0.0
                for k in range(dx):
                    s += A[i, k] * P[k, j]
                W[i, j] = s
        for i in range(dx):
            for j in range(dx):
                s = Sigma[i, j]
                for k in range(dx):
                    s += W[i, k] * A[j, k]
                Pp[i, j] = s
        cy = D * u[t]
        for j in range(dx):
            cy += C[j] * xp[j]
        nu = y[t] - cy
        S = Gamma + NUGGET
        for i in range(dx):
            s = 0.0
            for j in range(dx):
                s += Pp[i, j] * C[j]
            K[i] = s
            S += C[i] * s
        if S <= 0.0 or not np.isfinite(S):
            return np.nan
        ll += -0.5 * (np.log(2.0 * np.pi * S) + nu * nu / S)
        for i in range(dx):
            K[i] /= S
        for i in range(dx):
            x[i] = xp[i] + K[i] * nu
        # Joseph update: P = (I - K C) Pp (I - K C)' + Gamma K K'
        for i in range(dx):
            for j in range(dx):
                lij = (1.0 if i == j else 0.0) - K[i] * C[j]
                W[i, j] = lij
        for i in range(dx):
            for j in range(dx):
                s = 0.0
                for k in range(dx):
                    s += W[i, k] * Pp[k, j]
                P[i, j] = s
        for i in range(dx):
            for j in range(i, dx):
                s = Gamma * K[i] * K[j]
                for k in range(dx):
                    s += P[i, k] * W[j, k]
                Pp[i, j] = s
        trace_p = 0.0
        for i in range(dx):
            for j in range(i, dx):
                P[i, j] = Pp[i, j]
                P[j, i] = Pp[i, j]
            trace_p += P[i, i]
        if sigma_zero and trace_p < 1e-30:
            frozen = True
            S_frozen = Gamma + NUGGET
            for i in range(dx):
                s = 0.0
                for j in range(dx):
                    s += P[i, j] * C[j]
                S_frozen += C[i] * s
            log_term = np.log(2.0 * np.pi * S_frozen)
        u_prev = u[t]
    return ll


@njit(cache=True, nogil=True)
def filter_sens(A, B, C, D, Sigma, Gamma, P0, u, y, dA, dB, dC, dD, dSigma, dGamma, want_fim):
    """Forward-sensitivity filter.

    Propagates d(filter state)/d(theta_i) for N parameter directions given as
    dense derivative stacks, accumulating the log-likelihood, its gradient
    and (when ``want_fim``) the innovation-form information matrix

        I = sum_t [ dnu dnu' / S + 0.5 * dS dS' / S^2 ].

    Initial-condition derivatives are zero.  Returns (ll, grad, fim); ll is
    nan on filter failure.
    """
    dx = A.shape[0]
    N = dA.shape[0]
    T = y.shape[0]
    x = np.zeros(dx)
    P = P0.copy()
    dxs = np.zeros((N, dx))
    dPs = np.zeros((N, dx, dx))
    xp = np.zeros(dx)
    Pp = np.zeros((dx, dx))
    dxp = np.zeros((N, dx))
    dPp = np.zeros((N, dx, dx))
    K = np.zeros(dx)
    PpC = np.zeros(dx)
    dK = np.zeros((N, dx))
    dnu = np.zeros(N)
    dS = np.zeros(N)
    W = np.zeros((dx, dx))
    L = np.zeros((dx, dx))
    dL = np.zeros((dx, dx))
    tmp = np.zeros((dx, dx))
    tmp2 = np.zeros((dx, dx))
    ll = 0.0
    grad = np.zeros(N)
    fim = np.zeros((N, N))
    u_prev = 0.0
    # Covariance sensitivities die out geometrically in the Sigma = 0 case
    # (no inferred process noise): freeze them once negligible and run the
    # cheap deterministic mean/mean-sensitivity recursion.
    freezable = True
    for i in range(dx):
        for j in range(dx):
            if Sigma[i, j] != 0.0:
                freezable = False
    for n in range(N):
        for i in range(dx):
            for j in range(dx):
                if dSigma[n, i, j] != 0.0:
                    freezable = False
    frozen = False
    S_frozen = Gamma + NUGGET
    log_term = 0.0
    for t in range(T):
        # prediction: xp = A x + B u_prev, Pp = A P A' + Sigma
        for i in range(dx):
            s = B[i] * u_prev
            for j in range(dx):
                s += A[i, j] * x[j]
            xp[i] = s
        if frozen:
            for n in range(N):
                for i in range(dx):
                    s = dB[n, i] * u_prev
                    for j in range(dx):
                        s += A[i, j] * dxs[n, j] + dA[n, i, j] * x[j]
                    dxp[n, i] = s
            cy = D * u[t]
            for j in range(dx):
                cy += C[j] * xp[j]
            nu = y[t] - cy
            S = S_frozen
            ll += -0.5 * (log_term + nu * nu / S)
            for n in range(N):
                s = -dD[n] * u[t]
                for j in range(dx):
                    s += -C[j] * dxp[n, j] - dC[n, j] * xp[j]
                dnu[n] = s
                dS[n] = dGamma[n]
                grad[n] += (
                    -0.5 * dS[n] / S + 0.5 * nu * nu * dS[n] / (S * S) - nu * dnu[n] / S
                )
            if want_fim:
                for n in range(N):
                    for m in range(n, N):
                        fim[n, m] += dnu[n] * dnu[m] / S + 0.5 * dS[n] * dS[m] / (S * S)
            for i in range(dx):
                x[i] = xp[i]
            for n in range(N):
                for i in range(dx):
                    dxs[n, i] = dxp[n, i]
            u_prev = u[t]
            continue
        for i in range(dx):
            for j in range(dx):
                s = 0.0
                for k in range(dx):
                    s += A[i, k] * P[k, j]
                W[i, j] = s  # W = A P
        for i in range(dx):
            for j in range(dx):
                s = Sigma[i, j]
                for k in range(dx):
                    s += W[i, k] * A[j, k]
                Pp[i, j] = s
        # prediction sensitivities
        for n in range(N):
            for i in range(dx):
                s = dB[n, i] * u_prev
                for j in range(dx):
                    s += A[i, j] * dxs[n, j] + dA[n, i, j] * x[j]
                dxp[n, i] = s
            # tmp = dA[n] P, tmp2 = tmp A'  (dA P A')
            for i in range(dx):
                for j in range(dx):
                    s = 0.0
                    for k in range(dx):
                        s += dA[n, i, k] * P[k, j]
                    tmp[i, j] = s
            for i in range(dx):
                for j in range(dx):
                    s = 0.0
                    for k in range(dx):
                        s += tmp[i, k] * A[j, k]
                    tmp2[i, j] = s
            # tmp = A dPs[n]
            for i in range(dx):
                for j in range(dx):
                    s = 0.0
                    for k in range(dx):
                        s += A[i, k] * dPs[n, k, j]
                    tmp[i, j] = s
            for i in range(dx):
                for j in range(dx):
                    s = dSigma[n, i, j] + tmp2[i, j] + tmp2[j, i]
                    for k in range(dx):
                        s += tmp[i, k] * A[j, k]
                    dPp[n, i, j] = s
        # innovation
        cy = D * u[t]
        for j in range(dx):
            cy += C[j] * xp[j]
        nu = y[t] - cy
        S = Gamma + NUGGET
        for i in range(dx):
            s = 0.0
            for j in range(dx):
                s += Pp[i, j] * C[j]
            PpC[i] = s
            S += C[i] * s
        if S <= 0.0 or not np.isfinite(S):
            return np.nan, grad, fim
        ll += -0.5 * (np.log(2.0 * np.pi * S) + nu * nu / S)
        for i in range(dx):
            K[i] = PpC[i] / S
        # innovation sensitivities, gradient, information
        for n in range(N):
            s = -dD[n] * u[t]
            for j in range(dx):
                s += -C[j] * dxp[n, j] - dC[n, j] * xp[j]
            dnu[n] = s
            s = dGamma[n]
            for i in range(dx):
                si = 0.0
                for j in range(dx):
                    si += dPp[n, i, j] * C[j]
                s += C[i] * si + 2.0 * dC[n, i] * PpC[i]
            dS[n] = s
            grad[n] += (
                -0.5 * dS[n] / S + 0.5 * nu * nu * dS[n] / (S * S) - nu * dnu[n] / S
            )
        if want_fim:
            for n in range(N):
                for m in range(n, N):
                    v = dnu[n] * dnu[m] / S + 0.5 * dS[n] * dS[m] / (S * S)
                    fim[n, m] += v
        # gain sensitivities and state update
        for n in range(N):
            for i in range(dx):
                s1 = 0.0
                s2 = 0.0
                for j in range(dx):
                    s1 += dPp[n, i, j] * C[j]
                    s2 += Pp[i, j] * dC[n, j]
                dK[n, i] = (s1 + s2) / S - PpC[i] * dS[n] / (S * S)
            for i in range(dx):
                dxs[n, i] = dxp[n, i] + dK[n, i] * nu + K[i] * dnu[n]
        for i in range(dx):
            x[i] = xp[i] + K[i] * nu
        # Joseph update and its sensitivities
        for i in range(dx):
            for j in range(dx):
                L[i, j] = (1.0 if i == j else 0.0) - K[i] * C[j]
        for i in range(dx):
            for j in range(dx):
                s = 0.0
                for k in range(dx):
                    s += L[i, k] * Pp[k, j]
                W[i, j] = s  # W = L Pp
        for n in range(N):
            for i in range(dx):
                for j in range(dx):
                    dL[i, j] = -dK[n, i] * C[j] - K[i] * dC[n, j]
            # tmp = dL Pp + L dPp[n]
            for i in range(dx):
                for j in range(dx):
                    s = 0.0
                    for k in range(dx):
                        s += dL[i, k] * Pp[k, j] + L[i, k] * dPp[n, k, j]
                    tmp[i, j] = s
            for i in range(dx):
                for j in range(dx):
                    s = (
                        dGamma[n] * K[i] * K[j]
                        + Gamma * (dK[n, i] * K[j] + K[i] * dK[n, j])
                    )
                    for k in range(dx):
                        s += tmp[i, k] * L[j, k] + W[i, k] * dL[j, k]
                    dPs[n, i, j] = s
            for i in range(dx):
                for j in range(i + 1, dx):
                    v = 0.5 * (dPs[n, i, j] + dPs[n, j, i])
                    dPs[n, i, j] = v
                    dPs[n, j, i] = v
        for i in range(dx):
            for j in range(i, dx):
                s = Gamma * K[i] * K[j]
                for k in range(dx):
                    s += W[i, k] * L[j, k]
                tmp[i, j] = s
        trace_p = 0.0
        for i in range(dx):
            for j in range(i, dx):
                P[i, j] = tmp[i, j]
                P[j, i] = tmp[i, j]
            trace_p += P[i, i]
        if freezable and trace_p < 1e-30:
            sens_mass = 0.0
            for n in range(N):
                for i in range(dx):
                    for j in range(dx):
                        sens_mass += abs(dPs[n, i, j])
            if sens_mass < 1e-26:
                frozen = True
                S_frozen = Gamma + NUGGET
                for i in range(dx):
                    s = 0.0
                    for j in range(dx):
                        s += P[i, j] * C[j]
                    S_frozen += C[i] * s
                log_term = np.log(2.0 * np.pi * S_frozen)
        u_prev = u[t]
    for n in range(N):
        for m in range(n):
            fim[n, m] = fim[m, n]
    return ll, grad, fim
