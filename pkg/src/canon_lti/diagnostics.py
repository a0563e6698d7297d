"""Convergence diagnostics: rank-normalized split R-hat and bulk ESS.

Implements the modern variants: chains are split in half, draws are
rank-normalized through the inverse normal CDF, R-hat is the classic
between/within ratio on the transformed chains and ESS combines per-chain
FFT autocovariances with Geyer's initial monotone positive-pair truncation.
Degenerate (constant) chains report ESS = 0 and R-hat = inf.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["split_rhat", "ess_bulk", "diagnostics"]

RHAT_SENTINEL = float("inf")


def _split(chains: np.ndarray) -> np.ndarray:
    """(m, n) -> (2m, n//2): first and second half of every chain."""
    m, n = chains.shape
    half = n // 2
    return np.vstack([chains[:, :half], chains[:, n - half :]])


def _rank_normalize(chains: np.ndarray) -> np.ndarray:
    flat = chains.reshape(-1)
    ranks = stats.rankdata(flat, method="average")
    z = stats.norm.ppf((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def _rhat_classic(chains: np.ndarray) -> float:
    m, n = chains.shape
    means = chains.mean(axis=1)
    variances = chains.var(axis=1, ddof=1)
    W = variances.mean()
    B = n * means.var(ddof=1)
    if W <= 0.0:
        return RHAT_SENTINEL
    var_hat = (n - 1) / n * W + B / n
    return float(np.sqrt(var_hat / W))


def split_rhat(chains) -> float:
    """Rank-normalized split Gelman-Rubin statistic for one parameter.

    ``chains`` has shape (n_chains, n_draws).  Returns inf for degenerate
    (zero within-chain variance) inputs.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("chains must be 2-d (n_chains, n_draws)")
    if np.allclose(chains.var(axis=1), 0.0):
        return RHAT_SENTINEL
    return _rhat_classic(_rank_normalize(_split(chains)))


def _autocov_fft(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance estimates of one centered chain."""
    n = x.size
    x = x - x.mean()
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    return acov / n


def ess_bulk(chains) -> float:
    """Bulk effective sample size on rank-normalized split chains."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("chains must be 2-d (n_chains, n_draws)")
    if np.allclose(chains.var(axis=1), 0.0):
        return 0.0
    z = _rank_normalize(_split(chains))
    m, n = z.shape
    if n < 4:
        return 0.0
    acovs = np.vstack([_autocov_fft(z[c]) for c in range(m)])
    W = float(np.mean(acovs[:, 0] * n / (n - 1.0)))
    mean_acov = acovs.mean(axis=0)
    var_plus = mean_acov[0]
    if m > 1:
        var_plus += float(z.mean(axis=1).var(ddof=1))
    if var_plus <= 0.0:
        return 0.0
    rho = 1.0 - (W - mean_acov) / var_plus
    rho[0] = 1.0
    # Geyer initial positive sequence of even-start pairs
    # P_k = rho_{2k} + rho_{2k+1}, truncated at the first negative pair,
    # then forced monotone nonincreasing.
    pair_sums = []
    for k in range((n - 1) // 2):
        p = rho[2 * k] + rho[2 * k + 1]
        if p < 0.0:
            break
        pair_sums.append(p)
    total = 0.0
    running_min = np.inf
    for p in pair_sums:
        running_min = min(running_min, p)
        total += running_min
    tau = max(-1.0 + 2.0 * total, 1e-12)
    ess = m * n / tau
    return float(min(ess, m * n))


def diagnostics(draws) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter (ess, rhat) for draws of shape (n_chains, n_kept, dim).

    Requires at least 2 chains and 100 kept draws per chain.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise ValueError("draws must be 3-d (n_chains, n_kept, dim)")
    m, n, dim = draws.shape
    if m < 2:
        raise ValueError("diagnostics require at least 2 chains")
    if n < 100:
        raise ValueError("diagnostics require at least 100 kept draws per chain")
    ess = np.empty(dim)
    rhat = np.empty(dim)
    for j in range(dim):
        ess[j] = ess_bulk(draws[:, :, j])
        rhat[j] = split_rhat(draws[:, :, j])
    return ess, rhat
