"""Exact Gaussian marginal likelihood, filtering and smoothing.

The filter follows the prediction / update / marginalization recursion with
a Joseph-form covariance update for numerical symmetry.  Time indexing
matches :mod:`canon_lti.systems`: the initial predictive state is
(0, A P0 A^T + Sigma) since there is no input before the first sample, and
the innovation at step t compares y_t against C x_{t|t-1} + D u_t.
A fixed nugget of 1e-12 is added to the innovation covariance diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import FilterError
from .systems import NoiseSpec, StateSpaceSystem, Trajectory

__all__ = [
    "FilterState",
    "kalman_loglik",
    "kalman_smoother",
    "sample_smoothing_trajectory",
    "posterior_predictive_states",
    "NUGGET",
]

NUGGET = 1e-12


@dataclass(frozen=True)
class FilterState:
    """One step of the filter: predicted and updated moments plus likelihood."""

    mean: np.ndarray
    cov: np.ndarray
    pred_mean: np.ndarray
    pred_cov: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    loglik_increment: float


def _sym(M):
    return 0.5 * (M + M.T)


def kalman_loglik(sys: StateSpaceSystem, noise: NoiseSpec, traj: Trajectory):
    """Marginal log likelihood of y_{1:T} and the per-step filter states.

    Returns (total_loglik, [FilterState, ...]).  The deterministic
    sigma_state = 0 case runs through the same recursion with Sigma = 0.
    """
    if traj.u.shape[1] != sys.d_u or traj.y.shape[1] != sys.d_y:
        raise FilterError(
            f"trajectory dims ({traj.u.shape[1]}, {traj.y.shape[1]}) do not match "
            f"system dims ({sys.d_u}, {sys.d_y})"
        )
    if not np.all(np.isfinite(traj.y)):
        raise FilterError("observations contain non-finite values")
    d_x, d_y = sys.d_x, sys.d_y
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    Sigma = noise.state_cov(d_x)
    Gamma = noise.obs_cov(d_y)
    I = np.eye(d_x)

    x = np.zeros(d_x)
    P = np.array(noise.P0)
    total = 0.0
    states: List[FilterState] = []
    for t in range(traj.T):
        u_prev = traj.u[t - 1] if t > 0 else np.zeros(sys.d_u)
        x_pred = A @ x + B @ u_prev
        P_pred = _sym(A @ P @ A.T + Sigma)
        nu = traj.y[t] - (C @ x_pred + D @ traj.u[t])
        S = _sym(C @ P_pred @ C.T + Gamma) + NUGGET * np.eye(d_y)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise FilterError(f"innovation covariance not PD at step {t + 1}") from exc
        alpha = np.linalg.solve(L, nu)
        inc = -0.5 * (
            d_y * np.log(2.0 * np.pi) + 2.0 * np.sum(np.log(np.diag(L))) + alpha @ alpha
        )
        K = np.linalg.solve(S, C @ P_pred).T
        x = x_pred + K @ nu
        IKC = I - K @ C
        P = _sym(IKC @ P_pred @ IKC.T + K @ Gamma @ K.T)
        total += inc
        states.append(
            FilterState(
                mean=x.copy(),
                cov=P.copy(),
                pred_mean=x_pred,
                pred_cov=P_pred,
                innovation=nu,
                innovation_cov=S,
                loglik_increment=float(inc),
            )
        )
    return float(total), states


def kalman_smoother(sys: StateSpaceSystem, noise: NoiseSpec, traj: Trajectory):
    """RTS smoothing moments of x_t | y_{1:T} for t = 0..T.

    Returns (means, covs) with shapes (T+1, d_x) and (T+1, d_x, d_x); index 0
    is the initial state.
    """
    _, states = kalman_loglik(sys, noise, traj)
    T = traj.T
    d_x = sys.d_x
    means = np.empty((T + 1, d_x))
    covs = np.empty((T + 1, d_x, d_x))
    means[T] = states[-1].mean
    covs[T] = states[-1].cov
    A = sys.A
    for t in range(T - 1, -1, -1):
        if t == 0:
            m_f, P_f = np.zeros(d_x), np.array(noise.P0)
        else:
            m_f, P_f = states[t - 1].mean, states[t - 1].cov
        P_pred = states[t].pred_cov
        J = np.linalg.solve(P_pred + NUGGET * np.eye(d_x), A @ P_f).T
        means[t] = m_f + J @ (means[t + 1] - states[t].pred_mean)
        covs[t] = _sym(P_f + J @ (covs[t + 1] - P_pred) @ J.T)
    return means, covs


def sample_smoothing_trajectory(sys, noise, traj, rng) -> np.ndarray:
    """One draw of x_{0:T} from the joint smoothing distribution (FFBS)."""
    _, states = kalman_loglik(sys, noise, traj)
    T = traj.T
    d_x = sys.d_x
    A = sys.A
    draw = np.empty((T + 1, d_x))
    draw[T] = _draw_gauss(states[-1].mean, states[-1].cov, rng)
    for t in range(T - 1, -1, -1):
        if t == 0:
            m_f, P_f = np.zeros(d_x), np.array(noise.P0)
        else:
            m_f, P_f = states[t - 1].mean, states[t - 1].cov
        P_pred = states[t].pred_cov
        J = np.linalg.solve(P_pred + NUGGET * np.eye(d_x), A @ P_f).T
        mean = m_f + J @ (draw[t + 1] - states[t].pred_mean)
        cov = _sym(P_f - J @ P_pred @ J.T)
        draw[t] = _draw_gauss(mean, cov, rng)
    return draw


def _draw_gauss(mean, cov, rng):
    d = mean.size
    w, V = np.linalg.eigh(_sym(cov))
    w = np.clip(w, 0.0, None)
    return mean + V @ (np.sqrt(w) * rng.standard_normal(d))


def posterior_predictive_states(samples, traj, n_draws=None, seed=None) -> np.ndarray:
    """Two-stage smoothing draws: one state trajectory per parameter draw.

    ``samples`` is a PosteriorSamples instance (canonical or standard mode);
    ``n_draws`` caps the number of parameter draws used (evenly thinned).
    Returns an array of shape (n_used, T+1, d_x).
    """
    rng = np.random.default_rng(seed)
    flat = samples.flat_draws()
    n_total = flat.shape[0]
    n_used = n_total if n_draws is None else min(n_draws, n_total)
    idx = np.linspace(0, n_total - 1, n_used).astype(int)
    d_x = samples.layout.d_x
    out = np.empty((n_used, traj.T + 1, d_x))
    for i, j in enumerate(idx):
        sys, noise = samples.layout.decode(flat[j])
        out[i] = sample_smoothing_trajectory(sys, noise, traj, rng)
    return out
