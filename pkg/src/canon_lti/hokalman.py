"""Ho-Kalman / eigensystem-realization baseline point estimates.

Markov parameters are estimated by least-squares regression of y_t on the
lagged inputs (the single-trajectory setting has no impulse experiments),
then a truncated SVD of the block Hankel matrix yields balanced
observability/controllability factors and the realization is read off with
a shifted-Hankel solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .canonical import CanonicalSiso, to_controller_form
from .exceptions import DimensionError, NotControllableError
from .systems import StateSpaceSystem, Trajectory

__all__ = ["HoKalmanConfig", "estimate_markov", "ho_kalman", "hke_in_canonical"]

#: Relative pseudo-inverse cutoff for the shifted-Hankel solve.
PINV_TOL = 1e-10

#: Minimum trajectory-length multiple of the regression window.
MIN_LENGTH_FACTOR = 3


@dataclass(frozen=True)
class HoKalmanConfig:
    """Hankel block counts and target order; p, q >= d_x is required."""

    p: int
    q: int
    d_x: int
    markov_estimation: str = "least_squares"

    def __post_init__(self):
        if self.p < self.d_x or self.q < self.d_x:
            raise DimensionError(
                f"p and q must be >= d_x for rank-{self.d_x} recovery, "
                f"got p={self.p}, q={self.q}"
            )
        if self.markov_estimation not in ("least_squares", "impulse_direct"):
            raise ValueError(f"unknown estimation mode {self.markov_estimation!r}")

    @classmethod
    def default(cls, d_x: int):
        return cls(p=2 * d_x, q=2 * d_x, d_x=d_x)


def estimate_markov(traj: Trajectory, k: int) -> np.ndarray:
    """Least-squares estimates of M_0 .. M_k from one SISO trajectory.

    Regresses y_t on (u_t, u_{t-1}, ..., u_{t-k}); with the shared time
    convention y_t = sum_{j>=0} M_j u_{t-j} exactly in the noiseless case,
    so rows t = k+1 .. T identify the leading Markov parameters.
    """
    if traj.u.shape[1] != 1 or traj.y.shape[1] != 1:
        raise DimensionError("Markov estimation is SISO-only")
    T = traj.T
    if T < MIN_LENGTH_FACTOR * (k + 1):
        raise DimensionError(
            f"trajectory of length {T} too short for window k={k} "
            f"(need at least {MIN_LENGTH_FACTOR * (k + 1)})"
        )
    u = traj.u[:, 0]
    y = traj.y[:, 0]
    rows = T - k
    X = np.empty((rows, k + 1))
    for j in range(k + 1):
        X[:, j] = u[k - j : T - j]
    rank = np.linalg.matrix_rank(X)
    if rank < k + 1:
        raise np.linalg.LinAlgError(
            f"regressor matrix rank {rank} < {k + 1}; input not exciting enough"
        )
    coef, *_ = np.linalg.lstsq(X, y[k:], rcond=None)
    return coef


def ho_kalman(markov, cfg: HoKalmanConfig) -> StateSpaceSystem:
    """Realize a state-space model from (estimated) Markov parameters.

    Builds the p x q block Hankel from M_1.., truncates its SVD at d_x,
    splits balanced factors O = U S^(1/2), R = S^(1/2) V', then recovers
    C from the first block row of O, B from the first block column of R,
    A from the shifted observability solve and D = M_0.
    """
    markov = np.asarray(markov, dtype=float).ravel()
    need = cfg.p + cfg.q + 1
    if markov.size < need:
        raise DimensionError(
            f"need M_0..M_{need - 1} ({need} values) for p={cfg.p}, q={cfg.q}, "
            f"got {markov.size}"
        )
    H = np.empty((cfg.p, cfg.q))
    for i in range(cfg.p):
        for j in range(cfg.q):
            H[i, j] = markov[i + j + 1]
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    d = cfg.d_x
    if s.size > d and s[d - 1] > 0 and s[d] / s[d - 1] > 0.5:
        warnings.warn(
            f"weak singular-value gap at order {d} "
            f"(s[{d}]/s[{d - 1}] = {s[d] / s[d - 1]:.3f}); order may be ambiguous",
            RuntimeWarning,
        )
    sqrt_s = np.sqrt(s[:d])
    O = U[:, :d] * sqrt_s
    R = (Vt[:d, :].T * sqrt_s).T
    O_up = O[:-1, :]
    O_down = O[1:, :]
    A = np.linalg.pinv(O_up, rcond=PINV_TOL) @ O_down
    B = R[:, :1]
    C = O[:1, :]
    D = np.array([[markov[0]]])
    return StateSpaceSystem(A=A, B=B, C=C, D=D)


def hke_in_canonical(traj: Trajectory, cfg: HoKalmanConfig) -> CanonicalSiso:
    """Ho-Kalman estimate mapped to controller coordinates.

    Enables parameter-space error comparisons against canonical ground
    truth.  Raises NotControllableError when the recovered realization is
    not controllable.
    """
    markov = estimate_markov(traj, cfg.p + cfg.q)
    sys = ho_kalman(markov, cfg)
    c, _ = to_controller_form(sys)
    return c
