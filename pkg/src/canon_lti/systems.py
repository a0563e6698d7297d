"""Discrete-time LTI state-space systems and their structural properties.

The model is

    x_{t+1} = A x_t + B u_t + w_t,      w_t ~ N(0, Sigma)
    y_t     = C x_t + D u_t + z_t,      z_t ~ N(0, Gamma)

with x_0 ~ N(0, P0).  Stored trajectories hold the 1-based sequences
u_{1:T} and y_{1:T}; there is no input before the first sample, so the
first transition is x_1 = A x_0 + w_0.  The last input u_T only enters
y_T through the feedthrough D.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import (
    DimensionError,
    IllConditionedTransformError,
    NearPoleError,
    NotSpdError,
    UnstableSystemError,
)

__all__ = [
    "StateSpaceSystem",
    "NoiseSpec",
    "Trajectory",
    "EigenSpectrum",
    "simulate",
    "markov_parameter",
    "hankel_matrix",
    "transfer_function",
    "eigenvalues",
    "char_poly",
    "controllability_matrix",
    "observability_matrix",
    "is_minimal",
    "is_stable",
    "gramians",
    "apply_similarity",
]

#: Relative singular-value threshold used for numerical rank decisions.
DEFAULT_RANK_TOL = 1e-8

#: Condition-number bound beyond which a similarity transform is refused.
DEFAULT_COND_BOUND = 1e12


def _as_matrix(x, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} contains non-finite entries")
    return a


def _check_spd(M, name, tol=1e-10):
    M = _as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NotSpdError(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max())):
        raise NotSpdError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M + 0.0)
    except np.linalg.LinAlgError as exc:
        raise NotSpdError(f"{name} is not positive definite") from exc
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class StateSpaceSystem:
    """State-space realization (A, B, C, D) of a discrete-time LTI system."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        d_x = A.shape[0]
        if B.shape[0] != d_x:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {d_x}")
        if C.shape[1] != d_x:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {d_x}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(
                f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}"
            )
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def d_u(self) -> int:
        return self.B.shape[1]

    @property
    def d_y(self) -> int:
        return self.C.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.d_u == 1 and self.d_y == 1


@dataclass(frozen=True)
class NoiseSpec:
    """Noise and initial-state specification.

    ``sigma_state`` and ``sigma_obs`` are the scalar standard deviations of
    the isotropic process and measurement noise (Sigma = sigma_state^2 I,
    Gamma = sigma_obs^2 I).  ``Sigma`` may hold a full SPD process-noise
    covariance instead, as produced by :func:`apply_similarity`; it overrides
    ``sigma_state`` when present.  The initial state is x_0 ~ N(0, P0); the
    mean is fixed to zero.
    """

    sigma_state: float
    sigma_obs: float
    P0: np.ndarray
    Sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if not np.isfinite(self.sigma_obs) or self.sigma_obs <= 0:
            raise NotSpdError(f"sigma_obs must be positive, got {self.sigma_obs}")
        if not np.isfinite(self.sigma_state) or self.sigma_state < 0:
            raise NotSpdError(
                f"sigma_state must be nonnegative, got {self.sigma_state}"
            )
        P0 = _check_spd(self.P0, "P0")
        P0.setflags(write=False)
        object.__setattr__(self, "P0", P0)
        if self.Sigma is not None:
            S = _as_matrix(self.Sigma, "Sigma")
            S = 0.5 * (S + S.T)
            if np.any(np.linalg.eigvalsh(S) < -1e-10 * max(1.0, np.abs(S).max())):
                raise NotSpdError("Sigma must be positive semidefinite")
            S.setflags(write=False)
            object.__setattr__(self, "Sigma", S)

    @classmethod
    def default(cls, d_x, sigma_state=0.3, sigma_obs=0.5):
        """Diagonal spec with P0 = I."""
        return cls(sigma_state=sigma_state, sigma_obs=sigma_obs, P0=np.eye(d_x))

    def state_cov(self, d_x) -> np.ndarray:
        if self.Sigma is not None:
            if self.Sigma.shape != (d_x, d_x):
                raise DimensionError(
                    f"Sigma has shape {self.Sigma.shape}, expected {(d_x, d_x)}"
                )
            return np.asarray(self.Sigma)
        return self.sigma_state**2 * np.eye(d_x)

    def obs_cov(self, d_y) -> np.ndarray:
        return self.sigma_obs**2 * np.eye(d_y)


@dataclass(frozen=True)
class Trajectory:
    """Input/output record u_{1:T}, y_{1:T} with optional latent states x_{0:T}."""

    u: np.ndarray
    y: np.ndarray
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        u = _as_matrix(self.u, "u")
        y = _as_matrix(self.y, "y")
        # Accept 1-d sequences for SISO convenience.
        if np.asarray(self.u).ndim == 1:
            u = np.asarray(self.u, dtype=float).reshape(-1, 1)
        if np.asarray(self.y).ndim == 1:
            y = np.asarray(self.y, dtype=float).reshape(-1, 1)
        if u.shape[0] != y.shape[0]:
            raise DimensionError(
                f"u and y must share length, got {u.shape[0]} and {y.shape[0]}"
            )
        if u.shape[0] < 1:
            raise DimensionError("trajectory must contain at least one step")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = _as_matrix(self.x, "x")
            if x.shape[0] != u.shape[0] + 1:
                raise DimensionError(
                    f"x must have length T+1 = {u.shape[0] + 1}, got {x.shape[0]}"
                )
            x.setflags(write=False)
            object.__setattr__(self, "x", x)

    @property
    def T(self) -> int:
        return self.u.shape[0]


class EigenSpectrum:
    """Multiset of eigenvalues in a deterministic order.

    Values are sorted by (real part, imaginary part), which places complex
    conjugates adjacently.  Spectra derived from real matrices are closed
    under conjugation.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.asarray(values, dtype=complex).ravel()
        order = np.lexsort((v.imag, v.real))
        v = v[order]
        v.setflags(write=False)
        self.values = v

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)

    def __repr__(self):
        return f"EigenSpectrum({list(self.values)})"

    def __eq__(self, other):
        if not isinstance(other, EigenSpectrum):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(
            self.values, other.values
        )

    def is_conjugate_closed(self, tol=1e-9) -> bool:
        v = self.values
        unmatched = list(v[v.imag > tol])
        for lam in v[v.imag < -tol]:
            for i, mu in enumerate(unmatched):
                if abs(np.conj(lam) - mu) <= tol * max(1.0, abs(mu)):
                    unmatched.pop(i)
                    break
            else:
                return False
        return not unmatched and np.count_nonzero(v.imag > tol) == np.count_nonzero(
            v.imag < -tol
        )

    def split_real_complex(self, tol=1e-9):
        """Return (real roots, upper-half-plane pair representatives)."""
        v = self.values
        real = v[np.abs(v.imag) <= tol].real
        upper = v[v.imag > tol]
        lower = v[v.imag < -tol]
        if upper.size != lower.size:
            raise ValueError("spectrum is not closed under conjugation")
        return real, upper

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self) else 0.0


def simulate(sys, noise, u, seed=None, x0=None) -> Trajectory:
    """Simulate the system for the input sequence u_{1:T}.

    x_0 is drawn from N(0, P0) unless ``x0`` pins it explicitly.  With
    sigma_state = 0 the state recursion is deterministic given x_0.
    Latent states x_{0:T} are stored on the returned trajectory.
    """
    u_arr = np.asarray(u, dtype=float)
    if u_arr.ndim == 1:
        u_arr = u_arr.reshape(-1, 1)
    T = u_arr.shape[0]
    if T < 1:
        raise DimensionError("need at least one input sample")
    if u_arr.shape[1] != sys.d_u:
        raise DimensionError(f"u has {u_arr.shape[1]} columns, expected {sys.d_u}")
    rng = np.random.default_rng(seed)
    d_x, d_y = sys.d_x, sys.d_y
    Sigma = noise.state_cov(d_x)
    if x0 is None:
        L0 = np.linalg.cholesky(noise.P0)
        x_cur = L0 @ rng.standard_normal(d_x)
    else:
        x_cur = np.asarray(x0, dtype=float).reshape(d_x)
    if noise.sigma_state > 0 or noise.Sigma is not None:
        Ls = np.linalg.cholesky(Sigma + 1e-300 * np.eye(d_x))
    else:
        Ls = None

    x = np.empty((T + 1, d_x))
    y = np.empty((T, d_y))
    x[0] = x_cur
    for t in range(T):
        w = Ls @ rng.standard_normal(d_x) if Ls is not None else 0.0
        # no input before the first sample: x_1 = A x_0 + w_0
        u_prev = u_arr[t - 1] if t > 0 else np.zeros(sys.d_u)
        x[t + 1] = sys.A @ x[t] + sys.B @ u_prev + w
        z = noise.sigma_obs * rng.standard_normal(d_y)
        y[t] = sys.C @ x[t + 1] + sys.D @ u_arr[t] + z
    return Trajectory(u=u_arr, y=y, x=x)


def markov_parameter(sys, t) -> np.ndarray:
    """Impulse-response matrix: D for t = 0, C A^{t-1} B for t >= 1."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0:
        return np.array(sys.D)
    return sys.C @ np.linalg.matrix_power(sys.A, t - 1) @ sys.B


def markov_parameters(sys, k) -> np.ndarray:
    """Stack M_0 .. M_k as an array of shape (k+1, d_y, d_u)."""
    out = np.empty((k + 1, sys.d_y, sys.d_u))
    out[0] = sys.D
    acc = np.array(sys.B)
    for t in range(1, k + 1):
        out[t] = sys.C @ acc
        acc = sys.A @ acc
    return out


def hankel_matrix(sys, p, q) -> np.ndarray:
    """Block Hankel matrix with block (i, j) = M_{i+j-1}, 1-based blocks."""
    if p < 1 or q < 1:
        raise ValueError("p and q must be >= 1")
    M = markov_parameters(sys, p + q - 1)
    d_y, d_u = sys.d_y, sys.d_u
    H = np.empty((p * d_y, q * d_u))
    for i in range(p):
        for j in range(q):
            H[i * d_y : (i + 1) * d_y, j * d_u : (j + 1) * d_u] = M[i + j + 1]
    return H


def transfer_function(sys, z) -> np.ndarray:
    """G(z) = D + C (zI - A)^{-1} B."""
    z = complex(z)
    M = z * np.eye(sys.d_x) - sys.A
    try:
        cond = np.linalg.cond(M)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise NearPoleError(f"z = {z} is too close to an eigenvalue of A")
    return sys.D + sys.C @ np.linalg.solve(M, sys.B.astype(complex))


def eigenvalues(A) -> EigenSpectrum:
    """All eigenvalues of a square real matrix, deterministically ordered."""
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    try:
        vals = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise UnstableSystemError(f"eigensolver failed: {exc}") from exc
    return EigenSpectrum(vals)


def char_poly(A) -> np.ndarray:
    """Coefficients (a_0, ..., a_{n-1}) of det(lambda I - A), monic in lambda^n.

    Computed from the eigenvalues via sequential polynomial expansion, which
    is robust at the small state dimensions this package targets.
    """
    from .canonical import vieta_forward  # local import to avoid a cycle

    return vieta_forward(eigenvalues(A))


def controllability_matrix(sys) -> np.ndarray:
    """[B, AB, ..., A^{d_x-1} B], shape (d_x, d_x * d_u)."""
    blocks = []
    acc = np.array(sys.B)
    for _ in range(sys.d_x):
        blocks.append(acc)
        acc = sys.A @ acc
    return np.hstack(blocks)


def observability_matrix(sys) -> np.ndarray:
    """Stack of C, CA, ..., C A^{d_x-1}, shape (d_x * d_y, d_x)."""
    blocks = []
    acc = np.array(sys.C)
    for _ in range(sys.d_x):
        blocks.append(acc)
        acc = acc @ sys.A
    return np.vstack(blocks)


def _numerical_rank(M, tol):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def is_minimal(sys, tol=DEFAULT_RANK_TOL):
    """Check controllability and observability by numerical rank.

    Returns (minimal, rank_controllability, rank_observability).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rc = _numerical_rank(controllability_matrix(sys), tol)
    ro = _numerical_rank(observability_matrix(sys), tol)
    return (rc == sys.d_x and ro == sys.d_x), rc, ro


def is_stable(A, margin=0.0) -> bool:
    """True iff the spectral radius of A is below 1 - margin."""
    return eigenvalues(A).spectral_radius() < 1.0 - margin


def solve_discrete_lyapunov(A, Q) -> np.ndarray:
    """Solve W = A W A^T + Q for stable A.

    Small systems use the exact vectorized solve of (I - A (x) A) vec(W) =
    vec(Q); beyond d = 12 a doubling iteration is used instead.
    """
    A = _as_matrix(A, "A")
    Q = _as_matrix(Q, "Q")
    d = A.shape[0]
    if not is_stable(A):
        raise UnstableSystemError("Lyapunov solve requires a stable A")
    if d <= 12:
        lhs = np.eye(d * d) - np.kron(A, A)
        W = np.linalg.solve(lhs, Q.reshape(-1)).reshape(d, d)
    else:
        W = np.array(Q)
        Ak = np.array(A)
        for _ in range(200):
            delta = Ak @ W @ Ak.T
            W = W + delta
            if np.abs(delta).max() < 1e-16 * max(1.0, np.abs(W).max()):
                break
            Ak = Ak @ Ak
    return 0.5 * (W + W.T)


def gramians(sys):
    """Controllability and observability Gramians (W_c, W_o) for stable A."""
    W_c = solve_discrete_lyapunov(sys.A, sys.B @ sys.B.T)
    W_o = solve_discrete_lyapunov(sys.A.T, sys.C.T @ sys.C)
    return W_c, W_o


def apply_similarity(sys, noise, T_mat, cond_bound=DEFAULT_COND_BOUND):
    """Change the state basis: (A, B, C, D) -> (T^-1 A T, T^-1 B, C T, D).

    Covariances transform as Sigma' = T^-1 Sigma T^-T and P0' = T^-1 P0 T^-T;
    Gamma is invariant.  The returned NoiseSpec carries the (generally
    full) transformed Sigma even if the input was diagonal.
    """
    T_mat = _as_matrix(T_mat, "T")
    d_x = sys.d_x
    if T_mat.shape != (d_x, d_x):
        raise DimensionError(f"T has shape {T_mat.shape}, expected {(d_x, d_x)}")
    cond = np.linalg.cond(T_mat)
    if not np.isfinite(cond) or cond > cond_bound:
        raise IllConditionedTransformError(
            f"similarity transform condition number {cond:.3g} exceeds {cond_bound:.3g}"
        )
    T_inv = np.linalg.inv(T_mat)
    new_sys = StateSpaceSystem(
        A=T_inv @ sys.A @ T_mat,
        B=T_inv @ sys.B,
        C=sys.C @ T_mat,
        D=np.array(sys.D),
    )
    Sigma_new = T_inv @ noise.state_cov(d_x) @ T_inv.T
    P0_new = T_inv @ noise.P0 @ T_inv.T
    P0_new = 0.5 * (P0_new + P0_new.T)
    new_noise = NoiseSpec(
        sigma_state=noise.sigma_state,
        sigma_obs=noise.sigma_obs,
        P0=P0_new,
        Sigma=0.5 * (Sigma_new + Sigma_new.T),
    )
    return new_sys, new_noise
