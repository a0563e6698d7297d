"""Fisher information, confidence-ellipsoid volumes and posterior-shape checks.

Three FIM routes are provided:

* ``fim_noiseless`` — the deterministic output-sensitivity accumulation
  (1/sigma^2) sum_t g_t g_t' valid when the process noise vanishes;
* ``fim_kalman`` — the expected information of the innovations form.  The
  filter covariance recursions are data-independent, so dS/dtheta and
  dK/dtheta are deterministic; the state-sensitivity block is driven by the
  white innovation sequence, and its first and second moments are propagated
  exactly.  In the Sigma = 0, P0 -> 0 limit this reduces to the noiseless
  recursion.
* ``fim_numeric_expected`` — the Monte Carlo average of observed
  informations (finite-difference Hessians of the log likelihood) over
  simulated realizations, at one fixed evaluation point.

All FIM outputs are symmetrized; eigenvalues below -1e-8 * lambda_max fail
validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as _stats
from scipy.special import gammaln

from . import _kernels
from .canonical import CanonicalForm, CanonicalSiso, canonical_to_statespace
from .exceptions import SingularFimError
from .kalman import NUGGET
from .numdiff import hessian_from_grad
from .params import ParamLayout, ParamMode
from .systems import NoiseSpec, StateSpaceSystem, simulate

__all__ = [
    "FimResult",
    "EllipsoidVolume",
    "BvmReport",
    "fim_noiseless",
    "fim_kalman",
    "fim_for_layout",
    "standard_form_fim",
    "fim_numeric_expected",
    "ellipsoid_log_volume",
    "bvm_report",
    "expected_posterior_curvature",
    "persistence_excitation_matrix",
]

#: Relative eigenvalue threshold below which a FIM direction counts as null.
SINGULAR_EIG_TOL = 1e-6


@dataclass(frozen=True)
class FimResult:
    matrix: np.ndarray
    method: str
    eval_point: np.ndarray
    T: int

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        M = 0.5 * (M + M.T)
        w = np.linalg.eigvalsh(M)
        lam_max = max(w[-1], 0.0)
        if w[0] < -1e-8 * max(lam_max, 1.0):
            raise SingularFimError(
                f"information matrix is indefinite (min eigenvalue {w[0]:.3g})"
            )
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    def null_count(self, tol=SINGULAR_EIG_TOL) -> int:
        w = np.linalg.eigvalsh(self.matrix)
        lam_max = max(w[-1], 0.0)
        if lam_max == 0.0:
            return int(w.size)
        return int(np.sum(w < tol * lam_max))

    def is_singular(self, tol=SINGULAR_EIG_TOL) -> bool:
        return self.null_count(tol) > 0


def _canonical_directions(c: CanonicalSiso, include_d0: bool):
    """Sparse parameter directions (a then b [then d0]) for either form."""
    n = c.d_x
    N = 2 * n + (1 if include_d0 else 0)
    dA = np.zeros((N, n, n))
    dB = np.zeros((N, n))
    dC = np.zeros((N, n))
    dD = np.zeros(N)
    for i in range(n):
        dA[i, n - 1, i] = -1.0
    if c.form is CanonicalForm.CONTROLLER:
        for i in range(n):
            dC[n + i, i] = 1.0
    else:
        for i in range(n):
            dB[n + i, i] = 1.0
    if include_d0:
        dD[2 * n] = 1.0
    return dA, dB, dC, dD


def fim_noiseless(
    c: CanonicalSiso, u, sigma_obs: float, include_d0: bool = False
) -> FimResult:
    """Deterministic-state FIM: (1/sigma^2) sum_t g_t g_t'.

    g_t stacks the output sensitivities, propagated by
    dx_{t+1}/da_i = A dx_t/da_i + (dA/da_i) x_t with zero initial
    sensitivity, x_0 = 0 and the shared input convention (x_1 carries no
    input).  Requires the zero-process-noise regime.
    """
    u = np.asarray(u, dtype=float).ravel()
    T = u.size
    sys = canonical_to_statespace(c)
    A = sys.A
    Bv = sys.B[:, 0]
    Cv = sys.C[0, :]
    dA, dB, dC, dD = _canonical_directions(c, include_d0)
    N = dA.shape[0]
    n = c.d_x
    x = np.zeros(n)
    dx = np.zeros((N, n))
    info = np.zeros((N, N))
    u_prev = 0.0
    for t in range(T):
        x_new = A @ x + Bv * u_prev
        dx = np.einsum("ij,nj->ni", A, dx) + dA @ x + dB * u_prev
        x = x_new
        g = dx @ Cv + dC @ x + dD * u[t]
        info += np.outer(g, g)
        u_prev = u[t]
    info /= sigma_obs**2
    eval_point = np.concatenate([c.a, c.b, [c.d0]] if include_d0 else [c.a, c.b])
    return FimResult(matrix=info, method="noiseless_recursive", eval_point=eval_point, T=T)


def _fim_expected_innovations(A, Bv, Cv, D, Sigma, Gamma, P0, u, dA, dB, dC, dD, dSigma, dGamma):
    """Exact expected FIM of the innovations form.

    The covariance-side sensitivities (dP, dS, dK) are data-free.  The
    state-side sensitivities are linear in the white innovations; their
    mean path and joint covariance are propagated so that
    E[dnu_i dnu_j] = mean_i mean_j + w_i' Cov(zeta) w_j is exact.
    """
    n = A.shape[0]
    N = dA.shape[0]
    T = u.size
    I_n = np.eye(n)
    dim_z = (N + 1) * n  # [xhat; dxhat_1; ...; dxhat_N]
    x = np.zeros(n)
    dx = np.zeros((N, n))
    P = P0.copy()
    dP = np.zeros((N, n, n))
    cov_z = np.zeros((dim_z, dim_z))
    info = np.zeros((N, N))
    u_prev = 0.0
    for t in range(T):
        P_pred = A @ P @ A.T + Sigma
        S = float(Cv @ P_pred @ Cv + Gamma) + NUGGET
        K = P_pred @ Cv / S
        dP_pred = np.empty((N, n, n))
        dS = np.empty(N)
        dK = np.empty((N, n))
        for i in range(N):
            M = dA[i] @ P @ A.T
            dP_pred[i] = A @ dP[i] @ A.T + M + M.T + dSigma[i]
            dS[i] = float(Cv @ dP_pred[i] @ Cv + 2.0 * dC[i] @ P_pred @ Cv) + dGamma[i]
            dK[i] = (dP_pred[i] @ Cv + P_pred @ dC[i]) / S - P_pred @ Cv * dS[i] / S**2
        # mean path (innovations have zero mean)
        x_pred = A @ x + Bv * u_prev
        dx_pred = np.einsum("ij,nj->ni", A, dx) + dA @ x + dB * u_prev
        mean_dnu = -(dx_pred @ Cv) - dC @ x_pred - dD * u[t]
        # linear functionals w_i of zeta_{t-1} = [xhat; dxhat_*]
        Wmat = np.zeros((N, dim_z))
        CA = Cv @ A
        for i in range(N):
            Wmat[i, :n] = -(Cv @ dA[i]) - dC[i] @ A
            Wmat[i, (i + 1) * n : (i + 2) * n] = -CA
        Ednu = np.outer(mean_dnu, mean_dnu) + Wmat @ cov_z @ Wmat.T
        info += Ednu / S + 0.5 * np.outer(dS, dS) / S**2
        # propagate covariance of zeta through the innovations-form step
        F = np.zeros((dim_z, dim_z))
        H = np.zeros(dim_z)
        IKC = I_n - np.outer(K, Cv)
        IKCA = IKC @ A
        F[:n, :n] = A
        H[:n] = K
        for i in range(N):
            r = (i + 1) * n
            F[r : r + n, :n] = IKC @ dA[i] - np.outer(K, dC[i]) @ A
            F[r : r + n, r : r + n] = IKCA
            H[r : r + n] = dK[i]
        cov_z = F @ cov_z @ F.T + S * np.outer(H, H)
        cov_z = 0.5 * (cov_z + cov_z.T)
        # mean updates: E[xhat_{t|t}] = x_pred and
        # E[dxhat_{t|t}] = E[dxhat_pred] + K E[dnu] since E[nu] = 0
        x = x_pred
        dx = dx_pred + np.outer(mean_dnu, K)
        # covariance update (Joseph) and its sensitivities
        P_new = IKC @ P_pred @ IKC.T + Gamma * np.outer(K, K)
        for i in range(N):
            dIKC = -np.outer(dK[i], Cv) - np.outer(K, dC[i])
            M = dIKC @ P_pred @ IKC.T + IKC @ dP_pred[i] @ IKC.T + IKC @ P_pred @ dIKC.T
            M += dGamma[i] * np.outer(K, K) + Gamma * (
                np.outer(dK[i], K) + np.outer(K, dK[i])
            )
            dP[i] = 0.5 * (M + M.T)
        P = 0.5 * (P_new + P_new.T)
        u_prev = u[t]
    return 0.5 * (info + info.T)


def fim_kalman(
    c: CanonicalSiso, u, noise: NoiseSpec, include_d0: bool = False
) -> FimResult:
    """Expected FIM via Kalman-filter sensitivities for a canonical system."""
    u = np.asarray(u, dtype=float).ravel()
    sys = canonical_to_statespace(c)
    dA, dB, dC, dD = _canonical_directions(c, include_d0)
    N = dA.shape[0]
    n = c.d_x
    info = _fim_expected_innovations(
        sys.A,
        sys.B[:, 0],
        sys.C[0, :],
        float(sys.D[0, 0]),
        noise.state_cov(n),
        float(noise.sigma_obs**2),
        np.asarray(noise.P0, dtype=float),
        u,
        dA,
        dB,
        dC,
        dD,
        np.zeros((N, n, n)),
        np.zeros(N),
    )
    eval_point = np.concatenate([c.a, c.b, [c.d0]] if include_d0 else [c.a, c.b])
    return FimResult(
        matrix=info, method="kalman_sensitivity", eval_point=eval_point, T=u.size
    )


def fim_for_layout(layout: ParamLayout, values, u, noise: Optional[NoiseSpec] = None) -> FimResult:
    """Expected FIM in an arbitrary parameter layout (dynamic parameters only)."""
    u = np.asarray(u, dtype=float).ravel()
    sys, dec_noise = layout.decode(values)
    noise = noise if noise is not None else dec_noise
    dA, dB, dC, dD, dSigma, dGamma = layout.derivative_bases(values)
    nd = layout.n_dynamic
    info = _fim_expected_innovations(
        sys.A,
        sys.B[:, 0],
        sys.C[0, :],
        float(sys.D[0, 0]),
        noise.state_cov(layout.d_x),
        float(noise.sigma_obs**2),
        np.asarray(noise.P0, dtype=float),
        u,
        dA[:nd],
        dB[:nd],
        dC[:nd],
        dD[:nd],
        dSigma[:nd],
        dGamma[:nd],
    )
    return FimResult(
        matrix=info,
        method="kalman_sensitivity",
        eval_point=np.asarray(values, dtype=float)[:nd],
        T=u.size,
    )


def standard_form_fim(sys: StateSpaceSystem, noise: NoiseSpec, u) -> FimResult:
    """Expected FIM over all standard-form matrix entries (vec A, B, C, D)."""
    layout = ParamLayout(
        mode=ParamMode.STANDARD,
        d_x=sys.d_x,
        include_d0=True,
        sigma_state=noise.sigma_state,
        sigma_obs=noise.sigma_obs,
        P0=noise.P0,
    )
    values = layout.encode_system(sys)
    return fim_for_layout(layout, values, u, noise)


def fim_numeric_expected(
    theta_hat,
    layout: ParamLayout,
    sys_truth: StateSpaceSystem,
    noise: NoiseSpec,
    u,
    M: int = 100,
    seed: int = 0,
    h: float = 1e-4,
) -> FimResult:
    """Average of M observed informations at one fixed evaluation point.

    Each realization is simulated from the ground-truth system; the observed
    FIM is the negative Hessian of its log likelihood at ``theta_hat``,
    computed by central differences of the analytic gradient.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    theta_hat = np.asarray(theta_hat, dtype=float)
    u = np.asarray(u, dtype=float).ravel()
    rng_seeds = np.random.SeedSequence(seed).spawn(M)
    nd = layout.n_dynamic
    acc = np.zeros((nd, nd))
    for m in range(M):
        traj = simulate(sys_truth, noise, u, seed=rng_seeds[m])
        y = np.ascontiguousarray(traj.y[:, 0])

        def grad_ll(v):
            full = theta_hat.copy()
            full[:nd] = v
            sys_v, noise_v = layout.decode(full)
            dA, dB, dC, dD, dSigma, dGamma = layout.derivative_bases(full)
            ll, g, _ = _kernels.filter_sens(
                np.ascontiguousarray(sys_v.A),
                np.ascontiguousarray(sys_v.B[:, 0]),
                np.ascontiguousarray(sys_v.C[0, :]),
                float(sys_v.D[0, 0]),
                np.ascontiguousarray(noise_v.state_cov(layout.d_x)),
                float(noise_v.sigma_obs**2),
                np.ascontiguousarray(layout.P0),
                u,
                y,
                dA,
                dB,
                dC,
                dD,
                dSigma,
                dGamma,
                False,
            )
            if not np.isfinite(ll):
                raise ValueError("filter failed inside the FD stencil")
            return g[:nd]

        acc -= hessian_from_grad(grad_ll, theta_hat[:nd], h=h)
    acc /= M
    # Monte Carlo averages of observed informations can carry small negative
    # eigenvalues; clip at the documented tolerance.
    w, V = np.linalg.eigh(0.5 * (acc + acc.T))
    lam_max = max(w[-1], 1.0)
    w = np.where(w > -1e-8 * lam_max, np.maximum(w, 0.0), w)
    acc = V @ np.diag(w) @ V.T
    return FimResult(
        matrix=acc,
        method=f"numeric_expected({M})",
        eval_point=theta_hat[:nd],
        T=u.size,
    )


@dataclass(frozen=True)
class EllipsoidVolume:
    log_volume: float
    singular: bool
    null_count: int


def ellipsoid_log_volume(F: FimResult, confidence: float = 0.95) -> EllipsoidVolume:
    """Log volume of {delta : delta' F delta <= chi2_dim(confidence)}.

    Singular information matrices (any eigenvalue below the relative
    threshold) produce an infinite volume with the singular flag set, the
    asymptotic-normality failure signature.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    dim = F.matrix.shape[0]
    nulls = F.null_count()
    if nulls > 0:
        return EllipsoidVolume(log_volume=math.inf, singular=True, null_count=nulls)
    chi2 = float(_stats.chi2.ppf(confidence, dim))
    sign, logdet = np.linalg.slogdet(F.matrix)
    if sign <= 0:
        return EllipsoidVolume(log_volume=math.inf, singular=True, null_count=nulls)
    log_unit_ball = (dim / 2.0) * math.log(math.pi) - gammaln(dim / 2.0 + 1.0)
    vol = (dim / 2.0) * math.log(chi2) - 0.5 * logdet + log_unit_ball
    return EllipsoidVolume(log_volume=vol, singular=False, null_count=0)


@dataclass(frozen=True)
class BvmReport:
    log_volume_ratio: float
    log_det_ratio: float
    z_scores: Optional[np.ndarray]
    mahalanobis: Optional[float]
    dim: int


def bvm_report(samples, F: FimResult, truth=None) -> BvmReport:
    """Compare the posterior of the dynamic parameters with the FIM Gaussian.

    The log volume ratio is log(Vol(posterior-cov ellipsoid)) -
    log(Vol(F^{-1} ellipsoid)) = 0.5 (logdet Sigma_post + logdet F); zero
    means the empirical posterior matches the information ellipsoid.  When
    the truth is supplied, per-parameter z-scores of PME - truth under
    F^{-1} and the total Mahalanobis distance are included.
    """
    nd = F.matrix.shape[0]
    if F.null_count() > 0:
        raise SingularFimError(
            "cannot form a volume ratio against a singular information matrix"
        )
    flat = samples.flat_draws()[:, :nd]
    cov = np.cov(flat.T)
    cov = np.atleast_2d(cov)
    sign_c, logdet_c = np.linalg.slogdet(cov)
    if sign_c <= 0:
        raise SingularFimError("posterior sample covariance is rank deficient")
    sign_f, logdet_f = np.linalg.slogdet(F.matrix)
    log_det_ratio = logdet_c + logdet_f
    z = None
    maha = None
    if truth is not None:
        truth = np.asarray(truth, dtype=float).ravel()[:nd]
        pme = flat.mean(axis=0)
        delta = pme - truth
        Finv = np.linalg.inv(F.matrix)
        z = delta / np.sqrt(np.diag(Finv))
        maha = float(np.sqrt(delta @ F.matrix @ delta))
    return BvmReport(
        log_volume_ratio=0.5 * log_det_ratio,
        log_det_ratio=float(log_det_ratio),
        z_scores=z,
        mahalanobis=maha,
        dim=nd,
    )


def expected_posterior_curvature(samples, posterior, thin: int = 50, h: float = 1e-4):
    """Average negative FD Hessian of the log posterior over thinned draws.

    Draws whose FD stencil leaves the support are skipped and counted.
    Returns (matrix, n_used, n_skipped).
    """
    flat = samples.flat_draws()
    idx = np.arange(0, flat.shape[0], max(thin, 1))
    dim = flat.shape[1]
    acc = np.zeros((dim, dim))
    used = 0
    skipped = 0
    for i in idx:
        x = flat[i]
        ok = True

        def grad(v):
            nonlocal ok
            lp, gv = posterior.logpost_and_grad(v)
            if not np.isfinite(lp):
                ok = False
            return gv

        H = hessian_from_grad(grad, x, h=h)
        if not ok or not np.all(np.isfinite(H)):
            skipped += 1
            continue
        acc -= H
        used += 1
    if used == 0:
        raise ValueError("no interior draws available for curvature estimation")
    return acc / used, used, skipped


def persistence_excitation_matrix(u, d: int) -> np.ndarray:
    """Order-d sample autocovariance matrix (1/T) sum_t u_lag u_lag'."""
    u = np.asarray(u, dtype=float).ravel()
    T = u.size
    if T <= d:
        raise ValueError("input too short for the requested order")
    R = np.zeros((d, d))
    for t in range(d - 1, T):
        lag = u[t - d + 1 : t + 1][::-1]
        R += np.outer(lag, lag)
    return R / T
