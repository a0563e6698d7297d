"""Ground-truth system generation.

Random well-conditioned stable systems are realized from prior eigenvalue
draws in companion form, conjugated by a Haar-random orthogonal basis, with
iid standard-normal B and C, and filtered on Gramian conditioning: a system
is rejected when the dominant eigenvalue of either Gramian carries more
than 99% of its trace.  The balanced construction places linearly spaced
real eigenvalues on [-0.98, 0.9], normalizes the controllability Gramian to
the identity and picks C by the uniform-proportions heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .canonical import companion_matrix, vieta_forward
from .exceptions import CanonLtiError
from .inference import haar_orthogonal
from .priors import EigenPriorSpec, sample_eigen_prior
from .systems import (
    NoiseSpec,
    StateSpaceSystem,
    gramians,
    is_minimal,
    is_stable,
    solve_discrete_lyapunov,
)

__all__ = [
    "GenerationBudgetError",
    "random_stable_system",
    "balanced_system",
    "easy_hard_pair",
    "gramian_dominance",
]

#: Gramian conditioning filter: reject when max eigenvalue > 99% of trace.
WELL_CONDITIONED_RATIO = 0.99

#: Hard-system criterion: dominance ratio above 0.95 for some Gramian.
HARD_RATIO = 0.95


class GenerationBudgetError(CanonLtiError, RuntimeError):
    """Rejection sampling exhausted its budget."""


def gramian_dominance(sys: StateSpaceSystem) -> float:
    """Largest fraction of a Gramian's trace carried by one eigenvalue."""
    ratios = []
    for W in gramians(sys):
        w = np.linalg.eigvalsh(W)
        ratios.append(w[-1] / np.sum(w))
    return float(max(ratios))


def random_stable_system(
    d_x: int,
    eigen_prior: Optional[EigenPriorSpec] = None,
    seed=None,
    max_rejects: int = 1000,
    sigma_state: float = 0.3,
    sigma_obs: float = 0.5,
    max_dominance: float = WELL_CONDITIONED_RATIO,
    min_dominance: float = 0.0,
):
    """Draw a stable, minimal, well-conditioned SISO system.

    Returns (StateSpaceSystem, NoiseSpec, n_rejected).  The state matrix is
    the companion realization of a prior spectrum draw conjugated by a
    random orthogonal matrix; B, C entries are iid N(0, 1) and D = 0.
    """
    if d_x < 1:
        raise ValueError("d_x must be >= 1")
    if eigen_prior is None:
        eigen_prior = EigenPriorSpec.polar_uniform(d_x)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rejects = 0
    for _ in range(max_rejects):
        roots = sample_eigen_prior(eigen_prior, rng)
        a = vieta_forward(roots)
        Q = haar_orthogonal(d_x, rng)
        A = Q.T @ companion_matrix(a) @ Q
        B = rng.normal(size=(d_x, 1))
        C = rng.normal(size=(1, d_x))
        sys = StateSpaceSystem(A=A, B=B, C=C, D=np.zeros((1, 1)))
        if not is_stable(A):
            rejects += 1
            continue
        minimal, _, _ = is_minimal(sys)
        if not minimal:
            rejects += 1
            continue
        dom = gramian_dominance(sys)
        if dom > max_dominance or dom < min_dominance:
            rejects += 1
            continue
        noise = NoiseSpec.default(d_x, sigma_state=sigma_state, sigma_obs=sigma_obs)
        return sys, noise, rejects
    raise GenerationBudgetError(
        f"no acceptable system within {max_rejects} draws "
        f"(last dominance bound {max_dominance})"
    )


def _spd_sqrt(W: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(W)
    if np.any(w <= 0):
        raise CanonLtiError("matrix square root requires a positive definite input")
    return V @ np.diag(np.sqrt(w)) @ V.T


def balanced_system(n: int) -> StateSpaceSystem:
    """Deterministic nearly-balanced SISO benchmark system.

    A = diag(linspace(-0.98, 0.9, n)) with B_0 = ones is normalized by
    T = W_c^(1/2) so the transformed controllability Gramian is the
    identity; C is proportional to 1' V^{-1} of the eigendecomposition of
    the transformed A (unit-proportion projections onto every mode),
    normalized to unit 2-norm with a deterministic sign.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    lam = np.linspace(-0.98, 0.9, n)
    A = np.diag(lam)
    B0 = np.ones((n, 1))
    W_c0 = solve_discrete_lyapunov(A, B0 @ B0.T)
    T = _spd_sqrt(W_c0)
    T_inv = np.linalg.inv(T)
    A_t = T_inv @ A @ T
    B_t = T_inv @ B0
    w, V = np.linalg.eig(A_t)
    order = np.argsort(w.real)
    V = V[:, order].real
    # pin the eigenvector convention (unit columns, dominant entry positive)
    # so the construction is deterministic across platforms
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    signs = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(n)])
    signs[signs == 0.0] = 1.0
    V = V * signs
    C = np.ones(n) @ np.linalg.inv(V)
    C = C / np.linalg.norm(C)
    if C[0] < 0:
        C = -C
    return StateSpaceSystem(A=A_t, B=B_t, C=C.reshape(1, n), D=np.zeros((1, 1)))


def easy_hard_pair(seed=None, max_rejects: int = 20_000):
    """A well-balanced 2-state system and an ill-conditioned counterpart.

    The easy system is the deterministic balanced construction; the hard one
    is rejection-sampled until some Gramian's dominant eigenvalue exceeds
    95% of its trace (while staying stable and minimal).
    """
    easy = balanced_system(2)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    hard, _, _ = random_stable_system(
        2,
        eigen_prior=EigenPriorSpec.polar_uniform(2),
        seed=rng,
        max_rejects=max_rejects,
        max_dominance=1.0,
        min_dominance=HARD_RATIO,
    )
    return easy, hard
