"""SISO canonical parameterizations and the root/coefficient maps.

The controller form realizes the coefficient parameters (a, b, d0) as

    A_c = [[0, 1, ..., 0], ..., [-a_0, -a_1, ..., -a_{n-1}]],
    B_c = e_n,  C_c = (b_0, ..., b_{n-1}),  D = d0,

and the observer form keeps the same companion A but fixes C = e_1^T and
frees B = (b_0, ..., b_{n-1})^T.  ``b`` follows the state-space convention
above; no polynomial-numerator semantics are implied.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateSpectrumError,
    DimensionError,
    NotControllableError,
)
from .systems import (
    DEFAULT_RANK_TOL,
    EigenSpectrum,
    NoiseSpec,
    StateSpaceSystem,
    apply_similarity,
    controllability_matrix,
    eigenvalues,
    is_minimal,
    markov_parameters,
)

__all__ = [
    "CanonicalForm",
    "CanonicalSiso",
    "SimilarityWitness",
    "canonical_to_statespace",
    "to_controller_form",
    "vieta_forward",
    "vieta_inverse",
    "vandermonde_log_abs_det",
    "check_statistical_isomorphism",
]

#: Minimal eigenvalue gap below which Jacobian-dependent operations refuse.
ROOT_GAP_TOL = 1e-8

#: Largest imaginary residue tolerated when projecting coefficients to reals.
IMAG_RESIDUE_TOL = 1e-10


class CanonicalForm(enum.Enum):
    CONTROLLER = "controller"
    OBSERVER = "observer"


@dataclass(frozen=True)
class CanonicalSiso:
    """Identifiable SISO parameterization: coefficients (a, b) plus feedthrough."""

    a: np.ndarray
    b: np.ndarray
    d0: float = 0.0
    form: CanonicalForm = CanonicalForm.CONTROLLER

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if a.size != b.size:
            raise DimensionError(f"a and b must share length, got {a.size}, {b.size}")
        if a.size < 1:
            raise DimensionError("state dimension must be at least 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(self.d0)):
            raise DimensionError("canonical coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d0", float(self.d0))

    @property
    def d_x(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class SimilarityWitness:
    """Invertible change of basis T with its inverse and conditioning estimate.

    ``apply_similarity(sys, noise, T)`` maps the witnessed system to its
    canonical image.
    """

    T: np.ndarray
    T_inv: np.ndarray
    cond: float

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        T_inv = np.asarray(self.T_inv, dtype=float)
        d = T.shape[0]
        resid = np.linalg.norm(T @ T_inv - np.eye(d))
        if resid > 1e-8 * d:
            raise DimensionError(f"T_inv is not an inverse of T (residual {resid:.3g})")
        T.setflags(write=False)
        T_inv.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "T_inv", T_inv)


def companion_matrix(a) -> np.ndarray:
    """Companion matrix with ones on the superdiagonal and last row -a."""
    a = np.asarray(a, dtype=float).ravel()
    n = a.size
    A = np.zeros((n, n))
    if n > 1:
        A[np.arange(n - 1), np.arange(1, n)] = 1.0
    A[n - 1, :] = -a
    return A


def canonical_to_statespace(c: CanonicalSiso) -> StateSpaceSystem:
    """Realize the canonical coefficients as explicit state-space matrices."""
    n = c.d_x
    A = companion_matrix(c.a)
    if c.form is CanonicalForm.CONTROLLER:
        B = np.zeros((n, 1))
        B[n - 1, 0] = 1.0
        C = c.b.reshape(1, n)
    else:
        B = c.b.reshape(n, 1)
        C = np.zeros((1, n))
        C[0, 0] = 1.0
    return StateSpaceSystem(A=A, B=B, C=C, D=np.array([[c.d0]]))


def _controller_basis(A, B, a):
    """Columns f_1..f_n of T_c^{-1} from the auxiliary-polynomial recursion.

    f_n = B and f_{i-1} = A f_i + a_{i-1} B, which reproduces the
    unit-lower-triangular Toeplitz combination of the Krylov vectors.
    """
    n = A.shape[0]
    f = np.empty((n, n))
    f[:, n - 1] = B.ravel()
    for i in range(n - 1, 0, -1):
        f[:, i - 1] = A @ f[:, i] + a[i] * B.ravel()
    return f


def to_controller_form(sys: StateSpaceSystem, rank_tol=DEFAULT_RANK_TOL):
    """Transform a controllable SISO system into controller canonical form.

    Returns (CanonicalSiso, SimilarityWitness); applying the witness to the
    input system yields the canonical realization.
    """
    if not sys.is_siso:
        raise DimensionError(
            f"controller form requires a SISO system, got d_u={sys.d_u}, d_y={sys.d_y}"
        )
    ctrb = controllability_matrix(sys)
    s = np.linalg.svd(ctrb, compute_uv=False)
    rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
    if rank < sys.d_x:
        raise NotControllableError(
            f"(A, B) is not controllable: rank {rank} < {sys.d_x}", rank=rank
        )
    from .systems import char_poly  # deferred: systems imports vieta_forward from here

    a = char_poly(sys.A)
    T = _controller_basis(sys.A, sys.B, a)
    T_inv = np.linalg.inv(T)
    cond = float(np.linalg.cond(T))
    witness = SimilarityWitness(T=T, T_inv=T_inv, cond=cond)
    b = (sys.C @ T).ravel()
    c = CanonicalSiso(a=a, b=b, d0=float(sys.D[0, 0]), form=CanonicalForm.CONTROLLER)
    return c, witness


def _vieta_forward_complex(roots) -> np.ndarray:
    """Monic coefficients (a_0..a_{n-1}) by sequential multiplication, complex."""
    coeffs = np.array([1.0 + 0.0j])
    for lam in roots:
        coeffs = np.convolve(coeffs, np.array([1.0, -lam]))
    # coeffs = (1, c_{n-1}, ..., c_0) for lambda^n + c_{n-1} lambda^{n-1} + ...
    return coeffs[1:][::-1]


def vieta_forward(roots) -> np.ndarray:
    """Map a conjugate-closed root multiset to real monic coefficients.

    Returns (a_0, ..., a_{n-1}) of lambda^n + a_{n-1} lambda^{n-1} + ... + a_0.
    """
    if not isinstance(roots, EigenSpectrum):
        roots = EigenSpectrum(roots)
    if not roots.is_conjugate_closed(tol=1e-8):
        raise ValueError("roots are not closed under complex conjugation")
    a = _vieta_forward_complex(roots.values)
    resid = np.abs(a.imag).max() if a.size else 0.0
    scale = max(1.0, np.abs(a).max())
    if resid > IMAG_RESIDUE_TOL * scale:
        raise ValueError(f"imaginary residue {resid:.3g} above tolerance")
    return a.real.copy()


def vieta_inverse(a) -> EigenSpectrum:
    """Roots of the monic polynomial via companion-matrix eigenvalues."""
    a = np.asarray(a, dtype=float).ravel()
    return eigenvalues(companion_matrix(a))


def vandermonde_log_abs_det(roots, gap_tol=ROOT_GAP_TOL) -> float:
    """Sum of log |lambda_i - lambda_j| over i < j.

    This is the log absolute Jacobian determinant of the root-to-coefficient
    map on distinct spectra.  Raises DegenerateSpectrumError when two roots
    are closer than ``gap_tol``, where the inverse Jacobian blows up.
    """
    if not isinstance(roots, EigenSpectrum):
        roots = EigenSpectrum(roots)
    v = roots.values
    n = v.size
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            gap = abs(v[i] - v[j])
            if gap < gap_tol:
                raise DegenerateSpectrumError(
                    f"eigenvalue gap {gap:.3g} below {gap_tol:.3g}"
                )
            total += np.log(gap)
    return float(total)


def grad_neg_log_vandermonde(a, gap_tol=ROOT_GAP_TOL) -> np.ndarray:
    """Gradient of -sum_{i<j} log|lambda_i(a) - lambda_j(a)| w.r.t. a.

    Uses d lambda_k / d a_j = -lambda_k^j / p'(lambda_k) together with the
    pairwise sum d/d lambda_k = sum_{i != k} 1 / (lambda_k - lambda_i); the
    total is real for conjugate-closed spectra.
    """
    a = np.asarray(a, dtype=float).ravel()
    n = a.size
    lam = vieta_inverse(a).values
    for i in range(n):
        for j in range(i + 1, n):
            if abs(lam[i] - lam[j]) < gap_tol:
                raise DegenerateSpectrumError("near-coincident roots")
    # p'(lambda_k) = prod_{i != k} (lambda_k - lambda_i) for monic p
    grad = np.zeros(n, dtype=complex)
    for k in range(n):
        others = np.delete(lam, k)
        dp = np.prod(lam[k] - others) if others.size else 1.0
        pair_sum = np.sum(1.0 / (lam[k] - others)) if others.size else 0.0
        dlam_da = -(lam[k] ** np.arange(n)) / dp
        grad += pair_sum * dlam_da
    return -grad.real


def check_statistical_isomorphism(sys1, noise1, sys2, noise2, tol=1e-8) -> bool:
    """Decide whether two minimal systems induce identical output distributions.

    Checks that the Markov parameters t = 0..2 d_x agree and that the basis
    change recovered from the two controller forms carries (Sigma, P0) onto
    each other while leaving Gamma invariant.
    """
    for s, label in ((sys1, "sys1"), (sys2, "sys2")):
        ok, rc, ro = is_minimal(s)
        if not ok:
            raise NotControllableError(
                f"{label} is not minimal (ranks {rc}, {ro})", rank=min(rc, ro)
            )
    if (sys1.d_x, sys1.d_u, sys1.d_y) != (sys2.d_x, sys2.d_u, sys2.d_y):
        raise DimensionError("systems must share dimensions")
    k = 2 * sys1.d_x
    M1 = markov_parameters(sys1, k)
    M2 = markov_parameters(sys2, k)
    scale = max(1.0, np.abs(M1).max())
    if np.abs(M1 - M2).max() > tol * scale:
        return False
    _, w1 = to_controller_form(sys1)
    _, w2 = to_controller_form(sys2)
    # apply_similarity(sys1, T1) and apply_similarity(sys2, T2) coincide, so
    # T = T1 T2^{-1} maps sys1 onto sys2.
    T12 = w1.T @ w2.T_inv
    T12_inv = w2.T @ w1.T_inv
    d_x = sys1.d_x
    Sig1 = T12_inv @ noise1.state_cov(d_x) @ T12_inv.T
    P01 = T12_inv @ noise1.P0 @ T12_inv.T
    def close(X, Y):
        return np.abs(X - Y).max() <= tol * max(1.0, np.abs(X).max(), np.abs(Y).max())

    _ = T12  # witness direction; kept for clarity
    return (
        close(Sig1, noise2.state_cov(d_x))
        and close(P01, noise2.P0)
        and abs(noise1.sigma_obs**2 - noise2.sigma_obs**2)
        <= tol * max(1.0, noise1.sigma_obs**2)
    )


def observer_from_controller(c: CanonicalSiso) -> CanonicalSiso:
    """Reinterpret controller coefficients in observer form (same transfer map)."""
    return CanonicalSiso(a=c.a, b=c.b, d0=c.d0, form=CanonicalForm.OBSERVER)
