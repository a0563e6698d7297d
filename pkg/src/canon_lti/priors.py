"""Stability-enforcing priors over eigenvalues and canonical coefficients.

All densities carry a hard stability indicator: anything with spectral
radius >= 1 has log density -inf.  Root-space priors are evaluated on the
canonical coefficients through the root/coefficient change of variables,
whose Jacobian on mixed real/conjugate-pair spectra is

    |det| = 2^{#pairs} * prod_{i<j} |lambda_i - lambda_j|

in the real coordinates (real roots; Re, Im per pair).

Spectrum densities use the exchangeable-tuple convention (real roots as an
iid-style tuple, one upper-half representative per conjugate pair); the
coefficient-space density additionally sums the orderings that collapse
onto one coefficient vector.

Note on the uniform-stable-coefficient prior (n = 2): under a uniform
density on the Schur triangle {|a_0| < 1, |a_1| < 1 + a_0} the probability
of a fully real spectrum is 1/3 (complex pairs 2/3); in the convention
above the real-branch density is |l1 - l2| / 8 and a complex pair at
x + iy has density y.  These are the exact pushforward values; see the
package tests for Monte Carlo and quadrature verification.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .canonical import (
    grad_neg_log_vandermonde,
    vandermonde_log_abs_det,
    vieta_forward,
    vieta_inverse,
)
from .exceptions import DegenerateSpectrumError, DimensionError
from .systems import EigenSpectrum

__all__ = [
    "EigenPriorKind",
    "EigenPriorSpec",
    "NoisePriorSpec",
    "ParamPriorSpec",
    "log_prior_eigen",
    "log_prior_coeffs",
    "grad_log_prior_coeffs",
    "sample_eigen_prior",
    "sample_stable_coeffs",
    "real_spectrum_weights",
    "stability_triangle_contains",
]

_REAL_TOL = 1e-9
NEG_INF = float("-inf")


class EigenPriorKind(enum.Enum):
    RESTRICTED_REAL = "restricted_real"
    UNIFORM_REAL = "uniform_real"
    POLAR_UNIFORM = "polar_uniform"
    UNIFORM_STABLE_COEFFS = "uniform_stable_coeffs"


@dataclass(frozen=True)
class EigenPriorSpec:
    """Prior over an n-eigenvalue spectrum of a stable real matrix."""

    kind: EigenPriorKind
    n: int
    lo: float = 0.0
    hi: float = 0.9

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("spectrum size must be >= 1")
        if self.kind is EigenPriorKind.RESTRICTED_REAL:
            if not (-1.0 <= self.lo < self.hi <= 1.0):
                raise ValueError(
                    f"restricted-real bounds must satisfy -1 <= lo < hi <= 1, "
                    f"got ({self.lo}, {self.hi})"
                )

    @classmethod
    def restricted_real(cls, n, lo=0.0, hi=0.9):
        return cls(EigenPriorKind.RESTRICTED_REAL, n, lo, hi)

    @classmethod
    def uniform_real(cls, n):
        return cls(EigenPriorKind.UNIFORM_REAL, n)

    @classmethod
    def polar_uniform(cls, n):
        return cls(EigenPriorKind.POLAR_UNIFORM, n)

    @classmethod
    def uniform_stable_coeffs(cls, n):
        return cls(EigenPriorKind.UNIFORM_STABLE_COEFFS, n)


class NoisePriorKind(enum.Enum):
    HALF_CAUCHY = "half_cauchy"
    HALF_NORMAL = "half_normal"
    FIXED = "fixed"


@dataclass(frozen=True)
class NoisePriorSpec:
    """Prior on a noise standard deviation, evaluated on ell = log(sigma).

    Log densities include the change-of-variables Jacobian exp(ell), so they
    are densities in ell for an unconstrained sampler.
    """

    kind: NoisePriorKind = NoisePriorKind.FIXED
    scale: float = 1.0

    def log_density(self, ell: float) -> float:
        s = self.scale
        if self.kind is NoisePriorKind.FIXED:
            return 0.0
        if self.kind is NoisePriorKind.HALF_CAUCHY:
            return math.log(2.0 / math.pi) - math.log(s) - math.log1p(
                math.exp(2.0 * ell) / s**2
            ) + ell
        # half-normal
        sig = math.exp(ell)
        return (
            0.5 * math.log(2.0 / math.pi)
            - math.log(s)
            - sig**2 / (2.0 * s**2)
            + ell
        )

    def grad_log_density(self, ell: float) -> float:
        s = self.scale
        if self.kind is NoisePriorKind.FIXED:
            return 0.0
        sig2 = math.exp(2.0 * ell)
        if self.kind is NoisePriorKind.HALF_CAUCHY:
            r = sig2 / s**2
            return 1.0 - 2.0 * r / (1.0 + r)
        return 1.0 - sig2 / s**2


@dataclass(frozen=True)
class ParamPriorSpec:
    """Full prior over canonical parameters (a, b, d0, noise scales)."""

    eigen: EigenPriorSpec
    b_std: float = 1.0
    d0_std: float = 1.0
    noise_prior: NoisePriorSpec = field(default_factory=NoisePriorSpec)
    infer_sigma_state: bool = False
    infer_sigma_obs: bool = False

    def __post_init__(self):
        if self.b_std <= 0 or self.d0_std <= 0:
            raise ValueError("prior standard deviations must be positive")


def stability_triangle_contains(a0, a1) -> bool:
    """Schur stability region for monic quadratics: |a0| < 1, |a1| < 1 + a0."""
    return abs(a0) < 1.0 and abs(a1) < 1.0 + a0


def _split(roots: EigenSpectrum):
    real, upper = roots.split_real_complex(tol=_REAL_TOL)
    return real, upper


def log_prior_eigen(spec: EigenPriorSpec, roots) -> float:
    """Log density of an eigenvalue spectrum; -inf outside the support.

    Real roots and conjugate-pair representatives are evaluated in the
    coordinates (real roots; Re, Im of each upper-half representative).
    """
    if not isinstance(roots, EigenSpectrum):
        roots = EigenSpectrum(roots)
    if len(roots) != spec.n:
        raise DimensionError(f"expected {spec.n} roots, got {len(roots)}")
    if roots.spectral_radius() >= 1.0:
        return NEG_INF
    real, upper = _split(roots)
    n_pairs = upper.size
    kind = spec.kind

    if kind is EigenPriorKind.RESTRICTED_REAL:
        if n_pairs > 0:
            return NEG_INF
        if np.any(real <= spec.lo) or np.any(real > spec.hi):
            return NEG_INF
        return -spec.n * math.log(spec.hi - spec.lo)

    if kind is EigenPriorKind.UNIFORM_REAL:
        if n_pairs > 0:
            return NEG_INF
        return spec.n * math.log(0.5)

    if kind is EigenPriorKind.POLAR_UNIFORM:
        # Mixture over the admissible number of real roots r (uniform weights),
        # real roots U(-1, 1), pairs uniform in area over the upper half disk.
        n_admissible = spec.n // 2 + 1
        logp = -math.log(n_admissible)
        logp += real.size * math.log(0.5)
        logp += n_pairs * math.log(2.0 / math.pi)
        return logp

    if kind is EigenPriorKind.UNIFORM_STABLE_COEFFS:
        if spec.n == 1:
            return math.log(0.5)
        if spec.n != 2:
            raise NotImplementedError(
                "closed-form eigenvalue density only for n <= 2; "
                "evaluate in coefficient space via log_prior_coeffs"
            )
        # Exact pushforward of the uniform triangle density (1/4) in the
        # exchangeable-tuple convention shared by the other kinds: a real
        # pair has density |l1 - l2| / 8 (branch mass 1/3) and a complex
        # pair at x + iy has density y (branch mass 2/3).  The source
        # lemma's constants (2/3 real weight, flat branch densities) do not
        # integrate against the triangle; these values do.
        if n_pairs == 1:
            return math.log(float(upper[0].imag))
        return math.log(abs(float(real[0] - real[1])) / 8.0)

    raise ValueError(f"unknown prior kind {kind}")


def _log_jacobian_real_coords(roots: EigenSpectrum) -> float:
    """log |det| of the root-to-coefficient map in real coordinates.

    The coordinates are (real roots; Re, Im per conjugate pair), for which
    the Jacobian is 2^{#pairs} times the Vandermonde product.
    """
    _, upper = _split(roots)
    return vandermonde_log_abs_det(roots) + upper.size * math.log(2.0)


def _log_ordering_multiplicity(roots: EigenSpectrum) -> float:
    """log(r! k!): exchangeable-tuple orderings collapsing onto one multiset."""
    real, upper = _split(roots)
    return float(math.lgamma(real.size + 1) + math.lgamma(upper.size + 1))


def log_prior_coeffs(spec: EigenPriorSpec, a) -> float:
    """Log prior density of monic coefficients (a_0 .. a_{n-1}).

    Root-space priors are pushed forward through the inverse Vieta map;
    the uniform-stable-coefficient prior is evaluated directly (log(1/4)
    inside the n = 2 Schur triangle, unnormalized 0 for n > 2).

    Raises DegenerateSpectrumError on near-coincident roots for the
    Jacobian-dependent kinds; callers running MCMC map that to -inf and
    count a divergence.
    """
    a = np.asarray(a, dtype=float).ravel()
    if a.size != spec.n:
        raise DimensionError(f"expected {spec.n} coefficients, got {a.size}")
    if spec.kind is EigenPriorKind.UNIFORM_STABLE_COEFFS:
        # Schur conditions replace the root computation for n <= 2.
        if spec.n == 1:
            return math.log(0.5) if abs(a[0]) < 1.0 else NEG_INF
        if spec.n == 2:
            return math.log(0.25) if stability_triangle_contains(a[0], a[1]) else NEG_INF
        roots = vieta_inverse(a)
        return 0.0 if roots.spectral_radius() < 1.0 else NEG_INF

    roots = vieta_inverse(a)
    if roots.spectral_radius() >= 1.0:
        return NEG_INF
    base = log_prior_eigen(spec, roots)
    if base == NEG_INF:
        return NEG_INF
    # exact pushforward of the exchangeable-tuple density onto coefficients:
    # sum the orderings in each preimage, divide by the real-coordinate
    # Jacobian
    return base + _log_ordering_multiplicity(roots) - _log_jacobian_real_coords(roots)


def grad_log_prior_coeffs(spec: EigenPriorSpec, a) -> np.ndarray:
    """Gradient of log_prior_coeffs at an interior point of the support.

    The base densities are piecewise constant in root space, so the only
    coefficient dependence inside the support is the (inverse) Jacobian
    term; the uniform-stable-coefficient prior is flat.
    """
    a = np.asarray(a, dtype=float).ravel()
    if spec.kind is EigenPriorKind.UNIFORM_STABLE_COEFFS:
        return np.zeros(a.size)
    return grad_neg_log_vandermonde(a)


def sample_stable_coeffs(n, rng, max_rejects=1_000_000) -> np.ndarray:
    """Draw coefficients uniformly over the stable region.

    n = 2 samples the Schur triangle exactly; larger n rejection-samples the
    box |a_{n-k}| <= binom(n, k) implied by roots in the unit disk.
    """
    if n == 1:
        return np.array([rng.uniform(-1.0, 1.0)])
    if n == 2:
        for _ in range(max_rejects):
            a0 = rng.uniform(-1.0, 1.0)
            a1 = rng.uniform(-2.0, 2.0)
            if stability_triangle_contains(a0, a1):
                return np.array([a0, a1])
        raise RuntimeError("rejection sampling budget exceeded")
    bounds = np.array([math.comb(n, n - k) for k in range(n)], dtype=float)
    for _ in range(max_rejects):
        a = rng.uniform(-bounds, bounds)
        if vieta_inverse(a).spectral_radius() < 1.0:
            return a
    raise RuntimeError("rejection sampling budget exceeded")


def sample_eigen_prior(spec: EigenPriorSpec, seed=None) -> EigenSpectrum:
    """Draw one spectrum from the prior, respecting conjugate closure."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = spec.n
    kind = spec.kind
    if kind is EigenPriorKind.RESTRICTED_REAL:
        return EigenSpectrum(rng.uniform(spec.lo, spec.hi, size=n))
    if kind is EigenPriorKind.UNIFORM_REAL:
        return EigenSpectrum(rng.uniform(-1.0, 1.0, size=n))
    if kind is EigenPriorKind.POLAR_UNIFORM:
        admissible = np.arange(n % 2, n + 1, 2)
        r = int(rng.choice(admissible))
        vals = list(rng.uniform(-1.0, 1.0, size=r))
        for _ in range((n - r) // 2):
            rho = math.sqrt(rng.uniform(0.0, 1.0))
            theta = rng.uniform(0.0, math.pi)
            lam = rho * complex(math.cos(theta), math.sin(theta))
            vals.extend([lam, np.conj(lam)])
        return EigenSpectrum(vals)
    if kind is EigenPriorKind.UNIFORM_STABLE_COEFFS:
        a = sample_stable_coeffs(n, rng)
        return vieta_inverse(a)
    raise ValueError(f"unknown prior kind {kind}")


_WEIGHT_CACHE: dict = {}


def real_spectrum_weights(n, n_draws=1_000_000, seed=0):
    """Monte Carlo estimate of P(r real roots) under uniform stable coefficients.

    Returns a dict {r: probability} over the admissible r.  Cached per
    (n, n_draws, seed).  For n = 2 the exact values are 1/3 real and 2/3
    complex (the closed-form triangle/parabola areas are 4/3 and 8/3).
    """
    key = (n, n_draws, seed)
    if key in _WEIGHT_CACHE:
        return _WEIGHT_CACHE[key]
    rng = np.random.default_rng(seed)
    counts = {r: 0 for r in range(n % 2, n + 1, 2)}
    for _ in range(n_draws):
        a = sample_stable_coeffs(n, rng)
        roots = vieta_inverse(a)
        real, _ = roots.split_real_complex(tol=_REAL_TOL)
        counts[_nearest_admissible(real.size, n)] += 1
    weights = {r: c / n_draws for r, c in counts.items()}
    _WEIGHT_CACHE[key] = weights
    return weights


def _nearest_admissible(r, n):
    # real-root counts from an eigensolver can only be off by conjugate pairs
    r = min(max(r, n % 2), n)
    if (n - r) % 2 == 1:
        r -= 1
    return r


def log_prior_canonical_segments(
    prior: ParamPriorSpec,
    a,
    b,
    d0: Optional[float] = None,
    ell_state: Optional[float] = None,
    ell_obs: Optional[float] = None,
) -> float:
    """Joint log prior over canonical segments; -inf short-circuits on a."""
    try:
        lp = log_prior_coeffs(prior.eigen, a)
    except DegenerateSpectrumError:
        return NEG_INF
    if lp == NEG_INF:
        return NEG_INF
    b = np.asarray(b, dtype=float)
    lp += float(np.sum(_norm_logpdf(b, prior.b_std)))
    if d0 is not None:
        lp += _norm_logpdf(np.asarray(d0), prior.d0_std)
    if ell_state is not None:
        lp += prior.noise_prior.log_density(float(ell_state))
    if ell_obs is not None:
        lp += prior.noise_prior.log_density(float(ell_obs))
    return float(lp)


def grad_log_prior_canonical_segments(
    prior: ParamPriorSpec,
    a,
    b,
    d0: Optional[float] = None,
    ell_state: Optional[float] = None,
    ell_obs: Optional[float] = None,
) -> np.ndarray:
    """Gradient of the joint canonical log prior, in layout order."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    parts = [grad_log_prior_coeffs(prior.eigen, a), -b / prior.b_std**2]
    if d0 is not None:
        parts.append(np.array([-float(d0) / prior.d0_std**2]))
    if ell_state is not None:
        parts.append(np.array([prior.noise_prior.grad_log_density(float(ell_state))]))
    if ell_obs is not None:
        parts.append(np.array([prior.noise_prior.grad_log_density(float(ell_obs))]))
    return np.concatenate(parts)


def _norm_logpdf(x, std):
    return -0.5 * np.log(2.0 * np.pi) - np.log(std) - 0.5 * (x / std) ** 2


def log_prior_standard_segments(
    values,
    noise_prior: NoisePriorSpec,
    n_dynamic,
    ell_state: Optional[float] = None,
    ell_obs: Optional[float] = None,
) -> float:
    """Baseline standard-form prior: iid N(0, 1) on all matrix entries."""
    v = np.asarray(values, dtype=float).ravel()[:n_dynamic]
    lp = float(np.sum(_norm_logpdf(v, 1.0)))
    if ell_state is not None:
        lp += noise_prior.log_density(float(ell_state))
    if ell_obs is not None:
        lp += noise_prior.log_density(float(ell_obs))
    return lp


def grad_log_prior_standard_segments(
    values,
    noise_prior: NoisePriorSpec,
    n_dynamic,
    ell_state: Optional[float] = None,
    ell_obs: Optional[float] = None,
) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    g = np.zeros(v.size)
    g[:n_dynamic] = -v[:n_dynamic]
    i = n_dynamic
    if ell_state is not None:
        g[i] = noise_prior.grad_log_density(float(ell_state))
        i += 1
    if ell_obs is not None:
        g[i] = noise_prior.grad_log_density(float(ell_obs))
    return g


def sample_canonical_from_prior(prior: ParamPriorSpec, d_x, rng):
    """Draw (a, b, d0) jointly from the prior (used for ground truth and init)."""
    spec = prior.eigen
    if spec.n != d_x:
        spec = EigenPriorSpec(spec.kind, d_x, spec.lo, spec.hi)
    roots = sample_eigen_prior(spec, rng)
    a = vieta_forward(roots)
    b = rng.normal(0.0, prior.b_std, size=d_x)
    d0 = float(rng.normal(0.0, prior.d0_std))
    return a, b, d0
