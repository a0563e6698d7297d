"""Posterior sampling over canonical or standard parameter vectors.

Chains are driven by the NUTS implementation in :mod:`canon_lti.nuts` with
per-chain RNG substreams spawned from a single seed, so a fixed (seed,
n_chains) pair reproduces draws exactly.  Divergence rates above 5% after
warm-up flag the run.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .canonical import CanonicalSiso, vieta_forward
from .diagnostics import diagnostics
from .exceptions import SamplerError
from .nuts import NutsOptions, nuts_chain
from .params import ParamLayout, ParamMode
from .posterior import Posterior
from .priors import ParamPriorSpec, sample_eigen_prior
from .systems import (
    EigenSpectrum,
    Trajectory,
    apply_similarity,
    hankel_matrix,
    markov_parameters,
    transfer_function,
)

__all__ = [
    "SamplerConfig",
    "PosteriorSamples",
    "sample_posterior",
    "point_estimates",
    "pushforward_qoi",
    "orthogonal_pushforward",
    "haar_orthogonal",
]

DIVERGENCE_FLAG_RATE = 0.05


@dataclass(frozen=True)
class SamplerConfig:
    """Chain and adaptation settings; defaults follow the experiment protocol."""

    n_chains: int = 4
    n_steps: int = 20_000
    n_warmup: int = 5_000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    init_strategy: str = "prior"

    def __post_init__(self):
        if self.n_warmup >= self.n_steps:
            raise ValueError("n_warmup must be smaller than n_steps")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class PosteriorSamples:
    """Per-chain draws with diagnostics and the layout needed to decode them."""

    draws: np.ndarray  # (n_chains, n_kept, dim)
    log_post: np.ndarray  # (n_chains, n_kept)
    divergent: np.ndarray  # (n_chains, n_kept) bool
    warmup_len: int
    layout: ParamLayout
    ess: Optional[np.ndarray] = None
    rhat: Optional[np.ndarray] = None
    divergence_count: Optional[np.ndarray] = None
    flagged: bool = False
    step_sizes: Optional[np.ndarray] = None

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    def flat_draws(self) -> np.ndarray:
        return self.draws.reshape(-1, self.dim)

    def names(self):
        return self.layout.names()


def _initial_point(layout: ParamLayout, prior: ParamPriorSpec, rng) -> np.ndarray:
    """Stable, finite-density starting point.

    Canonical mode: coefficients from a prior eigenvalue draw, b and d0 from
    N(0, 0.1^2), inferred noise logs at 0.  Standard mode: small iid normal
    entries (spectral radius well below 1).
    """
    if layout.mode is ParamMode.CANONICAL:
        spec = prior.eigen
        if spec.n != layout.d_x:
            from .priors import EigenPriorSpec

            spec = EigenPriorSpec(spec.kind, layout.d_x, spec.lo, spec.hi)
        a = vieta_forward(sample_eigen_prior(spec, rng))
        b = rng.normal(0.0, 0.1, size=layout.d_x)
        c = CanonicalSiso(a=a, b=b, d0=float(rng.normal(0.0, 0.1)))
        return layout.encode_canonical(c, ell_state=0.0, ell_obs=0.0)
    x = rng.normal(0.0, 0.1, size=layout.size)
    if layout.infer_sigma_state or layout.infer_sigma_obs:
        x[layout.n_dynamic :] = 0.0
    return x


def _run_chain(config, prior, traj, layout, options, child_seed):
    """One chain with its own RNG substream and posterior workspace."""
    post = Posterior(layout, prior, traj)
    rng = np.random.default_rng(child_seed)
    x0 = None
    for _ in range(100):
        cand = _initial_point(layout, prior, rng)
        if np.isfinite(post.log_posterior(cand)):
            x0 = cand
            break
    if x0 is None:
        raise SamplerError("could not find a finite-density initial point")
    return nuts_chain(
        post.logpost_and_grad, x0, config.n_steps, config.n_warmup, rng, options
    )


def sample_posterior(
    config: SamplerConfig,
    prior: ParamPriorSpec,
    traj: Trajectory,
    layout: ParamLayout,
    jobs: Optional[int] = None,
) -> PosteriorSamples:
    """Run NUTS chains on the posterior defined by (layout, prior, traj).

    Chains are independent given their RNG substreams, so they may run in
    ``jobs`` worker threads (default: up to the CPU count); the draws do not
    depend on the scheduling.
    """
    options = NutsOptions(
        target_accept=config.target_accept, max_tree_depth=config.max_tree_depth
    )
    seed_seq = np.random.SeedSequence(config.seed)
    children = seed_seq.spawn(config.n_chains)
    n_kept = config.n_steps - config.n_warmup
    draws = np.empty((config.n_chains, n_kept, layout.size))
    logps = np.empty((config.n_chains, n_kept))
    divergent = np.zeros((config.n_chains, n_kept), dtype=bool)
    step_sizes = np.empty(config.n_chains)
    if jobs is None:
        jobs = min(config.n_chains, os.cpu_count() or 1)
    if jobs > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda child: _run_chain(config, prior, traj, layout, options, child),
                    children,
                )
            )
    else:
        results = [
            _run_chain(config, prior, traj, layout, options, child)
            for child in children
        ]
    for c, result in enumerate(results):
        draws[c] = result["draws"]
        logps[c] = result["log_post"]
        divergent[c] = result["divergent"]
        step_sizes[c] = result["step_size"]
    div_count = divergent.sum(axis=1)
    flagged = bool(np.any(div_count > DIVERGENCE_FLAG_RATE * n_kept))
    if flagged:
        warnings.warn(
            f"post-warmup divergence rate above {DIVERGENCE_FLAG_RATE:.0%} "
            f"(counts per chain: {div_count.tolist()})",
            RuntimeWarning,
        )
    samples = PosteriorSamples(
        draws=draws,
        log_post=logps,
        divergent=divergent,
        warmup_len=config.n_warmup,
        layout=layout,
        divergence_count=div_count,
        flagged=flagged,
        step_sizes=step_sizes,
    )
    if config.n_chains >= 2 and n_kept >= 100:
        samples.ess, samples.rhat = diagnostics(draws)
    return samples


def point_estimates(samples: PosteriorSamples):
    """(PME, MAP) parameter vectors.

    PME is the coordinatewise mean of the kept draws.  MAP is the drawn
    sample with the highest stored log posterior; ties break toward the
    lowest chain then the lowest iteration index.
    """
    flat = samples.flat_draws()
    pme = flat.mean(axis=0)
    idx = int(np.argmax(samples.log_post.reshape(-1)))
    return pme, flat[idx].copy()


def pushforward_qoi(samples: PosteriorSamples, qoi, **kwargs) -> np.ndarray:
    """Apply a similarity-invariant map to every draw.

    ``qoi`` is one of "eigenvalues", "hankel" (p, q), "transfer" (z) or
    "markov" (k); extra arguments are keyword-only.  Returns one array row
    per kept draw.
    """
    flat = samples.flat_draws()
    layout = samples.layout
    out = []
    if qoi == "eigenvalues":
        for v in flat:
            sys, _ = layout.decode(v)
            out.append(np.linalg.eigvals(sys.A))
        vals = np.asarray(out)
        order = np.lexsort((vals.imag, vals.real), axis=1)
        return np.take_along_axis(vals, order, axis=1)
    if qoi == "hankel":
        p, q = kwargs["p"], kwargs["q"]
        for v in flat:
            sys, _ = layout.decode(v)
            out.append(hankel_matrix(sys, p, q).ravel())
        return np.asarray(out)
    if qoi == "transfer":
        z = kwargs["z"]
        for v in flat:
            sys, _ = layout.decode(v)
            out.append(transfer_function(sys, z).ravel())
        return np.asarray(out)
    if qoi == "markov":
        k = kwargs["k"]
        for v in flat:
            sys, _ = layout.decode(v)
            out.append(markov_parameters(sys, k).ravel())
        return np.asarray(out)
    raise ValueError(f"unknown quantity of interest {qoi!r}")


def haar_orthogonal(d, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with a sign-fixed R diagonal."""
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    sign = np.sign(np.diag(R))
    sign[sign == 0.0] = 1.0
    return Q * sign


def orthogonal_pushforward(samples: PosteriorSamples, seed=None) -> np.ndarray:
    """Project canonical draws onto random orthogonal state bases.

    For each draw, realizes the system, applies a Haar-random orthogonal
    similarity and emits the standard dynamic parameters
    [vec(A), vec(B), vec(C), D].  Input-output behavior is untouched; this
    visualizes the equivalence-class geometry in standard coordinates.
    """
    if samples.layout.mode is not ParamMode.CANONICAL:
        raise ValueError("orthogonal pushforward expects canonical-mode samples")
    rng = np.random.default_rng(seed)
    flat = samples.flat_draws()
    d = samples.layout.d_x
    out = np.empty((flat.shape[0], d * d + 2 * d + 1))
    for i, v in enumerate(flat):
        sys, noise = samples.layout.decode(v)
        Q = haar_orthogonal(d, rng)
        pushed, _ = apply_similarity(sys, noise, Q)
        out[i] = np.concatenate(
            [pushed.A.ravel(), pushed.B.ravel(), pushed.C.ravel(), [pushed.D[0, 0]]]
        )
    return out
