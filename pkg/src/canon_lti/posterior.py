"""Log-posterior over flat parameter vectors and its analytic gradient.

The likelihood gradient is computed by forward sensitivity recursions
through the Kalman filter (one derivative stack per parameter direction);
the prior gradient is analytic, including the root-space Jacobian term of
stability priors.  Points outside the prior support, near-coincident root
configurations and filter failures all evaluate to -inf; a counter records
those events so samplers can report them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import DegenerateSpectrumError
from .params import ParamLayout, ParamMode
from .priors import (
    NEG_INF,
    ParamPriorSpec,
    grad_log_prior_canonical_segments,
    grad_log_prior_standard_segments,
    log_prior_canonical_segments,
    log_prior_standard_segments,
)
from .systems import Trajectory

__all__ = ["Posterior", "log_posterior", "grad_log_posterior"]


@dataclass
class Posterior:
    """Callable bundle of layout, prior and data.

    ``prior`` is a ParamPriorSpec in canonical mode; standard mode uses iid
    standard-normal priors on all matrix entries (the comparison baseline)
    and only consumes the noise-prior part of the spec.

    Instances reuse preallocated derivative stacks between calls, so share
    one instance per sampling thread, not across threads.
    """

    layout: ParamLayout
    prior: ParamPriorSpec
    traj: Trajectory
    support_violations: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.traj.u.shape[1] != 1 or self.traj.y.shape[1] != 1:
            raise ValueError("posterior evaluation is SISO-only")
        self._u = np.ascontiguousarray(self.traj.u[:, 0])
        self._y = np.ascontiguousarray(self.traj.y[:, 0])
        lay = self.layout
        n = lay.d_x
        self._P0 = np.ascontiguousarray(lay.P0)
        self._Sigma_fixed = np.ascontiguousarray(lay.sigma_state**2 * np.eye(n))
        self._Gamma_fixed = float(lay.sigma_obs**2)
        self._eyed = np.eye(n)
        # constant derivative directions; noise slots refreshed per call
        dA, dB, dC, dD, dSigma, dGamma = lay.derivative_bases(np.zeros(lay.size))
        self._dA = np.ascontiguousarray(dA)
        self._dB = np.ascontiguousarray(dB)
        self._dC = np.ascontiguousarray(dC)
        self._dD = np.ascontiguousarray(dD)
        self._dSigma = np.ascontiguousarray(dSigma)
        self._dGamma = np.ascontiguousarray(dGamma)
        idx = lay.n_dynamic
        self._i_state = idx if lay.infer_sigma_state else None
        self._i_obs = (
            idx + int(lay.infer_sigma_state) if lay.infer_sigma_obs else None
        )
        if lay.mode is ParamMode.CANONICAL:
            self._Bc = np.zeros(n)
            self._Bc[n - 1] = 1.0

    # -- prior ---------------------------------------------------------
    def log_prior(self, values) -> float:
        seg = self.layout.split(values)
        if self.layout.mode is ParamMode.CANONICAL:
            return log_prior_canonical_segments(
                self.prior,
                seg["a"],
                seg["b"],
                seg.get("d0"),
                seg.get("ell_state"),
                seg.get("ell_obs"),
            )
        return log_prior_standard_segments(
            values,
            self.prior.noise_prior,
            self.layout.n_dynamic,
            seg.get("ell_state"),
            seg.get("ell_obs"),
        )

    def _grad_log_prior(self, values) -> np.ndarray:
        seg = self.layout.split(values)
        if self.layout.mode is ParamMode.CANONICAL:
            return grad_log_prior_canonical_segments(
                self.prior,
                seg["a"],
                seg["b"],
                seg.get("d0"),
                seg.get("ell_state"),
                seg.get("ell_obs"),
            )
        return grad_log_prior_standard_segments(
            values,
            self.prior.noise_prior,
            self.layout.n_dynamic,
            seg.get("ell_state"),
            seg.get("ell_obs"),
        )

    # -- likelihood ----------------------------------------------------
    def _fast_args(self, v: np.ndarray):
        """Kernel arguments assembled without constructing system objects."""
        lay = self.layout
        n = lay.d_x
        if lay.mode is ParamMode.CANONICAL:
            A = np.zeros((n, n))
            if n > 1:
                A[np.arange(n - 1), np.arange(1, n)] = 1.0
            A[n - 1, :] = -v[:n]
            B = self._Bc
            C = np.ascontiguousarray(v[n : 2 * n])
            i = 2 * n
        else:
            A = np.ascontiguousarray(v[: n * n].reshape(n, n))
            B = np.ascontiguousarray(v[n * n : n * n + n])
            C = np.ascontiguousarray(v[n * n + n : n * n + 2 * n])
            i = n * n + 2 * n
        D = float(v[i]) if lay.include_d0 else 0.0
        if self._i_state is not None:
            sig2 = float(np.exp(2.0 * v[self._i_state]))
            Sigma = sig2 * self._eyed
            self._dSigma[self._i_state] = 2.0 * sig2 * self._eyed
        else:
            Sigma = self._Sigma_fixed
        if self._i_obs is not None:
            gam = float(np.exp(2.0 * v[self._i_obs]))
            self._dGamma[self._i_obs] = 2.0 * gam
        else:
            gam = self._Gamma_fixed
        return A, B, C, D, np.ascontiguousarray(Sigma), gam, self._P0, self._u, self._y

    def log_likelihood(self, values) -> float:
        v = self.layout._check(values)
        ll = _kernels.filter_loglik(*self._fast_args(v))
        return NEG_INF if not np.isfinite(ll) else float(ll)

    # -- posterior -----------------------------------------------------
    def log_posterior(self, values) -> float:
        try:
            lp = self.log_prior(values)
        except DegenerateSpectrumError:
            self.support_violations += 1
            return NEG_INF
        if lp == NEG_INF:
            self.support_violations += 1
            return NEG_INF
        ll = self.log_likelihood(values)
        if ll == NEG_INF:
            self.support_violations += 1
            return NEG_INF
        return lp + ll

    def logpost_and_grad(self, values):
        """(log posterior, gradient); gradient is zeros at -inf points."""
        v = self.layout._check(values)
        zeros = np.zeros(self.layout.size)
        try:
            lp = self.log_prior(v)
            if lp == NEG_INF:
                self.support_violations += 1
                return NEG_INF, zeros
            gp = self._grad_log_prior(v)
        except DegenerateSpectrumError:
            self.support_violations += 1
            return NEG_INF, zeros
        ll, gl, _ = _kernels.filter_sens(
            *self._fast_args(v),
            self._dA,
            self._dB,
            self._dC,
            self._dD,
            self._dSigma,
            self._dGamma,
            False,
        )
        if not np.isfinite(ll):
            self.support_violations += 1
            return NEG_INF, zeros
        return float(lp + ll), gp + gl

    def grad_log_posterior(self, values) -> np.ndarray:
        lp, g = self.logpost_and_grad(values)
        if lp == NEG_INF:
            raise ValueError("gradient requested outside the posterior support")
        return g

    def fisher_information(self, values) -> np.ndarray:
        """Innovation-form information matrix accumulated over the data length."""
        v = self.layout._check(values)
        ll, _, fim = _kernels.filter_sens(
            *self._fast_args(v),
            self._dA,
            self._dB,
            self._dC,
            self._dD,
            self._dSigma,
            self._dGamma,
            True,
        )
        if not np.isfinite(ll):
            raise ValueError("filter failed at the evaluation point")
        return fim


def log_posterior(values, layout, prior, traj) -> float:
    """Functional form of Posterior.log_posterior."""
    return Posterior(layout, prior, traj).log_posterior(values)


def grad_log_posterior(values, layout, prior, traj) -> np.ndarray:
    """Functional form of Posterior.grad_log_posterior."""
    return Posterior(layout, prior, traj).grad_log_posterior(values)
