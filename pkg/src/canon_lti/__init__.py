"""Bayesian identification of SISO LTI systems in canonical parameterizations."""

from .canonical import (
    CanonicalForm,
    CanonicalSiso,
    SimilarityWitness,
    canonical_to_statespace,
    check_statistical_isomorphism,
    to_controller_form,
    vandermonde_log_abs_det,
    vieta_forward,
    vieta_inverse,
)
from .diagnostics import diagnostics, ess_bulk, split_rhat
from .inference import (
    PosteriorSamples,
    SamplerConfig,
    orthogonal_pushforward,
    point_estimates,
    pushforward_qoi,
    sample_posterior,
)
from .kalman import (
    FilterState,
    kalman_loglik,
    kalman_smoother,
    posterior_predictive_states,
)
from .params import ParamLayout, ParamMode, ParamVector
from .posterior import Posterior, grad_log_posterior, log_posterior
from .priors import (
    EigenPriorKind,
    EigenPriorSpec,
    NoisePriorSpec,
    ParamPriorSpec,
    log_prior_coeffs,
    log_prior_eigen,
    sample_eigen_prior,
)
from .systems import (
    EigenSpectrum,
    NoiseSpec,
    StateSpaceSystem,
    Trajectory,
    apply_similarity,
    char_poly,
    controllability_matrix,
    eigenvalues,
    gramians,
    hankel_matrix,
    is_minimal,
    is_stable,
    markov_parameter,
    observability_matrix,
    simulate,
    transfer_function,
)

__version__ = "0.1.0"
