"""Rare-event Monte Carlo for the lower tail of the derivative martingale of a binary Gaussian branching random walk."""
__version__ = "0.1.0"

from .brw import (
    BETA_C,
    BetaParams,
    BrwRealization,
    additive_martingale,
    derivative_martingale,
    essential_infimum,
    martingale_pair,
    recompose_branching,
    sample_brw,
)
from .continuous import LineCrossConfig, hitting_time_density, sample_branching_wiener
from .covariance import build_sigma, eigenvalues_closed_form, log_det, quad_form_inv, theta_constant
from .errors import CascadeTailsError, ConfigError, ResourceGuardError
from .laplace import check_lemma_zw, laplace_mc
from .stats_fit import RemainderCheckConfig, box_conditional_remainder, empirical_tail, fit_gamma, kappa_epsilon
from .tilt_box import box_probability, make_box, solve_alphas, tilted_sample
