"""Data-augmentation MCMC for household colonisation models.

The Rippler sampler updates the latent colonisation lattice through its
non-centred uniform draws; reversible-jump and individual forward-filtering
backward-sampling updates are provided for comparison.
"""

from __future__ import annotations

__version__ = "0.1.0"

from rippler.diagnostics import (ChainSummary, LatentPosterior, colonised_count,
                                 credible_interval, exact_latent_posterior,
                                 household_risk_ratio, msjd, msjd_by_time)
from rippler.errors import (ConsistencyError, DegenerateProposal, InfeasibleProposal,
                            InvalidState, NoPerturbableCell, ParseError, RipplerError,
                            TooLarge, UndefinedRatio)
from rippler.iffbs import IFFBSChain, iffbs_forward, iffbs_transition_prob, iffbs_update
from rippler.model import (NEGATIVE, NOT_TESTED, POSITIVE, FixedModel, ModelParams, Population,
                           colonisation_pressure, observation_log_density, proposal_bounds,
                           realise, seasonal_modifier, simulate, simulate_observations,
                           transmission_log_density)
from rippler.params import AdaptState, PriorSpec, log_prior, param_log_posterior, rwm_step
from rippler.ripple import (RippleChain, RipplerConfig, log_proposal_ratio, rippler_latent_update,
                            sample_noncentred, select_and_perturb)
from rippler.rjmcmc import RJChain, RJConfig, rj_flip_initial, rj_latent_update, rj_propose

__all__ = sorted(name for name, obj in globals().items()
                 if not name.startswith("_") and name != "annotations"
                 and getattr(obj, "__module__", "").startswith("rippler"))
__all__ += ["NEGATIVE", "NOT_TESTED", "POSITIVE"]
