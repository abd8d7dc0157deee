"""Adaptive random-walk Metropolis update of the transmission parameters.

The proposal is a two-part mixture: with probability ``1 - epsilon`` a
normal step with covariance ``kappa**2 * Sigma`` and otherwise a normal step
with the fixed covariance ``Sigma0``.  Both parts are symmetric, so the
acceptance ratio is the posterior ratio alone.

After each step ``log kappa`` moves by ``(k + 1) ** -scale_decay`` times the
gap between the acceptance probability and its target, and ``Sigma`` tracks
the running covariance of the chain with weights ``(k + 1) ** -shape_decay``.
The learned covariance replaces ``Sigma0`` in the main part once
``shape_start`` steps have been taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rippler import _kernels
from rippler.model import FixedModel, ModelParams, Population, make_context

NEG_INF = -math.inf
SIGMA0_SD = (0.02, 0.2, 0.005, 0.05)


@dataclass(frozen=True)
class PriorSpec:
    """Exponential rates for ``beta_G``, ``beta_H``; Laplace rates for the deltas."""

    mu_G: float = 0.001
    mu_H: float = 0.001
    mu_A: float = 0.001
    mu_S: float = 0.001

    def __post_init__(self):
        if min(self.mu_G, self.mu_H, self.mu_A, self.mu_S) <= 0:
            raise ValueError("prior rates must be positive")


@dataclass
class AdaptState:
    """Mutable proposal state of one parameter chain.

    Attributes
    ----------
    kappa : float
        Scale of the main proposal component.
    Sigma : ndarray
        Learned 4x4 covariance used once ``n_steps >= shape_start``.
    Sigma0 : ndarray
        Fixed covariance of the escape component (and the main one early on).
    epsilon : float
        Probability of an escape proposal.
    mean : ndarray
        Running mean behind ``Sigma``.
    """

    kappa: float = 1.19
    Sigma: np.ndarray = field(default_factory=lambda: np.diag(np.square(SIGMA0_SD)))
    Sigma0: np.ndarray = field(default_factory=lambda: np.diag(np.square(SIGMA0_SD)))
    epsilon: float = 0.05
    target: float = 0.234
    scale_decay: float = 0.6
    shape_decay: float = 0.7
    shape_start: int = 200
    frozen: bool = False
    mean: np.ndarray | None = None
    n_steps: int = 0
    n_accepted: int = 0

    def __post_init__(self):
        self.Sigma = np.array(self.Sigma, float)
        self.Sigma0 = np.array(self.Sigma0, float)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        for s in (self.Sigma, self.Sigma0):
            if s.shape != (4, 4) or not np.allclose(s, s.T):
                raise ValueError("covariances must be symmetric 4x4")

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_steps if self.n_steps else float("nan")

    def main_covariance(self) -> np.ndarray:
        sigma = self.Sigma if self.n_steps >= self.shape_start else self.Sigma0
        return self.kappa ** 2 * sigma

    def adapt(self, theta_arr: np.ndarray, alpha: float) -> None:
        """Scale and shape updates after a step that ended at ``theta_arr``."""
        k = self.n_steps
        if self.frozen:
            return
        self.kappa *= math.exp((k + 1) ** -self.scale_decay * (alpha - self.target))
        if self.mean is None:
            self.mean = np.array(theta_arr, float)
            return
        w = (k + 1) ** -self.shape_decay
        dev = theta_arr - self.mean
        self.mean = self.mean + w * dev
        self.Sigma = (1.0 - w) * self.Sigma + w * (1.0 - w) * np.outer(dev, dev)
        self.Sigma = 0.5 * (self.Sigma + self.Sigma.T)


def log_prior(theta: ModelParams, priors: PriorSpec) -> float:
    """Exponential log densities for the betas plus Laplace for the deltas."""
    if theta.beta_G < 0 or theta.beta_H < 0:
        return NEG_INF
    lp = math.log(priors.mu_G) - priors.mu_G * theta.beta_G
    lp += math.log(priors.mu_H) - priors.mu_H * theta.beta_H
    lp += math.log(priors.mu_A / 2) - priors.mu_A * abs(theta.delta_A)
    lp += math.log(priors.mu_S / 2) - priors.mu_S * abs(theta.delta_S)
    return lp


def param_log_posterior(theta: ModelParams, x, y, priors: PriorSpec, pop: Population,
                        fixed: FixedModel) -> float:
    """Unnormalised ``log pi(theta | X, Y)`` up to terms free of ``theta``.

    The observation term does not depend on ``theta`` and is left out, so
    ``y`` is accepted only for a uniform call signature.
    """
    lp = log_prior(theta, priors)
    if lp == NEG_INF:
        return NEG_INF
    x = np.ascontiguousarray(x, dtype=np.int8)
    ctx = make_context(theta, pop, fixed, x.shape[0] - 1)
    return lp + float(_kernels.transmission_logdens(x, ctx))


def propose(theta: ModelParams, adapt: AdaptState, rng: np.random.Generator):
    """Draw from the mixture proposal; returns ``(theta_star, escaped)``."""
    escaped = bool(rng.random() < adapt.epsilon)
    cov = adapt.Sigma0 if escaped else adapt.main_covariance()
    step = rng.multivariate_normal(np.zeros(4), cov, method="eigh")
    return ModelParams.from_array(theta.as_array() + step), escaped


def rwm_step(theta: ModelParams, x, y, adapt: AdaptState, priors: PriorSpec,
             pop: Population, fixed: FixedModel, rng: np.random.Generator,
             current_log_post: float | None = None):
    """One Metropolis step on ``theta`` followed by adaptation.

    Returns
    -------
    theta : ModelParams
        The new parameter value.
    adapt : AdaptState
        The same object, updated in place.
    accepted : bool
    log_post : float
        Log posterior at the returned ``theta``.
    """
    if current_log_post is None:
        current_log_post = param_log_posterior(theta, x, y, priors, pop, fixed)
    theta_star, _ = propose(theta, adapt, rng)
    lp_star = param_log_posterior(theta_star, x, y, priors, pop, fixed)
    log_alpha = lp_star - current_log_post
    alpha = 0.0 if lp_star == NEG_INF else math.exp(min(0.0, log_alpha))
    accepted = bool(lp_star != NEG_INF and math.log(rng.random()) < log_alpha)
    if accepted:
        theta, current_log_post = theta_star, lp_star
    adapt.adapt(theta.as_array(), alpha)
    adapt.n_steps += 1
    adapt.n_accepted += accepted
    return theta, adapt, accepted, current_log_post
