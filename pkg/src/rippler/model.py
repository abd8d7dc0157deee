"""Discrete-time household colonisation model.

Individuals are either uncolonised (0) or colonised (1).  At each weekly step
an uncolonised individual is colonised with probability ``1 - exp(-lambda dt)``
and a colonised individual clears carriage with probability
``1 - exp(-gamma dt)``.  The pressure ``lambda`` combines a seasonal,
frequency-dependent global term and a density-dependent household term, scaled
by a log-linear covariate effect.

Lattices are ``(T + 1, N)`` ``int8`` arrays indexed ``[t, j]``; observation
lattices use :data:`POSITIVE`, :data:`NEGATIVE` and :data:`NOT_TESTED`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from rippler import _kernels
from rippler.errors import InvalidState

POSITIVE = 1
NEGATIVE = 0
NOT_TESTED = -1


@dataclass(frozen=True)
class ModelParams:
    """Transmission parameters ``(beta_G, beta_H, delta_A, delta_S)``."""

    beta_G: float
    beta_H: float
    delta_A: float = 0.0
    delta_S: float = 0.0

    names = ("beta_G", "beta_H", "delta_A", "delta_S")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta_G, self.beta_H, self.delta_A, self.delta_S], float)

    @classmethod
    def from_array(cls, arr) -> "ModelParams":
        return cls(*(float(v) for v in arr))

    @property
    def delta(self) -> np.ndarray:
        return np.array([self.delta_A, self.delta_S])


@dataclass(frozen=True)
class FixedModel:
    """Quantities held fixed during inference.

    Attributes
    ----------
    gamma : float
        De-colonisation rate per week.
    p0 : float
        Probability an individual is colonised at step 0.
    s_e, s_p : float
        Test sensitivity and specificity.
    delta_t : float
        Step length in weeks.
    t_star, T_star : float
        Seasonal offset and period in weeks.
    """

    gamma: float = 0.5
    p0: float = 0.3
    s_e: float = 0.8
    s_p: float = 0.99
    delta_t: float = 1.0
    t_star: float = 17.0
    T_star: float = 52.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")
        if not (0 < self.s_e <= 1 and 0 < self.s_p <= 1):
            raise ValueError("s_e and s_p must lie in (0, 1]")
        if not (self.delta_t > 0 and self.T_star > 0):
            raise ValueError("delta_t and T_star must be positive")

    def obs_log_factors(self) -> np.ndarray:
        """``lf[y, x]``: log probability of result ``y`` given state ``x``."""
        with np.errstate(divide="ignore"):
            return np.log(np.array([[self.s_p, 1.0 - self.s_e],
                                    [1.0 - self.s_p, self.s_e]]))


@dataclass
class Population:
    """Household membership and pre-centred covariates.

    ``households`` holds a dense household id per individual; ``covariates``
    is ``(N, 2)`` with centred age (years) and centred sex.
    """

    households: np.ndarray
    covariates: np.ndarray = field(default=None)

    def __post_init__(self):
        hh = np.asarray(self.households)
        _, dense = np.unique(hh, return_inverse=True)
        self.households = dense.astype(np.int64)
        if self.covariates is None:
            self.covariates = np.zeros((len(hh), 2))
        self.covariates = np.asarray(self.covariates, float).reshape(len(hh), -1)

    @property
    def n_individuals(self) -> int:
        return len(self.households)

    @property
    def n_households(self) -> int:
        return int(self.households.max()) + 1 if len(self.households) else 0

    def members(self):
        """Compressed member lists: household ``h`` is ``mem[ptr[h]:ptr[h + 1]]``."""
        order = np.argsort(self.households, kind="stable").astype(np.int64)
        ptr = np.zeros(self.n_households + 1, np.int64)
        np.cumsum(np.bincount(self.households, minlength=self.n_households), out=ptr[1:])
        return ptr, order

    def household_matrix(self) -> np.ndarray:
        """Symmetric 0/1 incidence matrix with a zero diagonal."""
        H = (self.households[:, None] == self.households[None, :]).astype(np.int8)
        np.fill_diagonal(H, 0)
        return H


def seasonal_modifier(t, fixed: FixedModel):
    """Seasonal multiplier ``1 - cos(2 pi (t + t_star) / T_star)`` in [0, 2]."""
    return 1.0 - np.cos(2.0 * np.pi * (np.asarray(t, float) + fixed.t_star) / fixed.T_star)


def make_context(theta: ModelParams, pop: Population, fixed: FixedModel, T: int) -> tuple:
    """Pack everything the compiled kernels need into one tuple."""
    mult = np.exp(pop.covariates @ theta.delta)
    season = np.asarray(seasonal_modifier(np.arange(T + 1), fixed), float)
    hh_ptr, hh_mem = pop.members()
    return (pop.households, pop.n_households, mult, season,
            float(theta.beta_G), float(theta.beta_H), float(fixed.gamma),
            float(fixed.p0), float(fixed.delta_t), hh_ptr, hh_mem)


def colonisation_pressure(t: int, x_prev, theta: ModelParams, pop: Population,
                          fixed: FixedModel) -> np.ndarray:
    """Pressure on every individual at step ``t`` given the states at ``t - 1``.

    Computed whatever each individual's own state; it only matters for those
    uncolonised at ``t - 1``.
    """
    if t < 1:
        raise ValueError("pressure is defined for t >= 1")
    x_prev = np.asarray(x_prev, np.int64)
    n = len(x_prev)
    hcount = np.bincount(pop.households, weights=x_prev, minlength=pop.n_households)
    household = hcount[pop.households] - x_prev
    glob = theta.beta_G * seasonal_modifier(t - 1, fixed) * x_prev.sum() / n
    mult = np.exp(pop.covariates @ theta.delta)
    return mult * (glob + theta.beta_G * theta.beta_H * household)


def _check_lattice(x, name="x") -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.int8)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise ValueError(f"{name} must have shape (T + 1, N) with T >= 1, N >= 1")
    return x


def simulate(theta: ModelParams, pop: Population, fixed: FixedModel, T: int,
             rng: np.random.Generator) -> np.ndarray:
    """Forward-simulate a colonisation lattice of shape ``(T + 1, N)``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    u = rng.random((T + 1, pop.n_individuals))
    return realise(u, theta, pop, fixed)


def realise(u, theta: ModelParams, pop: Population, fixed: FixedModel) -> np.ndarray:
    """Deterministic map from a uniform-draw lattice to colonisation states."""
    u = np.ascontiguousarray(u, dtype=float)
    ctx = make_context(theta, pop, fixed, u.shape[0] - 1)
    return _kernels.realise(u, ctx)


def proposal_bounds(x, theta: ModelParams, pop: Population, fixed: FixedModel):
    """Widest draw interval ``[a, b)`` per cell that reproduces ``x``.

    Returns
    -------
    a, b : ndarray
        Lower and upper bounds, shaped like ``x``.

    Raises
    ------
    InvalidState
        If some colonisation event has zero probability under ``theta``.
    """
    x = _check_lattice(x)
    ctx = make_context(theta, pop, fixed, x.shape[0] - 1)
    a = np.empty(x.shape)
    b = np.empty(x.shape)
    rowmass = np.empty(x.shape[0])
    if _kernels.bounds(x, ctx, a, b, rowmass):
        raise InvalidState("colonisation event with zero pressure")
    return a, b


def transmission_log_density(x, theta: ModelParams, pop: Population,
                             fixed: FixedModel) -> float:
    """``log pi(X | theta)``; ``-inf`` for unreachable lattices."""
    x = _check_lattice(x)
    return float(_kernels.transmission_logdens(x, make_context(theta, pop, fixed, x.shape[0] - 1)))


def observation_log_density(y, x, fixed: FixedModel) -> float:
    """``log pi(Y | X)`` over tested cells.

    Specificity weights true negatives and ``1 - s_p`` weights false
    positives; untested cells contribute nothing.
    """
    y = np.ascontiguousarray(y, dtype=np.int8)
    x = _check_lattice(x)
    if y.shape != x.shape:
        raise ValueError("observation and state lattices differ in shape")
    return float(_kernels.obs_logdens(y, x, fixed.obs_log_factors()))


def simulate_observations(x, schedule, fixed: FixedModel,
                          rng: np.random.Generator) -> np.ndarray:
    """Draw test results at the ``(t, j)`` cells of ``schedule``.

    ``schedule`` is an iterable of pairs or a boolean lattice.
    """
    x = _check_lattice(x)
    y = np.full(x.shape, NOT_TESTED, np.int8)
    sched = np.asarray(schedule)
    if sched.shape == x.shape and sched.dtype == bool:
        tt, jj = np.nonzero(sched)
    elif sched.size == 0:
        return y
    else:
        sched = sched.reshape(-1, 2)
        tt, jj = sched[:, 0], sched[:, 1]
    if np.any(tt < 0) or np.any(tt >= x.shape[0]) or np.any(jj < 0) or np.any(jj >= x.shape[1]):
        raise ValueError("schedule cell outside the lattice")
    p_pos = np.where(x[tt, jj] == 1, fixed.s_e, 1.0 - fixed.s_p)
    y[tt, jj] = (rng.random(len(tt)) < p_pos).astype(np.int8)
    return y


def check_observations(y) -> np.ndarray:
    """Validate an observation lattice, warning if nothing was tested."""
    y = np.ascontiguousarray(y, dtype=np.int8)
    if not np.isin(y, (NOT_TESTED, NEGATIVE, POSITIVE)).all():
        raise ValueError("observations must be -1, 0 or 1")
    if not (y >= 0).any():
        warnings.warn("no tested cells: the latent posterior equals the prior", stacklevel=2)
    return y


def check_reachable(x, theta: ModelParams, pop: Population, fixed: FixedModel) -> np.ndarray:
    """Return ``x`` as a lattice or raise :class:`InvalidState` if unreachable."""
    x = _check_lattice(x)
    if not np.isin(x, (0, 1)).all():
        raise InvalidState("states must be 0 or 1")
    if transmission_log_density(x, theta, pop, fixed) == -math.inf:
        raise InvalidState("lattice has zero density under theta")
    return x
