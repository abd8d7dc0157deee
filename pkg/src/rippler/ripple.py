"""Rippler latent-state updates.

An update maps the current lattice to uniform draws consistent with it,
resamples one (or ``n_elements``) draws from outside their consistency
interval and replays the model forward, so a single flip can ripple through
later steps and other individuals.  Only the observation likelihood and the
cell-selection masses enter the acceptance ratio.

The numpy functions here (:func:`sample_noncentred`,
:func:`select_and_perturb`, :func:`log_proposal_ratio`) spell out the
proposal step by step; :class:`RippleChain` runs the compiled equivalent,
which draws the uniforms lazily and stops replaying once the proposal
rejoins the current lattice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from rippler import _kernels
from rippler.errors import DegenerateProposal, InvalidState, NoPerturbableCell
from rippler.model import FixedModel, ModelParams, Population, check_reachable, make_context

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RipplerConfig:
    n_latent_updates: int = 400
    n_elements: int = 1

    def __post_init__(self):
        if self.n_latent_updates < 1 or self.n_elements < 1:
            raise ValueError("n_latent_updates and n_elements must be >= 1")


@dataclass
class RipplerStepRecord:
    accepted: bool
    origins: list = field(default_factory=list)
    n_changed: int = 0
    log_ratio: float = -np.inf


def complement_mass(a, b) -> np.ndarray:
    return np.clip(1.0 + np.asarray(a) - np.asarray(b), 0.0, None)


def sample_noncentred(x, bounds, rng: np.random.Generator) -> np.ndarray:
    """Draw ``u[t, j] ~ Unif[a, b)`` independently for every cell."""
    a, b = bounds
    u = a + (b - a) * rng.random(np.shape(a))
    return np.where(u < b, u, a)


def select_and_perturb(u, bounds, k_elements: int, rng: np.random.Generator):
    """Resample ``k_elements`` draws outside their bounds.

    Cells are chosen with replacement, each with probability proportional to
    its complement mass ``1 + a - b``; a repeated cell keeps its last draw.

    Returns
    -------
    u_new : ndarray
    origins : list of (t, j)
    """
    a, b = bounds
    w = complement_mass(a, b).ravel()
    total = w.sum()
    if total <= 0:
        raise NoPerturbableCell("all complement masses are zero")
    u_new = np.array(u, dtype=float, copy=True)
    origins = []
    n = np.shape(a)[1]
    for _ in range(k_elements):
        flat = rng.choice(w.size, p=w / total)
        t, j = divmod(int(flat), n)
        u_new[t, j] = _kernels.complement_draw(a[t, j], b[t, j], rng.random())
        origins.append((t, j))
    return u_new, origins


def log_proposal_ratio(bounds_current, bounds_proposed, k_elements: int = 1) -> float:
    """``log q(U | U*) - log q(U* | U)`` for a ``k_elements`` perturbation."""
    s = complement_mass(*bounds_current).sum()
    s_star = complement_mass(*bounds_proposed).sum()
    if s <= 0 or s_star <= 0:
        raise DegenerateProposal("zero total complement mass")
    return k_elements * (np.log(s) - np.log(s_star))


class RippleChain:
    """Compiled Rippler state for one chain.

    Holds the lattice together with its cached bounds; call
    :meth:`set_params` whenever ``theta`` changes.
    """

    def __init__(self, x, theta: ModelParams, y, pop: Population, fixed: FixedModel,
                 n_elements: int = 1):
        self.x = np.array(check_reachable(x, theta, pop, fixed), copy=True)
        self.y = np.ascontiguousarray(y, dtype=np.int8)
        self.pop = pop
        self.fixed = fixed
        self.lf = fixed.obs_log_factors()
        self.n_elements = n_elements
        self.a = np.empty(self.x.shape)
        self.b = np.empty(self.x.shape)
        self.rowmass = np.empty(self.x.shape[0])
        self.tcount = np.empty(self.x.shape[0], np.int64)
        self.A = np.ones(self.x.shape)
        self.Ainv = np.ones(self.x.shape)
        self.amin = np.ones(self.x.shape[0])
        self.origin_props = np.zeros(self.x.shape[0], np.int64)
        self.origin_accs = np.zeros(self.x.shape[0], np.int64)
        self.set_params(theta)

    def set_params(self, theta: ModelParams):
        self.theta = theta
        self.ctx = make_context(theta, self.pop, self.fixed, self.x.shape[0] - 1)
        if _kernels.bounds(self.x, self.ctx, self.a, self.b, self.rowmass):
            raise InvalidState("lattice has zero density under theta")
        _kernels.ripple_tables(self.ctx, self.x.shape[0], self.A, self.Ainv, self.amin,
                               self.tcount, self.x)

    def _state(self):
        return (self.x, self.a, self.b, self.rowmass, self.tcount, self.A, self.Ainv, self.amin,
                self.y, self.lf, self.ctx, self.n_elements)

    def sweep(self, n_updates: int, rng: np.random.Generator, trace=None):
        """Run ``n_updates`` updates; return ``(accepted, proposed, cells_changed)``."""
        if trace is None:
            trace = np.empty(0, np.int64)
        n_acc, n_prop, n_cells = _kernels.ripple_sweep(
            *self._state(), n_updates, rng, self.origin_props, self.origin_accs, trace)
        if n_prop < n_updates:
            log.debug("%d updates found no perturbable cell", n_updates - n_prop)
        return n_acc, n_prop, n_cells

    def step(self, rng: np.random.Generator):
        """One update, returning the record and the proposed lattice."""
        T1, n = self.x.shape
        k = self.n_elements
        scratch = (np.empty_like(self.x), np.empty_like(self.a), np.empty_like(self.b),
                   np.empty_like(self.rowmass), np.empty_like(self.tcount),
                   np.empty(n, np.int64), np.empty(n, np.int64), np.zeros(n + 1, np.int64),
                   np.empty(n, np.int64), np.empty(n))
        ot = np.empty(k, np.int64)
        oj = np.empty(k, np.int64)
        ou = np.empty(k)
        out = np.empty(6)
        x_before = self.x.copy()
        _kernels.ripple_step(*self._state(), rng, *scratch, ot, oj, ou, out)
        xs = scratch[0]
        if out[5] == _kernels.NO_PERTURBABLE:
            raise NoPerturbableCell("all complement masses are zero")
        t0, t_stop = int(out[1]), int(out[2])
        proposed = x_before.copy()
        proposed[t0:t_stop + 1] = xs[t0:t_stop + 1]
        record = RipplerStepRecord(
            accepted=bool(out[0]),
            origins=[(int(t), int(j)) for t, j in zip(ot, oj)],
            n_changed=int(out[3]),
            log_ratio=float(out[4]),
        )
        return record, proposed


def rippler_latent_update(x, theta: ModelParams, y, cfg: RipplerConfig, pop: Population,
                          fixed: FixedModel, rng: np.random.Generator):
    """Single Rippler update of ``x`` at fixed ``theta``.

    Returns the new lattice (``x`` itself when rejected) and a
    :class:`RipplerStepRecord`.
    """
    chain = RippleChain(x, theta, y, pop, fixed, n_elements=cfg.n_elements)
    record, _ = chain.step(rng)
    return chain.x, record
