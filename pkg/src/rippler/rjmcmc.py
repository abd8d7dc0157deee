"""Reversible-jump updates of colonisation and clearance event times.

Each individual's path is viewed as the sorted times at which its state
changes.  A move shifts one event within its neighbours and a window of
``block_size`` steps; an add inserts a short colonised (or uncolonised)
episode; a remove deletes one.  Initial states are updated separately by
single flips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rippler import _kernels
from rippler.errors import InfeasibleProposal, InvalidState
from rippler.model import FixedModel, ModelParams, Population, check_reachable, make_context

MOVE, ADD, REMOVE = 0, 1, 2
KINDS = {"move": MOVE, "add": ADD, "remove": REMOVE}


@dataclass(frozen=True)
class RJConfig:
    """Reversible-jump settings.

    Attributes
    ----------
    block_size : int
        Longest episode that add and remove act on, and furthest an event moves.
    open_end : bool
        Let an added episode run past the last step (a single new event) and
        let the last event be removed on its own.  Without it no move ever
        changes the final state, so the chain cannot reach every lattice.
    """

    block_size: int = 4
    open_end: bool = True

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


def event_times(column) -> np.ndarray:
    """Steps ``t >= 1`` at which ``column[t] != column[t - 1]``."""
    column = np.asarray(column)
    return np.flatnonzero(np.diff(column)) + 1


def column_from_events(x0: int, times, T: int) -> np.ndarray:
    """Rebuild a ``T + 1`` path from its initial state and event times."""
    col = np.zeros(T + 1, np.int8)
    flips = np.zeros(T + 2, np.int64)
    flips[np.asarray(times, np.int64)] = 1
    col[:] = (x0 + np.cumsum(flips[:T + 1])) % 2
    return col


def _ctx_args(x, theta, y, pop, fixed):
    x = np.array(check_reachable(x, theta, pop, fixed), copy=True)
    y = np.ascontiguousarray(y, dtype=np.int8)
    return x, y, make_context(theta, pop, fixed, x.shape[0] - 1), fixed.obs_log_factors()


def rj_flip_initial(x, theta: ModelParams, y, pop: Population, fixed: FixedModel,
                    rng: np.random.Generator) -> np.ndarray:
    """Flip one uniformly chosen initial state, accepting by the rows 0..1 target."""
    x, y, ctx, lf = _ctx_args(x, theta, y, pop, fixed)
    hcount = np.zeros(pop.n_households, np.int64)
    _kernels.rj_flip_initial_step(x, y, lf, ctx, rng, hcount)
    return x


def rj_propose(x, j: int, kind, block_size: int, rng: np.random.Generator,
               open_end: bool = True):
    """Propose a move, add or remove on individual ``j``.

    Returns
    -------
    x_star : ndarray
        Proposed lattice (only column ``j`` differs).
    log_q : float
        Log Hastings factor of the reverse over the forward proposal.

    Raises
    ------
    InfeasibleProposal
        When the set the move draws from is empty.
    """
    kind = KINDS.get(kind, kind)
    x_star = np.array(x, dtype=np.int8, copy=True)
    times = np.empty(x_star.shape[0], np.int64)
    span = np.zeros(2, np.int64)
    status, log_q = _kernels.rj_propose_col(x_star, j, kind, block_size, open_end, rng,
                                            times, span)
    if status == _kernels.INFEASIBLE:
        raise InfeasibleProposal(f"no feasible {kind!r} proposal for individual {j}")
    return x_star, float(log_q)


def rj_latent_update(x, theta: ModelParams, y, cfg: RJConfig, pop: Population,
                     fixed: FixedModel, rng: np.random.Generator):
    """One reversible-jump update of rows ``1..T``; returns ``(x_new, accepted)``."""
    x, y, ctx, lf = _ctx_args(x, theta, y, pop, fixed)
    times = np.empty(x.shape[0], np.int64)
    span = np.zeros(2, np.int64)
    hcount = np.zeros(pop.n_households, np.int64)
    out = np.empty(7)
    _kernels.rj_step(x, y, lf, ctx, cfg.block_size, cfg.open_end, rng, times, span,
                     hcount, out)
    return x, bool(out[0])


class RJChain:
    """Compiled reversible-jump state for one chain."""

    def __init__(self, x, theta: ModelParams, y, pop: Population, fixed: FixedModel,
                 block_size: int = 4, open_end: bool = True):
        self.x = np.array(check_reachable(x, theta, pop, fixed), copy=True)
        self.y = np.ascontiguousarray(y, dtype=np.int8)
        self.pop = pop
        self.fixed = fixed
        self.lf = fixed.obs_log_factors()
        self.block_size = block_size
        self.open_end = open_end
        self.initial_accepted = 0
        self.set_params(theta)

    def set_params(self, theta: ModelParams):
        self.theta = theta
        self.ctx = make_context(theta, self.pop, self.fixed, self.x.shape[0] - 1)
        if np.isneginf(_kernels.transmission_logdens(self.x, self.ctx)):
            raise InvalidState("lattice has zero density under theta")

    def sweep(self, n_updates: int, rng: np.random.Generator, trace=None,
              flip_every: int | None = None):
        """Run ``n_updates`` moves; return ``(accepted, proposed, cells)``.

        An initial-state flip is attempted before every ``flip_every`` moves
        (default: once, at the start of the sweep; ``0`` disables it).
        """
        if trace is None:
            trace = np.empty(0, np.int64)
        if flip_every is None:
            flip_every = max(n_updates, 1)
        n_acc, n_prop, _, init_acc, n_cells = _kernels.rj_sweep(
            self.x, self.y, self.lf, self.ctx, self.block_size, self.open_end,
            n_updates, flip_every, rng, trace)
        self.initial_accepted += init_acc
        return n_acc, n_prop, n_cells
