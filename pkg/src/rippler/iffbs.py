"""Individual forward-filtering backward-sampling (iFFBS).

One individual's whole path is redrawn from its full conditional given every
other path.  The forward pass folds in the individual's own transitions, its
test results and the effect of its state on everyone else's next step; the
backward pass samples the path from the end.  Forward tables are kept in log
space and renormalised at each step.
"""

from __future__ import annotations

import math

import numpy as np

from rippler import _kernels
from rippler.errors import InvalidState
from rippler.model import FixedModel, ModelParams, Population, check_reachable, make_context


def iffbs_transition_prob(x_prev: int, x_cur: int, lam: float, fixed: FixedModel) -> float:
    """Probability of one individual's step ``x_prev -> x_cur``."""
    if lam < 0:
        raise ValueError("pressure must be non-negative")
    if x_prev == 0:
        stay = math.exp(-lam * fixed.delta_t)
        return stay if x_cur == 0 else 1.0 - stay
    stay = math.exp(-fixed.gamma * fixed.delta_t)
    return 1.0 - stay if x_cur == 0 else stay


def _log_or_ninf(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def _forward(j, x, theta, y, pop, fixed, full=False):
    x = np.array(check_reachable(x, theta, pop, fixed), copy=True)
    y = np.ascontiguousarray(y, dtype=np.int8)
    ctx = make_context(theta, pop, fixed, x.shape[0] - 1)
    logf = np.empty((x.shape[0], 2))
    lam_own = np.zeros(x.shape[0])
    _kernels.iffbs_forward(x, y, fixed.obs_log_factors(), j, ctx, logf, lam_own, full)
    return x, ctx, logf, lam_own


def iffbs_forward(j: int, x, theta: ModelParams, y, pop: Population,
                  fixed: FixedModel, full: bool = False) -> np.ndarray:
    """Filtered probability that ``x[t, j] = 1`` for each ``t``.

    Each entry conditions on the other individuals' paths up to ``t + 1``
    and on ``j``'s own results up to ``t``.  ``full=True`` multiplies in
    every other individual's transition (an O(N^2 T) reference path) instead
    of only the terms that depend on ``x[t, j]``.
    """
    _, _, logf, _ = _forward(j, x, theta, y, pop, fixed, full)
    return np.exp(logf[:, 1])


def iffbs_update(x, theta: ModelParams, y, j: int, pop: Population, fixed: FixedModel,
                 rng: np.random.Generator) -> np.ndarray:
    """Gibbs-redraw column ``j``; every other column is left as is."""
    x, ctx, logf, lam_own = _forward(j, x, theta, y, pop, fixed)
    _kernels.iffbs_backward(x, j, ctx, logf, lam_own, rng)
    return x


def iffbs_path_log_probs(j: int, x, theta: ModelParams, y, pop: Population,
                         fixed: FixedModel) -> np.ndarray:
    """Log probability of every path of ``j`` under the forward-backward factorisation.

    Entry ``c`` is the path whose step-``t`` state is bit ``t`` of ``c``.
    Only for short horizons: the output has ``2 ** (T + 1)`` entries.
    """
    x, ctx, logf, lam_own = _forward(j, x, theta, y, pop, fixed)
    T = x.shape[0] - 1
    if T + 1 > 20:
        raise ValueError("horizon too long to enumerate paths")
    out = np.empty(2 ** (T + 1))
    for code in range(out.size):
        path = [(code >> t) & 1 for t in range(T + 1)]
        lp = logf[T, path[T]]
        for t in range(T - 1, -1, -1):
            w = np.array([logf[t, c] + _log_or_ninf(
                iffbs_transition_prob(c, path[t + 1], lam_own[t + 1], fixed)) for c in (0, 1)])
            lp += w[path[t]] - np.logaddexp(w[0], w[1])
        out[code] = lp
    return out


class IFFBSChain:
    """Compiled iFFBS state for one chain."""

    def __init__(self, x, theta: ModelParams, y, pop: Population, fixed: FixedModel):
        self.x = np.array(check_reachable(x, theta, pop, fixed), copy=True)
        self.y = np.ascontiguousarray(y, dtype=np.int8)
        self.pop = pop
        self.fixed = fixed
        self.lf = fixed.obs_log_factors()
        self.set_params(theta)

    def set_params(self, theta: ModelParams):
        self.theta = theta
        self.ctx = make_context(theta, self.pop, self.fixed, self.x.shape[0] - 1)
        if np.isneginf(_kernels.transmission_logdens(self.x, self.ctx)):
            raise InvalidState("lattice has zero density under theta")

    def sweep(self, n_updates: int, rng: np.random.Generator, trace=None):
        """``n_updates`` Gibbs updates; ``(accepted, proposed, cells)``."""
        if trace is None:
            trace = np.empty(0, np.int64)
        n_cells = _kernels.iffbs_sweep(self.x, self.y, self.lf, self.ctx, n_updates, rng, trace)
        return n_updates, n_updates, n_cells
