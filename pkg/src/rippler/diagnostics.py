"""Chain summaries, mixing measures and the exact enumeration oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rippler import _kernels
from rippler.errors import TooLarge, UndefinedRatio
from rippler.model import FixedModel, ModelParams, Population, make_context, seasonal_modifier

ENUMERATION_LIMIT = 20


def _snapshots(chain) -> np.ndarray:
    arr = np.asarray(chain if not isinstance(chain, list) else np.stack(chain))
    if arr.ndim != 3 or arr.shape[0] < 2:
        raise ValueError("need at least two (T + 1, N) snapshots")
    return arr


class MSJDAccumulator:
    """Streaming per-step squared jumps between consecutive lattices.

    Only the previous snapshot is kept, so a long chain never has to sit in
    memory.  :meth:`by_time` and :meth:`total` share one accumulator, so the
    per-step vector sums to the total exactly.
    """

    def __init__(self):
        self._prev = None
        self._sum = None
        self.n_jumps = 0

    def push(self, x) -> None:
        x = np.asarray(x, np.int64)
        if self._prev is not None:
            jump = ((x - self._prev) ** 2).sum(axis=1)
            self._sum = jump if self._sum is None else self._sum + jump
            self.n_jumps += 1
        self._prev = x.copy()

    def by_time(self) -> np.ndarray:
        if not self.n_jumps:
            raise ValueError("need at least two snapshots")
        return self._sum / self.n_jumps

    def total(self) -> float:
        return float(self.by_time().sum())


def msjd_by_time(chain) -> np.ndarray:
    """Mean squared jump per step, summed over individuals."""
    acc = MSJDAccumulator()
    for x in _snapshots(chain):
        acc.push(x)
    return acc.by_time()


def msjd(chain) -> float:
    """Mean squared jump distance (mean Hamming distance for 0/1 lattices)."""
    return float(msjd_by_time(chain).sum())


def credible_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Central interval from linearly interpolated empirical quantiles.

    >>> credible_interval(range(1, 101))
    (3.475, 97.525)
    """
    s = np.asarray(samples, float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(s, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def colonised_count(x) -> np.ndarray:
    """Number colonised at each step."""
    return np.asarray(x, np.int64).sum(axis=-1)


def household_risk_ratio(theta_samples, t: float, n_global: int, n_household: int,
                         n: int, fixed: FixedModel, level: float = 0.95,
                         season: float | None = None):
    """Relative rise in colonisation pressure from colonised housemates.

    For each sample the ratio is ``(lambda_G + lambda_H) / lambda_G`` with
    ``n_global`` colonised in the population of ``n`` and ``n_household``
    colonised in the household; covariate effects cancel.  ``season``
    overrides the seasonal modifier at ``t``.

    Returns
    -------
    median : float
    interval : tuple of float

    Raises
    ------
    UndefinedRatio
        If the global pressure is zero for some sample.
    """
    th = np.atleast_2d(np.asarray(theta_samples, float))
    if th.shape[0] == 0:
        raise ValueError("no samples")
    s = float(seasonal_modifier(t, fixed)) if season is None else float(season)
    lam_g = th[:, 0] * s * n_global / n
    lam_h = th[:, 0] * th[:, 1] * n_household
    if np.any(lam_g <= 0):
        raise UndefinedRatio("global pressure is zero")
    ratio = (lam_g + lam_h) / lam_g
    return float(np.median(ratio)), credible_interval(ratio, level)


def encode_lattice(x) -> int:
    """Integer whose bit ``t * N + j`` is ``x[t, j]``."""
    return int(_kernels.lattice_code(np.ascontiguousarray(x, dtype=np.int8)))


def decode_lattice(code: int, T1: int, n: int) -> np.ndarray:
    bits = (int(code) >> np.arange(T1 * n, dtype=np.int64)) & 1
    return bits.reshape(T1, n).astype(np.int8)


@dataclass(frozen=True)
class LatentPosterior:
    """Exact distribution over every lattice, indexed by :func:`encode_lattice`."""

    probs: np.ndarray
    log_weights: np.ndarray
    shape: tuple

    def marginals(self) -> np.ndarray:
        """``P(x[t, j] = 1)`` for every cell."""
        T1, n = self.shape
        codes = np.arange(self.probs.size, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(T1 * n)) & 1
        return (self.probs @ bits).reshape(T1, n)

    def tv_distance(self, codes) -> float:
        """Total variation between this law and the empirical law of ``codes``."""
        emp = np.bincount(np.asarray(codes, np.int64), minlength=self.probs.size)
        return 0.5 * float(np.abs(emp / emp.sum() - self.probs).sum())


def exact_latent_posterior(y, theta: ModelParams, pop: Population,
                           fixed: FixedModel) -> LatentPosterior:
    """Enumerate ``pi(X | Y, theta)`` over all ``2 ** ((T + 1) N)`` lattices.

    Raises
    ------
    TooLarge
        If ``(T + 1) N`` exceeds :data:`ENUMERATION_LIMIT`.
    """
    y = np.ascontiguousarray(y, dtype=np.int8)
    T1, n = y.shape
    if T1 * n > ENUMERATION_LIMIT:
        raise TooLarge(f"{T1 * n} cells exceeds the enumeration limit {ENUMERATION_LIMIT}")
    ctx = make_context(theta, pop, fixed, T1 - 1)
    lw = _kernels.enumerate_logweights(T1, n, y, fixed.obs_log_factors(), ctx)
    top = lw.max()
    if not np.isfinite(top):
        raise ValueError("observations have zero probability under theta")
    w = np.exp(lw - top)
    return LatentPosterior(w / w.sum(), lw, (T1, n))


def tv_between(codes_a, codes_b, size: int) -> float:
    """Total variation between two empirical laws on ``range(size)``."""
    pa = np.bincount(np.asarray(codes_a, np.int64), minlength=size)
    pb = np.bincount(np.asarray(codes_b, np.int64), minlength=size)
    return 0.5 * float(np.abs(pa / pa.sum() - pb / pb.sum()).sum())


@dataclass
class ChainSummary:
    """Per-parameter medians and intervals plus acceptance and mixing figures."""

    names: tuple
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95
    param_acceptance: float = float("nan")
    latent_acceptance: float = float("nan")
    latent_acceptance_by_origin: np.ndarray | None = None
    msjd: float = float("nan")
    msjd_by_time: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, samples, names=ModelParams.names, level: float = 0.95, **extra):
        s = np.asarray(samples, float)
        bounds = np.array([credible_interval(s[:, i], level) for i in range(s.shape[1])])
        return cls(tuple(names), np.median(s, axis=0), bounds[:, 0], bounds[:, 1], level,
                   **extra)

    def contains(self, values) -> np.ndarray:
        v = np.asarray(values, float)
        return (self.lower <= v) & (v <= self.upper)

    def table(self) -> str:
        lines = ["parameter,median,lower,upper"]
        for i, name in enumerate(self.names):
            lines.append(f"{name},{self.median[i]:.6g},{self.lower[i]:.6g},{self.upper[i]:.6g}")
        return "\n".join(lines)
