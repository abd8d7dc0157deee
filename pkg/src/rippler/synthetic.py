"""Synthetic household cohort with a baseline plus three follow-up visits.

The default shape is 478 individuals in 110 households (median size 4),
sampled at baseline and at 4, 13 and 26 weeks after it, with 253 follow-up
visits missed, for 1659 tests over a 62-week horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rippler.model import Population

#: household size -> number of households
HOUSEHOLD_SIZES = {1: 1, 2: 17, 3: 21, 4: 25, 5: 20, 6: 13, 7: 7, 8: 4, 10: 1, 11: 1}
FOLLOW_UP_WEEKS = (4, 13, 26)


@dataclass(frozen=True)
class CohortDesign:
    household_sizes: tuple = tuple(sorted(HOUSEHOLD_SIZES.items()))
    n_female: int = 286
    age_shape: float = 1.4
    age_scale: float = 14.43
    max_age: float = 90.0
    baseline_weeks: tuple = (1, 36)
    follow_up_weeks: tuple = FOLLOW_UP_WEEKS
    n_missed: int = 253
    T: int = 62


def make_population(design: CohortDesign, rng: np.random.Generator):
    """Household ids and raw ``(age, sex)`` covariates (sex 0 = female, 1 = male).

    Returns
    -------
    households : ndarray of int
    raw : ndarray, shape (N, 2)
        Uncentred age in years and sex indicator.
    """
    households = np.concatenate([
        np.full(size, h, np.int64)
        for h, size in enumerate(s for s, count in design.household_sizes for _ in range(count))
    ])
    n = len(households)
    if not 0 <= design.n_female <= n:
        raise ValueError("n_female exceeds the population")
    age = np.clip(rng.gamma(design.age_shape, design.age_scale, n), 0.0, design.max_age)
    sex = np.ones(n)
    sex[rng.choice(n, design.n_female, replace=False)] = 0.0
    return households, np.column_stack([age, sex])


def make_schedule(households, design: CohortDesign, rng: np.random.Generator) -> np.ndarray:
    """Boolean ``(T + 1, N)`` test schedule; step 0 is never tested."""
    n = len(households)
    n_hh = int(households.max()) + 1
    lo, hi = design.baseline_weeks
    if hi + max(design.follow_up_weeks, default=0) > design.T:
        raise ValueError("visits run past the horizon")
    start = rng.integers(lo, hi + 1, n_hh)[households]
    sched = np.zeros((design.T + 1, n), bool)
    sched[start, np.arange(n)] = True
    slots = [(start[j] + w, j) for j in range(n) for w in design.follow_up_weeks]
    if design.n_missed > len(slots):
        raise ValueError("more missed visits than follow-up slots")
    keep = np.ones(len(slots), bool)
    keep[rng.choice(len(slots), design.n_missed, replace=False)] = False
    tt, jj = np.array(slots, np.int64)[keep].T if keep.any() else (np.empty(0, int),) * 2
    sched[tt, jj] = True
    return sched


def centre(raw) -> np.ndarray:
    raw = np.asarray(raw, float)
    return raw - raw.mean(axis=0)


def make_cohort(design: CohortDesign | None = None, rng: np.random.Generator | None = None):
    """Population with centred covariates, its raw covariates and test schedule."""
    design = design or CohortDesign()
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
    households, raw = make_population(design, rng)
    schedule = make_schedule(households, design, rng)
    return Population(households, centre(raw)), raw, schedule
