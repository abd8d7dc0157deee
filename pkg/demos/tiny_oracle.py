"""Compare the three latent samplers with the exact posterior on a tiny lattice.

Two housemates over four weeks, one positive and one negative test.  The
posterior over all 256 lattices is enumerated and each sampler's visit
frequencies are scored by total-variation distance.

    python3 demos/tiny_oracle.py [n_updates]
"""
from __future__ import annotations

import sys

import numpy as np

from rippler import (FixedModel, IFFBSChain, ModelParams, Population, RippleChain, RJChain,
                     exact_latent_posterior)


def main(n: int = 200_000) -> None:
    pop = Population(np.array([0, 0]))
    theta = ModelParams(0.4, 1.5)
    fixed = FixedModel()
    y = np.full((4, 2), -1, np.int8)
    y[1, 0], y[3, 1] = 1, 0
    exact = exact_latent_posterior(y, theta, pop, fixed)
    x0 = np.zeros((4, 2), np.int8)
    print("P(colonised), exact:\n", np.round(exact.marginals(), 4))
    for name, chain in (("rippler", RippleChain(x0, theta, y, pop, fixed)),
                        ("rj", RJChain(x0, theta, y, pop, fixed)),
                        ("iffbs", IFFBSChain(x0, theta, y, pop, fixed))):
        trace = np.empty(n, np.int64)
        rng = np.random.Generator(np.random.Philox(1))
        if name == "rj":
            chain.sweep(n, rng, trace, flip_every=1)
        else:
            chain.sweep(n, rng, trace)
        print(f"{name:8s} TV to exact = {exact.tv_distance(trace):.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200_000)
