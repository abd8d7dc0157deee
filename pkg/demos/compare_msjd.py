"""Mixing comparison: MSJD of the three samplers on one simulated cohort.

    python3 demos/compare_msjd.py [iterations] [work_dir]

Each sampler runs the full parameter-plus-latent chain with 400 latent
updates per iteration; a quarter of the iterations are burn-in.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

from rippler.runner import RunConfig, run_infer, run_simulate


def main(iterations: int = 2000, work: str = "msjd_demo") -> None:
    root = Path(work)
    base = RunConfig(iterations=iterations, burn_in=iterations // 4, latent_updates=400,
                     seed=1, T=62, data_dir=str(root / "data"), out_dir=str(root / "rippler"))
    if not (root / "data" / "tests.csv").exists():
        run_simulate(base)
    for alg in ("rj", "rippler", "iffbs"):
        cfg = RunConfig(**{**base.to_dict(), "algorithm": alg, "out_dir": str(root / alg)})
        manifest = json.loads((run_infer(cfg, resume=False) / "manifest.json").read_text())
        print(f"{alg:8s} MSJD {manifest['msjd']:8.1f}  latent acceptance "
              f"{manifest['latent_acceptance']:.3f}")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 2000, args[1] if len(args) > 1 else "msjd_demo")
