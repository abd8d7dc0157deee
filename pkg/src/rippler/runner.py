"""Run orchestration behind the command line: simulate, infer, diagnose."""

from __future__ import annotations

import dataclasses
import logging
import os
import pickle
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rippler import __version__, io
from rippler.diagnostics import ChainSummary, MSJDAccumulator, credible_interval
from rippler.iffbs import IFFBSChain
from rippler.model import (FixedModel, ModelParams, Population, observation_log_density,
                           simulate, simulate_observations, transmission_log_density)
from rippler.params import SIGMA0_SD, AdaptState, PriorSpec, log_prior, rwm_step
from rippler.ripple import RippleChain
from rippler.rjmcmc import RJChain
from rippler.synthetic import CohortDesign, make_population, make_schedule

log = logging.getLogger(__name__)

ALGORITHMS = ("rippler", "rj", "iffbs")
RNG_NAME = "Philox"
CHECKPOINT = "checkpoint.pkl"
SAMPLE_HEADER = ("iteration",) + ModelParams.names + (
    "log_posterior", "param_accepted", "latent_accepted", "latent_proposed")


@dataclass
class RunConfig:
    """Everything a run depends on.  Keys match the JSON config file."""

    algorithm: str = "rippler"
    iterations: int = 100_000
    latent_updates: int = 400
    elements: int = 1
    block_size: int = 4
    open_end: bool = True
    burn_in: int = 5000
    thin: int = 1
    seed: int = 1
    chain: int = 0
    T: int | None = None
    theta0: tuple = (0.5, 0.5, 0.0, 0.0)
    true_theta: tuple = (0.1, 1.5, 0.0, 0.0)
    gamma: float = 0.5
    p0: float = 0.3
    s_e: float = 0.8
    s_p: float = 0.99
    delta_t: float = 1.0
    t_star: float = 17.0
    T_star: float = 52.0
    priors: tuple = (0.001, 0.001, 0.001, 0.001)
    kappa0: float = 1.19
    epsilon: float = 0.05
    sigma0_sd: tuple = SIGMA0_SD
    target_acceptance: float = 0.234
    scale_decay: float = 0.6
    shape_decay: float = 0.7
    shape_start: int = 200
    freeze_adaptation: bool = False
    checkpoint_every: int = 500
    data_dir: str = "data"
    out_dir: str = "out"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.iterations < 1 or self.latent_updates < 0:
            raise ValueError("iterations must be >= 1 and latent_updates >= 0")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thin < 1 or self.elements < 1 or self.block_size < 1:
            raise ValueError("thin, elements and block_size must be >= 1")
        self.theta0 = tuple(float(v) for v in self.theta0)
        self.true_theta = tuple(float(v) for v in self.true_theta)
        self.priors = tuple(float(v) for v in self.priors)
        self.sigma0_sd = tuple(float(v) for v in self.sigma0_sd)
        self.fixed()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        d = io.read_json(path) if path else {}
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(self).items()}

    def fixed(self) -> FixedModel:
        return FixedModel(self.gamma, self.p0, self.s_e, self.s_p, self.delta_t,
                          self.t_star, self.T_star)

    def prior_spec(self) -> PriorSpec:
        return PriorSpec(*self.priors)

    def adapt_state(self) -> AdaptState:
        sigma0 = np.diag(np.square(self.sigma0_sd))
        return AdaptState(kappa=self.kappa0, Sigma=sigma0, Sigma0=sigma0, epsilon=self.epsilon,
                          target=self.target_acceptance, scale_decay=self.scale_decay,
                          shape_decay=self.shape_decay, shape_start=self.shape_start)

    def rng(self) -> np.random.Generator:
        """Philox stream for this chain; chains are ``chain`` jumps apart."""
        bitgen = np.random.Philox(self.seed)
        if self.chain:
            bitgen = bitgen.jumped(self.chain)
        return np.random.Generator(bitgen)


def latent_sampler(cfg: RunConfig, x, theta, y, pop, fixed):
    """Compiled latent sampler selected by ``cfg.algorithm``."""
    if cfg.algorithm == "rippler":
        return RippleChain(x, theta, y, pop, fixed, n_elements=cfg.elements)
    if cfg.algorithm == "rj":
        return RJChain(x, theta, y, pop, fixed, block_size=cfg.block_size,
                       open_end=cfg.open_end)
    return IFFBSChain(x, theta, y, pop, fixed)


# ---------------------------------------------------------------------------
# simulate


def run_simulate(cfg: RunConfig, rng: np.random.Generator | None = None,
                 design: CohortDesign | None = None):
    """Simulate a cohort, its colonisation lattice and test results.

    Writes the input tables plus ``truth.json`` and ``truth_latent.rle`` to
    ``cfg.data_dir`` and returns ``(x, y, population)``.
    """
    rng = rng if rng is not None else cfg.rng()
    design = design or CohortDesign(T=cfg.T or CohortDesign.T)
    fixed = cfg.fixed()
    households, raw = make_population(design, rng)
    schedule = make_schedule(households, design, rng)
    pop = Population(households, raw - raw.mean(axis=0))
    theta = ModelParams(*cfg.true_theta)
    x = simulate(theta, pop, fixed, design.T, rng)
    y = simulate_observations(x, schedule, fixed, rng)
    out = Path(cfg.data_dir)
    io.write_dataset(out, households, raw, y)
    io.write_lattice(out / "truth_latent.rle", x)
    io.write_json(out / "truth.json", {
        "theta": dict(zip(ModelParams.names, cfg.true_theta)),
        "T": design.T, "N": int(len(households)), "seed": cfg.seed, "rng": RNG_NAME,
        "n_tests": int((y >= 0).sum()), "n_positive": int((y == 1).sum()),
        "fixed": dataclasses.asdict(fixed),
    })
    log.info("simulated N=%d T=%d with %d tests", len(households), design.T, (y >= 0).sum())
    return x, y, pop


# ---------------------------------------------------------------------------
# infer


@dataclass
class _ChainState:
    iteration: int
    theta: ModelParams
    x: np.ndarray
    adapt: AdaptState
    rng: np.random.Generator
    samples: list
    counts: list
    occupancy: np.ndarray
    n_occupancy: int
    msjd: MSJDAccumulator
    origin_props: np.ndarray
    origin_accs: np.ndarray
    latent_acc: int = 0
    latent_prop: int = 0
    param_acc: int = 0
    initial_acc: int = 0


def _save_checkpoint(path: Path, state: _ChainState, cfg: RunConfig) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump({"config": cfg.to_dict(), "state": state}, fh)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, cfg: RunConfig) -> _ChainState:
    with open(path, "rb") as fh:
        saved = pickle.load(fh)
    keep = ("iterations", "checkpoint_every", "out_dir", "data_dir")
    old = {k: v for k, v in saved["config"].items() if k not in keep}
    new = {k: v for k, v in cfg.to_dict().items() if k not in keep}
    if old != new:
        raise ValueError("checkpoint was written under a different configuration")
    return saved["state"]


def _fresh_state(cfg: RunConfig, data: io.Dataset, fixed: FixedModel) -> _ChainState:
    rng = cfg.rng()
    theta = ModelParams(*cfg.theta0)
    x = simulate(theta, data.population, fixed, data.T, rng)
    T1, n = x.shape
    return _ChainState(0, theta, x, cfg.adapt_state(), rng, [], [], np.zeros((T1, n)), 0,
                       MSJDAccumulator(), np.zeros(T1, np.int64), np.zeros(T1, np.int64))


def run_infer(cfg: RunConfig, data: io.Dataset | None = None, resume: bool = True,
              stop_after: int | None = None) -> Path:
    """Run the MCMC and write its output to ``cfg.out_dir``.

    Each iteration is one parameter step then ``cfg.latent_updates`` latent
    updates.  A checkpoint is written every ``cfg.checkpoint_every``
    iterations and on interrupt; with ``resume`` a run restarts from it and
    reproduces the uninterrupted chain exactly.  ``stop_after`` ends the
    run early after that many iterations, leaving a checkpoint (for tests).
    """
    data = data if data is not None else io.load_dataset(cfg.data_dir, cfg.T)
    fixed = cfg.fixed()
    priors = cfg.prior_spec()
    pop, y = data.population, data.y
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CHECKPOINT
    if resume and ckpt.exists():
        st = _load_checkpoint(ckpt, cfg)
        log.info("resuming at iteration %d", st.iteration)
    else:
        st = _fresh_state(cfg, data, fixed)
    if cfg.freeze_adaptation and st.iteration >= cfg.burn_in:
        st.adapt.frozen = True

    sampler = latent_sampler(cfg, st.x, st.theta, y, pop, fixed)
    if cfg.algorithm == "rippler":
        sampler.origin_props[:] = st.origin_props
        sampler.origin_accs[:] = st.origin_accs
    t_start = time.perf_counter()
    report_every = max(cfg.iterations // 20, 1)
    try:
        while st.iteration < cfg.iterations:
            k = st.iteration
            if stop_after is not None and k >= stop_after:
                break
            if cfg.freeze_adaptation and k == cfg.burn_in:
                st.adapt.frozen = True
            st.theta, _, p_acc, _ = rwm_step(st.theta, sampler.x, y, st.adapt, priors, pop,
                                             fixed, st.rng)
            sampler.set_params(st.theta)
            l_acc, l_prop, _ = sampler.sweep(cfg.latent_updates, st.rng)
            st.param_acc += p_acc
            st.latent_acc += l_acc
            st.latent_prop += l_prop
            if k >= cfg.burn_in:
                st.msjd.push(sampler.x)
                if (k - cfg.burn_in) % cfg.thin == 0:
                    lp = (log_prior(st.theta, priors)
                          + transmission_log_density(sampler.x, st.theta, pop, fixed)
                          + observation_log_density(y, sampler.x, fixed))
                    st.samples.append((k, *st.theta.as_array(), lp, int(p_acc), l_acc, l_prop))
                    st.counts.append(sampler.x.sum(axis=1).astype(np.int64))
                    st.occupancy += sampler.x
                    st.n_occupancy += 1
            st.iteration = k + 1
            if st.iteration % report_every == 0:
                log.info("iteration %d/%d theta=%s param acc %.3f latent acc %.3f (%.0fs)",
                         st.iteration, cfg.iterations, np.round(st.theta.as_array(), 4),
                         st.param_acc / st.iteration, st.latent_acc / max(st.latent_prop, 1),
                         time.perf_counter() - t_start)
            if st.iteration % cfg.checkpoint_every == 0 and st.iteration < cfg.iterations:
                _sync(st, sampler, cfg)
                _save_checkpoint(ckpt, st, cfg)
    except KeyboardInterrupt:
        _sync(st, sampler, cfg)
        _save_checkpoint(ckpt, st, cfg)
        log.warning("interrupted; checkpoint written at iteration %d", st.iteration)
        raise
    _sync(st, sampler, cfg)
    if st.iteration < cfg.iterations:
        _save_checkpoint(ckpt, st, cfg)
        return out
    _write_outputs(out, cfg, data, st)
    if ckpt.exists():
        ckpt.unlink()
    return out


def _sync(st: _ChainState, sampler, cfg: RunConfig) -> None:
    st.x = sampler.x.copy()
    if cfg.algorithm == "rippler":
        st.origin_props = sampler.origin_props.copy()
        st.origin_accs = sampler.origin_accs.copy()
    if cfg.algorithm == "rj":
        st.initial_acc = sampler.initial_accepted


def _versions() -> dict:
    import numba

    return {"rippler": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _write_outputs(out: Path, cfg: RunConfig, data: io.Dataset, st: _ChainState) -> None:
    io.write_csv(out / "samples.csv", SAMPLE_HEADER, st.samples)
    T1 = data.y.shape[0]
    io.write_csv(out / "colonised_counts.csv",
                 ("iteration",) + tuple(f"t{t}" for t in range(T1)),
                 [(s[0], *c) for s, c in zip(st.samples, st.counts)])
    occ = st.occupancy / max(st.n_occupancy, 1)
    io.write_csv(out / "occupancy.csv", tuple(f"c{j}" for j in range(occ.shape[1])), occ,
                 fmt="%.6g")
    io.write_lattice(out / "latent_final.rle", st.x)
    io.write_id_map(out / io.ID_MAP, data.ids)
    msjd_t = st.msjd.by_time() if st.msjd.n_jumps else np.zeros(T1)
    io.write_csv(out / "msjd_by_time.csv", ("t", "msjd"), [(t, v) for t, v in enumerate(msjd_t)])
    io.write_csv(out / "acceptance_by_origin.csv", ("t", "proposed", "accepted"),
                 [(t, int(p), int(a)) for t, (p, a) in
                  enumerate(zip(st.origin_props, st.origin_accs))])
    io.write_json(out / "manifest.json", {
        "config": cfg.to_dict(),
        "rng": RNG_NAME,
        "seed": cfg.seed,
        "chain": cfg.chain,
        "versions": _versions(),
        "N": int(data.y.shape[1]),
        "T": int(data.T),
        "n_samples": len(st.samples),
        "param_acceptance": st.param_acc / cfg.iterations,
        "latent_acceptance": st.latent_acc / max(st.latent_prop, 1),
        "latent_proposed": st.latent_prop,
        "initial_flips_accepted": st.initial_acc,
        "msjd": float(msjd_t.sum()),
        "final_kappa": st.adapt.kappa,
    })


# ---------------------------------------------------------------------------
# diagnose


def run_diagnose(out_dir, data_dir=None, level: float = 0.95, bins: int = 40) -> dict:
    """Summarise a finished run; writes ``summary.csv``, series files and ``diagnose.json``.

    Reads only persisted output, so repeated calls write identical files.
    When ``data_dir`` (default: the run's) holds ``truth.json`` the summary
    flags whether each true value lies in its interval, and the colonised
    count band is compared with ``truth_latent.rle``.
    """
    out = Path(out_dir)
    manifest = io.read_json(out / "manifest.json")
    header, samples = io.read_csv(out / "samples.csv")
    if samples.shape[0] == 0:
        raise ValueError("no retained samples")
    theta = samples[:, 1:5]
    summary = ChainSummary.from_samples(
        theta, level=level,
        param_acceptance=manifest["param_acceptance"],
        latent_acceptance=manifest["latent_acceptance"],
        msjd=manifest["msjd"])
    data_dir = Path(data_dir if data_dir is not None else manifest["config"]["data_dir"])
    truth = io.read_json(data_dir / "truth.json") if (data_dir / "truth.json").exists() else None

    rows = []
    report = {"msjd": manifest["msjd"], "param_acceptance": manifest["param_acceptance"],
              "latent_acceptance": manifest["latent_acceptance"], "level": level,
              "n_samples": int(samples.shape[0]), "parameters": {}}
    for i, name in enumerate(ModelParams.names):
        entry = {"median": float(summary.median[i]), "lower": float(summary.lower[i]),
                 "upper": float(summary.upper[i])}
        row = [name, summary.median[i], summary.lower[i], summary.upper[i]]
        if truth is not None:
            tv = float(truth["theta"][name])
            entry["truth"] = tv
            entry["truth_in_interval"] = bool(summary.lower[i] <= tv <= summary.upper[i])
            row += [tv, int(entry["truth_in_interval"])]
        report["parameters"][name] = entry
        rows.append(row)
        counts, edges = np.histogram(theta[:, i], bins=bins)
        io.write_csv(out / f"hist_{name}.csv", ("left", "right", "count"),
                     [(edges[b], edges[b + 1], int(counts[b])) for b in range(bins)])
    hdr = ("parameter", "median", "lower", "upper") + (("truth", "in_interval") if truth else ())
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(hdr) + "\n")
        for r in rows:
            fh.write(",".join([r[0]] + [str(v) if isinstance(v, int) else "%.17g" % v
                                        for v in r[1:]]) + "\n")

    _, cc = io.read_csv(out / "colonised_counts.csv")
    cc = cc[:, 1:]
    band = [(t, float(np.median(cc[:, t])), *credible_interval(cc[:, t], level))
            for t in range(cc.shape[1])]
    band_hdr = ("t", "median", "lower", "upper")
    truth_lattice = data_dir / "truth_latent.rle"
    if truth_lattice.exists():
        tc = io.read_lattice(truth_lattice).sum(axis=1)
        if len(tc) == len(band):
            covered = [int(lo <= tc[t] <= hi) for t, _, lo, hi in band]
            band = [b + (int(tc[t]), covered[t]) for t, b in enumerate(band)]
            band_hdr += ("truth", "covered")
            report["count_band_coverage"] = float(np.mean(covered))
    io.write_csv(out / "colonised_band.csv", band_hdr, band)

    _, acc = io.read_csv(out / "acceptance_by_origin.csv")
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(acc[:, 1] > 0, acc[:, 2] / np.maximum(acc[:, 1], 1), np.nan)
    io.write_csv(out / "acceptance_rate_by_origin.csv", ("t", "rate"),
                 [(int(t), r) for t, r in zip(acc[:, 0], rate)])
    io.write_json(out / "diagnose.json", report)
    return report
