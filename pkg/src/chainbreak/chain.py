"""Chain of Brownian particles with a pulled end.

Particles 0..N-1 start at equilibrium spacing ``a``; particle 0 is held at
the origin and particle N-1 is driven to ``(N-1) a (1 + p(eps s))`` while
the N-2 interior particles diffuse under the pair potential.  A bond
breaks when an adjacent gap first exceeds the interaction range ``b``;
inner gaps get the stronger bridge correction because both endpoints are
noisy.  The run is capped at the same closure time as the two-neighbor
model, after which the widest gap is reported.

With N=3 this reduces exactly to the single-particle model: bond 1 is the
fixed-neighbor bond ("left"), bond 2 the receding one ("right").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import _kernels as K
from . import rng
from .dynamics import ModelParams, default_dt
from .errors import ConfigError, PreconditionError
from .experiments import EstimateResult, wilson_interval


@dataclass(frozen=True)
class ChainConfig:
    """Integration settings for chain trials (physical frame).

    ``all_pairs`` sums forces over every particle within the interaction
    range; switching it off restricts forces to adjacent neighbors, which
    must not change anything while the chain stays ordered and gaps stay
    short of twice the range.
    """

    n_particles: int
    dt: float | None = None
    seed: int = 0
    trial_index: int = 0
    all_pairs: bool = True
    normal_block: int = 1 << 16
    uniform_block: int = 4096

    def __post_init__(self):
        if self.n_particles < 3:
            raise ConfigError(
                f"need at least 3 particles (one interior), got {self.n_particles}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.seed < 0 or self.trial_index < 0:
            raise ConfigError("seed and trial_index must be non-negative")


@dataclass(frozen=True)
class ChainBreakRecord:
    """First bond break of one chain trial.

    ``bond_index`` is 1-based: bond k joins particles k-1 and k.  ``tau``
    is the break time on the rescaled clock, ``time_physical`` on the
    integration clock.  ``gap_profile`` holds all N-1 gaps at the break.
    """

    tau: float
    time_physical: float
    bond_index: int
    gap_profile: np.ndarray
    steps: int
    capped: bool
    n_particles: int
    trial_index: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"tau": self.tau, "time_physical": self.time_physical,
                "bond_index": self.bond_index,
                "gap_profile": [float(g) for g in self.gap_profile],
                "steps": self.steps, "capped": self.capped,
                "n_particles": self.n_particles,
                "trial_index": self.trial_index, "seed": self.seed}


@dataclass(frozen=True)
class ChainPlan:
    n_steps: int
    dt: float
    epsilon: float
    a: float
    b: float
    pullc: np.ndarray
    breaks: np.ndarray
    c1t: np.ndarray
    noise_amp: float
    s2dt_bond: np.ndarray
    n_particles: int
    all_pairs: bool
    normal_block: int
    uniform_block: int
    t_close: float


def build_chain_plan(params: ModelParams, cfg: ChainConfig) -> ChainPlan:
    n = cfg.n_particles
    dt = cfg.dt if cfg.dt is not None else default_dt(params, "physical")
    horizon = params.t_close / params.epsilon
    n_steps = max(1, math.ceil(horizon / dt - 1e-12))
    dt_eff = horizon / n_steps
    from .dynamics import a1_estimate
    if dt_eff * a1_estimate(params.potential) >= 1.0:
        raise ConfigError(f"dt={dt_eff:.3g} is unstable for the chain drift")
    breaks, c1t = params.potential.tables(1)
    movers = np.zeros(n)
    movers[1:n - 1] = 1.0
    w = movers[:-1] + movers[1:]
    s2dt_bond = params.sigma ** 2 * dt_eff * np.maximum(w, 1e-300)
    return ChainPlan(
        n_steps=n_steps, dt=dt_eff, epsilon=params.epsilon, a=params.a,
        b=params.b, pullc=params.pull.array(), breaks=breaks, c1t=c1t,
        noise_amp=params.sigma * math.sqrt(dt_eff), s2dt_bond=s2dt_bond,
        n_particles=n, all_pairs=cfg.all_pairs,
        normal_block=cfg.normal_block, uniform_block=cfg.uniform_block,
        t_close=params.t_close)


def run_chain_trial(plan: ChainPlan, seed: int, trial_index: int) -> ChainBreakRecord:
    n = plan.n_particles
    nm = n - 2
    gen = rng.stream(seed, trial_index, rng.CHAIN_NORMALS)
    pool = rng.UniformPool(rng.stream(seed, trial_index, rng.CHAIN_UNIFORMS),
                           plan.uniform_block)
    xs = np.arange(n, dtype=float) * plan.a
    tmp = np.empty(n)
    pre = np.empty(n)
    post = np.empty(n)
    steps_per_block = max(1, plan.normal_block // nm)
    step = 0
    u_idx = 0
    while True:
        normals = gen.standard_normal(steps_per_block * nm)
        block_start = step
        while True:
            offset = (step - block_start) * nm
            status, step, u_idx, bond, theta = K.chain_block(
                xs, tmp, step, plan.n_steps, plan.dt, plan.epsilon, plan.a,
                plan.b, plan.pullc, plan.breaks, plan.c1t, plan.all_pairs,
                plan.noise_amp, plan.s2dt_bond, normals[offset:], pool.buf,
                u_idx, pre, post)
            if status == K.NEED_UNI:
                pool.refill(u_idx)
                u_idx = 0
                continue
            break
        if status == K.CONT:
            continue
        break

    if status == K.EXIT:
        t_phys = (step + theta) * plan.dt
        positions = pre + theta * (post - pre)
        gaps = np.diff(positions)
        return ChainBreakRecord(
            tau=plan.epsilon * t_phys, time_physical=t_phys,
            bond_index=bond + 1, gap_profile=gaps, steps=step + 1,
            capped=False, n_particles=n, trial_index=trial_index, seed=seed)
    gaps = np.diff(xs)
    bond = int(np.argmax(gaps))
    return ChainBreakRecord(
        tau=plan.t_close, time_physical=plan.n_steps * plan.dt,
        bond_index=bond + 1, gap_profile=gaps, steps=plan.n_steps,
        capped=True, n_particles=n, trial_index=trial_index, seed=seed)


def simulate_chain(params: ModelParams, cfg: ChainConfig) -> ChainBreakRecord:
    """Run a single chain trajectory to its first bond break."""
    plan = build_chain_plan(params, cfg)
    return run_chain_trial(plan, cfg.seed, cfg.trial_index)


def _chain_chunk(plan: ChainPlan, seed: int, lo: int, hi: int) -> list[ChainBreakRecord]:
    return [run_chain_trial(plan, seed, i) for i in range(lo, hi)]


def run_chain_trials(params: ModelParams, cfg: ChainConfig, n: int,
                     workers: int = 1) -> list[ChainBreakRecord]:
    """Independent chain trials 0..n-1; order and results do not depend on
    the worker count."""
    if n <= 0:
        raise PreconditionError(f"need at least one trial, got n={n}")
    plan = build_chain_plan(params, cfg)
    if workers <= 1:
        return _chain_chunk(plan, cfg.seed, 0, n)
    chunks = min(n, 4 * workers)
    edges = np.linspace(0, n, chunks + 1).astype(int)
    parts = Parallel(n_jobs=workers)(
        delayed(_chain_chunk)(plan, cfg.seed, int(lo), int(hi))
        for lo, hi in zip(edges[:-1], edges[1:]))
    return [rec for part in parts for rec in part]


def chain_bond_prob(params: ModelParams, cfg: ChainConfig, n: int,
                    bond_index: int, workers: int = 1,
                    confidence: float = 0.95) -> EstimateResult:
    """Probability that the first break happens at one particular bond."""
    if not 1 <= bond_index <= cfg.n_particles - 1:
        raise PreconditionError(
            f"bond_index must be in 1..{cfg.n_particles - 1}, got {bond_index}")
    records = run_chain_trials(params, cfg, n, workers=workers)
    successes = sum(1 for r in records if r.bond_index == bond_index)
    capped = sum(1 for r in records if r.capped)
    lo, hi = wilson_interval(successes, n, confidence)
    warnings = ()
    if capped > 0.01 * n:
        warnings = (f"{capped} of {n} trials hit the closure cap",)
    return EstimateResult(
        p_hat=successes / n, n=n, successes=successes, ci_low=lo, ci_high=hi,
        confidence=confidence, side=f"bond_{bond_index}", capped_count=capped,
        seed=cfg.seed, frame="physical", warnings=warnings)


def break_location_histogram(records) -> np.ndarray:
    """Counts of first breaks per bond, indexed by bond_index - 1."""
    records = list(records)
    if not records:
        raise PreconditionError("no records to histogram")
    n_bonds = records[0].n_particles - 1
    counts = np.zeros(n_bonds, dtype=np.int64)
    for r in records:
        if r.n_particles - 1 != n_bonds:
            raise PreconditionError("records mix different chain sizes")
        counts[r.bond_index - 1] += 1
    return counts
