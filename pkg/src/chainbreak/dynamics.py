"""Single-particle model: a Brownian particle between a fixed neighbor and
a receding one.

The particle at ``x`` interacts with a fixed neighbor at the origin and a
driven one at ``2a(1+p(t))``, where the pull ``p`` is a strictly increasing
polynomial schedule with ``p(0) = 0``.  In rescaled time the position obeys

    dx = (1/eps) * [-U'(x) + U'(2a(1+p(t)) - x)] dt + (sigma/sqrt(eps)) dW

and the run ends when ``x`` first leaves ``(2a(1+p(t)) - b, b)``: touching
the upper edge breaks the bond to the fixed neighbor ("left"), touching the
lower edge breaks the bond to the receding one ("right").  Runs are capped
at ``t_close``, the time at which the lower edge reaches the equilibrium
position of the surviving configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import rng
from .errors import ConfigError, IntegrationError, PreconditionError
from .potential import ExtendedPotential

_FRAMES = ("physical", "rescaled")
_CROSSINGS = {"grid": K.CROSS_GRID, "linear": K.CROSS_LINEAR, "bridge": K.CROSS_BRIDGE}
_SCHEMES = {"explicit": K.SCHEME_EXPLICIT, "semi_implicit": K.SCHEME_SEMI_IMPLICIT}


@dataclass(frozen=True)
class PullSchedule:
    """Polynomial pull ``p(t) = c0 t + c1 t^2 + ...`` with no constant term."""

    coefs: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.coefs) == 0:
            raise ConfigError("pull schedule needs at least one coefficient")
        object.__setattr__(self, "coefs", tuple(float(c) for c in self.coefs))

    def value(self, t):
        acc = np.zeros_like(np.asarray(t, dtype=float))
        for c in reversed(self.coefs):
            acc = acc * t + c
        out = acc * t
        return float(out) if np.ndim(t) == 0 else out

    def deriv(self, t):
        acc = np.zeros_like(np.asarray(t, dtype=float))
        for k in range(len(self.coefs) - 1, -1, -1):
            acc = acc * t + (k + 1) * self.coefs[k]
        return float(acc) if np.ndim(t) == 0 else acc

    def inverse(self, target: float) -> float:
        """First time at which the pull reaches ``target`` (> 0)."""
        if target <= 0:
            raise ConfigError(f"pull target must be positive, got {target}")
        hi = 1.0
        while self.value(hi) < target:
            hi *= 2.0
            if hi > 1e12:
                raise ConfigError("pull schedule never reaches the requested value")
        return float(brentq(lambda t: self.value(t) - target, 0.0, hi, xtol=1e-14))

    def array(self) -> np.ndarray:
        return np.asarray(self.coefs, dtype=float)


@dataclass(frozen=True)
class ModelParams:
    """Potential, noise strength, pulling rate, and pull shape."""

    potential: ExtendedPotential
    sigma: float
    epsilon: float
    pull: PullSchedule = field(default_factory=PullSchedule)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        target = self.b / self.a - 1.0
        t_close = self.pull.inverse(target)
        probe = np.linspace(0.0, t_close, 1001)
        rates = self.pull.deriv(probe)
        if np.min(rates) <= 0:
            raise ConfigError("pull schedule must be strictly increasing up to t_close")
        object.__setattr__(self, "_t_close", t_close)

    @property
    def a(self) -> float:
        return self.potential.a

    @property
    def b(self) -> float:
        return self.potential.b

    @property
    def t_close(self) -> float:
        """Rescaled time at which the domain closes (pull reaches b/a - 1)."""
        return self._t_close


@dataclass(frozen=True)
class IntegratorConfig:
    """How a trajectory is integrated and how crossings are detected.

    ``frame`` picks the time variable: "physical" steps the original clock
    (drift has no 1/eps factor), "rescaled" steps the slow clock.  The
    crossing detector is "grid" (post-step sign check), "linear"
    (sub-step interpolation), or "bridge" (adds an endpoint-conditioned
    crossing test between grid points, the default).
    """

    frame: str = "physical"
    dt: float | None = None
    crossing: str = "bridge"
    scheme: str = "explicit"
    seed: int = 0
    trial_index: int = 0
    normal_block: int = 1 << 16
    uniform_block: int = 4096

    def __post_init__(self):
        if self.frame not in _FRAMES:
            raise ConfigError(f"unknown frame {self.frame!r}, expected one of {_FRAMES}")
        if self.crossing not in _CROSSINGS:
            raise ConfigError(
                f"unknown crossing mode {self.crossing!r}, expected one of {tuple(_CROSSINGS)}")
        if self.scheme not in _SCHEMES:
            raise ConfigError(
                f"unknown scheme {self.scheme!r}, expected one of {tuple(_SCHEMES)}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.seed < 0 or self.trial_index < 0:
            raise ConfigError("seed and trial_index must be non-negative")
        if self.normal_block < 1 or self.uniform_block < 8:
            raise ConfigError("block sizes are too small")


@dataclass(frozen=True)
class BreakRecord:
    """Outcome of one trajectory.

    ``tau`` is always reported in rescaled time.  ``side`` is "left" when
    the bond to the fixed neighbor broke (upper edge), "right" for the bond
    to the receding neighbor (lower edge).  ``capped`` marks runs that
    reached ``t_close`` without an exit and were classified by which side
    of the instantaneous midpoint the particle ended on.
    """

    tau: float
    side: str
    x_exit: float
    steps: int
    capped: bool
    trial_index: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"tau": self.tau, "side": self.side, "x_exit": self.x_exit,
                "steps": self.steps, "capped": self.capped,
                "trial_index": self.trial_index, "seed": self.seed}


@dataclass(frozen=True)
class PathDump:
    """Thinned trajectory record in the integration frame."""

    t: np.ndarray
    x: np.ndarray
    increments: np.ndarray | None = None


@dataclass(frozen=True)
class DeterministicPath:
    """Noise-free relaxed trajectory on a uniform rescaled grid."""

    t: np.ndarray
    x: np.ndarray
    err_est: float
    t_close: float

    def __call__(self, t):
        return np.interp(t, self.t, self.x)


def right_endpoint(params: ModelParams, t):
    """Position of the receding neighbor at rescaled time t."""
    return 2.0 * params.a * (1.0 + params.pull.value(t))


def drift(params: ModelParams, x, t, frame: str = "rescaled"):
    """Total force on the particle; in the rescaled frame it carries 1/eps.

    In the physical frame ``t`` is physical time and the pull is evaluated
    at ``eps * t``.
    """
    if frame not in _FRAMES:
        raise ConfigError(f"unknown frame {frame!r}")
    pull_t = t if frame == "rescaled" else np.asarray(t, dtype=float) * params.epsilon
    m2 = right_endpoint(params, pull_t)
    pot = params.potential
    force = -pot.evaluate(x, order=1) + pot.evaluate(m2 - np.asarray(x, dtype=float), order=1)
    if frame == "rescaled":
        force = force / params.epsilon
    return force


def a1_estimate(potential: ExtendedPotential) -> float:
    """Upper bound 2 * max(U'') on the drift stiffness, from a grid scan."""
    hi = potential.b + 2.0 * potential.blend_width
    grid = np.linspace(0.0, hi, 2001)
    return 2.0 * float(np.max(potential.evaluate(grid, order=2)))


def default_dt(params: ModelParams, frame: str = "physical") -> float:
    """Step that resolves the stiffest relaxation and the noise scale."""
    a1 = a1_estimate(params.potential)
    dt = min(0.01, 0.1 / a1)
    if params.sigma > 0:
        dt = min(dt, params.sigma ** 2 / 4.0)
    return dt if frame == "physical" else params.epsilon * dt


@dataclass(frozen=True)
class SimPlan:
    """Kernel-ready constants and tables for one (params, config) pair."""

    n_steps: int
    dt: float
    time_scale: float
    drift_scale: float
    noise_amp: float
    s2dt: float
    two_a: float
    bcut: float
    pullc: np.ndarray
    breaks: np.ndarray
    c1t: np.ndarray
    c2t: np.ndarray
    crossing: int
    scheme: int
    normal_block: int
    uniform_block: int
    epsilon: float
    t_close: float
    x0: float
    mid_close: float


def build_plan(params: ModelParams, cfg: IntegratorConfig) -> SimPlan:
    eps = params.epsilon
    if cfg.frame == "physical":
        time_scale, drift_scale = eps, 1.0
        horizon = params.t_close / eps
        noise_var = params.sigma ** 2
    else:
        time_scale, drift_scale = 1.0, 1.0 / eps
        horizon = params.t_close
        noise_var = params.sigma ** 2 / eps
    dt = cfg.dt if cfg.dt is not None else default_dt(params, cfg.frame)
    n_steps = max(1, math.ceil(horizon / dt - 1e-12))
    dt_eff = horizon / n_steps
    a1 = a1_estimate(params.potential)
    if cfg.scheme == "explicit" and drift_scale * dt_eff * a1 >= 1.0:
        raise ConfigError(
            f"dt={dt_eff:.3g} is unstable for the explicit scheme in the {cfg.frame} "
            f"frame (stiffness estimate {a1:.3g}); reduce dt or use semi_implicit")
    breaks, c1t = params.potential.tables(1)
    _, c2t = params.potential.tables(2)
    mid_close = params.a * (1.0 + params.pull.value(params.t_close))
    return SimPlan(
        n_steps=n_steps, dt=dt_eff, time_scale=time_scale, drift_scale=drift_scale,
        noise_amp=params.sigma * math.sqrt(dt_eff * drift_scale),
        s2dt=noise_var * dt_eff, two_a=2.0 * params.a, bcut=params.b,
        pullc=params.pull.array(), breaks=breaks, c1t=c1t, c2t=c2t,
        crossing=_CROSSINGS[cfg.crossing], scheme=_SCHEMES[cfg.scheme],
        normal_block=cfg.normal_block, uniform_block=cfg.uniform_block,
        epsilon=eps, t_close=params.t_close, x0=params.a, mid_close=mid_close)


def run_trial(plan: SimPlan, seed: int, trial_index: int,
              record_every: int = 0, collect_noise: bool = False
              ) -> tuple[BreakRecord, PathDump | None]:
    """Integrate one trajectory to its first boundary crossing or the cap."""
    gen = rng.stream(seed, trial_index, rng.NORMALS)
    pool = rng.UniformPool(rng.stream(seed, trial_index, rng.UNIFORMS),
                           plan.uniform_block)
    rec_x = rec_t = None
    if record_every > 0:
        n_rec = plan.n_steps // record_every + 1
        rec_x = np.empty(n_rec)
        rec_x[0] = plan.x0
    noise_blocks: list[np.ndarray] = [] if collect_noise else None

    x = plan.x0
    step = 0
    u_idx = 0
    status = K.CONT
    while True:
        normals = gen.standard_normal(plan.normal_block)
        if collect_noise:
            noise_blocks.append(normals)
        block_start = step
        while True:
            offset = step - block_start
            status, x, step, u_idx, side_code, theta, x_exit = K.core_block(
                x, step, plan.n_steps, plan.dt, plan.time_scale, plan.drift_scale,
                plan.noise_amp, plan.s2dt, plan.two_a, plan.bcut, plan.pullc,
                plan.breaks, plan.c1t, plan.c2t, plan.crossing, plan.scheme,
                normals[offset:], pool.buf, u_idx,
                record_every, rec_x if rec_x is not None else np.empty(0))
            if status == K.NEED_UNI:
                pool.refill(u_idx)
                u_idx = 0
                continue
            break
        if status == K.CONT:
            continue
        break

    if status == K.EXIT:
        tau_frame = (step + theta) * plan.dt
        record = BreakRecord(
            tau=plan.time_scale * tau_frame,
            side="left" if side_code == K.SIDE_LEFT else "right",
            x_exit=x_exit, steps=step + 1, capped=False,
            trial_index=trial_index, seed=seed)
        steps_used = step + 1      # the crossing step consumed a normal
        last_pos = step            # last in-domain grid position
    else:
        side = "left" if x > plan.mid_close else "right"
        record = BreakRecord(tau=plan.t_close, side=side, x_exit=x,
                             steps=plan.n_steps, capped=True,
                             trial_index=trial_index, seed=seed)
        steps_used = plan.n_steps
        last_pos = plan.n_steps

    dump = None
    if record_every > 0 or collect_noise:
        t = x_arr = None
        if record_every > 0:
            last_slot = last_pos // record_every
            t = np.arange(last_slot + 1) * (record_every * plan.dt)
            x_arr = rec_x[:last_slot + 1].copy()
        increments = None
        if collect_noise:
            flat = np.concatenate(noise_blocks)[:steps_used]
            increments = flat * math.sqrt(plan.dt)
        dump = PathDump(t=t, x=x_arr, increments=increments)
    return record, dump


def simulate_trajectory(params: ModelParams, cfg: IntegratorConfig) -> BreakRecord:
    """Run a single trajectory under the given configuration."""
    plan = build_plan(params, cfg)
    record, _ = run_trial(plan, cfg.seed, cfg.trial_index)
    return record


def simulate_path(params: ModelParams, cfg: IntegratorConfig, *,
                  record_every: int = 1, collect_noise: bool = False
                  ) -> tuple[BreakRecord, PathDump]:
    """Like :func:`simulate_trajectory` but also returns the sampled path."""
    plan = build_plan(params, cfg)
    return run_trial(plan, cfg.seed, cfg.trial_index,
                     record_every=record_every, collect_noise=collect_noise)


def solve_deterministic(params: ModelParams, dt: float | None = None,
                        tol: float = 1e-8) -> DeterministicPath:
    """Relaxed noise-free path on [0, t_close], with an accuracy check."""
    if dt is None:
        dt = min(params.epsilon / 100.0, params.t_close / 1000.0)
    n = max(1, math.ceil(params.t_close / dt - 1e-12))
    dt_eff = params.t_close / n
    breaks, c1t = params.potential.tables(1)
    x, err_sum = K.xdet_rk4(params.a, dt_eff, n, params.epsilon,
                            2.0 * params.a, params.pull.array(), breaks, c1t)
    err_est = err_sum / 15.0
    if err_est > tol:
        raise IntegrationError(
            f"deterministic solve error estimate {err_est:.3e} exceeds {tol:.1e}; "
            f"reduce dt below {dt_eff:.3e}")
    t = np.linspace(0.0, params.t_close, n + 1)
    return DeterministicPath(t=t, x=x, err_est=err_est, t_close=params.t_close)


def equivalence_check(params: ModelParams, n: int, seed: int = 0,
                      side: str = "left", workers: int = 1,
                      confidence: float = 0.99,
                      dt_physical: float | None = None,
                      dt_rescaled: float | None = None):
    """Estimate the same break probability in both frames and compare CIs.

    Returns (physical_result, rescaled_result, overlap).  The two runs use
    unrelated noise, so agreement is a genuine cross-check of the frame
    change, not a replay.
    """
    if n <= 0:
        raise PreconditionError(f"need at least one trial, got n={n}")
    from .experiments import estimate_break_prob

    cfg_p = IntegratorConfig(frame="physical", dt=dt_physical, seed=seed)
    cfg_r = IntegratorConfig(frame="rescaled", dt=dt_rescaled, seed=seed + 1)
    res_p = estimate_break_prob(params, cfg_p, n, side=side, workers=workers,
                                confidence=confidence)
    res_r = estimate_break_prob(params, cfg_r, n, side=side, workers=workers,
                                confidence=confidence)
    overlap = res_p.ci_low <= res_r.ci_high and res_r.ci_low <= res_p.ci_high
    return res_p, res_r, overlap


def expansion_report(params: ModelParams, t_probe: float | None = None) -> dict:
    """Compare the relaxed path's lag behind the moving minimum with two
    closed-form candidates for its leading term.

    The lag is ``a(1+p(t)) - x_det(t)``.  Candidate "curvature" is
    ``eps / U''(a(1+p(t)))``; candidate "rate_balance" is
    ``eps * a * p'(t) / (2 U''(a(1+p(t))))``, the value forced by the
    quasi-static force balance.  They coincide when ``a p'(t) = 2``.
    """
    det = solve_deterministic(params)
    t_star = params.t_close if t_probe is None else float(t_probe)
    if not 0.0 < t_star <= params.t_close:
        raise PreconditionError(
            f"t_probe must lie in (0, {params.t_close}], got {t_star}")
    mid = params.a * (1.0 + params.pull.value(t_star))
    lag = mid - float(det(t_star))
    curv = params.potential.evaluate(mid, order=2)
    cand_curvature = params.epsilon / curv
    cand_rate = params.epsilon * params.a * params.pull.deriv(t_star) / (2.0 * curv)
    tiny = 1e-300
    rel_curv = abs(lag - cand_curvature) / max(abs(cand_curvature), tiny)
    rel_rate = abs(lag - cand_rate) / max(abs(cand_rate), tiny)
    tol = 0.05
    if rel_curv <= tol and rel_rate <= tol:
        matches = "both"
    elif rel_curv <= tol:
        matches = "curvature"
    elif rel_rate <= tol:
        matches = "rate_balance"
    else:
        matches = "neither"
    # a lingering initial transient would contaminate the comparison
    a1 = a1_estimate(params.potential)
    transient = math.exp(-0.5 * a1 * t_star / params.epsilon)
    return {"t_probe": t_star, "lag": lag,
            "candidate_curvature": cand_curvature,
            "candidate_rate_balance": cand_rate,
            "rel_err_curvature": rel_curv,
            "rel_err_rate_balance": rel_rate,
            "matches": matches,
            "transient_scale": transient}
