"""Command-line interface.

Every command reads an optional JSON config (strictly validated: unknown
fields are rejected), applies flag overrides, materializes all defaults,
and writes deterministic artifacts into the output directory:

* ``results.json`` with the command, the fully resolved config (feeding it
  back via --config reproduces the run bit for bit), derived quantities,
  and the results;
* command-specific CSV files;
* ``run_meta.json`` with runtime context (timings, thread count, paths),
  kept separate so result files never depend on it.

Exit codes: 0 success, 2 configuration or validation problems, 3 runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chain import ChainConfig, break_location_histogram, run_chain_trials
from .deviation import boundary_curves, build_linearization, build_variance
from .dynamics import (IntegratorConfig, ModelParams, PullSchedule, build_plan,
                       expansion_report, simulate_path, solve_deterministic)
from .errors import (ChainbreakError, ConfigError, EvaluationError,
                     ExtensionError, IntegrationError, PotentialFormatError,
                     PreconditionError)
from .experiments import (PRESETS, classify_regime, conditional_hit_experiment,
                          corridor_experiment, estimate_break_prob,
                          run_sweep, tau_L_experiment, tau_window)
from .potential import (PotentialSpec, example_quadratic, extend,
                        potential_from_dict, potential_to_dict,
                        validate_potential)

_CONFIG_ERRORS = (ConfigError, PotentialFormatError, PreconditionError,
                  ExtensionError)


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return "%.17g" % x


def _emit_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f"{pad}  {json.dumps(str(k))}: {_emit_json(v, indent + 1)}"
            for k, v in obj.items())
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        inner = ",\n".join(f"{pad}  {_emit_json(v, indent + 1)}" for v in seq)
        return "[\n" + inner + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(_emit_json(obj) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return "nan" if math.isnan(x) else _fmt_float(x) if math.isfinite(x) else repr(x)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _check_fields(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        names = ", ".join(f"{where}.{k}" if where else k for k in sorted(unknown))
        raise ConfigError(f"unknown config field(s): {names}")


_MODEL_KEYS = {"sigma", "epsilon", "pull", "blend_width", "potential"}
_INTEGRATOR_KEYS = {"frame", "dt", "crossing", "scheme"}
_COMMAND_KEYS = {
    "validate": {"grid_points", "tol"},
    "deterministic": {"dt"},
    "simulate": {"n", "side"},
    "sweep": {"sigmas", "epsilons", "n", "side", "margin"},
    "corridor": {"h_multiples", "t_end", "n_paths", "dt"},
    "tau_l": {"d_sq", "n_paths", "dt", "f_plus"},
    "conditional": {"d_sq", "t_star", "delta", "n_paths", "dt"},
    "chain": {"n_particles", "n", "all_pairs", "dt"},
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def _resolve(args: argparse.Namespace) -> dict:
    """Merge config file and flags into a fully explicit config dict."""
    command = args.command
    key = command.replace("-", "_")
    raw = _load_config(args.config)
    _check_fields(raw, {"preset", "model", "integrator", "seed", key}, "")

    model_raw = dict(raw.get("model", {}))
    _check_fields(model_raw, _MODEL_KEYS, "model")
    integ_raw = dict(raw.get("integrator", {}))
    _check_fields(integ_raw, _INTEGRATOR_KEYS, "integrator")
    cmd_raw = dict(raw.get(key, {}))
    _check_fields(cmd_raw, _COMMAND_KEYS[key], key)

    preset = args.preset or raw.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    base = dict(PRESETS[preset]) if preset else {}
    sigma = args.sigma if args.sigma is not None else model_raw.get("sigma", base.get("sigma"))
    epsilon = (args.epsilon if args.epsilon is not None
               else model_raw.get("epsilon", base.get("epsilon")))
    if sigma is None or epsilon is None:
        defaults = PRESETS["fast"]
        sigma = defaults["sigma"] if sigma is None else sigma
        epsilon = defaults["epsilon"] if epsilon is None else epsilon

    pot_raw = model_raw.get("potential", "example_quadratic")
    if pot_raw == "example_quadratic":
        pot_dict = potential_to_dict(example_quadratic())
    elif isinstance(pot_raw, dict):
        pot_dict = potential_to_dict(potential_from_dict(pot_raw))
    else:
        raise ConfigError(
            f"model.potential must be an object or \"example_quadratic\", got {pot_raw!r}")

    model = {
        "potential": pot_dict,
        "sigma": float(sigma),
        "epsilon": float(epsilon),
        "pull": [float(c) for c in model_raw.get("pull", [1.0])],
        "blend_width": model_raw.get("blend_width"),
    }
    integrator = {
        "frame": args.frame or integ_raw.get("frame", "physical"),
        "dt": args.dt if args.dt is not None else integ_raw.get("dt"),
        "crossing": integ_raw.get("crossing", "bridge"),
        "scheme": integ_raw.get("scheme", "explicit"),
    }
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    cmd = dict(cmd_raw)
    if getattr(args, "n", None) is not None:
        if "n" in _COMMAND_KEYS[key]:
            cmd["n"] = args.n
        elif "n_paths" in _COMMAND_KEYS[key]:
            cmd["n_paths"] = args.n
    return {"command": command, "model": model, "integrator": integrator,
            "seed": int(seed), key: cmd}


def _build_model(config: dict) -> ModelParams:
    model = config["model"]
    spec = potential_from_dict(model["potential"])
    ext = extend(spec, blend_width=model["blend_width"])
    return ModelParams(potential=ext, sigma=model["sigma"],
                       epsilon=model["epsilon"],
                       pull=PullSchedule(tuple(model["pull"])))


def _integrator(config: dict, **overrides) -> IntegratorConfig:
    integ = config["integrator"]
    return IntegratorConfig(frame=integ["frame"], dt=integ["dt"],
                            crossing=integ["crossing"], scheme=integ["scheme"],
                            seed=config["seed"], **overrides)


def _derived_block(params: ModelParams, config: dict,
                   with_plan: bool = False) -> dict:
    lin = build_linearization(params)
    regime = classify_regime(params.sigma, params.epsilon)
    out = {
        "a": params.a, "b": params.b,
        "a0": params.potential.a0, "u0": params.potential.u0,
        "t_close": params.t_close,
        "A0": lin.A0, "A1": lin.A1, "M": lin.M,
        "regime": regime.label,
    }
    if with_plan:
        plan = build_plan(params, _integrator(config))
        out["dt_effective"] = plan.dt
        out["n_steps"] = plan.n_steps
    return out


def _cmd_validate(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["validate"]
    spec = potential_from_dict(config["model"]["potential"])
    report = validate_potential(spec, grid_points=int(opts.get("grid_points", 10_000)),
                                tol=float(opts.get("tol", 1e-10)))
    config["validate"] = {"grid_points": int(opts.get("grid_points", 10_000)),
                          "tol": float(opts.get("tol", 1e-10))}
    results = {
        "all_passed": report.all_passed,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail,
                    "worst_point": c.worst_point, "worst_value": c.worst_value}
                   for c in report.checks],
    }
    return {"results": results, "derived": {}}, (0 if report.all_passed else 2)


def _cmd_deterministic(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["deterministic"]
    params = _build_model(config)
    det = solve_deterministic(params, dt=opts.get("dt"))
    config["deterministic"] = {"dt": opts.get("dt")}
    lin = build_linearization(params, det=det)
    curves = boundary_curves(params, det=det)
    var = build_variance(lin)
    rows = zip(det.t, det.x, lin.A, curves.d_plus, curves.d_minus, var.v, var.xi)
    _write_csv(out / "curves.csv",
               ["t", "x_det", "A", "d_plus", "d_minus", "v", "xi"], rows)
    results = {
        "t_close": params.t_close,
        "err_est": det.err_est,
        "n_nodes": len(det.t),
        "expansion": expansion_report(params),
    }
    derived = _derived_block(params, config)
    return {"results": results, "derived": derived}, 0


def _cmd_simulate(config: dict, out: Path, threads: int,
                  dump_every: int | None) -> tuple[dict, int]:
    opts = config["simulate"]
    n = int(opts.get("n", 100))
    side = opts.get("side", "left")
    config["simulate"] = {"n": n, "side": side}
    params = _build_model(config)
    res = estimate_break_prob(params, _integrator(config), n, side=side,
                              workers=threads)
    if dump_every is not None:
        rec, dump = simulate_path(params, _integrator(config),
                                  record_every=max(1, dump_every))
        plan_scale = params.epsilon if config["integrator"]["frame"] == "physical" else 1.0
        t_resc = plan_scale * dump.t
        left_edge = (2.0 * params.a * (1.0 + params.pull.value(t_resc)) - params.b)
        rows = zip(dump.t, dump.x, left_edge, np.full(len(dump.t), params.b))
        _write_csv(out / "trajectory.csv",
                   ["t", "x", "left_edge", "right_edge"], rows)
    results = {
        "side": side, "p_hat": res.p_hat, "n": res.n,
        "successes": res.successes, "ci_low": res.ci_low, "ci_high": res.ci_high,
        "confidence": res.confidence, "capped_count": res.capped_count,
        "warnings": list(res.warnings),
    }
    derived = _derived_block(params, config, with_plan=True)
    return {"results": results, "derived": derived}, 0


def _cmd_sweep(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["sweep"]
    if "sigmas" not in opts or "epsilons" not in opts:
        raise ConfigError("sweep needs 'sigmas' and 'epsilons' lists")
    sigmas = [float(s) for s in opts["sigmas"]]
    epsilons = [float(e) for e in opts["epsilons"]]
    n = int(opts.get("n", 200))
    side = opts.get("side", "left")
    margin = float(opts.get("margin", 3.0))
    config["sweep"] = {"sigmas": sigmas, "epsilons": epsilons, "n": n,
                       "side": side, "margin": margin}
    rows = run_sweep(sigmas, epsilons, n, seed=config["seed"], workers=threads,
                     side=side, frame=config["integrator"]["frame"],
                     margin=margin,
                     blend_width=config["model"]["blend_width"])
    _write_csv(out / "sweep.csv",
               ["sigma", "epsilon", "regime", "p_left", "ci_low", "ci_high", "n"],
               ([r["sigma"], r["epsilon"], r["regime"], r["p_left"],
                 r["ci_low"], r["ci_high"], r["n"]] for r in rows))
    return {"results": {"rows": rows}, "derived": {}}, 0


def _cmd_corridor(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["corridor"]
    params = _build_model(config)
    lin = build_linearization(params)
    var = build_variance(lin)
    h_multiples = [float(h) for h in opts.get("h_multiples", [3.0, 4.0, 5.0])]
    t_end = float(opts.get("t_end", 0.9 * params.t_close))
    n_paths = int(opts.get("n_paths", 2000))
    dt = opts.get("dt")
    config["corridor"] = {"h_multiples": h_multiples, "t_end": t_end,
                          "n_paths": n_paths, "dt": dt}
    rows = []
    for m in h_multiples:
        r = corridor_experiment(lin, var, params.sigma, m * params.sigma,
                                t_end, n_paths=n_paths, dt=dt,
                                seed=config["seed"])
        rows.append({"h_multiple": m, "h": r.h, "p_hat": r.p_hat,
                     "ci_low": r.ci_low, "ci_high": r.ci_high,
                     "bound": r.bound, "n": r.n})
    _write_csv(out / "corridor.csv",
               ["h_multiple", "h", "p_hat", "ci_low", "ci_high", "bound", "n"],
               ([r["h_multiple"], r["h"], r["p_hat"], r["ci_low"],
                 r["ci_high"], r["bound"], r["n"]] for r in rows))
    return {"results": {"rows": rows}, "derived": _derived_block(params, config)}, 0


def _cmd_tau_l(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["tau_l"]
    params = _build_model(config)
    d_sq = float(opts.get("d_sq", params.sigma ** 2 / 4.0))
    n_paths = int(opts.get("n_paths", 2000))
    dt = opts.get("dt")
    f_plus = float(opts.get("f_plus", abs(math.log(params.sigma))))
    config["tau_l"] = {"d_sq": d_sq, "n_paths": n_paths, "dt": dt,
                       "f_plus": f_plus}
    lin = build_linearization(params)
    curves = boundary_curves(params)
    res = tau_L_experiment(lin, curves, params.sigma, d_sq, n_paths=n_paths,
                           dt=dt, seed=config["seed"])
    t_lo, t_hi = tau_window(params, params.sigma, f_plus)
    _write_csv(out / "tau_l.csv", ["trial", "tau", "sign"],
               ((i, res.tau[i], int(res.sign[i])) for i in range(n_paths)))
    results = {
        "t_cap": res.t_cap, "hit_fraction": res.hit_fraction,
        "upper_fraction": res.upper_fraction,
        "window": {"t_lo": t_lo, "t_hi": t_hi, "f_plus": f_plus},
        "window_mass": res.window_mass(t_lo, t_hi),
    }
    return {"results": results, "derived": _derived_block(params, config)}, 0


def _cmd_conditional(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["conditional"]
    params = _build_model(config)
    lin = build_linearization(params)
    curves = boundary_curves(params)
    d_sq = float(opts.get("d_sq", params.sigma ** 2 / 4.0))
    t_cap = curves.envelope_zero(d_sq)
    t_star = float(opts.get("t_star", 0.98 * t_cap))
    delta = float(opts.get("delta", params.epsilon / 50.0))
    n_paths = int(opts.get("n_paths", 2000))
    dt = opts.get("dt")
    config["conditional"] = {"d_sq": d_sq, "t_star": t_star, "delta": delta,
                             "n_paths": n_paths, "dt": dt}
    res = conditional_hit_experiment(lin, curves, params.sigma, d_sq, t_star,
                                     delta, n_paths=n_paths, dt=dt,
                                     seed=config["seed"])
    results = {
        "p_exit": res.p_exit, "ci_exit": list(res.ci_exit),
        "p_return": res.p_return, "ci_return": list(res.ci_return),
        "n": res.n, "t_star": res.t_star, "delta": res.delta, "d_sq": res.d_sq,
    }
    return {"results": results, "derived": _derived_block(params, config)}, 0


def _cmd_chain(config: dict, out: Path, threads: int) -> tuple[dict, int]:
    opts = config["chain"]
    params = _build_model(config)
    n_particles = int(opts.get("n_particles", 5))
    n = int(opts.get("n", 200))
    all_pairs = bool(opts.get("all_pairs", True))
    dt = opts.get("dt")
    config["chain"] = {"n_particles": n_particles, "n": n,
                       "all_pairs": all_pairs, "dt": dt}
    cfg = ChainConfig(n_particles=n_particles, dt=dt, seed=config["seed"],
                      all_pairs=all_pairs)
    records = run_chain_trials(params, cfg, n, workers=threads)
    counts = break_location_histogram(records)
    _write_csv(out / "histogram.csv", ["bond_index", "count", "fraction"],
               ((i + 1, int(c), c / n) for i, c in enumerate(counts)))
    capped = sum(1 for r in records if r.capped)
    results = {
        "n": n, "n_particles": n_particles,
        "counts": [int(c) for c in counts],
        "fractions": [float(c) / n for c in counts],
        "capped_count": capped,
        "mean_tau": float(np.mean([r.tau for r in records])),
    }
    return {"results": results, "derived": _derived_block(params, config)}, 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainbreak",
        description="Break-probability experiments for a pulled particle chain")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "validate": "check a potential definition against its declared geometry",
        "deterministic": "solve the relaxed path and write the derived curves",
        "simulate": "estimate a break probability by Monte Carlo",
        "sweep": "break probabilities over a (sigma, epsilon) grid",
        "corridor": "deviation corridor exceedance vs its a priori bound",
        "tau-l": "first-passage times of the deviation envelope",
        "conditional": "exit-vs-return probabilities after an envelope touch",
        "chain": "first-break statistics for an N-particle chain",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="chainbreak_out",
                       help="output directory (default: %(default)s)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for trials (default: 1)")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--frame", choices=["physical", "rescaled"], default=None)
        p.add_argument("--dt", type=float, default=None,
                       help="integrator step override")
        p.add_argument("--n", type=int, default=None,
                       help="trial/path count override")
        if name == "simulate":
            p.add_argument("--dump-every", type=int, default=None,
                           help="also write trajectory.csv, thinned by this stride")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t_start = time.monotonic()
    try:
        config = _resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        key = args.command.replace("-", "_")
        if key == "validate":
            payload, code = _cmd_validate(config, out, args.threads)
        elif key == "deterministic":
            payload, code = _cmd_deterministic(config, out, args.threads)
        elif key == "simulate":
            payload, code = _cmd_simulate(config, out, args.threads,
                                          getattr(args, "dump_every", None))
        elif key == "sweep":
            payload, code = _cmd_sweep(config, out, args.threads)
        elif key == "corridor":
            payload, code = _cmd_corridor(config, out, args.threads)
        elif key == "tau_l":
            payload, code = _cmd_tau_l(config, out, args.threads)
        elif key == "conditional":
            payload, code = _cmd_conditional(config, out, args.threads)
        else:
            payload, code = _cmd_chain(config, out, args.threads)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvaluationError, IntegrationError, ChainbreakError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3

    doc = {"command": config["command"], "config": {
        k: v for k, v in config.items() if k != "command"},
        "derived": payload["derived"], "results": payload["results"]}
    _write_json(out / "results.json", doc)
    _write_json(out / "run_meta.json", {
        "command": config["command"],
        "out_dir": str(out),
        "threads": args.threads,
        "runtime_seconds": time.monotonic() - t_start,
        "version": __version__,
    })
    print(_emit_json(doc["config"]))
    print(f"wrote {out / 'results.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
