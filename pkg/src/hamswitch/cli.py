"""Command-line front end.

Every subcommand reads a YAML config (``--config``), applies flag
overrides, runs one computation and writes CSV or NDJSON files whose first
line records the config hash and seed. Exit codes: 0 success, 1 a check ran
and failed, 2 configuration error, 3 numerical blow-up, 4 invariant
violation, 5 unwritable output, 6 unknown system.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import OUTPUT_ENV, RunConfig, build_config, load_file
from .errors import BlowUpError, ConfigurationError, HamSwitchError, OutputError
from .ergodicity import Binning, OccupationMeasure, fit_decay, hyper_recurrence_probe, \
    long_run_occupation, passage_ks, passage_times, tv_distance
from .lyapunov import DriftGrid, ErgodicityConditionSpec, constant_candidate, \
    check_theorem_conditions, hamiltonian_candidate, normalize_on_grid, power_profile, \
    vanderpol_exponential_candidate, verify_drift
from .model import HybridState, builtin_test_functions
from .rng import RngStream
from .series import check_resolvent_bounds, check_series
from .simulate import Target, dynkin_test, estimate_transition, martingale_residual, \
    simulate_trajectory
from .systems import get_system, speed_cdf_regime2

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_BLOWUP, EXIT_INVARIANT, EXIT_OUTPUT, \
    EXIT_UNKNOWN_SYSTEM = range(7)

LABELS = {EXIT_CHECK_FAILED: "error", EXIT_CONFIG: "configuration error",
          EXIT_BLOWUP: "numerical blow-up", EXIT_INVARIANT: "invariant violation",
          EXIT_OUTPUT: "output error", EXIT_UNKNOWN_SYSTEM: "unknown system"}

# flag name -> argparse keyword arguments
FLAGS = {
    "T": dict(type=float), "dt": dict(type=float), "n_paths": dict(type=int),
    "x0": dict(type=float, nargs="+"), "y0": dict(type=float, nargs="+"), "k0": dict(type=int),
    "t": dict(type=float),
    "target_lo": dict(type=float, nargs="+"), "target_hi": dict(type=float, nargs="+"),
    "target_regime": dict(type=int),
    "alpha": dict(type=float), "i_max": dict(type=int), "f_const": dict(type=float),
    "candidate": dict(choices=["builtin-H", "builtin-exp", "constant"]),
    "box": dict(type=float), "grid_n": dict(type=int), "radii": dict(type=float, nargs="+"),
    "regime_frozen": dict(type=int), "bin_width": dict(type=float),
    "bin_range": dict(type=float, nargs=2), "burn_in": dict(type=float),
    "replicas": dict(type=int),
    "times": dict(type=float, nargs="+"), "x0b": dict(type=float, nargs="+"),
    "y0b": dict(type=float, nargs="+"), "k0b": dict(type=int),
    "drift": dict(type=float), "start": dict(type=float), "level": dict(type=float),
    "horizon": dict(type=float), "lam": dict(type=float, dest="lam"),
    "hs": dict(type=float, nargs="+"), "function": dict(), "bias_constant": dict(type=float),
}

COMMANDS = {
    "simulate": ("simulate one hybrid trajectory (NDJSON)", ["T", "dt", "x0", "y0", "k0"]),
    "transition": ("estimate a transition probability to a box x regime",
                   ["t", "dt", "n_paths", "x0", "y0", "k0", "target_lo", "target_hi",
                    "target_regime"]),
    "series-check": ("zero/one-switch terms of the transition series",
                     ["t", "dt", "n_paths", "x0", "y0", "k0", "target_lo", "target_hi",
                      "target_regime"]),
    "resolvent-check": ("resolvent segment terms against their bounds",
                        ["dt", "n_paths", "x0", "y0", "k0", "alpha", "i_max", "f_const"]),
    "verify-drift": ("Foster-Lyapunov drift check on a grid",
                     ["candidate", "box", "grid_n", "alpha"]),
    "check-ergodicity-conditions": ("sufficient-condition suite on a radius schedule",
                                    ["radii"]),
    "occupation": ("long-run occupation histogram",
                   ["T", "dt", "x0", "y0", "k0", "regime_frozen", "bin_width", "bin_range",
                    "burn_in", "replicas"]),
    "check-decay": ("fit exponential decay of the distance between two laws",
                    ["dt", "n_paths", "x0", "y0", "k0", "x0b", "y0b", "k0b", "times",
                     "bin_width", "bin_range"]),
    "passage-time": ("drifted Brownian first passage against its analytic law",
                     ["drift", "start", "level", "n_paths", "dt", "horizon", "lam"]),
    "dynkin-test": ("small-time generator consistency",
                    ["x0", "y0", "k0", "n_paths", "hs", "function", "bias_constant"]),
    "martingale-test": ("mean of the Dynkin martingale at t/2 and t",
                        ["x0", "y0", "k0", "t", "dt", "n_paths", "function"]),
}


def _key_values(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hamswitch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, flags) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="YAML config file; flags override its keys")
        p.add_argument("--system", help="built-in system name")
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="system parameter override (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=["thinning", "weighted"])
        p.add_argument("--workers", type=int)
        p.add_argument("--out", dest="output_dir",
                       help=f"output directory (default ${OUTPUT_ENV} or .)")
        if name == "check-ergodicity-conditions":
            p.add_argument("--cond", action="append", metavar="KEY=VALUE",
                           help="condition constant override (repeatable)")
        for flag in flags:
            kwargs = dict(FLAGS[flag])
            dest = kwargs.pop("dest", flag)
            p.add_argument("--" + flag.replace("_", "-"), dest=dest, default=None, **kwargs)
    return parser


# ----------------------------------------------------------------------------- output


class Output:
    def __init__(self, cfg: RunConfig):
        self.dir = cfg.resolved_output_dir()
        self.cfg = cfg
        self.digest = cfg.digest()
        try:
            os.makedirs(self.dir, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output directory {self.dir}: {exc}") from None
        if not os.access(self.dir, os.W_OK):
            raise OutputError(f"output directory {self.dir} is not writable")
        self.written = []

    @property
    def header(self) -> dict:
        return {"tool": "hamswitch", "command": self.cfg.command, "config_sha256": self.digest,
                "seed": self.cfg.seed}

    def _write(self, name, text):
        path = os.path.join(self.dir, name)
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from None
        self.written.append(path)
        return path

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(f"# hamswitch {self.cfg.command} config_sha256={self.digest} "
                  f"seed={self.cfg.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._write(name, buf.getvalue())

    def ndjson(self, name, lines):
        body = json.dumps(self.header, sort_keys=True) + "\n" + "".join(l + "\n" for l in lines)
        return self._write(name, body)

    def summary(self, record: dict):
        data = {**self.header, **record}
        return self.ndjson("summary.ndjson", [json.dumps(_jsonable(data), sort_keys=True)])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(str(_fmt(x)) for x in v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


# ----------------------------------------------------------------------------- helpers


def _system(cfg):
    return get_system(cfg.system, **cfg.params)


def _state(spec, x, y, k):
    return HybridState.of(spec, x, None if spec.overdamped else y, k)


def _target(cfg):
    lo = tuple(cfg.target_lo) if cfg.target_lo is not None else None
    hi = tuple(cfg.target_hi) if cfg.target_hi is not None else None
    return Target(lo, hi, cfg.target_regime)


def _functions(cfg):
    funcs = builtin_test_functions()
    if cfg.function == "all":
        return list(funcs.values())
    if cfg.function not in funcs:
        raise ConfigurationError(f"unknown test function {cfg.function!r}; "
                                 f"choose from {', '.join(funcs)} or all")
    return [funcs[cfg.function]]


def _binning(cfg, spec, regimes):
    lo, hi = cfg.bin_range
    marginal = () if spec.overdamped else tuple(range(spec.dim, spec.phase_dim))
    return Binning.uniform(lo, hi, cfg.bin_width, spec.phase_dim, regimes=regimes,
                           marginal=marginal)


def _stream(cfg, index=0):
    return RngStream(cfg.seed, index)


# ----------------------------------------------------------------------------- commands


def cmd_simulate(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    traj = simulate_trajectory(spec, s0, cfg.T, cfg.dt, mode=cfg.mode, rng=_stream(cfg))
    out.ndjson("trajectory.ndjson", traj.ndjson_lines())
    out.summary({"samples": len(traj), "accepted_jumps": len(traj.jumps),
                 "phantom_events": sum(e.phantom for e in traj.events), "weight": traj.weight})
    return None


def cmd_transition(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    est = estimate_transition(spec, s0, cfg.t, _target(cfg), cfg.n_paths, cfg.dt, cfg.mode,
                              _stream(cfg), cfg.workers)
    out.csv("transition.csv", ["probability", "standard_error", "n_paths", "ess", "reliable"],
            [(est.probability, est.standard_error, est.n_paths,
              est.ess if est.ess is not None else "", est.reliable)])
    out.summary({"probability": est.probability, "standard_error": est.standard_error,
                 "reliable": est.reliable})
    return est.reliable


def cmd_series_check(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    rep = check_series(spec, s0, cfg.t, _target(cfg), cfg.n_paths, cfg.dt, _stream(cfg),
                       cfg.workers)
    out.csv("series.csv", ["term", "estimate", "se", "bound", "pass"], rep.rows())
    out.summary({"pass": rep.passed, "residual": rep.residual, "bound": rep.bound})
    return rep.passed


def cmd_resolvent_check(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    alpha = cfg.alpha if cfg.alpha is not None else spec.H_bound + 1
    c = cfg.f_const

    def f(x, y, k):
        return np.full(x.shape[0], c)

    est = check_resolvent_bounds(spec, s0, f, abs(c), alpha, cfg.i_max, cfg.n_paths, cfg.dt,
                                 rng=_stream(cfg), workers=cfg.workers)
    out.csv("resolvent.csv", ["term", "estimate", "se", "bound", "pass"], est.rows())
    out.summary({"pass": est.passed, "alpha": alpha, "truncation_tail": est.tail})
    return est.passed


LANGEVIN_DEFAULTS = dict(u=[2.0, 1.0], kappa=1.0, R=2.0, gamma=0.0, beta1=1.0, beta2=3.0,
                         C1=3.0, C2=1.0, c_ellipticity=1.0, alpha=0.1)


def _conditions(cfg, spec):
    values = {**LANGEVIN_DEFAULTS, **cfg.conditions}
    unknown = set(values) - set(LANGEVIN_DEFAULTS) - {"v"}
    if unknown:
        raise ConfigurationError(f"unknown condition keys: {', '.join(sorted(unknown))}")
    regimes = tuple(spec.regimes or (1,))
    u = dict(zip(regimes, map(float, values["u"])))
    v = values.get("v") or [spec.params.get("v1", 1.0), spec.params.get("v2", 1.0)]
    v = dict(zip(regimes, map(float, v)))
    if len(u) != len(regimes) or len(v) != len(regimes):
        raise ConfigurationError("u and v need one entry per regime")
    return ErgodicityConditionSpec(
        U=power_profile(2), V_profile=power_profile(4), u=u, v=v, kappa=values["kappa"],
        R=values["R"], gamma=values["gamma"], beta1=values["beta1"], beta2=values["beta2"],
        phi=float, C1=values["C1"], C2=values["C2"], c_ellipticity=values["c_ellipticity"],
        alpha=values["alpha"], regimes=regimes)


def cmd_verify_drift(cfg, out):
    spec = _system(cfg)
    if cfg.candidate == "builtin-H":
        cond = _conditions(cfg, spec)
        cand = hamiltonian_candidate(spec, cond.U, cond.u, cond.phi, cond.c_ellipticity,
                                     (-cfg.box, cfg.box))
    elif cfg.candidate == "builtin-exp":
        cand = vanderpol_exponential_candidate(spec)
    else:
        cand = constant_candidate()
    regimes = tuple(spec.regimes or (1,))
    grid = DriftGrid((-cfg.box,) * spec.phase_dim, (cfg.box,) * spec.phase_dim, cfg.grid_n,
                     regimes)
    if cand.log_form:
        normalize_on_grid(spec, cand, grid)
    rep = verify_drift(spec, cand, grid, alpha=cfg.alpha)
    out.csv("drift.csv", ["point", "value", "bound", "margin"], rep.rows())
    out.summary({"pass": rep.passed, "alpha_star": rep.alpha, "beta_star": rep.beta,
                 "violations": len(rep.violations), "grid": rep.grid,
                 "window_limited": rep.window_limited, "candidate": cand.description})
    return rep.passed


def cmd_check_conditions(cfg, out):
    spec = _system(cfg)
    cond = _conditions(cfg, spec)
    results = check_theorem_conditions(spec, cond, cfg.radii)
    rows = []
    for res in results:
        if res.radii:
            for r, v in zip(res.radii, res.values):
                rows.append((res.name, res.status, r, v, res.worst_margin, res.note))
        else:
            rows.append((res.name, res.status, "", "", res.worst_margin, res.note))
    out.csv("conditions.csv", ["condition", "status", "radius", "value", "worst_margin", "note"],
            rows)
    ok = all(res.passed for res in results)
    out.summary({"pass": ok, "statuses": {res.name: res.status for res in results},
                 "window_limited": [res.name for res in results if res.window_limited]})
    return ok


def cmd_occupation(cfg, out):
    spec = _system(cfg)
    k0 = cfg.k0
    if cfg.regime_frozen is not None:
        spec, k0 = spec.frozen(cfg.regime_frozen), cfg.regime_frozen
    regimes = tuple(spec.regimes or (k0,))
    binning = _binning(cfg, spec, regimes)
    per_replica = cfg.T / cfg.replicas
    mu = long_run_occupation(spec, _state(spec, cfg.x0, cfg.y0, k0), per_replica, binning,
                             cfg.dt, cfg.burn_in, cfg.replicas, _stream(cfg), cfg.workers)
    reference = None
    if cfg.system == "overdamped-langevin" and cfg.regime_frozen == 2:
        reference = OccupationMeasure.from_cdf(binning, speed_cdf_regime2)
    edges = [e for e in binning.edges if e is not None][0]
    n_bins = edges.size - 1
    rows = []
    for i, mass in enumerate(mu.masses):
        layer, j = divmod(i, n_bins)
        ref = reference.masses[i] if reference is not None else ""
        rows.append((i, regimes[layer], edges[j], edges[j + 1], mass, ref))
    rows.append(("outside", "", "", "", mu.outside, reference.outside if reference else ""))
    out.csv("occupation.csv", ["bin", "regime", "lo", "hi", "mass", "reference"], rows)
    record = {"total_time": cfg.T, "replicas": cfg.replicas, "outside": mu.outside}
    passed = None
    if reference is not None:
        tv = tv_distance(mu, reference)
        passed = tv <= 0.05
        record.update(tv_to_reference=tv, pass_tv_0_05=passed)
    out.summary(record)
    return passed


def cmd_check_decay(cfg, out):
    spec = _system(cfg)
    pair = (_state(spec, cfg.x0, cfg.y0, cfg.k0), _state(spec, cfg.x0b, cfg.y0b, cfg.k0b))
    binning = _binning(cfg, spec, tuple(spec.regimes or (cfg.k0,)))
    fit = fit_decay(spec, pair, cfg.times, cfg.n_paths, binning, cfg.dt, _stream(cfg),
                    mode=cfg.mode, workers=cfg.workers)
    out.csv("decay.csv", ["t", "distance", "noise_floor", "used"],
            zip(fit.times, fit.distances, fit.noise_floor, fit.used))
    out.summary({"theta": fit.theta, "theta_ci": list(fit.theta_ci), "refused": fit.refused,
                 "log_intercept": fit.log_intercept, "contracting": fit.contracting,
                 "note": fit.note})
    return fit.contracting


def cmd_passage_time(cfg, out):
    sample = passage_times(cfg.drift, cfg.start, cfg.level, cfg.n_paths, cfg.dt, cfg.horizon,
                           _stream(cfg))
    out.csv("passage.csv", ["index", "passage_time"], enumerate(sample.times))
    record = {"mean": float(sample.times.mean()) if sample.times.size else None,
              "censored": sample.censored, "horizon_too_small": sample.horizon_too_small}
    passed = None
    if cfg.drift > 0 and cfg.level > cfg.start:
        stat, p = passage_ks(sample)
        passed = p > 0.01
        record.update(ks_statistic=stat, ks_pvalue=p, pass_ks_0_01=passed)
    hyper = hyper_recurrence_probe(sample, cfg.lam)
    record.update(lam=cfg.lam, hyper_diverging=hyper.diverging, hyper_tail_slope=hyper.tail_slope,
                  hyper_decades=hyper.decades)
    out.summary(record)
    return passed


def cmd_dynkin(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    rows, ok = [], True
    for i, f in enumerate(_functions(cfg)):
        for row in dynkin_test(spec, f, s0, cfg.hs, cfg.n_paths, bias_constant=cfg.bias_constant,
                               rng=_stream(cfg, i), workers=cfg.workers):
            rows.append((f.name, row.h, row.estimate, row.standard_error, row.generator,
                         row.tolerance, row.passed))
            ok &= row.passed
    out.csv("dynkin.csv", ["function", "h", "estimate", "se", "generator", "tolerance", "pass"],
            rows)
    out.summary({"pass": ok})
    return ok


def cmd_martingale(cfg, out):
    spec = _system(cfg)
    s0 = _state(spec, cfg.x0, cfg.y0, cfg.k0)
    rows, ok = [], True
    for i, f in enumerate(_functions(cfg)):
        for row in martingale_residual(spec, f, s0, (cfg.t / 2, cfg.t), cfg.n_paths, cfg.dt,
                                       cfg.mode, _stream(cfg, i), cfg.workers):
            rows.append((f.name, row.t, row.mean, row.standard_error, row.passed))
            ok &= row.passed
    out.csv("martingale.csv", ["function", "t", "mean", "se", "pass"], rows)
    out.summary({"pass": ok})
    return ok


HANDLERS = {
    "simulate": cmd_simulate, "transition": cmd_transition, "series-check": cmd_series_check,
    "resolvent-check": cmd_resolvent_check, "verify-drift": cmd_verify_drift,
    "check-ergodicity-conditions": cmd_check_conditions, "occupation": cmd_occupation,
    "check-decay": cmd_check_decay, "passage-time": cmd_passage_time,
    "dynkin-test": cmd_dynkin, "martingale-test": cmd_martingale,
}

# per-command defaults that differ from the shared RunConfig defaults
COMMAND_DEFAULTS = {
    "simulate": dict(T=10.0),
    "occupation": dict(T=1e4, system="overdamped-langevin"),
    "check-decay": dict(system="overdamped-langevin", x0=[3.0], k0=1, n_paths=10000,
                        times=[0.2 * i for i in range(1, 16)], bin_width=0.2),
    "passage-time": dict(n_paths=10000, dt=1e-4),
    "verify-drift": dict(system="langevin-2regime"),
    "check-ergodicity-conditions": dict(system="langevin-2regime"),
    "series-check": dict(t=0.1),
    "resolvent-check": dict(n_paths=10000),
    "dynkin-test": dict(n_paths=10000, x0=[0.5], y0=[0.5]),
    "martingale-test": dict(n_paths=10000),
}


def config_from_args(args) -> RunConfig:
    values = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        values.update(load_file(args.config))
    file_command = values.pop("command", None)
    if file_command not in (None, args.command):
        raise ConfigurationError(f"config is for {file_command!r}, not {args.command!r}")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "param", "cond")}
    overrides["params"] = _key_values(args.param) or None
    overrides["conditions"] = _key_values(getattr(args, "cond", None)) or None
    overrides["command"] = args.command
    return build_config(values, overrides)


def run(cfg: RunConfig) -> int:
    out = Output(cfg)
    passed = HANDLERS[cfg.command](cfg, out)
    for path in out.written:
        print(path)
    return EXIT_CHECK_FAILED if passed is False else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except HamSwitchError as exc:
        label = LABELS.get(exc.exit_code, "error")
        extra = f" (t={exc.time})" if isinstance(exc, BlowUpError) else ""
        print(f"{label}: {exc}{extra}", file=sys.stderr)
        return exc.exit_code

if __name__ == "__main__":
    sys.exit(main())
