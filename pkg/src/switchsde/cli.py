"""Command-line front end.

Subcommands: ``simulate-chain``, ``convergence``, ``ensemble``, ``mean-change``.
Runs are configured through a JSON file (``--config``) merged with inline
flags (flags win); every run writes a ``manifest.json`` echoing the exact
merged configuration, the seed, the tool version, wall time and failed
trajectory count, which is sufficient to reproduce the run bit for bit.

Exit codes: 0 success, 2 configuration error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .ctmc import GeneratorMatrix, simulate_chain, validate_generator, write_chain_csv
from .errors import (
    ConfigParseError,
    ConfigValidationError,
    SwitchSDEError,
)
from .harness import (
    substream_rng,
    mean_change_study,
    run_ensemble,
    strong_order_study,
)
from .models import (
    LinearModelParams,
    RegimeModel,
    TELOMERE_A,
    TELOMERE_C,
    TelomereParams,
    linear_model,
    telomere_model,
    telomere_regime_model,
)
from .noise import BrownianPath
from .reporting import (
    summary_dict,
    write_convergence_csv,
    write_histogram_csv,
    write_json,
    write_meanchange_csv,
    write_trajectory_csv,
)
from .schemes import solve_trajectory
from .stepping import StepParams

DEFAULT_SEED = 42
DEFAULT_STEP = {"h_max": 0.03, "rho": 15.0, "k": 10.0}

TELOMERE_GENERATOR = [
    [-0.3, 0.1, 0.1, 0.1],
    [0.1, -0.3, 0.1, 0.1],
    [0.1, 0.1, -0.3, 0.1],
    [0.1, 0.1, 0.1, -0.3],
]

MODEL_PRESETS: dict[str, dict[str, Any]] = {
    "telomere": {
        "model": {"kind": "telomere", "c": list(TELOMERE_C), "a": list(TELOMERE_A)},
        "generator": TELOMERE_GENERATOR,
    },
    "telomere-c1a1": {
        "model": {"kind": "telomere-fixed", "c": TELOMERE_C[0], "a": TELOMERE_A[0]},
        "generator": [[0.0]],
    },
    "telomere-c2a2": {
        "model": {"kind": "telomere-fixed", "c": TELOMERE_C[1], "a": TELOMERE_A[1]},
        "generator": [[0.0]],
    },
    "linear2": {
        "model": {"kind": "linear", "mu": [0.5, -0.5], "sigma": [0.3, 0.5]},
        "generator": [[-1.0, 1.0], [1.0, -1.0]],
    },
}

_COMMON_KEYS = {"experiment", "seed", "out", "step", "generator", "scheme",
                "dump_trajectory", "model"}
_KNOWN_KEYS = {
    "simulate-chain": _COMMON_KEYS | {"horizon", "r0", "trajectories"},
    "convergence": _COMMON_KEYS | {"horizon", "trajectories", "grid", "x0", "r0"},
    "ensemble": _COMMON_KEYS | {"horizon", "trajectories", "runs_per_initial",
                                "initial", "r0"},
    "mean-change": _COMMON_KEYS | {"initial_range", "initials", "runs",
                                   "start_day", "end_day", "r0"},
}

_EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate-chain": {"generator": [[0.0]], "horizon": 30.0, "r0": 1,
                       "trajectories": 1},
    "convergence": {
        **MODEL_PRESETS["linear2"],
        "horizon": 1.0,
        "x0": 1.0,
        "grid": [2.0 ** -e for e in range(4, 10)],
        "trajectories": 1000,
        "scheme": "milstein",
        "r0": 1,
    },
    "ensemble": {
        **MODEL_PRESETS["telomere"],
        "horizon": 30.0,
        "initial": 1000.0,
        "trajectories": 1000,
        "runs_per_initial": 1,
        "scheme": "milstein",
        "r0": 1,
    },
    "mean-change": {
        **MODEL_PRESETS["telomere"],
        "initial_range": [4000.0, 8000.0],
        "start_day": 5.0,
        "end_day": 30.0,
        "initials": 1000,
        "runs": 100,
        "scheme": "milstein",
        "r0": 1,
    },
}


@dataclass
class RunConfig:
    """Fully validated run configuration plus the exact raw echo."""

    experiment: str
    raw: dict[str, Any]
    seed: int
    out_dir: Path
    step: StepParams
    generator: GeneratorMatrix
    scheme: str = "milstein"
    dump_trajectory: bool = False
    model: RegimeModel | None = None
    linear_params: LinearModelParams | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def _reject_unknown(raw: dict, known: set[str], context: str) -> None:
    unknown = set(raw) - known
    if unknown:
        raise ConfigValidationError(
            f"unknown {context} key(s): {', '.join(sorted(unknown))}")


def _build_model(desc: dict) -> tuple[RegimeModel, LinearModelParams | None]:
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigValidationError("model must be an object with a 'kind'")
    kind = desc["kind"]
    if kind == "telomere":
        _reject_unknown(desc, {"kind", "c", "a"}, "model")
        params = TelomereParams(c_values=tuple(desc.get("c", TELOMERE_C)),
                                a_values=tuple(desc.get("a", TELOMERE_A)))
        return telomere_model(params), None
    if kind == "telomere-fixed":
        _reject_unknown(desc, {"kind", "c", "a"}, "model")
        return telomere_regime_model([(desc["c"], desc["a"])]), None
    if kind == "linear":
        _reject_unknown(desc, {"kind", "mu", "sigma"}, "model")
        params = LinearModelParams(mu=tuple(desc["mu"]), sigma=tuple(desc["sigma"]))
        return linear_model(params), params
    raise ConfigValidationError(f"unknown model kind {kind!r}")


def _parse_r0(value) -> int | str:
    if value == "uniform":
        return "uniform"
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigValidationError(f"r0 must be an integer or 'uniform', got {value!r}")


def _merge(experiment: str, args: argparse.Namespace) -> dict[str, Any]:
    merged: dict[str, Any] = {"experiment": experiment,
                              "seed": DEFAULT_SEED,
                              "out": "out",
                              "step": dict(DEFAULT_STEP),
                              "dump_trajectory": False}
    merged.update(_EXPERIMENT_DEFAULTS[experiment])

    model_name = getattr(args, "model", None)
    if model_name is not None:
        if model_name not in MODEL_PRESETS:
            raise ConfigValidationError(
                f"unknown model preset {model_name!r}; "
                f"choose from {', '.join(sorted(MODEL_PRESETS))}")
        merged.update(MODEL_PRESETS[model_name])

    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read config file: {exc}")
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError(f"invalid JSON in {args.config}: {exc}")
        if not isinstance(file_cfg, dict):
            raise ConfigParseError("config file must contain a JSON object")
        if file_cfg.get("experiment", experiment) != experiment:
            raise ConfigValidationError(
                f"config file is for experiment {file_cfg['experiment']!r}, "
                f"not {experiment!r}")
        merged.update(file_cfg)
        merged["experiment"] = experiment

    flag_map = {
        "seed": "seed", "out": "out", "trajectories": "trajectories",
        "scheme": "scheme", "horizon": "horizon", "r0": "r0", "x0": "x0",
        "grid": "grid", "initial": "initial", "initial_range": "initial_range",
        "runs_per_initial": "runs_per_initial", "initials": "initials",
        "runs": "runs", "start_day": "start_day", "end_day": "end_day",
        "dump_trajectory": "dump_trajectory",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value
    return merged


def load_config(experiment: str, args: argparse.Namespace) -> RunConfig:
    """Merge defaults, preset, config file and flags; validate everything."""
    raw = _merge(experiment, args)
    _reject_unknown(raw, _KNOWN_KEYS[experiment], "config")
    step_raw = raw.get("step", DEFAULT_STEP)
    if not isinstance(step_raw, dict):
        raise ConfigValidationError("step must be an object with h_max, rho, k")
    _reject_unknown(step_raw, {"h_max", "rho", "k"}, "step")
    try:
        step = StepParams(h_max=float(step_raw.get("h_max", DEFAULT_STEP["h_max"])),
                          rho=float(step_raw.get("rho", DEFAULT_STEP["rho"])),
                          k=float(step_raw.get("k", DEFAULT_STEP["k"])))
        generator = validate_generator(raw["generator"])
        model = None
        linear_params = None
        if "model" in raw:
            model, linear_params = _build_model(raw["model"])
            if model.num_states != generator.num_states:
                raise ConfigValidationError(
                    f"model has {model.num_states} states but generator has "
                    f"{generator.num_states}")
        if experiment == "convergence" and linear_params is None:
            raise ConfigValidationError(
                "convergence requires a linear model (it needs the exact solution)")
    except (SwitchSDEError, ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, (ConfigParseError, ConfigValidationError)):
            raise
        raise ConfigValidationError(str(exc))

    scheme = raw.get("scheme", "milstein")
    if scheme not in ("milstein", "em"):
        raise ConfigValidationError(f"scheme must be 'milstein' or 'em', got {scheme!r}")

    extra = {k: raw[k] for k in raw
             if k not in {"experiment", "seed", "out", "step", "generator",
                          "scheme", "dump_trajectory", "model"}}
    if "r0" in extra:
        extra["r0"] = _parse_r0(extra["r0"])
        if isinstance(extra["r0"], int) and not 1 <= extra["r0"] <= generator.num_states:
            raise ConfigValidationError(
                f"r0={extra['r0']} outside 1..{generator.num_states}")
    _validate_experiment(experiment, extra, generator)
    return RunConfig(experiment=experiment, raw=raw, seed=int(raw["seed"]),
                     out_dir=Path(raw["out"]), step=step, generator=generator,
                     scheme=scheme,
                     dump_trajectory=bool(raw.get("dump_trajectory", False)),
                     model=model, linear_params=linear_params, extra=extra)


def _validate_experiment(experiment: str, extra: dict, generator: GeneratorMatrix) -> None:
    """Check every module precondition up front so bad configs exit with 2."""
    def positive(key):
        if not float(extra[key]) > 0:
            raise ConfigValidationError(f"{key} must be positive, got {extra[key]}")

    def at_least(key, minimum):
        if int(extra[key]) < minimum:
            raise ConfigValidationError(f"{key} must be >= {minimum}, got {extra[key]}")

    if experiment in ("simulate-chain", "convergence") and extra.get("r0") == "uniform":
        raise ConfigValidationError(f"{experiment} requires a fixed integer r0")
    if experiment == "simulate-chain":
        positive("horizon")
        at_least("trajectories", 1)
    elif experiment == "convergence":
        positive("horizon")
        at_least("trajectories", 100)
        grid = [float(h) for h in extra["grid"]]
        if len(grid) < 3 or any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigValidationError(
                "grid must be strictly decreasing with at least 3 levels")
    elif experiment == "ensemble":
        positive("horizon")
        at_least("trajectories", 1)
        at_least("runs_per_initial", 1)
        initial = extra["initial"]
        if isinstance(initial, dict):
            _reject_unknown(initial, {"uniform"}, "initial")
            lo, hi = (float(v) for v in initial["uniform"])
            if not lo < hi:
                raise ConfigValidationError(f"initial range needs lo < hi, got {lo}, {hi}")
        else:
            float(initial)
    elif experiment == "mean-change":
        lo, hi = (float(v) for v in extra["initial_range"])
        if not 0 < lo < hi:
            raise ConfigValidationError(f"initial_range needs 0 < lo < hi, got {lo}, {hi}")
        if not float(extra["end_day"]) > float(extra["start_day"]):
            raise ConfigValidationError("end_day must be after start_day")
        at_least("initials", 1)
        at_least("runs", 1)


def _params_echo(cfg: RunConfig) -> dict[str, Any]:
    """Computation-affecting parameters only, so summaries are location-free."""
    return {k: v for k, v in cfg.raw.items() if k not in ("out", "dump_trajectory")}


def _dump_first_trajectory(cfg: RunConfig, x0: float, horizon: float) -> None:
    chain = simulate_chain(cfg.generator, 1 if cfg.extra.get("r0") == "uniform"
                           else int(cfg.extra.get("r0", 1)), horizon,
                           substream_rng(cfg.seed, 0, 0))
    path = BrownianPath(substream_rng(cfg.seed, 0, 1))
    trajectory = solve_trajectory(cfg.model, chain, path, x0, horizon, cfg.step,
                                  cfg.scheme)
    with open(cfg.out_dir / "trajectory.csv", "w") as fh:
        write_trajectory_csv(fh, trajectory)


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the failed-trajectory count."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    failed = 0

    if cfg.experiment == "simulate-chain":
        n_chains = int(cfg.extra["trajectories"])
        total_switches = 0
        for idx in range(n_chains):
            chain = simulate_chain(cfg.generator, int(cfg.extra["r0"]),
                                   float(cfg.extra["horizon"]),
                                   substream_rng(cfg.seed, idx, 0))
            name = "chain.csv" if n_chains == 1 else f"chain_{idx:03d}.csv"
            with open(cfg.out_dir / name, "w") as fh:
                write_chain_csv(chain, fh)
            total_switches += chain.num_switches
        print(f"wrote {n_chains} chain file(s) to {cfg.out_dir} "
              f"({total_switches} switches)")

    elif cfg.experiment == "convergence":
        report = strong_order_study(
            cfg.linear_params, cfg.generator, float(cfg.extra["x0"]),
            float(cfg.extra["horizon"]), [float(h) for h in cfg.extra["grid"]],
            cfg.step.rho, cfg.step.k, int(cfg.extra["trajectories"]), cfg.seed,
            scheme=cfg.scheme, r0=int(cfg.extra["r0"]))
        with open(cfg.out_dir / "convergence.csv", "w") as fh:
            write_convergence_csv(fh, report)
        print(f"fitted order: {report.fitted_order:.4f} ({report.scheme}, "
              f"M={report.sample_count})")
        if cfg.dump_trajectory:
            _dump_first_trajectory(cfg, float(cfg.extra["x0"]),
                                   float(cfg.extra["horizon"]))

    elif cfg.experiment == "ensemble":
        initial = cfg.extra["initial"]
        if isinstance(initial, dict):
            _reject_unknown(initial, {"uniform"}, "initial")
            initial = tuple(float(v) for v in initial["uniform"])
        else:
            initial = float(initial)
        summary = run_ensemble(
            cfg.model, cfg.generator, initial, cfg.extra["r0"],
            float(cfg.extra["horizon"]), cfg.step, int(cfg.extra["trajectories"]),
            int(cfg.extra.get("runs_per_initial", 1)), cfg.seed, cfg.scheme)
        failed = summary.failed_count
        with open(cfg.out_dir / "histogram.csv", "w") as fh:
            write_histogram_csv(fh, summary)
        with open(cfg.out_dir / "summary.json", "w") as fh:
            write_json(fh, summary_dict(summary, cfg.seed, _params_echo(cfg)))
        print(f"mean={summary.mean:.4f} sd={summary.std_dev:.4f} "
              f"se={summary.standard_error:.4f} failed={failed}")
        if cfg.dump_trajectory:
            x0 = initial[0] if isinstance(initial, tuple) else initial
            _dump_first_trajectory(cfg, x0, float(cfg.extra["horizon"]))

    elif cfg.experiment == "mean-change":
        lo, hi = (float(v) for v in cfg.extra["initial_range"])
        report = mean_change_study(
            cfg.model, cfg.generator, lo, hi, float(cfg.extra["start_day"]),
            float(cfg.extra["end_day"]), int(cfg.extra["initials"]),
            int(cfg.extra["runs"]), cfg.seed, cfg.step, cfg.extra["r0"], cfg.scheme)
        failed = report.failed_count
        with open(cfg.out_dir / "meanchange.csv", "w") as fh:
            write_meanchange_csv(fh, report)
        with open(cfg.out_dir / "histogram.csv", "w") as fh:
            write_histogram_csv(fh, report.summary)
        payload = summary_dict(report.summary, cfg.seed, _params_echo(cfg))
        payload["grand_mean_change"] = report.grand_mean_change
        with open(cfg.out_dir / "summary.json", "w") as fh:
            write_json(fh, payload)
        print(f"grand mean change: {report.grand_mean_change:.4f} (failed={failed})")
        if cfg.dump_trajectory:
            _dump_first_trajectory(cfg, float(report.initials[0]),
                                   float(cfg.extra["end_day"]) - float(cfg.extra["start_day"]))

    else:  # pragma: no cover - argparse restricts choices
        raise ConfigValidationError(f"unknown experiment {cfg.experiment!r}")

    manifest = {
        "config": cfg.raw,
        "seed": cfg.seed,
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "failed_count": failed,
    }
    with open(cfg.out_dir / "manifest.json", "w") as fh:
        write_json(fh, manifest)
    return failed


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output directory (default: out)")
    sub.add_argument("--trajectories", type=int, default=None, metavar="M")
    sub.add_argument("--dump-trajectory", dest="dump_trajectory",
                     action="store_const", const=True, default=None,
                     help="also write trajectory.csv for the first trajectory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchsde",
        description="Adaptive-mesh hybrid Milstein solver for SDEs with "
                    "Markovian switching")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="experiment", required=True)

    p = subs.add_parser("simulate-chain", help="sample one Markov chain path")
    _add_common(p)
    p.add_argument("--r0", default=None)
    p.add_argument("--horizon", type=float, default=None)

    p = subs.add_parser("convergence", help="strong-order study on the linear model")
    _add_common(p)
    p.add_argument("--scheme", choices=["milstein", "em"], default=None)
    p.add_argument("--grid", type=float, nargs="+", default=None,
                   help="decreasing h_max levels")
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--r0", default=None)

    p = subs.add_parser("ensemble", help="terminal-value ensemble statistics")
    _add_common(p)
    p.add_argument("--model", choices=sorted(MODEL_PRESETS), default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--initial", type=float, default=None)
    p.add_argument("--initial-range", dest="initial_range", type=float, nargs=2,
                   default=None, metavar=("LO", "HI"))
    p.add_argument("--runs-per-initial", dest="runs_per_initial", type=int,
                   default=None)
    p.add_argument("--r0", default=None)
    p.add_argument("--scheme", choices=["milstein", "em"], default=None)

    p = subs.add_parser("mean-change", help="mean change over uniform initials")
    _add_common(p)
    p.add_argument("--model", choices=sorted(MODEL_PRESETS), default=None)
    p.add_argument("--initial-range", dest="initial_range", type=float, nargs=2,
                   default=None, metavar=("LO", "HI"))
    p.add_argument("--initials", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--start-day", dest="start_day", type=float, default=None)
    p.add_argument("--end-day", dest="end_day", type=float, default=None)
    p.add_argument("--r0", default=None)
    p.add_argument("--scheme", choices=["milstein", "em"], default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment == "ensemble" and getattr(args, "initial_range", None) is not None:
        args.initial = {"uniform": [float(v) for v in args.initial_range]}
        args.initial_range = None
    try:
        cfg = load_config(args.experiment, args)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except (SwitchSDEError, OSError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
