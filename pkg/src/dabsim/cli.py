"""Command-line frontend.

Subcommands: run (one grid cell), sweep (combo x xi grid), detect-bench
(detector-only latency and false-alarm Monte Carlo), check-condition
(interval-length diagnostic for a stored instance), replay (one recorded
trial). Configuration is flat key=value text with '#' comments; --set
overrides file values and --seed overrides the seed key. Every invocation
writes its outputs atomically plus a resolved-config snapshot (config.txt)
that reproduces the run byte-for-byte; execution knobs (--out, --workers)
stay out of the snapshot. Exit codes: 0 success, 1 runtime error, 2 config
error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dab import DabConfig, check_separation_condition, run_episode, write_trial_csv
from .detectors import (
    DetectorConfig,
    measure_false_alarm_rate,
    measure_latency_profile,
)
from .env import load_instance
from .harness import (
    ExperimentPlan,
    aggregate_csv_text,
    parse_combo,
    run_plan,
    trajectory_csv_text,
)


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config parsing

def parse_config_text(text: str) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment; duplicate keys rejected."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}: expected key=value, got {raw!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = value
    return values


_REQUIRED = object()


@dataclass(frozen=True)
class _Opt:
    parse: Callable[[str], object]
    default: object = _REQUIRED


def _parse_int(s: str) -> int:
    return int(s)


def _parse_float(s: str) -> float:
    return float(s)


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_str(s: str) -> str:
    return s


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s
    return parse


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(p.strip()) for p in s.split(",") if p.strip())


def _parse_combos(s: str) -> tuple[str, ...]:
    return tuple(parse_combo(p).label for p in s.split(",") if p.strip())


def _parse_choices(*options: str) -> Callable[[str], tuple[str, ...]]:
    single = _choice(*options)
    def parse(s: str) -> tuple[str, ...]:
        return tuple(single(p.strip()) for p in s.split(",") if p.strip())
    return parse


_EXPERIMENT_KEYS = {
    "combos": _Opt(_parse_combos),
    "arms": _Opt(_parse_int, 5),
    "horizon": _Opt(_parse_int),
    "trials": _Opt(_parse_int),
    "alpha0": _Opt(_parse_float, 0.05),
    "gamma": _Opt(_parse_float, 0.5),
    "threshold_mode": _Opt(_choice("practical", "theoretical"), "practical"),
    "test_stride": _Opt(_parse_int, 10),
    "split_stride": _Opt(_parse_int, 5),
    "policy_sigma": _Opt(_parse_float, 1.0),
    "detector_sigma": _Opt(_parse_float, 0.5),
    "klucb_c": _Opt(_parse_float, 3.0),
    "feed_policy_samples": _Opt(_parse_bool, True),
    "reward_family": _Opt(_choice("bernoulli", "gaussian"), "bernoulli"),
    "reward_sigma": _Opt(_parse_float, 0.5),
    "magnitude_lo": _Opt(_parse_float, 0.1),
    "magnitude_hi": _Opt(_parse_float, 0.4),
    "initial_mean_lo": _Opt(_parse_float, 0.1),
    "initial_mean_hi": _Opt(_parse_float, 0.9),
    "trajectory_points": _Opt(_parse_int, 200),
    "seed": _Opt(_parse_int, 0),
}

RUN_SCHEMA = {**_EXPERIMENT_KEYS,
              "xi": _Opt(_parse_float, None),
              "instance": _Opt(_parse_str, None)}

SWEEP_SCHEMA = {**_EXPERIMENT_KEYS, "xi": _Opt(_parse_floats)}

DETECT_BENCH_SCHEMA = {
    "detector": _Opt(_choice("glr", "gsr"), "glr"),
    "variant": _Opt(_choice("bernoulli", "gaussian"), "bernoulli"),
    "sigma": _Opt(_parse_float, 0.5),
    "threshold_modes": _Opt(_parse_choices("practical", "theoretical"),
                            ("practical",)),
    "gaps": _Opt(_parse_floats),
    "horizon": _Opt(_parse_int),
    "pre_window": _Opt(_parse_int, None),
    "delta_f": _Opt(_parse_float, None),
    "delta_d": _Opt(_parse_float, None),
    "trials": _Opt(_parse_int, 200),
    "test_stride": _Opt(_parse_int, 10),
    "split_stride": _Opt(_parse_int, 5),
    "seed": _Opt(_parse_int, 0),
}

CHECK_CONDITION_SCHEMA = {
    "instance": _Opt(_parse_str),
    "alpha0": _Opt(_parse_float, 0.05),
    "gamma": _Opt(_parse_float, 0.5),
    "detector_sigma": _Opt(_parse_float, 0.5),
    "window_samples": _Opt(_parse_int, None),
    "delay_samples": _Opt(_parse_int, None),
}

REPLAY_SCHEMA = {
    "instance": _Opt(_parse_str),
    "combo": _Opt(lambda s: parse_combo(s).label),
    "seed": _Opt(_parse_int, 0),
    "alpha0": _Opt(_parse_float, 0.05),
    "gamma": _Opt(_parse_float, 0.5),
    "threshold_mode": _Opt(_choice("practical", "theoretical"), "practical"),
    "test_stride": _Opt(_parse_int, 10),
    "split_stride": _Opt(_parse_int, 5),
    "policy_sigma": _Opt(_parse_float, 1.0),
    "detector_sigma": _Opt(_parse_float, 0.5),
    "klucb_c": _Opt(_parse_float, 3.0),
    "feed_policy_samples": _Opt(_parse_bool, True),
}

_SCHEMAS = {
    "run": RUN_SCHEMA,
    "sweep": SWEEP_SCHEMA,
    "detect-bench": DETECT_BENCH_SCHEMA,
    "check-condition": CHECK_CONDITION_SCHEMA,
    "replay": REPLAY_SCHEMA,
}


def resolve_options(schema, raw: dict[str, str]) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    resolved = {}
    for key, opt in schema.items():
        if key in raw:
            try:
                resolved[key] = opt.parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"invalid value for {key}: {exc}") from exc
        elif opt.default is _REQUIRED:
            raise ConfigError(f"missing required key: {key}")
        else:
            resolved[key] = opt.default
    return resolved


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    return str(value)


def snapshot_text(command: str, resolved: dict) -> str:
    """The resolved configuration, itself a valid config file."""
    lines = [f"# dabsim {command} resolved configuration"]
    for key in sorted(resolved):
        if resolved[key] is None:
            continue
        lines.append(f"{key}={_render(resolved[key])}")
    return "\n".join(lines) + "\n"


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands

def _load_instance_arg(path_text: str):
    try:
        return load_instance(path_text)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load instance {path_text!r}: {exc}") from exc


def _build_plan(resolved: dict, xi: tuple[float, ...], fixed_instance=None):
    try:
        return ExperimentPlan(
            combos=resolved["combos"],
            num_arms=resolved["arms"],
            horizon=resolved["horizon"],
            trials=resolved["trials"],
            xi=xi,
            alpha0=resolved["alpha0"],
            gamma=resolved["gamma"],
            threshold_mode=resolved["threshold_mode"],
            test_stride=resolved["test_stride"],
            split_stride=resolved["split_stride"],
            policy_sigma=resolved["policy_sigma"],
            detector_sigma=resolved["detector_sigma"],
            klucb_c=resolved["klucb_c"],
            feed_policy_samples=resolved["feed_policy_samples"],
            reward_family=resolved["reward_family"],
            reward_sigma=resolved["reward_sigma"],
            magnitude_range=(resolved["magnitude_lo"], resolved["magnitude_hi"]),
            initial_mean_range=(resolved["initial_mean_lo"],
                                resolved["initial_mean_hi"]),
            base_seed=resolved["seed"],
            trajectory_points=resolved["trajectory_points"],
            fixed_instance=fixed_instance,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write(out_dir: Path, name: str, text: str) -> None:
    atomic_write(out_dir / name, text)
    print(f"wrote {out_dir / name}")


def cmd_run(resolved: dict, out_dir: Path, workers: int) -> int:
    fixed = None
    if (resolved["xi"] is None) == (resolved["instance"] is None):
        raise ConfigError("provide exactly one of: xi, instance")
    if resolved["instance"] is not None:
        fixed = _load_instance_arg(resolved["instance"])
        xi = ()
    else:
        xi = (resolved["xi"],)
    plan = _build_plan(resolved, xi, fixed)
    result = run_plan(plan, workers)
    _write(out_dir, "aggregate.csv", aggregate_csv_text(result.rows))
    _write(out_dir, "trajectory.csv", trajectory_csv_text(result.trajectories))
    _write(out_dir, "config.txt", snapshot_text("run", resolved))
    return 0


def cmd_sweep(resolved: dict, out_dir: Path, workers: int) -> int:
    plan = _build_plan(resolved, resolved["xi"])
    result = run_plan(plan, workers)
    _write(out_dir, "aggregate.csv", aggregate_csv_text(result.rows))
    seen = []
    for curve in result.trajectories:
        if curve.xi not in seen:
            seen.append(curve.xi)
    for xi_label in seen:
        curves = [c for c in result.trajectories if c.xi == xi_label]
        _write(out_dir, f"trajectory_xi_{xi_label}.csv", trajectory_csv_text(curves))
    _write(out_dir, "config.txt", snapshot_text("sweep", resolved))
    return 0


def cmd_detect_bench(resolved: dict, out_dir: Path, workers: int) -> int:
    if not resolved["gaps"]:
        raise ConfigError("gaps must list at least one change magnitude")
    horizon = resolved["horizon"]
    if resolved["pre_window"] is None:
        resolved["pre_window"] = max(2, horizon // 4)
    if resolved["delta_f"] is None:
        resolved["delta_f"] = horizon ** -0.5
    if resolved["delta_d"] is None:
        resolved["delta_d"] = resolved["delta_f"]

    lines = ["detector,variant,threshold_mode,gap,horizon,delta_f,delta_d,"
             "empirical_d,false_alarm_rate"]
    for mi, mode in enumerate(resolved["threshold_modes"]):
        try:
            base = DetectorConfig(
                kind=resolved["detector"], variant=resolved["variant"],
                sigma=resolved["sigma"], threshold_mode=mode,
                delta_f=resolved["delta_f"],
                test_stride=resolved["test_stride"],
                split_stride=resolved["split_stride"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        far = measure_false_alarm_rate(
            base, horizon=horizon, trials=resolved["trials"],
            rng=np.random.default_rng(
                np.random.SeedSequence(resolved["seed"], spawn_key=(mi,))))
        for gi, gap in enumerate(resolved["gaps"]):
            try:
                profile = measure_latency_profile(
                    base, gap, horizon=horizon,
                    pre_window=resolved["pre_window"],
                    delta_d=resolved["delta_d"], trials=resolved["trials"],
                    rng=np.random.default_rng(
                        np.random.SeedSequence(resolved["seed"],
                                               spawn_key=(mi, gi))))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            d_text = _render(float(profile.latency))
            lines.append(
                f"{resolved['detector']},{resolved['variant']},{mode},"
                f"{_render(float(gap))},{horizon},"
                f"{_render(resolved['delta_f'])},{_render(resolved['delta_d'])},"
                f"{d_text},{_render(float(far))}")
    _write(out_dir, "detect_bench.csv", "\n".join(lines) + "\n")
    _write(out_dir, "config.txt", snapshot_text("detect-bench", resolved))
    return 0


def cmd_check_condition(resolved: dict, out_dir: Path, workers: int) -> int:
    instance = _load_instance_arg(resolved["instance"])
    try:
        cfg = DabConfig(num_arms=instance.num_arms, horizon=instance.horizon,
                        alpha0=resolved["alpha0"], gamma=resolved["gamma"],
                        detector_sigma=resolved["detector_sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    window_fn = delay_fn = None
    if resolved["window_samples"] is not None:
        window_fn = lambda gap, horizon: resolved["window_samples"]
    if resolved["delay_samples"] is not None:
        delay_fn = lambda gap, horizon: resolved["delay_samples"]
    report = check_separation_condition(instance, cfg, window_fn, delay_fn)

    lines = ["k,change_point,required,available,satisfied"]
    for i in range(report.change_points.size):
        lines.append(f"{i + 1},{report.change_points[i]},"
                     f"{_render(float(report.required[i]))},"
                     f"{_render(float(report.available[i]))},"
                     f"{int(report.satisfied[i])}")
    _write(out_dir, "condition.csv", "\n".join(lines) + "\n")
    _write(out_dir, "config.txt", snapshot_text("check-condition", resolved))
    print(f"change_points={report.change_points.size} "
          f"fraction_satisfied={report.fraction_satisfied!r} "
          f"all_satisfied={str(report.all_satisfied).lower()}")
    return 0


def cmd_replay(resolved: dict, out_dir: Path, workers: int) -> int:
    instance = _load_instance_arg(resolved["instance"])
    combo = parse_combo(resolved["combo"])
    try:
        cfg = DabConfig(
            num_arms=instance.num_arms, horizon=instance.horizon,
            policy=combo.policy, detector=combo.detector, variant=combo.variant,
            alpha0=resolved["alpha0"] if combo.detector != "none" else 0.0,
            gamma=resolved["gamma"], threshold_mode=resolved["threshold_mode"],
            test_stride=resolved["test_stride"],
            split_stride=resolved["split_stride"],
            policy_sigma=resolved["policy_sigma"],
            detector_sigma=resolved["detector_sigma"],
            klucb_c=resolved["klucb_c"],
            feed_policy_samples=resolved["feed_policy_samples"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(np.random.SeedSequence(resolved["seed"]))
    result = run_episode(cfg, instance, rng, record=True)
    trial_path = out_dir / "trial.csv"
    tmp = trial_path.with_name(f"{trial_path.name}.tmp-{os.getpid()}")
    write_trial_csv(result.record, tmp)
    os.replace(tmp, trial_path)
    print(f"wrote {trial_path}")
    _write(out_dir, "config.txt", snapshot_text("replay", resolved))
    print(f"final_regret={result.final_regret!r} restarts={len(result.restarts)}")
    return 0


_DISPATCH = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "detect-bench": cmd_detect_bench,
    "check-condition": cmd_check_condition,
    "replay": cmd_replay,
}


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dabsim",
        description="Piecewise-stationary bandit simulations: policies, "
                    "change detectors, and their composition.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("run", "one experiment cell (single xi or fixed instance)"),
            ("sweep", "combo x xi grid with pooled summary rows"),
            ("detect-bench", "detector-only latency / false-alarm benchmark"),
            ("check-condition", "interval-length diagnostic for an instance"),
            ("replay", "re-run one recorded trial to a step-level CSV")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the seed key")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel trial workers (results identical)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key")
    return parser


def _gather_raw(args) -> dict[str, str]:
    raw: dict[str, str] = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        raw.update(parse_config_text(text))
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip()] = value.strip()
    return raw


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        raw = _gather_raw(args)
        resolved = resolve_options(_SCHEMAS[args.command], raw)
        if args.seed is not None and "seed" in _SCHEMAS[args.command]:
            resolved["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.command](resolved, out_dir, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
