"""Command-line surface: scenario runs, the four built-in cases, one-shot
pose estimation from a pairs file, and synthetic pairs-file generation.

Exit codes: 0 converged (or success for non-run verbs), 2 not converged,
3 estimator starvation, 1 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .closed_loop_sim import (
    ConvergenceSpec,
    GoalUpdate,
    PerceptionMode,
    RunSummary,
    Scenario,
    TrajectorySample,
    case_scenarios,
    default_object_features,
    run,
)
from .error_state import AnchorDepth
from .errors import ConfigError, EstimatorStarvation, ServoparkError
from .geometry import (
    DEFAULT_INTRINSICS,
    CameraIntrinsics,
    FeaturePoint3,
    NormalizedFeature,
    Pose2,
    normalize,
    project,
    transform_point,
    PlanarTransform,
)
from .parking_controller import ControllerParams, TwistLimits
from .pose_estimator import MatchedPair, estimate_pose

SEED_ENV_VAR = "SERVOPARK_SEED"

TRAJ_HEADER = (
    "t,x,y,theta,z0,z1,z2,v,omega,u0,u1,"
    "u0_branch,u1_branch,in_gamma,est_angle_err,est_trans_err,visible_count"
)

PAIRS_HEADER = "x_cur,y_cur,x_ref,y_ref,X_star"


def _fmt(x: float) -> str:
    return "%.17g" % x


def _json_text(obj, indent: int = 0) -> str:
    """Serialize with floats at 17 significant digits for exact round-trip."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(k)}: {_json_text(v, indent + 1)}' for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}  {_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    return json.dumps(obj)


def write_traj_csv(path: str, samples: list[TrajectorySample]) -> None:
    lines = [TRAJ_HEADER]
    for s in samples:
        lines.append(
            ",".join(
                [
                    _fmt(s.t),
                    _fmt(s.pose.x),
                    _fmt(s.pose.y),
                    _fmt(s.pose.theta),
                    _fmt(s.z.z0),
                    _fmt(s.z.z1),
                    _fmt(s.z.z2),
                    _fmt(s.twist.v),
                    _fmt(s.twist.omega),
                    _fmt(s.u.u0),
                    _fmt(s.u.u1),
                    s.u0_branch,
                    s.u1_branch,
                    "1" if s.in_gamma else "0",
                    _fmt(s.est_angle_err),
                    _fmt(s.est_trans_err),
                    str(s.visible_count),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def summary_dict(summary: RunSummary) -> dict:
    return {
        "converged": summary.converged,
        "t_converge": summary.t_converge,
        "final_pos_err": summary.final_pos_err,
        "final_ang_err": summary.final_ang_err,
        "path_length": summary.path_length,
        "max_abs_v": summary.max_abs_v,
        "max_abs_omega": summary.max_abs_omega,
        "peak_z0z1": summary.peak_z0z1,
        "samples": summary.samples,
    }


def write_z0z1_csv(path: str, samples: list[TrajectorySample]) -> None:
    lines = ["t,z0z1"]
    for s in samples:
        lines.append(f"{_fmt(s.t)},{_fmt(abs(s.z.z0) + abs(s.z.z1))}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text + "\n")


# ---------------------------------------------------------------------------
# scenario files (fail-closed JSON)


def _expect_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    return obj


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key '{unknown[0]}'")


def _num(obj, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    return float(obj)


def _intval(obj, path: str) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise ConfigError(f"{path}: expected an integer")
    return obj


def _parse_pose(obj, path: str) -> Pose2:
    d = _expect_mapping(obj, path)
    _check_keys(d, {"x", "y", "theta"}, path)
    for k in ("x", "y", "theta"):
        if k not in d:
            raise ConfigError(f"{path}: missing key '{k}'")
    return Pose2(_num(d["x"], f"{path}.x"), _num(d["y"], f"{path}.y"), _num(d["theta"], f"{path}.theta"))


def _parse_feature(obj, path: str) -> FeaturePoint3:
    d = _expect_mapping(obj, path)
    keys = {"X_star", "Y_star", "Z_star"}
    _check_keys(d, keys, path)
    for k in keys:
        if k not in d:
            raise ConfigError(f"{path}: missing key '{k}'")
    return FeaturePoint3(
        _num(d["X_star"], f"{path}.X_star"),
        _num(d["Y_star"], f"{path}.Y_star"),
        _num(d["Z_star"], f"{path}.Z_star"),
    )


def _parse_required(obj, keys: tuple[str, ...], path: str) -> list[float]:
    d = _expect_mapping(obj, path)
    _check_keys(d, set(keys), path)
    out = []
    for k in keys:
        if k not in d:
            raise ConfigError(f"{path}: missing key '{k}'")
        out.append(_num(d[k], f"{path}.{k}"))
    return out


def scenario_from_dict(obj: dict, default_name: str = "unnamed") -> Scenario:
    """Build a Scenario from parsed JSON; unknown keys are rejected."""
    top = _expect_mapping(obj, "scenario")
    allowed = {
        "name",
        "initial_pose",
        "goal_pose",
        "object_features",
        "intrinsics",
        "controller",
        "limits",
        "dt",
        "t_max",
        "perception_mode",
        "pixel_noise_sigma",
        "rng_seed",
        "convergence",
        "anchor_index",
        "goal_updates",
    }
    _check_keys(top, allowed, "scenario")
    kwargs = {}
    if "name" in top:
        if not isinstance(top["name"], str):
            raise ConfigError("scenario.name: expected a string")
        kwargs["name"] = top["name"]
    else:
        kwargs["name"] = default_name
    if "initial_pose" in top:
        kwargs["initial_pose"] = _parse_pose(top["initial_pose"], "scenario.initial_pose")
    if "goal_pose" in top:
        kwargs["goal_pose"] = _parse_pose(top["goal_pose"], "scenario.goal_pose")
    if "object_features" in top:
        feats = top["object_features"]
        if not isinstance(feats, list):
            raise ConfigError("scenario.object_features: expected a list")
        kwargs["object_features"] = tuple(
            _parse_feature(f, f"scenario.object_features[{i}]") for i, f in enumerate(feats)
        )
    if "intrinsics" in top:
        vals = _parse_required(
            top["intrinsics"],
            ("f_x", "f_y", "c_x", "c_y", "width", "height", "min_depth"),
            "scenario.intrinsics",
        )
        kwargs["intrinsics"] = CameraIntrinsics(
            vals[0], vals[1], vals[2], vals[3], int(vals[4]), int(vals[5]), vals[6]
        )
    if "controller" in top:
        vals = _parse_required(
            top["controller"], ("kappa0", "kappa2", "epsilon", "xi", "delta"), "scenario.controller"
        )
        kwargs["controller"] = ControllerParams(*vals)
    if "limits" in top and top["limits"] is not None:
        vals = _parse_required(top["limits"], ("v_max", "omega_max"), "scenario.limits")
        kwargs["limits"] = TwistLimits(*vals)
    if "dt" in top:
        kwargs["dt"] = _num(top["dt"], "scenario.dt")
    if "t_max" in top:
        kwargs["t_max"] = _num(top["t_max"], "scenario.t_max")
    if "perception_mode" in top:
        mode = top["perception_mode"]
        values = {m.value: m for m in PerceptionMode}
        if mode not in values:
            raise ConfigError(
                f"scenario.perception_mode: expected one of {sorted(values)}, got {mode!r}"
            )
        kwargs["perception_mode"] = values[mode]
    if "pixel_noise_sigma" in top:
        kwargs["pixel_noise_sigma"] = _num(top["pixel_noise_sigma"], "scenario.pixel_noise_sigma")
    if "rng_seed" in top:
        kwargs["rng_seed"] = _intval(top["rng_seed"], "scenario.rng_seed")
    if "convergence" in top:
        vals = _parse_required(top["convergence"], ("pos_tol", "ang_tol"), "scenario.convergence")
        kwargs["convergence"] = ConvergenceSpec(*vals)
    if "anchor_index" in top and top["anchor_index"] is not None:
        kwargs["anchor_index"] = _intval(top["anchor_index"], "scenario.anchor_index")
    if "goal_updates" in top:
        ups = top["goal_updates"]
        if not isinstance(ups, list):
            raise ConfigError("scenario.goal_updates: expected a list")
        parsed = []
        for i, u in enumerate(ups):
            d = _expect_mapping(u, f"scenario.goal_updates[{i}]")
            _check_keys(d, {"t", "goal_pose"}, f"scenario.goal_updates[{i}]")
            for k in ("t", "goal_pose"):
                if k not in d:
                    raise ConfigError(f"scenario.goal_updates[{i}]: missing key '{k}'")
            parsed.append(
                GoalUpdate(
                    _num(d["t"], f"scenario.goal_updates[{i}].t"),
                    _parse_pose(d["goal_pose"], f"scenario.goal_updates[{i}].goal_pose"),
                )
            )
        kwargs["goal_updates"] = tuple(parsed)
    return Scenario(**kwargs)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    stem = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_dict(obj, default_name=stem)


# ---------------------------------------------------------------------------
# pairs files


def load_pairs_csv(path: str) -> list[MatchedPair]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read pairs file: {exc}") from exc
    if not lines:
        raise ConfigError(f"{path}:1: empty file, expected header '{PAIRS_HEADER}'")
    if lines[0].strip() != PAIRS_HEADER:
        raise ConfigError(f"{path}:1: expected header '{PAIRS_HEADER}'")
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 5:
            raise ConfigError(f"{path}:{lineno}: expected 5 comma-separated fields, got {len(fields)}")
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        try:
            pairs.append(
                MatchedPair(
                    NormalizedFeature(vals[0], vals[1]),
                    NormalizedFeature(vals[2], vals[3]),
                    vals[4],
                )
            )
        except ServoparkError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return pairs


def write_pairs_csv(path: str, pairs: list[MatchedPair]) -> None:
    lines = [PAIRS_HEADER]
    for p in pairs:
        lines.append(
            ",".join([_fmt(p.cur.x), _fmt(p.cur.y), _fmt(p.ref.x), _fmt(p.ref.y), _fmt(p.X_star)])
        )
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _resolve_seed(args, scenario: Scenario) -> Scenario:
    """Seed precedence: --seed, then SERVOPARK_SEED, then the scenario value."""
    if getattr(args, "seed", None) is not None:
        return replace(scenario, rng_seed=args.seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return replace(scenario, rng_seed=int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}: expected an integer, got {env!r}")
    return scenario


def _apply_overrides(args, scenario: Scenario) -> Scenario:
    if args.dt is not None:
        scenario = replace(scenario, dt=args.dt)
    if args.t_max is not None:
        scenario = replace(scenario, t_max=args.t_max)
    if getattr(args, "perception", None) is not None:
        values = {m.value: m for m in PerceptionMode}
        scenario = replace(scenario, perception_mode=values[args.perception])
    if args.noise_px is not None:
        scenario = replace(scenario, pixel_noise_sigma=args.noise_px)
    if getattr(args, "v_max", None) is not None or getattr(args, "omega_max", None) is not None:
        if args.v_max is None or args.omega_max is None:
            raise ConfigError("--v-max and --omega-max must be given together")
        scenario = replace(scenario, limits=TwistLimits(args.v_max, args.omega_max))
    return _resolve_seed(args, scenario)


def _emit_run(out_dir: str, scenario: Scenario, plot: bool):
    os.makedirs(out_dir, exist_ok=True)
    samples, summary = run(scenario)
    base = os.path.join(out_dir, scenario.name)
    write_traj_csv(base + "_traj.csv", samples)
    _write_text(base + "_summary.json", _json_text(summary_dict(summary)))
    if plot:
        write_z0z1_csv(base + "_z0z1.csv", samples)
    return summary


def cmd_run(args) -> int:
    if (args.case is None) == (args.config is None):
        print("run: exactly one of --case or --config is required", file=sys.stderr)
        return 1
    if args.case is not None:
        cases = case_scenarios()
        if args.case not in cases:
            print(f"run: unknown case '{args.case}'; choose from {sorted(cases)}", file=sys.stderr)
            return 1
        scenario = cases[args.case]
    else:
        scenario = load_scenario(args.config)
    scenario = _apply_overrides(args, scenario)
    try:
        summary = _emit_run(args.out, scenario, args.plot)
    except EstimatorStarvation as exc:
        print(f"run: estimator starvation: {exc}", file=sys.stderr)
        return 3
    status = "converged" if summary.converged else "not converged"
    print(f"{scenario.name}: {status} (final_pos_err={_fmt(summary.final_pos_err)} m)")
    return 0 if summary.converged else 2


def cmd_cases(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    report: dict[str, dict] = {}
    any_starved = False
    all_converged = True
    for name, base_scenario in case_scenarios().items():
        report[name] = {}
        for mode in PerceptionMode:
            scenario = replace(
                base_scenario, name=f"{name}_{mode.value}", perception_mode=mode
            )
            scenario = _apply_overrides(args, scenario)
            try:
                summary = _emit_run(args.out, scenario, args.plot)
            except EstimatorStarvation as exc:
                report[name][mode.value] = {"status": "starved", "error": str(exc)}
                any_starved = True
                all_converged = False
                continue
            entry = {"status": "converged" if summary.converged else "not_converged"}
            entry.update(summary_dict(summary))
            report[name][mode.value] = entry
            all_converged = all_converged and summary.converged
    _write_text(os.path.join(args.out, "cases_summary.json"), _json_text(report))
    print(f"cases: all_converged={str(all_converged).lower()} (details in cases_summary.json)")
    if all_converged:
        return 0
    return 3 if any_starved else 2


def cmd_estimate(args) -> int:
    pairs = load_pairs_csv(args.pairs)
    est = estimate_pose(pairs)
    out = {
        "theta": est.transform.phi,
        "t_x": est.transform.t_x,
        "t_y": est.transform.t_y,
        "rotation_residual": est.rotation.residual,
        "translation_residual": est.translation_residual,
        "lambda": est.rotation.lam,
        "pairs_used": len(pairs),
    }
    print(_json_text(out))
    return 0


def cmd_gen_pairs(args) -> int:
    g = PlanarTransform(args.theta, args.tx, args.ty)
    features = default_object_features()
    seed = 0
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV_VAR) is not None:
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR}: expected an integer, got {os.environ[SEED_ENV_VAR]!r}"
            )
    noise = None
    if args.noise_px > 0.0:
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0])
        noise = rng.normal(0.0, args.noise_px, size=(len(features), 2))
    pairs = []
    for i, f in enumerate(features):
        pixel = project(transform_point(g, f), DEFAULT_INTRINSICS)
        if pixel is None:
            continue
        if noise is not None:
            pixel = (pixel[0] + noise[i, 0], pixel[1] + noise[i, 1])
        cur = normalize(pixel, DEFAULT_INTRINSICS)
        ref = NormalizedFeature(f.Y_star / f.X_star, f.Z_star / f.X_star)
        pairs.append(MatchedPair(cur, ref, f.X_star))
    if len(pairs) < 2:
        print("gen-pairs: fewer than 2 features visible for this pose", file=sys.stderr)
        return 1
    write_pairs_csv(args.out, pairs)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="servopark",
        description="Closed-loop object-relative parking simulator and pose estimator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("--case", help="built-in case name (case1..case4)")
    p_run.add_argument("--config", help="scenario JSON file")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument("--dt", type=float, default=None, help="integration step override [s]")
    p_run.add_argument("--t-max", type=float, default=None, help="time budget override [s]")
    p_run.add_argument(
        "--perception", choices=[m.value for m in PerceptionMode], default=None
    )
    p_run.add_argument("--noise-px", type=float, default=None, help="pixel noise sigma override")
    p_run.add_argument("--seed", type=int, default=None, help="RNG seed override")
    p_run.add_argument("--v-max", type=float, default=None, help="linear velocity bound [m/s]")
    p_run.add_argument("--omega-max", type=float, default=None, help="yaw rate bound [rad/s]")
    p_run.add_argument("--plot", action="store_true", help="also write <name>_z0z1.csv")
    p_run.set_defaults(func=cmd_run)

    p_cases = sub.add_parser("cases", help="run the four built-in cases in both perception modes")
    p_cases.add_argument("--out", default="out")
    p_cases.add_argument("--dt", type=float, default=None)
    p_cases.add_argument("--t-max", type=float, default=None)
    p_cases.add_argument("--noise-px", type=float, default=None)
    p_cases.add_argument("--seed", type=int, default=None)
    p_cases.add_argument("--plot", action="store_true")
    p_cases.set_defaults(func=cmd_cases)

    p_est = sub.add_parser("estimate", help="estimate a pose from a matched-pairs CSV")
    p_est.add_argument("--pairs", required=True, help="CSV file with header " + PAIRS_HEADER)
    p_est.set_defaults(func=cmd_estimate)

    p_gen = sub.add_parser("gen-pairs", help="generate a synthetic matched-pairs CSV")
    p_gen.add_argument("--theta", type=float, default=0.0, help="rotation angle [rad]")
    p_gen.add_argument("--tx", type=float, default=0.0, help="translation x [m]")
    p_gen.add_argument("--ty", type=float, default=0.0, help="translation y [m]")
    p_gen.add_argument("--noise-px", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", required=True, help="output CSV path")
    p_gen.set_defaults(func=cmd_gen_pairs)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ServoparkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
