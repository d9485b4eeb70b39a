"""Run the four built-in parking cases and print a summary table."""

import argparse
import sys

from servopark.closed_loop_sim import PerceptionMode, Scenario, case_scenarios, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--estimated",
        action="store_true",
        help="use the vision pipeline in the loop instead of ground-truth state",
    )
    ap.add_argument("--t-max", type=float, default=None, help="time budget override [s]")
    args = ap.parse_args(argv)

    header = (
        f"{'case':8s} {'converged':>9s} {'t_conv':>8s} {'pos_err':>10s} "
        f"{'ang_err':>10s} {'path':>8s} {'max|v|':>8s} {'max|w|':>8s}"
    )
    print(header)
    print("-" * len(header))
    for name, sc in case_scenarios().items():
        overrides = {}
        if args.estimated:
            overrides["perception_mode"] = PerceptionMode.ESTIMATED
        if args.t_max is not None:
            overrides["t_max"] = args.t_max
        if overrides:
            fields = {f: getattr(sc, f) for f in sc.__dataclass_fields__}
            fields.update(overrides)
            sc = Scenario(**fields)
        samples, s = run(sc)
        t_conv = f"{s.t_converge:.2f}" if s.t_converge is not None else "-"
        print(
            f"{name:8s} {str(s.converged):>9s} {t_conv:>8s} {s.final_pos_err:10.2e} "
            f"{s.final_ang_err:10.2e} {s.path_length:8.3f} {s.max_abs_v:8.3f} "
            f"{s.max_abs_omega:8.3f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
