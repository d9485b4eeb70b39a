"""Measure the terminal limit cycle of the cube-root branch against its
predicted step-size scaling.

Under zero-order hold the heading coordinate ends in a two-step cycle
z0 <- z0 - dt * cbrt(z0) of amplitude (dt/2)^(3/2), with commanded yaw
rate |omega| = (dt/2)^(1/2) at the cycle points.  That rate sits far
above the quiet-twist threshold for any practical dt, which is why the
built-in cases end inside the tolerance ball but are never flagged
converged.
"""

import argparse
import sys

from servopark.closed_loop_sim import Scenario, case_scenarios, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--dts",
        type=float,
        nargs="+",
        default=[0.02, 0.01, 0.005, 0.002, 0.001],
        help="integration steps to sweep [s]",
    )
    args = ap.parse_args(argv)

    base = case_scenarios()["case1"]
    header = (
        f"{'dt':>8s} {'final |z0|':>12s} {'(dt/2)^1.5':>12s} {'ratio':>7s} "
        f"{'final |omega|':>13s} {'(dt/2)^0.5':>12s} {'ratio':>7s}"
    )
    print(header)
    print("-" * len(header))
    for dt in args.dts:
        fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
        fields.update(dt=dt, name=f"case1_dt{dt}")
        samples, summary = run(Scenario(**fields))
        z0 = abs(samples[-1].z.z0)
        omega = abs(samples[-1].twist.omega)
        pred_z = (dt / 2.0) ** 1.5
        pred_w = (dt / 2.0) ** 0.5
        print(
            f"{dt:8.4f} {z0:12.3e} {pred_z:12.3e} {z0 / pred_z:7.3f} "
            f"{omega:13.3e} {pred_w:12.3e} {omega / pred_w:7.3f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
