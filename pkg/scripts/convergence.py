"""RK4 step-halving table and constraint drift versus dt for a catalog run."""

import argparse
from dataclasses import dataclass

import numpy as np

from geolin.catalog import catalog_get
from geolin.dynamics import integrate, project_to_constraint


@dataclass
class Config:
    entry: str = "szekeres"
    horizon: float = 0.5
    dt0: float = 0.05
    levels: int = 5


def main(cfg: Config) -> int:
    e = catalog_get(cfg.entry)
    s, run = e.system, e.run
    qd = project_to_constraint(s, run.q0, run.direction)
    if abs(cfg.horizon / cfg.dt0 - round(cfg.horizon / cfg.dt0)) > 1e-9:
        raise SystemExit("dt0 must divide the horizon into a whole number of steps")
    dts = [cfg.dt0 / 2**k for k in range(cfg.levels)]
    trajs = [integrate(s, run.q0, qd, cfg.horizon, dt) for dt in dts]
    ends = [t.q[-1] for t in trajs]
    print(f"{'dt':>10s} {'|q(dt)-q(dt/2)|':>16s} {'order':>7s} {'max|H|':>10s}")
    prev = None
    for k in range(cfg.levels - 1):
        diff = float(np.linalg.norm(ends[k] - ends[k + 1]))
        order = f"{np.log2(prev / diff):7.3f}" if prev else " " * 7
        print(f"{dts[k]:10.5f} {diff:16.3e} {order} {np.max(np.abs(trajs[k].H)):10.3e}")
        prev = diff
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--entry", default="szekeres")
    ap.add_argument("--horizon", type=float, default=0.5)
    ap.add_argument("--dt0", type=float, default=0.05)
    ap.add_argument("--levels", type=int, default=5)
    raise SystemExit(main(Config(**vars(ap.parse_args()))))
