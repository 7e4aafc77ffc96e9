"""Run every catalog claim and print a compact table; optionally dump JSON."""

import argparse
import json
from dataclasses import dataclass

from geolin.catalog import catalog_list, run_all, suite_passed


@dataclass
class Config:
    seed: int = 0
    samples: int = 50
    output: str | None = None


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.3g}"
    if isinstance(x, dict):
        return "{...}"
    return str(x)


def main(cfg: Config) -> int:
    report = run_all(cfg.seed, cfg.samples)
    for c in report:
        mark = {True: "ok", False: "FAIL", None: "info"}[c["pass"]]
        print(f"{mark:4s} {c['entry']:38s} {c['claim'][:60]:60s} {_fmt(c['measured'])}")
    print(f"\n{len(report)} claims over {len(catalog_list())} entries; "
          f"suite {'passed' if suite_passed(report) else 'FAILED'}")
    if cfg.output:
        with open(cfg.output, "w") as fh:
            json.dump(report, fh, indent=2, default=str)
    return 0 if suite_passed(report) else 1


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--output")
    raise SystemExit(main(Config(**vars(ap.parse_args()))))
