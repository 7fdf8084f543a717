"""Run experiment configs through the CLI and report exit codes.

Usage: python scripts/run_configs.py [--out DIR] [--threads N] [CONFIG ...]

With no CONFIG arguments every file in scripts/configs is run, cheapest
first.  Outputs land in DIR/<config stem>/.
"""

import argparse
import os
import sys
import time

from hdtlab.cli import main as cli_main

HERE = os.path.dirname(os.path.abspath(__file__))
# rough cost order so quick checks report first
ORDER = ["oracle", "statmodel", "tradeoff", "qsize", "dt_sweep", "typical_fp", "collapse_nb1", "porter_thomas",
         "security_dt", "security_hdt", "qml_train", "higher_order_nb2"]


def default_configs():
    d = os.path.join(HERE, "configs")
    names = sorted(f[:-5] for f in os.listdir(d) if f.endswith(".json"))
    names.sort(key=lambda n: ORDER.index(n) if n in ORDER else len(ORDER))
    return [os.path.join(d, n + ".json") for n in names]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*")
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    worst = 0
    for path in args.configs or default_configs():
        stem = os.path.splitext(os.path.basename(path))[0]
        t0 = time.perf_counter()
        code = cli_main(["run", "--config", path, "--out", os.path.join(args.out, stem),
                         "--threads", str(args.threads)])
        print(f"{stem}: exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
