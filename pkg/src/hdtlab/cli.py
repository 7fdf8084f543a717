"""Command-line entry point: ``hdtlab <kind> --config cfg.json``.

Exit codes: 0 success, 1 validation error, 2 resource cap, 3 failed
oracle comparison.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .protocols import ResourceCapError
from .runner import KINDS, ConfigError, compare_report, parse_config, read_rows, run_experiment, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_COMPARE = 0, 1, 2, 3


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("HDTLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"HDTLAB_THREADS: expected an integer, got {env!r}"]) from None
    return 1


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors; exit code 2 is reserved for resource caps
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hdtlab", description="Deep thermalization experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS + ("run",):
        sp = sub.add_parser(kind, help="run the config's experiment" if kind == "run" else f"{kind} experiment")
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--out", default=None, metavar="DIR")
        sp.add_argument("--threads", type=int, default=None, help="worker processes (default HDTLAB_THREADS or 1)")
        sp.add_argument("--cap-qubits", type=int, default=None, help="dense-unitary qubit cap")
    cp = sub.add_parser("compare", help="z-score a simulation CSV against an oracle CSV")
    cp.add_argument("sim")
    cp.add_argument("oracle")
    cp.add_argument("--out", default=None, metavar="PATH", help="write the joined table here")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "compare":
            texts = []
            for path in (args.sim, args.oracle):
                with open(path, encoding="utf-8") as fh:
                    texts.append(fh.read())
            try:
                summary = compare_report(read_rows(texts[0]), read_rows(texts[1]))
            except ValueError as exc:
                raise ConfigError([str(exc)]) from None
            if args.out:
                from .runner import atomic_write

                atomic_write(args.out, summary.to_csv())
            print(summary.text())
            return EXIT_OK if summary.passed else EXIT_COMPARE
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text, kind=None if args.command == "run" else args.command, seed=args.seed)
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError(["--threads: must be >= 1"])
        if args.cap_qubits is not None and args.cap_qubits < 1:
            raise ConfigError(["--cap-qubits: must be >= 1"])
        out = args.out or cfg.output or "."
        res = run_experiment(cfg, threads=threads, cap_qubits=args.cap_qubits)
        for path in write_outputs(cfg, res, out):
            print(path)
        for line in res.summary:
            print(line)
        if res.comparison is not None and res.comparison.status == "fail":
            return EXIT_COMPARE
        return EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
