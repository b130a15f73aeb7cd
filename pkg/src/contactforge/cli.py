"""Command line entry point: ``contactforge <command> <scenario> [options]``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import ContactForgeError
from .report import dumps, fmt_float
from .runner import COMMANDS, run
from .scenario import BUILTINS, load_scenario

EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _tol(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {k!r} needs a number, got {v!r}") from None


def build_parser():
    p = _Parser(prog="contactforge", description="Numerical checks for Jacobi, contact and bi-Hamiltonian structures.")
    p.add_argument("--version", action="version", version=f"contactforge {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("scenario", help=f"scenario TOML file or a built-in name ({', '.join(BUILTINS)})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=None, help="samples per task (tasks may pin their own)")
    p.add_argument("--tol", type=_tol, action="append", default=[], metavar="NAME=V")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--csv", metavar="PATH", help="write flow trajectories as CSV")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CONTACTFORGE_THREADS or 1)")
    return p


def _short(v):
    return "-" if v is None else fmt_float(v)


def format_text(report, wall):
    lines = [f"scenario {report['scenario']}  command {report['command']}  seed {report['seed']}"]
    for t in report["tasks"]:
        if t["message"].startswith("not selected"):
            continue
        line = f"[{t['status'].upper():>12}] {t['name']} ({t['check']})  residual={_short(t['residual_max'])}  samples={t['samples']}  skipped={t['skipped']}"
        if t["message"]:
            line += f"  -- {t['message']}"
        lines.append(line)
    c = report["summary"]["counts"]
    lines.append(
        f"summary: {report['summary']['status']}  pass={c['pass']} fail={c['fail']} skipped={c['skipped']} inconsistent={c['inconsistent']}  wall={wall:.2f}s"
    )
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.samples is not None and args.samples <= 0:
        print("contactforge: error: --samples must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        scn = load_scenario(args.scenario)
    except ContactForgeError as err:
        print(f"contactforge: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_USAGE
    tolerances = dict(args.tol)
    unknown = set(tolerances) - set(scn.tolerances)
    if unknown:
        print(f"contactforge: error: unknown tolerance name(s) {sorted(unknown)}; known: {', '.join(sorted(scn.tolerances))}", file=sys.stderr)
        return EXIT_USAGE
    report, code, wall = run(scn, args.command, args.seed, args.samples, tolerances, args.csv, args.threads)
    text = dumps(report) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
    else:
        if args.json:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(text)
        print(format_text(report, wall))
    return code


if __name__ == "__main__":
    sys.exit(main())
