"""Command-line front end: ``qgossip simulate|hitting-time|bounds|sweep|verify``.

Exit codes: 0 ok, 1 verify found a failing check, 2 usage or configuration
error, 3 runtime failure (non-convergence, unreachable target).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bounds, experiments, markov, verify
from .graph import GraphError, is_complete
from .protocol_qc import NonConvergenceError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
PRECISION = 9

STATS_FIELDS = ("algorithm", "n", "trials", "seed", "mean", "se", "min", "max", "failures", "bound")
HITTING_FIELDS = ("chain", "state", "solver", "closed_form", "difference", "bound")
VERIFY_FIELDS = ("check", "passed", "detail", "seconds")


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


def _cell(value) -> object:
    """Deterministic rendering: fixed 9-decimal floats, ``None`` as empty/null."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.{PRECISION}f}"


def _json_value(value) -> object:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, (Fraction, float)) and not isinstance(value, bool):
        value = float(value)
        return None if math.isnan(value) else round(value, PRECISION)
    return value


def render(rows: List[Dict[str, object]], fields: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{k: _json_value(r.get(k)) for k in fields} for r in rows], indent=2) + "\n"
    cells = [["" if _cell(r.get(k)) is None else str(_cell(r.get(k))) for k in fields] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        writer.writerows(cells)
        return buf.getvalue()
    widths = [max(len(f), *(len(c[i]) for c in cells)) if cells else len(f) for i, f in enumerate(fields)]
    lines = ["  ".join(f.ljust(w) for f, w in zip(fields, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def emit(args: argparse.Namespace, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _stats_row(algorithm: str, n: int, seed: int, stats: experiments.TrialStats, bound) -> Dict[str, object]:
    row = experiments.SweepRow.from_stats(algorithm, n, seed, stats, bound)
    return {k: getattr(row, k) for k in STATS_FIELDS}


# subcommands


def cmd_simulate(args: argparse.Namespace) -> int:
    for name in ("alg", "graph", "init"):
        if getattr(args, name) is None:
            raise UsageError(f"simulate needs --{name}")
    config = experiments.ExperimentConfig(
        args.alg, args.graph, args.init, trials=args.trials, seed=args.seed,
        max_steps=args.max_steps, policy=args.policy,
    )
    model, x0 = config.resolve()
    stats = experiments.run_ensemble(config, workers=args.workers)
    # the closed-form bounds assume the complete digraph
    bound = experiments.worst_case_bound(config.algorithm, x0) if is_complete(model.graph) else None
    emit(args, render([_stats_row(config.algorithm, len(x0), args.seed, stats, bound)], STATS_FIELDS, args.format))
    if stats.failures:
        print(f"error: {stats.failures} of {stats.trials} trials did not converge", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _builder(spec: str):
    """Resolve ``chain-i:n``, ``chain-ii:n:R``, ``chain-iii-l1:n``, ``chain-iii-l2:n``."""
    name, _, rest = spec.partition(":")
    try:
        nums = [int(v) for v in rest.split(":")] if rest else []
    except ValueError as exc:
        raise UsageError(f"bad chain spec {spec!r}") from exc
    table = {
        "chain-i": (1, markov.qc_shrink_chain),
        "chain-ii": (2, markov.qa_max_decay_chain),
        "chain-iii-l1": (1, markov.qa_one_level_ladder),
        "chain-iii-l2": (1, markov.qa_deep_level_ladder),
    }
    if name not in table:
        return None
    arity, build = table[name]
    if len(nums) != arity:
        raise UsageError(f"{name} takes {arity} integer parameter(s), got {spec!r}")
    return build(*nums)


def _hitting_rows(spec: str, exact: bool) -> List[Dict[str, object]]:
    family = _builder(spec)
    if family is None:
        path = Path(spec)
        if not path.is_file():
            raise UsageError(f"{spec!r} is neither a chain builder nor a readable file")
        chain = markov.parse_chain_file(path.read_text())
        if exact and not chain.is_exact():
            raise UsageError("--exact needs every probability written as a fraction")
    else:
        chain = family.to_chain_spec()
    try:
        E = markov.solve_hitting_times(chain, exact=exact)
    except markov.NoFiniteHittingTimeError as exc:
        raise RuntimeFailure(str(exc)) from exc

    closed: Dict[str, object] = {}
    bound_at: Dict[str, object] = {}
    if isinstance(family, markov.SymmetricWalk):
        closed = {str(z): markov.symmetric_walk_hitting_time(family, z) for z in range(1, family.n)}
    elif isinstance(family, markov.ForwardWalk):
        closed = {str(z): markov.forward_walk_hitting_time(family, z) for z in range(1, family.n)}
    elif isinstance(family, markov.Ladder):
        upper, lower_bound = markov.ladder_hitting_times(family)
        closed = {f"{family.n - 1}upper": upper}
        bound_at = {f"{family.n - 1}lower": lower_bound}

    rows = []
    for idx, label in enumerate(chain.labels):
        if idx in chain.target:
            continue
        value = E[idx]
        cf = closed.get(label)
        rows.append({
            "chain": spec if family is not None else Path(spec).name,
            "state": label,
            "solver": value,
            "closed_form": cf,
            "difference": None if cf is None else abs(Fraction(cf) - Fraction(value)) if exact else abs(float(cf) - float(value)),
            "bound": bound_at.get(label),
        })
    return rows


def cmd_hitting_time(args: argparse.Namespace) -> int:
    if args.chain is None:
        raise UsageError("hitting-time needs a chain spec")
    emit(args, render(_hitting_rows(args.chain, args.exact), HITTING_FIELDS, args.format))
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    if args.n is None or args.m is None or args.M is None:
        raise UsageError("bounds needs --n, --m and --M")
    report = bounds.bound_report(args.n, args.m, args.M, args.R)
    row = report.as_dict()
    emit(args, render([row], tuple(row), args.format))
    return EXIT_OK


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.alg is None or args.n is None:
        raise UsageError("sweep needs --alg and --n")
    ns = args.n if isinstance(args.n, list) else _int_list(args.n)
    rows = experiments.sweep(args.alg, ns, trials=args.trials, seed=args.seed, workers=args.workers)
    emit(args, render([{k: getattr(r, k) for k in STATS_FIELDS} for r in rows], STATS_FIELDS, args.format))
    failed = sum(r.failures for r in rows)
    if failed:
        print(f"error: {failed} trials did not converge", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise UsageError("verify requires an explicit --seed")
    live = args.format == "table" and not args.output
    report = verify.verify_suite(args.depth, args.seed, progress=(lambda c: print(c.line(), flush=True)) if live else None)
    if not live:
        rows = [{"check": c.name, "passed": c.passed, "detail": c.detail, "seconds": c.seconds} for c in report.checks]
        emit(args, render(rows, VERIFY_FIELDS, args.format))
    if report.passed:
        print(f"verify ({args.depth}): all {len(report.checks)} checks passed", file=sys.stderr)
        return EXIT_OK
    print(f"verify ({args.depth}): FAILED {', '.join(report.failures())}", file=sys.stderr)
    return EXIT_CHECK_FAILED


# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("csv", "json", "table"), default="csv")
    common.add_argument("--output", help="write to this file instead of standard output")
    common.add_argument("--config", help="JSON file whose keys supply defaults for this subcommand's flags")

    parser = _Parser(prog="qgossip", description="Quantized gossip consensus simulator and hitting-time toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo ensemble")
    sim.add_argument("--alg", choices=("qc", "qa"))
    sim.add_argument("--graph", help="complete:<n>, path:<n>, ring:<n> or an edge-list file")
    sim.add_argument("--init", help="e.g. 2,0 | x1:<n>:<z> | halfsplit:<n> | qaworst:<n> | uniform:<n>:<m>:<M>:<seed>")
    sim.add_argument("--trials", type=int, default=2000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--max-steps", type=int, default=None)
    sim.add_argument("--policy", choices=("adopt", "step"), default="adopt", help="QC update policy")
    sim.add_argument("--workers", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    hit = sub.add_parser("hitting-time", parents=[common], help="solve mean hitting times of a chain")
    hit.add_argument("chain", nargs="?", help="chain-i:<n>, chain-ii:<n>:<R>, chain-iii-l1:<n>, chain-iii-l2:<n> or a matrix file")
    hit.add_argument("--exact", action="store_true", help="solve in exact rational arithmetic")
    hit.set_defaults(func=cmd_hitting_time)

    bnd = sub.add_parser("bounds", parents=[common], help="evaluate the closed-form time bounds")
    bnd.add_argument("--n", type=int)
    bnd.add_argument("--m", type=int)
    bnd.add_argument("--M", type=int)
    bnd.add_argument("--R", type=int, default=0)
    bnd.set_defaults(func=cmd_bounds)

    swp = sub.add_parser("sweep", parents=[common], help="ensembles from the worst-case start over several n")
    swp.add_argument("--alg", choices=("qc", "qa"))
    swp.add_argument("--n", help="comma-separated ascending node counts")
    swp.add_argument("--trials", type=int, default=2000)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--workers", type=int, default=1)
    swp.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    ver.add_argument("--depth", choices=tuple(verify.DEPTHS), default="small")
    ver.add_argument("--seed", type=int, default=None)
    ver.set_defaults(func=cmd_verify)
    parser.subcommands = {"simulate": sim, "hitting-time": hit, "bounds": bnd, "sweep": swp, "verify": ver}
    return parser


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: Sequence[str]) -> argparse.Namespace:
    """Re-parse with the config file's values as defaults, so explicit flags still win."""
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    data.pop("subcommand", None)
    allowed = set(vars(args)) - {"func", "command", "config"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    parser.subcommands[args.command].set_defaults(**data)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config(parser, args, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeFailure, NonConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except markov.NoFiniteHittingTimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, GraphError) as exc:
        # bad graph, init, chain or bound parameters
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
