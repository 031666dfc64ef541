"""Command-line front end: validation, exact inference, threshold search,
case generation, and the benchmark harness behind the convergence CSVs.

Exit codes: 0 success, 1 usage, 2 invalid input, 3 resource cap exceeded.
All randomness is seeded; outputs are byte-identical across runs except for
the elapsed_ms column, which is a wall-clock measurement.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .engine import (
    DEFAULT_SCHEDULE,
    EpsilonSchedule,
    format_accepted,
    top_epsilon,
)
from .epsilonml import build_subproblem, iter_extensions
from .model import (
    Assignment,
    Network,
    NetworkError,
    parse_evidence,
    parse_network,
    print_network,
    prune_barren,
)
from .netgen import NetShape, derive_seed, gen_network, make_case
from .oracle import (
    DEFAULT_FREE_NODE_CAP,
    FreeNodeCapError,
    ImpossibleEvidenceError,
    exact_inference,
)

CSV_HEADER = [
    "case_id",
    "epsilon",
    "states_explored",
    "accepted_count",
    "mass_accumulated",
    "gold_mass",
    "mass_fraction",
    "elapsed_ms",
]

_BENCH_CASE_TAG = 0x04


class _ArgParser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract reserves 2 for
    # invalid input files, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt_eps(eps: float) -> str:
    mantissa, _, exponent = format(eps, "e").partition("e")
    mantissa = mantissa.rstrip("0").rstrip(".")
    return f"{mantissa}e{exponent}"


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_network(path: str) -> Network:
    return parse_network(_read(path))


def _load_case(net: Network, evidence_path: str):
    return parse_evidence(_read(evidence_path), net)


def _parse_schedule(text: str) -> EpsilonSchedule:
    try:
        values = tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise NetworkError(f"bad schedule {text!r}: expected comma-separated floats")
    return EpsilonSchedule(values)


def _pruned_for(net: Network, evidence):
    """Ancestral closure of the evidence, with the evidence re-indexed."""
    pruned = prune_barren(net, evidence)
    remapped = tuple(
        (pruned.node_id(net.nodes[nid].name), state) for nid, state in evidence
    )
    return pruned, remapped


def _csv_row(case_id, eps, res, gold, elapsed_ms):
    if gold is None:
        gold_s = frac_s = ""
    else:
        gold_s = _fmt(gold)
        if gold > 0.0:
            frac_s = _fmt(min(res.mass_accumulated / gold, 1.0))
        else:
            frac_s = ""
    return [
        case_id,
        _fmt_eps(eps),
        str(res.states_explored),
        str(res.accepted_count),
        _fmt(res.mass_accumulated),
        gold_s,
        frac_s,
        f"{elapsed_ms:.3f}",
    ]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    net = _load_network(args.network)
    print(f"{len(net)} nodes, {net.arc_count} arcs, {net.max_level + 1} levels")
    print(f"max level {net.max_level}")
    for lvl, ids in enumerate(net.level_nodes):
        print(f"level {lvl}: {len(ids)} nodes")
    return 0


def _cmd_exact(args) -> int:
    net = _load_network(args.network)
    evidence = _load_case(net, args.evidence)
    result = exact_inference(net, evidence, cap=args.cap)
    print(f"P(evidence) = {_fmt(result.evidence_probability)}")
    print(f"instantiations = {result.instantiation_count}")
    for i, spec in enumerate(net.nodes):
        print(f"posterior {spec.name} = {_fmt(result.posteriors[i])}")
    return 0


def _cmd_eml(args) -> int:
    net = _load_network(args.network)
    if net.max_level != 1:
        print(
            f"error: eml needs a two-level network, got {net.max_level + 1} levels",
            file=sys.stderr,
        )
        return 2
    evidence = _load_case(net, args.evidence)
    a = Assignment.from_evidence(net, evidence)
    sub = build_subproblem(net, a, 1)
    count = 0
    for ext in iter_extensions(net, sub, args.epsilon):
        count += 1
        body = " ".join(
            f"{net.nodes[nid].name}={'p' if state else 'a'}"
            for nid, state in sorted(ext.parent_states)
        )
        print(f"{_fmt(ext.new_factor_product)} {body}")
    print(f"{count} extensions at epsilon {_fmt_eps(args.epsilon)}", file=sys.stderr)
    return 0


def _infer_gold(pruned, evidence, cap):
    try:
        return exact_inference(pruned, evidence, cap=cap).evidence_probability
    except ImpossibleEvidenceError:
        return 0.0
    except FreeNodeCapError as e:
        print(f"warning: {e}; gold columns left empty", file=sys.stderr)
        return None


def _cmd_infer(args) -> int:
    net = _load_network(args.network)
    evidence = _load_case(net, args.evidence)
    pruned, pev = _pruned_for(net, evidence)
    case_id = Path(args.evidence).stem

    if args.epsilon is not None:
        epsilons = (args.epsilon,)
        if args.epsilon < 0:
            raise NetworkError("--epsilon must be >= 0")
    else:
        epsilons = _parse_schedule(args.schedule).values

    gold = _infer_gold(pruned, pev, args.cap) if args.gold else None

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    last = None
    for i, eps in enumerate(epsilons):
        keep = args.dump_accepted is not None and i == len(epsilons) - 1
        t0 = time.perf_counter()
        res = top_epsilon(pruned, pev, eps, keep_accepted=keep)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        writer.writerow(_csv_row(case_id, eps, res, gold, elapsed_ms))
        last = res

    post_path = Path(args.post) if args.post else Path(args.evidence + ".post")
    posteriors = last.posteriors
    if posteriors is None:
        print(
            "warning: no mass accumulated; posterior estimates are undefined",
            file=sys.stderr,
        )
        post_path.write_text("", encoding="utf-8")
    else:
        lines = [
            f"{spec.name},{_fmt(posteriors[i])}\n"
            for i, spec in enumerate(pruned.nodes)
        ]
        post_path.write_text("".join(lines), encoding="utf-8")

    if args.dump_accepted is not None:
        lines = format_accepted(pruned, last.accepted or [])
        Path(args.dump_accepted).write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8"
        )
    return 0


def _bench_case(job):
    """Run one case through the schedule; returns its rows and summary."""
    net, seed, findings, schedule_values, gold_spec, cap = job
    case = make_case(net, seed, findings)
    pruned, pev = _pruned_for(net, case.evidence)
    if gold_spec == "none":
        gold = None
    elif gold_spec == "exact":
        gold = _infer_gold(pruned, pev, cap)
    else:
        gold = top_epsilon(pruned, pev, float(gold_spec)).mass_accumulated
    rows = []
    states = []
    convergence_eps = None
    for eps in schedule_values:
        t0 = time.perf_counter()
        res = top_epsilon(pruned, pev, eps)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(_csv_row(case.case_id, eps, res, gold, elapsed_ms))
        states.append(res.states_explored)
        if (
            convergence_eps is None
            and gold
            and res.mass_accumulated / gold >= 0.99
        ):
            convergence_eps = eps
    return case.case_id, rows, gold, convergence_eps, states


def _gold_spec(text: str) -> str:
    if text in ("none", "exact"):
        return text
    try:
        eps = float(text)
    except ValueError:
        raise NetworkError(
            f"bad --gold {text!r}: expected 'none', 'exact', or a deep-run epsilon"
        )
    if eps < 0:
        raise NetworkError("--gold epsilon must be >= 0")
    return text


def _cmd_bench(args) -> int:
    net = _load_network(args.network)
    schedule = (
        _parse_schedule(args.schedule) if args.schedule else DEFAULT_SCHEDULE
    )
    gold_spec = _gold_spec(args.gold)
    jobs = []
    for i in range(args.cases):
        seed = derive_seed(args.seed, _BENCH_CASE_TAG, i)
        jobs.append((net, seed, args.findings, schedule.values, gold_spec, args.cap))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_case, jobs))
    else:
        results = [_bench_case(job) for job in jobs]

    all_rows = [row for _, rows, _, _, _ in results for row in rows]
    all_rows.sort(key=lambda r: (r[0], -float(r[1])))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(all_rows)

    out = open(args.summary, "w", encoding="utf-8") if args.summary else sys.stderr
    try:
        results.sort(key=lambda r: r[0])
        out.write(f"# convergence summary (gold: {gold_spec})\n")
        for case_id, _, gold, conv_eps, _ in results:
            gold_s = _fmt(gold) if gold is not None else "unknown"
            conv_s = _fmt_eps(conv_eps) if conv_eps is not None else "none"
            out.write(
                f"case {case_id} findings {args.findings} "
                f"gold_mass {gold_s} convergence_eps {conv_s}\n"
            )
        out.write("# states explored by epsilon\n")
        out.write("# epsilons: " + " ".join(_fmt_eps(e) for e in schedule) + "\n")
        for case_id, _, _, _, states in results:
            out.write(f"states {case_id} " + " ".join(map(str, states)) + "\n")
        points = [c for _, _, _, c, _ in results if c is not None]
        if points:
            out.write(f"median-convergence-eps {_fmt_eps(statistics.median(points))}\n")
    finally:
        if args.summary:
            out.close()
    return 0


def _parse_range(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise NetworkError(f"bad range {text!r}: expected 'lo,hi'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise NetworkError(f"bad range {text!r}: expected two floats")


def _cmd_gen(args) -> int:
    counts = tuple(int(tok) for tok in args.nodes_per_level.split(","))
    shape = NetShape(
        levels=len(counts),
        nodes_per_level=counts,
        max_parents=args.max_parents,
        parent_locality=args.locality,
        prior_range=_parse_range(args.prior_range),
        q_range=_parse_range(args.q_range),
        leak_range=_parse_range(args.leak_range),
        finding_leak_range=(
            _parse_range(args.finding_leak_range) if args.finding_leak_range else None
        ),
        seed=args.seed,
    )
    net = gen_network(shape)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net_path = out / "network.net"
    net_path.write_text(print_network(net), encoding="utf-8")
    print(net_path)
    for i in range(args.cases):
        seed = derive_seed(args.seed, _BENCH_CASE_TAG, i)
        case = make_case(net, seed, args.findings)
        ev_lines = "".join(
            f"{net.nodes[nid].name} {'present' if state else 'absent'}\n"
            for nid, state in case.evidence
        )
        ev_path = out / f"case-{i:03d}.ev"
        ev_path.write_text(ev_lines, encoding="utf-8")
        side_path = out / f"case-{i:03d}.case"
        side_path.write_text(
            f"case {case.case_id} seed {seed}\n" + ev_lines, encoding="utf-8"
        )
        print(ev_path)
        print(side_path)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> _ArgParser:
    parser = _ArgParser(prog="nobn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a NET file and print its summary")
    p.add_argument("network")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("exact", help="brute-force exact inference")
    p.add_argument("network")
    p.add_argument("evidence")
    p.add_argument("--cap", type=int, default=DEFAULT_FREE_NODE_CAP,
                   help="max free nodes to enumerate (default %(default)s)")
    p.set_defaults(func=_cmd_exact)

    p = sub.add_parser("eml", help="one-level parent search on a two-level network")
    p.add_argument("network")
    p.add_argument("evidence")
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=_cmd_eml)

    p = sub.add_parser("infer", help="threshold search; CSV row(s) on stdout")
    p.add_argument("network")
    p.add_argument("evidence")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--epsilon", type=float)
    group.add_argument("--schedule", help="comma-separated decreasing thresholds")
    p.add_argument("--gold", action="store_true",
                   help="also run the exact oracle and fill the gold columns")
    p.add_argument("--cap", type=int, default=DEFAULT_FREE_NODE_CAP)
    p.add_argument("--dump-accepted", metavar="PATH",
                   help="write accepted instantiations of the last run to PATH")
    p.add_argument("--post", metavar="PATH",
                   help="posterior output path (default: <evidence>.post)")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("bench", help="run sampled cases through a schedule")
    p.add_argument("network")
    p.add_argument("--cases", type=int, required=True)
    p.add_argument("--findings", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", help="comma-separated decreasing thresholds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gold", default="none",
                   help="'none', 'exact', or a deep-run epsilon (default %(default)s)")
    p.add_argument("--cap", type=int, default=DEFAULT_FREE_NODE_CAP)
    p.add_argument("--summary", metavar="PATH",
                   help="write the per-case summary to PATH instead of stderr")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gen", help="generate a seeded network and optional cases")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes-per-level", default="3,10,15,20,97")
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--locality", type=float, default=0.8)
    p.add_argument("--prior-range", default="0.001,0.1")
    p.add_argument("--q-range", default="0.2,0.95")
    p.add_argument("--leak-range", default="0.0,0.05")
    p.add_argument("--finding-leak-range", default=None,
                   help="override the leak range on the deepest level")
    p.add_argument("--cases", type=int, default=0)
    p.add_argument("--findings", type=int, default=0)
    p.set_defaults(func=_cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except FreeNodeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (NetworkError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
