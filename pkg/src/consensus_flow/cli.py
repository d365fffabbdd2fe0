"""Command-line interface.

Exit codes: 0 success, 1 bad input or setup error, 2 run did not converge.

Option precedence, lowest to highest: built-in defaults, the JSON file given
by ``--config`` (keys are the long option names with dashes or underscores),
then options on the command line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import ConsensusFlowError
from consensus_flow.flow import FlowConfig, LinearSystem
from consensus_flow.graph import TOPOLOGIES, generate, graph_report, read_edge_list, write_edge_list
from consensus_flow.harness import SweepEntry, run, sweep, track_varying_b
from consensus_flow.io import dumps, read_matrix, read_vector, write_json, write_jsonl
from consensus_flow.spectral import spectral_report

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

INIT_NAMES = {
    "min-norm": "min_norm",
    "tangent-noise": "tangent_noise",
    "min-norm-plus-tangent-noise": "tangent_noise",
    "free-random": "free_random",
}

FLOW_DEFAULTS = {
    "variant": "plain",
    "alpha": 1.0,
    "alpha_i": None,
    "integrator": "euler",
    "step": "auto",
    "tol": C.DEFAULT_CONVERGENCE_TOL,
    "max_steps": C.DEFAULT_MAX_STEPS,
    "seed": 0,
    "init": "min-norm",
    "record_every": C.DEFAULT_RECORD_EVERY,
    "drift_amplitude": 0.0,
    "drift_omega": 1.0,
    "freeze_after": None,
    "blocks": None,
}


class UsageError(ConsensusFlowError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_flow_options(p: argparse.ArgumentParser) -> None:
    # defaults are None so the config file can fill in what the user omitted
    p.add_argument("--matrix", help="Matrix Market file with A")
    p.add_argument("--rhs", help="right-hand side b, one number per line")
    p.add_argument("--graph", help="edge list, one 'i j' pair per line")
    p.add_argument("--blocks", type=_ints, help="row block sizes, e.g. 2,1,3 (default: one row per agent)")
    p.add_argument("--variant", choices=["plain", "restoring", "gains"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-i", type=_floats, help="comma list of per-agent gains")
    p.add_argument("--integrator", choices=["euler", "rk4"])
    p.add_argument("--step", help="step size or 'auto'")
    p.add_argument("--tol", type=float, help="convergence tolerance")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=sorted(INIT_NAMES))
    p.add_argument("--record-every", type=int)
    p.add_argument("--trace", help="write per-step records (JSON lines) here")
    p.add_argument("--summary", help="write the run summary (JSON) here")
    p.add_argument("--config", help="JSON file with default option values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="consensus-flow", description="Distributed Ax=b by projected consensus flow.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run the flow to convergence")
    _add_flow_options(p)

    p = sub.add_parser("track", help="follow a sinusoidally varying b")
    _add_flow_options(p)
    p.add_argument("--drift-amplitude", type=float)
    p.add_argument("--drift-omega", type=float)
    p.add_argument("--freeze-after", type=float, help="hold b fixed from this time on")

    p = sub.add_parser("analyze", help="spectral and graph report")
    p.add_argument("--matrix")
    p.add_argument("--graph", required=True)
    p.add_argument("--blocks", type=_ints)
    p.add_argument("--summary", help="write the report (JSON) here")

    g = sub.add_parser("graph", help="graph utilities")
    gsub = g.add_subparsers(dest="graph_command", required=True, parser_class=_Parser)
    p = gsub.add_parser("gen", help="generate an edge-list file")
    p.add_argument("--topology", required=True, choices=TOPOLOGIES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--edge-prob", type=float, default=C.RANDOM_EDGE_PROB)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="batch analysis over random instances")
    p.add_argument("--topologies", default="path,cycle,star,complete,random_connected")
    p.add_argument("--sizes", type=_ints, default=[3, 4, 5])
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--variant", choices=["plain", "restoring"], default="plain")
    p.add_argument("--no-simulate", action="store_true", help="spectral analysis only")
    p.add_argument("--cond-max", type=float, default=10.0)
    p.add_argument("--summary", help="write results (JSON) here")
    return parser


def _merged(args: argparse.Namespace) -> dict:
    opts = dict(FLOW_DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in loaded.items():
            opts[key.replace("-", "_")] = value
    for key, value in vars(args).items():
        if value is not None:
            opts[key] = value
    return opts


def _flow_config(opts: dict) -> FlowConfig:
    step = opts["step"]
    if step != "auto":
        try:
            step = float(step)
        except (TypeError, ValueError):
            raise UsageError(f"--step must be a number or 'auto', got {step!r}") from None
    init = opts["init"]
    alpha_i = opts["alpha_i"]
    if isinstance(alpha_i, (int, float)):
        alpha_i = [alpha_i]
    return FlowConfig(
        variant=opts["variant"],
        alpha=float(opts["alpha"]),
        alpha_i=alpha_i,
        integrator=opts["integrator"],
        step=step,
        max_steps=int(opts["max_steps"]),
        convergence_tol=float(opts["tol"]),
        seed=int(opts["seed"]),
        init=INIT_NAMES.get(init, init),
        record_every=int(opts["record_every"]),
    )


def _load_system(opts: dict, need_rhs: bool = True) -> LinearSystem:
    for key in ("matrix", "graph") + (("rhs",) if need_rhs else ()):
        if not opts.get(key):
            raise UsageError(f"--{key} is required")
        if not Path(opts[key]).is_file():
            raise UsageError(f"{opts[key]}: no such file")
    a = read_matrix(opts["matrix"])
    b = read_vector(opts["rhs"]) if need_rhs else np.zeros(a.shape[0])
    sizes = opts.get("blocks") or [1] * a.shape[0]
    return LinearSystem.from_blocks(a, b, sizes)


def _emit(trace, opts: dict, extra: Optional[dict] = None) -> dict:
    summary = trace.summary()
    if extra:
        summary.update(extra)
    if opts.get("trace"):
        write_jsonl(opts["trace"], trace.records())
    if opts.get("summary"):
        write_json(opts["summary"], summary)
    return summary


def cmd_solve(args: argparse.Namespace) -> int:
    opts = _merged(args)
    system = _load_system(opts)
    g = read_edge_list(opts["graph"], system.agent_count)
    config = _flow_config(opts)
    trace = run(system, g, config)
    _emit(trace, opts)
    print(dumps([float(v) for v in trace.consensus]))
    if not trace.converged:
        print(f"not converged after {trace.steps} steps", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_track(args: argparse.Namespace) -> int:
    opts = _merged(args)
    system = _load_system(opts)
    g = read_edge_list(opts["graph"], system.agent_count)
    config = _flow_config(opts)
    if config.variant == "plain" and opts["drift_amplitude"] != 0:
        raise UsageError("manifolds move when b drifts; the plain variant cannot track them (use --variant restoring)")
    trace = track_varying_b(system, g, config, opts["drift_amplitude"], opts["drift_omega"], opts["freeze_after"])
    _emit(trace, opts, {"drift_amplitude": opts["drift_amplitude"], "drift_omega": opts["drift_omega"]})
    print(dumps([float(v) for v in trace.consensus]))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if not Path(args.graph).is_file():
        raise UsageError(f"{args.graph}: no such file")
    report: dict = {}
    if args.matrix:
        system = _load_system(vars(args), need_rhs=False)
        g = read_edge_list(args.graph, system.agent_count)
        report["graph"] = graph_report(g).to_dict()
        report["spectral"] = spectral_report(system, g).to_dict()
    else:
        g = read_edge_list(args.graph)
        report["graph"] = graph_report(g).to_dict()
    text = dumps(report)
    if args.summary:
        write_json(args.summary, report)
    print(text)
    return EXIT_OK


def cmd_graph_gen(args: argparse.Namespace) -> int:
    g = generate(args.topology, args.n, args.seed, args.edge_prob)
    write_edge_list(g, args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    topologies = [t for t in args.topologies.split(",") if t]
    for t in topologies:
        if t not in TOPOLOGIES:
            raise UsageError(f"unknown topology {t!r}")
    entries = [SweepEntry(t, n, s, args.variant) for t in topologies for n in args.sizes for s in args.seeds]
    rows = sweep(entries, simulate=not args.no_simulate, cond_max=args.cond_max)
    out = [r.to_dict() for r in rows]
    if args.summary:
        write_json(args.summary, out)
    else:
        print(dumps(out))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "track": cmd_track,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = cmd_graph_gen if args.command == "graph" else COMMANDS[args.command]
    try:
        return handler(args)
    except (ConsensusFlowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
