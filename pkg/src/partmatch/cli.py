"""Command-line entry point: ``run``, ``partition``, ``bench`` and ``synth``.

Exit codes: 0 success, 1 usage / input / configuration error, 2 when
``run --oracle`` finds the engine and the brute-force matcher disagree.
"""
from __future__ import annotations

import argparse
import csv
import statistics
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from .engine import EngineConfig, Metrics, ResultSet, execute
from .errors import ConfigurationError, PartmatchError
from .graph import Graph, load_graph, synth_graph, write_graph
from .oracle import brute_force
from .partition import DEFAULT_EPSILON, balance, edge_cut, hash_assign, kway_assign
from .query import SEMANTICS, ConjunctiveQuery, bundled_query, compile, parse_query
from .routing import DESIGNS, build_pair

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default; 2 means mismatch here
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    graph_path: str | None
    synth: tuple[int, int, int, str] | None
    query: str
    design: str = "compute"
    partitions: int = 4
    workers: int = 1
    nodes: int = 1
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    redundancy: bool = False
    semantics: str = "homomorphism"
    results_path: str | None = None
    metrics_path: str | None = None
    oracle: bool = False
    batch_size: int = 64

    def __post_init__(self) -> None:
        if (self.graph_path is None) == (self.synth is None):
            raise ConfigurationError("give exactly one graph source: --graph or --synth-n/--synth-m")
        for name in ("partitions", "workers", "nodes", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"--{name.replace('_', '-')} must be >= 1")
        if self.design not in DESIGNS:
            raise ConfigurationError(f"unknown design {self.design!r}; expected one of {', '.join(DESIGNS)}")


@dataclass
class SweepSpec:
    workers: list[int]
    designs: list[str]
    redundancy: list[bool]
    reps: int = 3

    def __post_init__(self) -> None:
        if not self.workers or not self.designs or not self.redundancy:
            raise ConfigurationError("sweep lists must be non-empty")
        if self.reps < 1 or any(w < 1 for w in self.workers):
            raise ConfigurationError("repetitions and worker counts must be >= 1")
        for d in self.designs:
            if d not in DESIGNS:
                raise ConfigurationError(f"unknown design {d!r}")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_graph_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="graph file, one 'src label dst' edge per line")
    p.add_argument("--synth-n", type=int, help="synthesize a graph with this many vertices")
    p.add_argument("--synth-m", type=int, help="edge count for the synthesized graph")
    p.add_argument("--synth-labels", type=int, default=1)
    p.add_argument("--synth-model", default="uniform", choices=("uniform", "clustered"))


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--query", required=True,
                   help="query file, or a bundled query name (quad, v, triangle, edge)")
    p.add_argument("--partitions", type=int, default=4)
    p.add_argument("--workers", type=int, default=1, help="worker threads per node")
    p.add_argument("--nodes", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--semantics", choices=SEMANTICS, default="homomorphism")
    p.add_argument("--batch-size", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="partmatch", description="Partitioned graph pattern matching.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute one query")
    _add_graph_source(run)
    _add_engine_flags(run)
    run.add_argument("--design", default="compute")
    run.add_argument("--redundancy", type=_on_off, default=False, metavar="on|off")
    run.add_argument("--oracle", action="store_true", help="compare against the brute-force matcher")
    run.add_argument("--results", help="results TSV path (default: stdout)")
    run.add_argument("--metrics", help="metrics CSV path")

    part = sub.add_parser("partition", help="assign vertices to partitions")
    part.add_argument("--graph", required=True)
    part.add_argument("--strategy", choices=("hash", "kway"), default="kway")
    part.add_argument("--partitions", type=int, default=4)
    part.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    part.add_argument("--seed", type=int, default=0)
    part.add_argument("--output", help="assignment file (default: stdout)")

    bench = sub.add_parser("bench", help="sweep designs, worker counts and redundancy")
    _add_graph_source(bench)
    _add_engine_flags(bench)
    bench.add_argument("--designs", type=_str_list, default=list(DESIGNS))
    bench.add_argument("--sweep-workers", type=_int_list, default=[1, 2, 4])
    bench.add_argument("--redundancy", type=_str_list, default=["off", "on"], metavar="off,on")
    bench.add_argument("--reps", type=int, default=3)
    bench.add_argument("--metrics", help="per-repetition metrics CSV path")
    bench.add_argument("--summary", help="summary CSV path (default: stdout)")

    synth = sub.add_parser("synth", help="write a synthetic graph")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--m", type=int, required=True)
    synth.add_argument("--labels", type=int, default=1)
    synth.add_argument("--model", default="uniform", choices=("uniform", "clustered"))
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--output", help="graph file (default: stdout)")
    return parser


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _load_query(spec: str) -> ConjunctiveQuery:
    path = Path(spec)
    if path.is_file():
        with path.open(encoding="utf-8") as fh:
            return parse_query(fh)
    if path.suffix or "/" in spec:
        raise ConfigurationError(f"query file not found: {spec}")
    return bundled_query(spec)


def _graph_from_args(args) -> Graph:
    synth_given = args.synth_n is not None or args.synth_m is not None
    if args.graph is not None and synth_given:
        raise ConfigurationError("--graph and --synth-n/--synth-m are mutually exclusive")
    if args.graph is not None:
        return load_graph(args.graph)
    if args.synth_n is None or args.synth_m is None:
        raise ConfigurationError("give --graph, or both --synth-n and --synth-m")
    return synth_graph(args.synth_n, args.synth_m, args.synth_labels, args.synth_model, args.seed)


def result_lines(graph: Graph, results: ResultSet) -> list[str]:
    """TSV lines of vertex tokens, one match per line, sorted."""
    toks = graph.vertex_tokens
    rows = sorted(tuple(toks[v] for v in row) for row in results)
    return ["\t".join(r) for r in rows]


def write_metrics(metrics: Metrics, stream: TextIO, prefix: Sequence[object] = (),
                  prefix_header: Sequence[str] = ()) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow([*prefix_header, "metric", "op_index", "worker", "value"])
    for row in metrics.rows():
        w.writerow([*prefix, *row])


def _run_once(graph: Graph, cq: ConjunctiveQuery, design: str, P: int, workers: int, nodes: int,
              epsilon: float, seed: int, redundancy: bool, semantics: str, batch_size: int,
              built=None):
    pair, pset, _ = built or build_pair(design, graph, P, epsilon, seed, redundancy, nodes)
    qep = compile(cq, redundancy, semantics)
    config = EngineConfig(workers_per_node=workers, nodes=nodes, partitions=P, batch_size=batch_size,
                          semantics=semantics, redundancy=redundancy)
    return execute(qep, pset, pair, config)


def cmd_run(cfg: RunConfig, graph: Graph | None = None) -> int:
    if graph is None:
        graph = load_graph(cfg.graph_path) if cfg.graph_path else synth_graph(*cfg.synth, seed=cfg.seed)
    cq = _load_query(cfg.query)
    results, metrics = _run_once(graph, cq, cfg.design, cfg.partitions, cfg.workers, cfg.nodes,
                                 cfg.epsilon, cfg.seed, cfg.redundancy, cfg.semantics, cfg.batch_size)
    with _output(cfg.results_path) as out:
        for line in result_lines(graph, results):
            out.write(line + "\n")
    if cfg.metrics_path:
        with _output(cfg.metrics_path) as out:
            write_metrics(metrics, out)
    print(f"results={len(results)} runtime_ns={metrics.runtime_ns} "
          f"broadcast_fanout={metrics.broadcast_fanout}", file=sys.stderr)
    if cfg.oracle:
        expected = brute_force(graph, cq, cfg.semantics)
        status = "MATCH" if results.as_set() == expected.tuples else "MISMATCH"
        print(f"engine={len(results)} oracle={expected.count} {status}", file=sys.stderr)
        if status == "MISMATCH":
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_partition(graph: Graph, strategy: str, P: int, epsilon: float, seed: int,
                  output: str | None = None) -> int:
    if strategy == "hash":
        if P < 1:
            raise ConfigurationError("partition count must be >= 1")
        assignment = hash_assign(graph.vertex_count, P)
    else:
        assignment = kway_assign(graph, P, epsilon, seed)
    with _output(output) as out:
        for tok, p in zip(graph.vertex_tokens, assignment.parts.tolist()):
            out.write(f"{tok}\t{p}\n")
        out.write(f"# cut={edge_cut(graph, assignment)} balance={balance(assignment, P):.4f}\n")
    return EXIT_OK


def cmd_bench(graph: Graph, cq: ConjunctiveQuery, sweep: SweepSpec, P: int, nodes: int = 1,
              epsilon: float = DEFAULT_EPSILON, seed: int = 0, semantics: str = "homomorphism",
              batch_size: int = 64, metrics_path: str | None = None, summary_path: str | None = None) -> int:
    """Median runtime per (design, redundancy, workers) plus an ideal-scaling reference.

    The reference extrapolates linearly from the two-worker median and is left
    blank when two workers are not part of the sweep.
    """
    summary = []
    with (_output(metrics_path) if metrics_path else _null()) as mout:
        mcsv = csv.writer(mout, lineterminator="\n") if mout is not None else None
        if mcsv is not None:
            mcsv.writerow(["design", "workers", "redundancy", "rep", "metric", "op_index", "worker", "value"])
        for design in sweep.designs:
            for red in sweep.redundancy:
                built = build_pair(design, graph, P, epsilon, seed, red, nodes)
                # unrecorded warm-up so kernel loading does not land in the first cell
                _run_once(graph, cq, design, P, 1, nodes, epsilon, seed, red, semantics, batch_size, built)
                group = []
                for w in sweep.workers:
                    runtimes, fanout = [], 0
                    for rep in range(sweep.reps):
                        _, m = _run_once(graph, cq, design, P, w, nodes, epsilon, seed, red,
                                         semantics, batch_size, built)
                        runtimes.append(m.runtime_ns)
                        fanout = m.broadcast_fanout
                        if mcsv is not None:
                            for row in m.rows():
                                mcsv.writerow([design, w, "on" if red else "off", rep, *row])
                    group.append((w, round(statistics.median(runtimes)), fanout))
                two = next((med for w, med, _ in group if w == 2), None)
                for w, med, fanout in group:
                    ideal = "" if two is None else round(two * 2 / w)
                    summary.append((design, w, "on" if red else "off", med, fanout, ideal))
    with _output(summary_path) as out:
        scsv = csv.writer(out, lineterminator="\n")
        scsv.writerow(["design", "workers", "redundancy", "median_runtime_ns", "broadcast_fanout",
                       "ideal_runtime_ns"])
        scsv.writerows(summary)
    return EXIT_OK


@contextmanager
def _null() -> Iterator[None]:
    yield None


def cmd_synth(n: int, m: int, labels: int = 1, model: str = "uniform", seed: int = 0,
              output: str | None = None) -> int:
    graph = synth_graph(n, m, labels, model, seed)
    with _output(output) as out:
        write_graph(graph, out)
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "synth":
        return cmd_synth(args.n, args.m, args.labels, args.model, args.seed, args.output)
    if args.command == "partition":
        return cmd_partition(load_graph(args.graph), args.strategy, args.partitions, args.epsilon,
                             args.seed, args.output)
    graph = _graph_from_args(args)
    if args.command == "run":
        cfg = RunConfig(args.graph, None if args.graph else (args.synth_n, args.synth_m, args.synth_labels,
                                                            args.synth_model),
                        args.query, args.design, args.partitions, args.workers, args.nodes, args.epsilon,
                        args.seed, args.redundancy, args.semantics, args.results, args.metrics,
                        args.oracle, args.batch_size)
        return cmd_run(cfg, graph)
    red = []
    for tok in args.redundancy:
        red.append(_on_off_checked(tok))
    sweep = SweepSpec(args.sweep_workers, args.designs, red, args.reps)
    if args.partitions < 1 or args.nodes < 1:
        raise ConfigurationError("--partitions and --nodes must be >= 1")
    return cmd_bench(graph, _load_query(args.query), sweep, args.partitions, args.nodes, args.epsilon,
                     args.seed, args.semantics, args.batch_size, args.metrics, args.summary)


def _on_off_checked(tok: str) -> bool:
    if tok not in ("on", "off"):
        raise ConfigurationError(f"--redundancy expects on/off values, got {tok!r}")
    return tok == "on"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _dispatch(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (PartmatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
