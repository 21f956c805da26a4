"""Pattern matching on partitioned edge-labeled graphs.

Graphs are split into partitions, each owned by one worker at a time; a
query compiles into a chain of operators whose partial matches travel as
messages between partitions.  A brute-force matcher serves as ground truth.
"""
from .engine import (CompletionTracker, EngineConfig, Message, Metrics, ResultSet, apply_op,
                     dispatch, execute, terminate_detect, translate_results)
from .errors import (ConfigurationError, EmptyQueryError, InternalError, OwnershipError, ParseError,
                     PartmatchError, RedundancyRequiredError, ReservedTokenError, RoutingError,
                     UnsupportedQueryError)
from .graph import WILDCARD, Graph, graph_to_text, load_graph, parse_graph, synth_graph, write_graph
from .oracle import OracleResult, brute_force
from .partition import Assignment, balance, edge_cut, hash_assign, kway_assign, relabel_virtual
from .query import (QEP, Addressing, ConjunctiveQuery, OpKind, PlanOp, Predicate, bundled_query,
                    parse_query)
from .query import compile as compile_query
from .routing import (DESIGNS, ComputeTable, LookupTable, RangeTable, RoutingPair, build_pair,
                      timed_route)
from .store import (PartitionSet, PartitionStore, build_partitions, has_edge, in_edges, out_edges,
                    scan_by_target)

__all__ = [name for name in dir() if not name.startswith("_")]
