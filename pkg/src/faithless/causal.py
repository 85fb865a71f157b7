"""Ground-truth causal graphs, d-separation, faithfulness mismatch
reporting, and a constraint-based skeleton learner.

The graphs may contain cycles (the loops do); d-separation is only
defined for the acyclic case and is refused otherwise.  Faithfulness
reporting needs nothing beyond adjacency and directed path length, so it
works on the cyclic loop graphs directly.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Union

import numpy as np

from .stats import (
    REGULARIZE_NOISE_FRACTION,
    CorrelationReport,
    Undefined,
    partial_correlation,
)
from .signals import derive_seed

__all__ = [
    "CausalGraph",
    "CyclicGraphError",
    "d_separated",
    "FaithfulnessReport",
    "faithfulness_violations",
    "pc_skeleton",
    "skeleton_f1",
    "TriangleTables",
    "triangle_faithfulness_tables",
    "loop_ground_truth",
    "random_dag",
    "linear_gaussian_data",
    "causality_vs_correlation_text",
]


class CyclicGraphError(ValueError):
    """d-separation is not applicable to cyclic graphs."""


@dataclass(frozen=True)
class CausalGraph:
    """Directed graph over channel names; cycles permitted."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))

    @property
    def acyclic(self) -> bool:
        # Kahn's algorithm
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        succ = self.successors()
        while queue:
            n = queue.popleft()
            seen += 1
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
        return seen == len(self.nodes)

    def successors(self) -> dict[str, list[str]]:
        out = {n: [] for n in self.nodes}
        for a, b in self.edges:
            out[a].append(b)
        return out

    def predecessors(self) -> dict[str, list[str]]:
        out = {n: [] for n in self.nodes}
        for a, b in self.edges:
            out[b].append(a)
        return out

    def adjacent_pairs(self) -> set[frozenset]:
        return {frozenset(e) for e in self.edges}

    def shortest_directed_path(self, a: str, b: str) -> float:
        """Number of edges on the shortest directed path a -> b (inf if none)."""
        if a == b:
            return 0
        dist = {a: 0}
        queue = deque([a])
        succ = self.successors()
        while queue:
            n = queue.popleft()
            for m in succ[n]:
                if m not in dist:
                    dist[m] = dist[n] + 1
                    if m == b:
                        return dist[m]
                    queue.append(m)
        return math.inf

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        return cls(tuple(d["nodes"]), tuple((a, b) for a, b in d["edges"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        return cls.from_dict(json.loads(text))


def _descendants(graph: CausalGraph) -> dict[str, set[str]]:
    succ = graph.successors()
    out = {}
    for start in graph.nodes:
        seen = {start}
        queue = deque([start])
        while queue:
            n = queue.popleft()
            for m in succ[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        out[start] = seen
    return out


def d_separated(graph: CausalGraph, x: str, y: str, given: Iterable[str] = ()) -> bool:
    """Whether every path between x and y is blocked given the set.

    Standard collider / non-collider blocking rules via reachability over
    (node, arrival-direction) states.  Raises :class:`CyclicGraphError`
    for cyclic graphs.
    """
    z = set(given)
    if not graph.acyclic:
        raise CyclicGraphError("d-separation requires an acyclic graph")
    if x == y:
        raise ValueError("x and y must differ")
    if x in z or y in z:
        raise ValueError("x and y must not be in the conditioning set")
    succ = graph.successors()
    pred = graph.predecessors()
    desc = _descendants(graph)
    collider_open = {n for n in graph.nodes if desc[n] & z}

    # state: (node, direction) with "up" = reached against an arrow (from a
    # child), "down" = reached along an arrow (from a parent).
    start = [(x, "up")]
    seen = set(start)
    queue = deque(start)
    while queue:
        node, direction = queue.popleft()
        if node == y:
            return False
        moves = []
        if direction == "up" and node not in z:
            moves += [(p, "up") for p in pred[node]]
            moves += [(c, "down") for c in succ[node]]
        elif direction == "down":
            if node not in z:
                moves += [(c, "down") for c in succ[node]]
            if node in collider_open:
                moves += [(p, "up") for p in pred[node]]
        for state in moves:
            if state not in seen:
                seen.add(state)
                queue.append(state)
    return True


@dataclass
class FaithfulnessReport:
    """Mismatches between a declared causal graph and measured correlations."""

    causation_without_correlation: list[tuple[tuple[str, str], float, float]]
    correlation_without_adjacency: list[tuple[frozenset, float, float]]
    skeleton_truth: set[frozenset]
    skeleton_learned: set[frozenset] | None = None

    def to_dict(self) -> dict:
        return {
            "causation_without_correlation": [
                {"edge": list(edge), "abs_corr": r, "floor": floor}
                for edge, r, floor in self.causation_without_correlation
            ],
            "correlation_without_adjacency": [
                {"pair": sorted(pair), "abs_corr": r,
                 "directed_path_length": None if math.isinf(length) else length}
                for pair, r, length in self.correlation_without_adjacency
            ],
            "skeleton_truth": sorted(sorted(p) for p in self.skeleton_truth),
            "skeleton_learned": None
            if self.skeleton_learned is None
            else sorted(sorted(p) for p in self.skeleton_learned),
        }


def faithfulness_violations(
    graph: CausalGraph, report: CorrelationReport, floor: float = 0.05
) -> FaithfulnessReport:
    """Directed edges whose endpoints are uncorrelated, and correlated
    pairs with no direct edge (annotated with directed path length)."""
    missing = [n for n in graph.nodes if n not in report.labels]
    if missing:
        raise ValueError(f"graph nodes missing from report: {missing}")
    adjacency = graph.adjacent_pairs()
    cwc = []
    for edge in graph.edges:
        v = report.get(*edge)
        if isinstance(v, Undefined):
            continue
        if abs(v) < floor:
            cwc.append((edge, abs(v), floor))
    cwa = []
    for a, b in combinations(graph.nodes, 2):
        if frozenset((a, b)) in adjacency:
            continue
        v = report.get(a, b)
        if isinstance(v, Undefined):
            continue
        if abs(v) >= floor:
            length = min(
                graph.shortest_directed_path(a, b),
                graph.shortest_directed_path(b, a),
            )
            cwa.append((frozenset((a, b)), abs(v), length))
    return FaithfulnessReport(
        causation_without_correlation=cwc,
        correlation_without_adjacency=cwa,
        skeleton_truth=adjacency,
    )


def pc_skeleton(
    report: CorrelationReport, floor: float = 0.05, max_cond: int = 2
) -> set[frozenset]:
    """Undirected skeleton: drop every pair with any (conditional)
    correlation below the floor.

    Undefined conditional entries count as dependence (a deterministic
    relation is the strongest dependence there is).  Channels with zero
    variance carry no dependence information and are excluded up front.
    The report must contain conditional entries up to ``max_cond``.
    """
    labels = [l for l in report.labels if l not in report.degenerate_labels]
    edges: set[frozenset] = set()
    for a, b in combinations(labels, 2):
        v = report.get(a, b)
        if isinstance(v, Undefined):
            edges.add(frozenset((a, b)))  # deterministic => dependent
            continue
        if abs(v) < floor:
            continue
        separated = False
        others = [c for c in labels if c not in (a, b)]
        for size in range(1, max_cond + 1):
            for subset in combinations(others, size):
                try:
                    cv = report.get_conditional(a, b, subset)
                except KeyError:
                    raise ValueError(
                        f"report lacks conditional entries up to size {max_cond}; "
                        f"build it with max_cond={max_cond}"
                    ) from None
                if isinstance(cv, Undefined):
                    continue
                if abs(cv) < floor:
                    separated = True
                    break
            if separated:
                break
        if not separated:
            edges.add(frozenset((a, b)))
    return edges


def skeleton_f1(learned: set[frozenset], truth: set[frozenset]) -> float:
    """F1 of a learned skeleton against the true adjacency."""
    tp = len(learned & truth)
    if tp == 0:
        return 0.0 if (learned or truth) else 1.0
    precision = tp / len(learned)
    recall = tp / len(truth)
    return 2 * precision * recall / (precision + recall)


TRIANGLE_CONDITIONING = ("none", "R", "D", "RD")


@dataclass
class TriangleTables:
    """Conditional-correlation tables around the P-E-O triangle.

    ``noncollider`` rows condition only on the column set;  ``collider``
    rows additionally condition on the third triangle vertex.  Cells hold
    floats or :class:`Undefined` (with a regularized value when noise was
    requested).
    """

    noncollider: dict[tuple[str, str], dict[str, Union[float, Undefined]]]
    collider: dict[tuple[str, str], dict[str, Union[float, Undefined]]]
    noise_fraction: float
    columns: tuple[str, ...] = TRIANGLE_CONDITIONING

    def render(self) -> str:
        def fmt(v):
            if isinstance(v, Undefined):
                if v.regularized is None:
                    return "undef"
                return f"undef({v.regularized:+.2f})"
            return f"{v:+.3f}"

        lines = []
        for title, table in (("non-collider", self.noncollider), ("collider", self.collider)):
            lines.append(f"[{title}]   " + "  ".join(f"{c:>14}" for c in self.columns))
            for pair, row in table.items():
                cells = "  ".join(f"{fmt(row[c]):>14}" for c in self.columns)
                name = "".join(pair) + ("|" + _third(pair) if title == "collider" else "")
                lines.append(f"{name:<14}" + cells)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        def conv(table):
            return {
                "".join(pair): {
                    col: (v.to_dict() if isinstance(v, Undefined) else v)
                    for col, v in row.items()
                }
                for pair, row in table.items()
            }

        return {
            "noise_fraction": self.noise_fraction,
            "noncollider": conv(self.noncollider),
            "collider": conv(self.collider),
        }


_TRIANGLE_PAIRS = (("O", "P"), ("O", "E"), ("P", "E"))


def _third(pair: tuple[str, str]) -> str:
    return ({"O", "P", "E"} - set(pair)).pop()


def triangle_faithfulness_tables(
    trace, noise_fraction: float = REGULARIZE_NOISE_FRACTION
) -> TriangleTables:
    """Conditional correlations among O, P, E for the varying-reference
    integral loop (or the proportional loop), conditioning on subsets of
    the exogenous channels.

    With ``noise_fraction > 0`` the undefined (deterministic) cells carry
    the value recomputed after adding that much measurement noise.
    """
    disturbances = [c for c in ("D", "D_O", "D_P") if c in trace.channels]
    if not disturbances or "R" not in trace.channels:
        raise ValueError("trace must carry R and a disturbance channel")
    col_sets: dict[str, list[str]] = {
        "none": [],
        "R": ["R"],
        "D": disturbances,
        "RD": ["R"] + disturbances,
    }
    data = {name: trace.steady(name) for name in trace.names}
    seed_base = trace.scenario.seed

    def cell(x, y, given, tag):
        return partial_correlation(
            data[x],
            data[y],
            [data[z] for z in given],
            regularize=noise_fraction > 0,
            noise_fraction=noise_fraction,
            noise_seed=derive_seed(seed_base, f"triangle/{tag}"),
        )

    noncollider = {}
    collider = {}
    for pair in _TRIANGLE_PAIRS:
        x, y = pair
        noncollider[pair] = {
            col: cell(x, y, given, f"{x}{y}|{col}") for col, given in col_sets.items()
        }
        collider[pair] = {
            col: cell(x, y, [_third(pair)] + given, f"{x}{y}|{_third(pair)}{col}")
            for col, given in col_sets.items()
        }
    return TriangleTables(
        noncollider=noncollider, collider=collider, noise_fraction=noise_fraction
    )


def loop_ground_truth(trace) -> tuple[CausalGraph, list[str]]:
    """Declared causal graph and observable channel set for a simulated
    loop, for use by the discovery demonstration.

    Channels that are deterministic copies under the scenario (E when the
    reference is constant) are excluded, as is a constant reference:
    neither carries information a discovery procedure could use.
    """
    from .plant import ConstantInput  # local import keeps plant optional

    spec = trace.scenario
    r_input = spec.inputs.get("R")
    r_constant = r_input is None or isinstance(r_input, ConstantInput)
    model = spec.model
    if model == "IntegralLoop":
        if r_constant:
            nodes, edges = ("D", "P", "O"), (("D", "P"), ("P", "O"), ("O", "P"))
        else:
            nodes = ("D", "R", "E", "P", "O")
            edges = (("D", "P"), ("O", "P"), ("R", "E"), ("P", "E"), ("E", "O"))
    elif model == "SplitDisturbanceLoop":
        if r_constant:
            nodes = ("D0", "D1", "P", "O")
            edges = (("D0", "P"), ("D1", "P"), ("P", "O"), ("O", "P"))
        else:
            nodes = ("D0", "D1", "R", "E", "P", "O")
            edges = (
                ("D0", "P"), ("D1", "P"), ("O", "P"),
                ("R", "E"), ("P", "E"), ("E", "O"),
            )
    elif model == "ProportionalLoop":
        if r_constant:
            nodes = ("D_O", "D_P", "P", "O")
            edges = (("D_O", "P"), ("D_P", "P"), ("O", "P"), ("P", "O"))
        else:
            nodes = ("D_O", "D_P", "R", "E", "P", "O")
            edges = (
                ("D_O", "P"), ("D_P", "P"), ("O", "P"),
                ("R", "E"), ("P", "E"), ("E", "O"),
            )
    elif model == "PassiveEquilibrium":
        nodes, edges = ("D", "P", "O"), (("D", "P"), ("P", "O"))
    elif model == "Capacitor":
        nodes, edges = ("V", "I"), (("V", "I"),)
    elif model == "FeedforwardLoop":
        nodes = ("D_O", "D_P", "O", "P")
        edges = (("D_O", "O"), ("D_O", "P"), ("D_P", "P"), ("O", "P"))
    else:
        raise ValueError(f"no ground-truth graph for model {model}")
    return CausalGraph(nodes, edges), list(nodes)


def random_dag(n_nodes: int, edge_prob: float, seed: int) -> CausalGraph:
    """Random DAG over X0..X{n-1} with edges following the node order."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    nodes = tuple(f"X{i}" for i in range(n_nodes))
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                edges.append((nodes[i], nodes[j]))
    return CausalGraph(nodes, tuple(edges))


def linear_gaussian_data(
    graph: CausalGraph,
    n: int,
    seed: int,
    coef_range: tuple[float, float] = (0.6, 1.4),
) -> dict[str, np.ndarray]:
    """Sample a linear-Gaussian structural model on a DAG.

    Coefficients are drawn away from zero (random sign, magnitude in
    ``coef_range``) so the data are faithful to the graph with high
    probability; unit-variance exogenous noise everywhere.
    """
    if not graph.acyclic:
        raise CyclicGraphError("sampling needs an acyclic graph")
    rng = np.random.Generator(np.random.Philox(key=seed))
    pred = graph.predecessors()
    data: dict[str, np.ndarray] = {}
    remaining = list(graph.nodes)
    while remaining:
        for node in list(remaining):
            if all(p in data for p in pred[node]):
                value = rng.standard_normal(n)
                for p in pred[node]:
                    lo, hi = coef_range
                    coef = rng.uniform(lo, hi) * rng.choice((-1.0, 1.0))
                    value = value + coef * data[p]
                data[node] = value
                remaining.remove(node)
    return data


def causality_vs_correlation_text(
    graph: CausalGraph, report: CorrelationReport, floor: float = 0.05
) -> str:
    """Side-by-side text diagram: declared direct causes on the left,
    measured non-zero pairwise correlations on the right."""
    pair_edges = {}
    for a, b in graph.edges:
        pair_edges.setdefault(frozenset((a, b)), []).append((a, b))
    left = []
    for pair, directed in sorted(pair_edges.items(), key=lambda kv: sorted(kv[0])):
        a, b = sorted(pair)
        if len(directed) == 2:
            left.append(f"{a} <-> {b}")
        else:
            src, dst = directed[0]
            left.append(f"{src} --> {dst}")
    right = []
    for a, b in combinations(report.labels, 2):
        v = report.get(a, b)
        if isinstance(v, Undefined):
            continue
        if abs(v) >= floor:
            right.append(f"{a} --({v:+.2f})-- {b}")
    width = max([len(s) for s in left] + [24])
    lines = [f"{'Causality':<{width}}   Non-zero pairwise correlations"]
    for i in range(max(len(left), len(right))):
        l = left[i] if i < len(left) else ""
        r = right[i] if i < len(right) else ""
        lines.append(f"{l:<{width}}   {r}")
    return "\n".join(lines)
