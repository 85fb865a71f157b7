"""Independent oracles used only by the tests."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from faithless.causal import CausalGraph
from faithless.stats import correlation


def pcorr_recursive(x, y, given):
    """Partial correlation via the classical recursive formula.

    Kept deliberately independent of the residual-regression route it is
    used to check.
    """
    given = list(given)
    if not given:
        return correlation(x, y)
    z = given[0]
    rest = given[1:]
    rxy = pcorr_recursive(x, y, rest)
    rxz = pcorr_recursive(x, z, rest)
    ryz = pcorr_recursive(y, z, rest)
    return (rxy - rxz * ryz) / np.sqrt((1 - rxz**2) * (1 - ryz**2))


def _all_undirected_paths(graph: CausalGraph, a: str, b: str):
    neighbours = {n: set() for n in graph.nodes}
    for u, v in graph.edges:
        neighbours[u].add(v)
        neighbours[v].add(u)

    def walk(node, path):
        if node == b:
            yield list(path)
            return
        for nxt in neighbours[node]:
            if nxt not in path:
                path.append(nxt)
                yield from walk(nxt, path)
                path.pop()

    yield from walk(a, [a])


def d_separated_bruteforce(graph: CausalGraph, x: str, y: str, given) -> bool:
    """Path-enumeration d-separation oracle for small DAGs."""
    z = set(given)
    edge_set = set(graph.edges)
    desc = {}
    succ = graph.successors()

    def descendants(node):
        if node not in desc:
            seen = {node}
            stack = [node]
            while stack:
                n = stack.pop()
                for m in succ[n]:
                    if m not in seen:
                        seen.add(m)
                        stack.append(m)
            desc[node] = seen
        return desc[node]

    for path in _all_undirected_paths(graph, x, y):
        blocked = False
        for i in range(1, len(path) - 1):
            prev, node, nxt = path[i - 1], path[i], path[i + 1]
            collider = (prev, node) in edge_set and (nxt, node) in edge_set
            if collider:
                if not (descendants(node) & z):
                    blocked = True
                    break
            elif node in z:
                blocked = True
                break
        if not blocked:
            return False
    return True


def all_dsep_triples(graph: CausalGraph, max_cond=2):
    for x, y in combinations(graph.nodes, 2):
        others = [n for n in graph.nodes if n not in (x, y)]
        for size in range(min(max_cond, len(others)) + 1):
            for z in combinations(others, size):
                yield x, y, z
