"""Two-legged graph combinatorics: 1PI tests, spanning trees, overlapping
loops, string collapse, fork trees with scale labellings.

Graphs are undirected multigraphs with integer-labelled internal lines
(self-loops allowed) and external legs attached to vertices; fermion
direction and values are out of scope, only the combinatorics used by the
multiscale bounds.  The overlapping-loop construction follows the
constructive proof: cut a path line, find a crossing line on a connecting
path, swap it into the tree, repeat once for the second loop.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np


class GraphError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeynmanGraph:
    n_vertices: int
    lines: tuple          # tuple of (u, v) with u <= v; index in tuple = line id
    legs: tuple           # external legs, one vertex id per leg

    def __post_init__(self):
        for u, v in self.lines:
            if not (0 <= u <= v < self.n_vertices):
                raise GraphError("line endpoints out of range or unordered")
        for v in self.legs:
            if not 0 <= v < self.n_vertices:
                raise GraphError("leg vertex out of range")

    def incidence(self, v: int) -> int:
        """Line-end count at v: internal lines (self-loops twice) plus legs."""
        count = sum((u == v) + (w == v) for u, w in self.lines)
        return count + sum(1 for leg in self.legs if leg == v)

    def even_incidence(self) -> bool:
        return all(self.incidence(v) % 2 == 0 for v in range(self.n_vertices))

    def endpoints(self, line_id: int):
        return self.lines[line_id]

    def external_vertices(self):
        return sorted(set(self.legs))

    def adjacency(self, skip=()):
        adj = {v: [] for v in range(self.n_vertices)}
        for idx, (u, w) in enumerate(self.lines):
            if idx in skip:
                continue
            adj[u].append((w, idx))
            if u != w:
                adj[w].append((u, idx))
        return adj

    def is_connected(self, skip=()) -> bool:
        if self.n_vertices == 0:
            return False
        adj = self.adjacency(skip)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w, _ in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_vertices

    def to_edge_list_text(self) -> str:
        out = [f"{u} {v}" for u, v in self.lines]
        out += [f"ext {v}" for v in self.legs]
        return "\n".join(out) + "\n"

    @classmethod
    def from_edge_list_text(cls, text: str) -> "FeynmanGraph":
        lines, legs = [], []
        n = 0
        for raw in text.strip().splitlines():
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "ext":
                legs.append(int(parts[1]))
                n = max(n, legs[-1] + 1)
            else:
                u, v = sorted(int(x) for x in parts[:2])
                lines.append((u, v))
                n = max(n, v + 1)
        return cls(n_vertices=n, lines=tuple(lines), legs=tuple(legs))


def is_one_pi(g: FeynmanGraph) -> bool:
    """One-particle irreducible: removing any single internal line keeps g
    connected (brute-force line removal)."""
    if not g.is_connected():
        raise GraphError("1PI test needs a connected graph")
    return all(g.is_connected(skip={i}) for i in range(len(g.lines)))


def find_bridges(g: FeynmanGraph):
    """Bridges by DFS lowlink; an independent check of the 1PI test.

    Parallel lines are never bridges, so the multigraph bookkeeping tracks
    the line id used to enter each vertex.
    """
    adj = g.adjacency()
    visited = [False] * g.n_vertices
    disc = [0] * g.n_vertices
    low = [0] * g.n_vertices
    bridges = []
    counter = itertools.count()

    def dfs(root):
        stack = [(root, -1, iter(adj[root]))]
        visited[root] = True
        disc[root] = low[root] = next(counter)
        while stack:
            v, in_line, it = stack[-1]
            advanced = False
            for w, line_id in it:
                if line_id == in_line:
                    continue
                if w == v:
                    continue  # self-loops never bridge
                if not visited[w]:
                    visited[w] = True
                    disc[w] = low[w] = next(counter)
                    stack.append((w, line_id, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if not advanced:
                stack.pop()
                if stack:
                    parent, _, _ = stack[-1]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        bridges.append(in_line)

    for v in range(g.n_vertices):
        if not visited[v]:
            dfs(v)
    return sorted(bridges)


def _is_spanning_tree(g: FeynmanGraph, line_ids) -> bool:
    if len(line_ids) != g.n_vertices - 1:
        return False
    parent = list(range(g.n_vertices))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in line_ids:
        u, v = g.lines[i]
        if u == v:
            return False
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def spanning_trees(g: FeynmanGraph):
    """All spanning trees as sorted tuples of line ids, lexicographic order."""
    if not g.is_connected():
        raise GraphError("spanning trees need a connected graph")
    n = g.n_vertices
    if n == 1:
        return [()]
    out = []
    for combo in itertools.combinations(range(len(g.lines)), n - 1):
        if _is_spanning_tree(g, combo):
            out.append(tuple(combo))
    return out


def spanning_tree_count(g: FeynmanGraph) -> int:
    """Matrix-tree determinant on the multigraph Laplacian (self-loops drop)."""
    n = g.n_vertices
    if n == 1:
        return 1
    lap = np.zeros((n, n))
    for u, v in g.lines:
        if u == v:
            continue
        lap[u, u] += 1
        lap[v, v] += 1
        lap[u, v] -= 1
        lap[v, u] -= 1
    minor = lap[1:, 1:]
    return int(round(float(np.linalg.det(minor)))) if n > 1 else 1


def tree_path(g: FeynmanGraph, tree, v1: int, v2: int):
    """Line ids of the unique tree path from v1 to v2, in walk order."""
    if v1 == v2:
        return []
    for v in (v1, v2):
        if not 0 <= v < g.n_vertices:
            raise GraphError("path endpoint not in graph")
    adj = {v: [] for v in range(g.n_vertices)}
    for i in tree:
        u, w = g.lines[i]
        adj[u].append((w, i))
        adj[w].append((u, i))
    prev = {v1: (None, None)}
    stack = [v1]
    while stack:
        v = stack.pop()
        if v == v2:
            break
        for w, i in adj[v]:
            if w not in prev:
                prev[w] = (v, i)
                stack.append(w)
    if v2 not in prev:
        raise GraphError("tree does not connect the requested vertices")
    path = []
    v = v2
    while prev[v][0] is not None:
        v, i = prev[v]
        path.append(i)
    return list(reversed(path))


def _shortest_path_lines(g: FeynmanGraph, a: int, b: int, skip):
    """Breadth-first shortest path from a to b avoiding ``skip`` lines;
    lowest-line-index tie-breaking for determinism."""
    adj = g.adjacency(skip=skip)
    for v in adj:
        adj[v].sort(key=lambda t: t[1])
    prev = {a: (None, None)}
    frontier = [a]
    while frontier and b not in prev:
        nxt = []
        for v in frontier:
            for w, i in adj[v]:
                if w not in prev:
                    prev[w] = (v, i)
                    nxt.append(w)
        frontier = nxt
    if b not in prev:
        raise GraphError("no connecting path (graph hypotheses violated)")
    path = []
    v = b
    while prev[v][0] is not None:
        v, i = prev[v]
        path.append(i)
    return list(reversed(path))


def overlapping_loops(g: FeynmanGraph, tree, line_id: int):
    """Two non-tree lines whose tree loops both contain ``line_id``.

    Requires a two-legged 1PI graph with even incidences and ``line_id`` on
    the external tree path.  Returns (l1, l2, T1, T2) with
    T_i = tree - line + l_i verified spanning trees.
    """
    if len(g.legs) != 2:
        raise GraphError("overlapping loops need a two-legged graph")
    if not g.even_incidence():
        raise GraphError("overlapping loops need even incidence numbers")
    if not is_one_pi(g):
        raise GraphError("overlapping loops need a 1PI graph")
    ext = g.external_vertices()
    if len(ext) != 2:
        raise GraphError("both legs on one vertex: the external path is empty")
    theta = tree_path(g, tree, ext[0], ext[1])
    if line_id not in theta:
        raise GraphError("line is not on the external tree path")
    u, v = g.lines[line_id]
    # components of tree - line
    comp = _tree_components(g, tree, line_id)
    pi = _shortest_path_lines(g, u, v, skip={line_id})
    l1 = _first_crossing(g, pi, comp, exclude={line_id})
    pi2 = _shortest_path_lines(g, u, v, skip={line_id, l1})
    l2 = _first_crossing(g, pi2, comp, exclude={line_id, l1})
    t1 = tuple(sorted(set(tree) - {line_id} | {l1}))
    t2 = tuple(sorted(set(tree) - {line_id} | {l2}))
    for t in (t1, t2):
        if not _is_spanning_tree(g, t):
            raise GraphError("constructed swap is not a spanning tree")
    return l1, l2, t1, t2


def _tree_components(g: FeynmanGraph, tree, line_id: int):
    """Vertex bipartition of tree - line as a membership array."""
    adj = {v: [] for v in range(g.n_vertices)}
    for i in tree:
        if i == line_id:
            continue
        u, w = g.lines[i]
        adj[u].append(w)
        adj[w].append(u)
    side = np.zeros(g.n_vertices, dtype=bool)
    start = g.lines[line_id][0]
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        side[v] = True
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return side


def _first_crossing(g: FeynmanGraph, path_lines, side, exclude):
    for i in path_lines:
        u, w = g.lines[i]
        if side[u] != side[w] and i not in exclude:
            return i
    raise GraphError("no crossing line on the connecting path")


# -- string collapse ---------------------------------------------------------


@dataclass(frozen=True)
class TwoLeggedBlock:
    vertices: frozenset
    internal_lines: frozenset


@dataclass(frozen=True)
class StringSpec:
    """connectors[0] B0 connectors[1] B1 ... connectors[-1]; blocks between."""

    connectors: tuple
    blocks: tuple


def collapse_strings(g: FeynmanGraph, strings):
    """Replace each string of two-legged blocks by a single line.

    Returns (gamma, annotations) where annotations maps each line id of the
    collapsed graph to the StringSpec it replaces (None for untouched
    lines).  The blocks' vertices and internal lines disappear into the
    annotation; the surviving graph keeps only four-legged vertices.
    """
    strings = tuple(strings)
    removed_lines = set()
    removed_vertices = set()
    new_edges = []  # (endpoints, annotation)
    for spec in strings:
        if len(spec.connectors) != len(spec.blocks) + 1:
            raise GraphError("string needs one more connector than blocks")
        block_vertices = set()
        for blk in spec.blocks:
            if block_vertices & blk.vertices:
                raise GraphError("string blocks overlap")
            block_vertices |= blk.vertices
        chain_vertices = set()
        for i in spec.connectors:
            chain_vertices.update(g.lines[i])
        ends = sorted(chain_vertices - block_vertices)
        if len(ends) != 2:
            raise GraphError("string does not have exactly two free endpoints")
        # every block must be two-legged: exactly its two adjacent connectors
        # leave the block, everything else stays inside
        for k, blk in enumerate(spec.blocks):
            external = []
            for idx, (u, v) in enumerate(g.lines):
                if idx in blk.internal_lines:
                    if not (u in blk.vertices and v in blk.vertices):
                        raise GraphError("internal line leaves its block")
                    continue
                if (u in blk.vertices) != (v in blk.vertices):
                    external.append(idx)
                elif u in blk.vertices and v in blk.vertices:
                    raise GraphError("line inside block not declared internal")
            if sorted(external) != sorted([spec.connectors[k], spec.connectors[k + 1]]):
                raise GraphError("block is not two-legged with the declared connectors")
            if any(leg in blk.vertices for leg in g.legs):
                raise GraphError("external leg attached inside a collapsed block")
        overlap = removed_lines & (set(spec.connectors) | {j for b in spec.blocks for j in b.internal_lines})
        if overlap:
            raise GraphError("strings share lines")
        removed_lines.update(spec.connectors)
        for blk in spec.blocks:
            removed_lines.update(blk.internal_lines)
        removed_vertices |= block_vertices
        new_edges.append(((ends[0], ends[1]), spec))

    keep_vertices = [v for v in range(g.n_vertices) if v not in removed_vertices]
    relabel = {v: i for i, v in enumerate(keep_vertices)}
    lines = []
    annotations = {}
    for idx, (u, v) in enumerate(g.lines):
        if idx in removed_lines:
            continue
        lines.append(tuple(sorted((relabel[u], relabel[v]))))
        annotations[len(lines) - 1] = None
    for (u, v), spec in new_edges:
        lines.append(tuple(sorted((relabel[u], relabel[v]))))
        annotations[len(lines) - 1] = spec
    gamma = FeynmanGraph(
        n_vertices=len(keep_vertices),
        lines=tuple(lines),
        legs=tuple(relabel[v] for v in g.legs),
    )
    return gamma, annotations


# -- GN trees and scale labellings --------------------------------------------


@dataclass(frozen=True)
class Fork:
    fork_id: int
    kind: str                 # "root" | "r" | "c" | "plain"
    lines: frozenset          # subgraph = set of line ids of g
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in ("root", "r", "c", "plain"):
            raise GraphError(f"unknown fork kind {self.kind!r}")


@dataclass(frozen=True)
class GnTree:
    root: Fork

    def forks_preorder(self):
        out = []

        def walk(f):
            out.append(f)
            for c in f.children:
                walk(c)

        walk(self.root)
        return out

    def validate(self, g: FeynmanGraph):
        """Subgraph nesting must mirror the tree order; the root is all of g."""
        if self.root.kind != "root":
            raise GraphError("tree root must have kind 'root'")
        if self.root.lines != frozenset(range(len(g.lines))):
            raise GraphError("root fork must carry the whole graph")

        def walk(f):
            for c in f.children:
                if not c.lines < f.lines:
                    raise GraphError("child subgraph must nest strictly inside its parent")
                walk(c)
            kids = list(f.children)
            for a, b in itertools.combinations(kids, 2):
                if a.lines & b.lines:
                    raise GraphError("sibling subgraphs must be disjoint")

        walk(self.root)
        return True


@dataclass(frozen=True)
class ScaleLabelling:
    fork_scales: dict
    line_scales: dict
    root_scale: int
    cutoff: int

    def as_dict(self):
        return {
            "fork_scales": {str(k): v for k, v in self.fork_scales.items()},
            "line_scales": {str(k): v for k, v in self.line_scales.items()},
            "root_scale": self.root_scale,
            "cutoff": self.cutoff,
        }


def _fork_scale_range(fork: Fork, parent_scale: int, cutoff: int):
    """Admissible scales by the fork's own kind: counterterm forks sit at or
    below the parent scale, everything else strictly above (capped at 1)."""
    if fork.kind == "c":
        return range(cutoff, parent_scale + 1)
    return range(parent_scale + 1, 2)


def enumerate_labellings(tree: GnTree, g: FeynmanGraph, j: int, cutoff: int):
    """All scale labellings with root scale j and infrared cutoff I = cutoff.

    Line scales are derived: j_l equals the scale of the smallest subgraph
    containing the line.  Deterministic order (preorder forks, ascending
    scales).
    """
    tree.validate(g)
    if not cutoff <= j < 0:
        raise GraphError("need I <= j < 0")
    forks = tree.forks_preorder()
    out = []

    def assign(idx, scales):
        if idx == len(forks):
            fork_scales = {f.fork_id: s for f, s in zip(forks, scales)}
            line_scales = {}
            for line in range(len(g.lines)):
                containing = [f for f in forks if line in f.lines]
                smallest = min(containing, key=lambda f: len(f.lines))
                line_scales[line] = fork_scales[smallest.fork_id]
            out.append(
                ScaleLabelling(
                    fork_scales=fork_scales,
                    line_scales=line_scales,
                    root_scale=j,
                    cutoff=cutoff,
                )
            )
            return
        fork = forks[idx]
        if fork.kind == "root":
            assign(idx + 1, scales + [j])
            return
        parent = _parent_of(tree, fork)
        parent_scale = scales[forks.index(parent)]
        for s in _fork_scale_range(fork, parent_scale, cutoff):
            assign(idx + 1, scales + [s])

    assign(0, [])
    return out


def _parent_of(tree: GnTree, fork: Fork):
    for f in tree.forks_preorder():
        if fork in f.children:
            return f
    raise GraphError("fork has no parent in this tree")


# -- corpus enumeration --------------------------------------------------------


def canonical_form(g: FeynmanGraph):
    """Minimum lexicographic encoding over vertex permutations."""
    n = g.n_vertices
    best = None
    for perm in itertools.permutations(range(n)):
        mat = [[0] * n for _ in range(n)]
        for u, v in g.lines:
            a, b = sorted((perm[u], perm[v]))
            mat[a][b] += 1
        ext = [0] * n
        for leg in g.legs:
            ext[perm[leg]] += 1
        enc = (tuple(tuple(row) for row in mat), tuple(ext))
        if best is None or enc < best:
            best = enc
    return best


def enumerate_two_legged_1pi(max_vertices: int):
    """All connected two-legged 1PI multigraphs with four-valent vertices.

    External legs count toward the incidence of 4; graphs are deduplicated
    by canonical form.  Brute-force enumeration, max_vertices <= 4.
    """
    if max_vertices > 4:
        raise GraphError("corpus enumeration supports max_vertices <= 4")
    out = []
    seen = set()
    for n in range(1, max_vertices + 1):
        pairs = [(u, v) for u in range(n) for v in range(u, n)]
        for legs in itertools.combinations_with_replacement(range(n), 2):
            ext = [0] * n
            for leg in legs:
                ext[leg] += 1
            degrees = [4 - ext[v] for v in range(n)]
            if any(d < 0 for d in degrees):
                continue
            for counts in _line_multisets(pairs, degrees):
                lines = []
                for (u, v), c in zip(pairs, counts):
                    lines.extend([(u, v)] * c)
                g = FeynmanGraph(n_vertices=n, lines=tuple(lines), legs=tuple(legs))
                if not g.is_connected():
                    continue
                if not is_one_pi(g):
                    continue
                key = canonical_form(g)
                if key in seen:
                    continue
                seen.add(key)
                out.append(g)
    return out


def _line_multisets(pairs, degrees):
    """All multiplicity vectors over vertex pairs matching the degree sequence."""
    n = len(degrees)

    def rec(idx, remaining):
        if idx == len(pairs):
            if all(r == 0 for r in remaining):
                yield []
            return
        u, v = pairs[idx]
        cap = remaining[u] // 2 if u == v else min(remaining[u], remaining[v])
        for c in range(cap + 1):
            nxt = list(remaining)
            if u == v:
                nxt[u] -= 2 * c
            else:
                nxt[u] -= c
                nxt[v] -= c
            yield from (([c] + rest) for rest in rec(idx + 1, nxt))

    yield from rec(0, list(degrees))


# -- propagator-bound exponent and derivative routing ---------------------------


def propagator_bound_exponent(j_line: int, w: int, g_count: int, gamma: float) -> float:
    """Exponent of M in the string-propagator bound: -j(1+w) + j*gamma*g.

    ``w`` is the derivative order (0 or 1), ``g_count`` the number of c-forks
    plus single-scale insertions on the string; symbolic bookkeeping only.
    """
    if w not in (0, 1):
        raise GraphError("propagator bound is stated for w in {0, 1}")
    return -j_line * (1 + w) + j_line * gamma * g_count


@dataclass
class RoutingState:
    tree: tuple
    differentiated: set = field(default_factory=set)
    vertex_hits: dict = field(default_factory=dict)
    schedule: list = field(default_factory=list)


def legal_targets(g: FeynmanGraph, state: RoutingState):
    """Where the next external-momentum derivative may fall."""
    ext = g.external_vertices()
    targets = [("vertex", v) for v in range(g.n_vertices) if state.vertex_hits.get(v, 0) < 2]
    if len(ext) == 2:
        theta = tree_path(g, state.tree, ext[0], ext[1])
        targets += [("line", i) for i in theta]
    return targets


def route_derivative(g: FeynmanGraph, state: RoutingState, target, protect_future=True):
    """Apply one derivative; on a line hit, swap the spanning tree so that no
    differentiated line can be hit again (the swap is skipped once the
    derivative budget is exhausted, where no protection is needed)."""
    kind, obj = target
    if kind == "vertex":
        hits = state.vertex_hits.get(obj, 0)
        if hits >= 2:
            raise GraphError("vertex momentum already rerouted (two hits)")
        state.vertex_hits[obj] = hits + 1
        state.schedule.append((target, state.tree))
        return state
    line = obj
    ext = g.external_vertices()
    theta = tree_path(g, state.tree, ext[0], ext[1])
    if line not in theta:
        raise GraphError("derivative aimed at a line off the external path")
    if line in state.differentiated:
        raise GraphError("planner invariant broken: line already differentiated")
    state.differentiated.add(line)
    if protect_future:
        l1, l2, t1, t2 = overlapping_loops(g, state.tree, line)
        for cand_line, cand_tree in ((l1, t1), (l2, t2)):
            if cand_line not in state.differentiated:
                state.tree = cand_tree
                break
        else:
            raise GraphError("no admissible tree swap (should be impossible)")
    state.schedule.append((target, state.tree))
    return state


def route_derivatives(g: FeynmanGraph, tree, targets):
    """Run the three-derivative routing plan; returns the final state.

    Invariants while derivatives remain: no line differentiated twice, no
    vertex hit three times, and the current tree never contains a
    differentiated line.  The final derivative needs no protective swap.
    """
    if len(targets) > 3:
        raise GraphError("derivative budget is 3")
    state = RoutingState(tree=tuple(tree))
    for i, t in enumerate(targets):
        protect = i < 2  # the third derivative is the last one possible
        state = route_derivative(g, state, t, protect_future=protect)
        if protect and state.differentiated & set(state.tree):
            raise GraphError("differentiated line re-entered the tree")
    return state
