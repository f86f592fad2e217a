"""Per-subdag dependency-graph construction: the four-phase fairness task.

Phase 1 classifies support and computes the pairwise weight matrix (the
dominant cost, a pure function of the snapshot). Phase 2 filters the active
set through the cumulative chain and adds directed edges. Phase 3 decomposes
into SCCs, truncates past the anchor, and forwards the extended chain.
Phase 4 finalizes or parks.

Two mechanisms keep concurrent per-subdag tasks single-graph-safe: solid
claims recorded synchronously at snapshot extraction, and the cumulative
chain of retained vertices handed from each task to the next.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from fractions import Fraction
from math import ceil

from .params import edge_threshold, solid_threshold
from .types import CommitRecord, FinalOrder


def count_threshold(tau) -> int:
    """Smallest integer count satisfying count >= tau (tau may be fractional)."""
    return int(ceil(Fraction(tau)))


@dataclass
class Snapshot:
    """Per-replica committed-and-unclaimed contribution orders at subdag r."""

    r: int
    orders: dict[int, tuple[str, ...]]


@dataclass
class WeightReport:
    """Phase-1 output: support classes plus the cached pairwise weight matrix.

    ``weights`` is a flat m*m count matrix over ``admitted`` (sorted by
    digest): weights[i*m + j] = number of snapshot orders placing admitted[i]
    before admitted[j].
    """

    r: int
    admitted: list[str]
    solid: frozenset[str]
    support: dict[str, int]
    weights: array

    def weight(self, u: str, v: str) -> int:
        m = len(self.admitted)
        i, j = self.admitted.index(u), self.admitted.index(v)
        return self.weights[i * m + j]


@dataclass
class DepGraph:
    """Dependency graph for one subdag (vertices indexed into ``nodes``)."""

    r: int
    nodes: list[str]  # sorted by digest
    adj: list[list[int]]
    missing: list[tuple[str, str]]
    solids: frozenset[str]
    prior_chain: frozenset[str]
    anchor: int = -1  # 1-based SCC count up to anchor; 0 = no solid anywhere


@dataclass
class Finalized:
    order: FinalOrder


@dataclass
class Parked:
    graph: DepGraph


class CumulativeState:
    """Main-thread cumulative ordering state shared across subdag tasks.

    Mutated only by extract_snapshot and apply_result, which run serially in
    commit order.
    """

    def __init__(self, n: int, f: int, gamma) -> None:
        self.n = n
        self.f = f
        self.gamma = gamma
        self.pending: dict[int, list[str]] = {}
        self.seen: dict[int, set[str]] = {}
        self.proposed: set[str] = set()
        self.claims: dict[int, frozenset[str]] = {}
        self.last_extracted = 0
        self.applied: set[int] = set()

    def _ingest(self, record: CommitRecord) -> None:
        for vr in record.vertices:
            plist = self.pending.setdefault(vr.author, [])
            pseen = self.seen.setdefault(vr.author, set())
            for digest, _loi in vr.entries:
                if digest in self.proposed or digest in pseen:
                    continue
                pseen.add(digest)
                plist.append(digest)

    def snapshot_solids(self, orders: dict[int, tuple[str, ...]]) -> frozenset[str]:
        tau_i = count_threshold(edge_threshold(self.n, self.f, self.gamma))
        tau_s = solid_threshold(self.n, self.f)
        support: dict[str, int] = {}
        for author in sorted(orders):
            for d in orders[author]:
                support[d] = support.get(d, 0) + 1
        return frozenset(
            d for d, c in support.items() if c >= tau_s and c >= tau_i
        )


def extract_snapshot(state: CumulativeState, record: CommitRecord) -> tuple[Snapshot, frozenset[str]]:
    """Synchronous main-thread step: ingest a committed subdag and cut L_i.

    The snapshot excludes permanently proposed transactions and every active
    solid claim; the snapshot's own solid set is recorded as this subdag's
    claim before the task is dispatched.
    """
    if record.r != state.last_extracted + 1:
        raise ValueError(
            f"subdag {record.r} extracted out of order (expected {state.last_extracted + 1})"
        )
    state.last_extracted = record.r
    state._ingest(record)
    claimed: set[str] = set()
    for c in state.claims.values():
        claimed |= c
    orders = {
        author: tuple(d for d in plist if d not in claimed)
        for author, plist in sorted(state.pending.items())
        if plist
    }
    orders = {a: o for a, o in orders.items() if o}
    claim = state.snapshot_solids(orders)
    state.claims[record.r] = claim
    return Snapshot(record.r, orders), claim


def apply_result(state: CumulativeState, r: int, k_set) -> None:
    """Promote a finished task's retained vertices and drop its claim."""
    if r in state.applied:
        raise ValueError(f"result for subdag {r} applied twice")
    state.applied.add(r)
    retained = set(k_set)
    state.proposed |= retained
    if retained:
        for author in list(state.pending):
            state.pending[author] = [d for d in state.pending[author] if d not in retained]
    state.claims.pop(r, None)


# -- Phase 1 ------------------------------------------------------------------


def phase1_weights(snapshot: Snapshot, n: int, f: int, gamma) -> WeightReport:
    """Support classification plus pairwise weight matrix.

    Pure function of the snapshot: no shared-state reads, rerunnable.
    """
    tau_i = count_threshold(edge_threshold(n, f, gamma))
    tau_s = solid_threshold(n, f)
    support: dict[str, int] = {}
    for author in sorted(snapshot.orders):
        for d in snapshot.orders[author]:
            support[d] = support.get(d, 0) + 1
    admitted = sorted(d for d, c in support.items() if c >= tau_i)
    solid = frozenset(d for d in admitted if support[d] >= tau_s)
    idx = {d: k for k, d in enumerate(admitted)}
    m = len(admitted)
    weights = array("I", bytes(4 * m * m))
    for author in sorted(snapshot.orders):
        fi = [idx[d] for d in snapshot.orders[author] if d in idx]
        for a in range(len(fi)):
            base = fi[a] * m
            for b in range(a + 1, len(fi)):
                weights[base + fi[b]] += 1
    return WeightReport(snapshot.r, admitted, solid, support, weights)


# -- Phase 2 ------------------------------------------------------------------


def phase2_build_graph(report: WeightReport, prior_chain: frozenset[str], tau) -> DepGraph:
    """Filter through the cumulative chain, then add edges from cached weights.

    An edge is installed toward the direction whose cached weight reaches tau;
    at an exact tie the smaller digest is the source. Pairs below tau in both
    directions become missing edges.
    """
    tau_i = count_threshold(tau)
    keep = [d for d in report.admitted if d not in prior_chain]
    idx_of = {d: k for k, d in enumerate(report.admitted)}
    oi = [idx_of[d] for d in keep]
    m = len(report.admitted)
    w = report.weights
    k = len(keep)
    adj: list[list[int]] = [[] for _ in range(k)]
    missing: list[tuple[str, str]] = []
    for a in range(k):
        ia = oi[a]
        row = ia * m
        for b in range(a + 1, k):
            ib = oi[b]
            wab = w[row + ib]
            wba = w[ib * m + ia]
            if wab >= tau_i or wba >= tau_i:
                # keep[a] < keep[b] by digest, so a tie resolves toward the
                # smaller digest regardless of evaluation order
                if wab >= wba:
                    adj[a].append(b)
                else:
                    adj[b].append(a)
            else:
                missing.append((keep[a], keep[b]))
    solids = frozenset(d for d in keep if d in report.solid)
    return DepGraph(report.r, keep, adj, missing, solids, prior_chain)


# -- SCC machinery -------------------------------------------------------------


def tarjan_scc(nodes: list[str], adj: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan; returns SCCs (index lists) in a valid topological order.

    Deterministic given the vertex order of ``nodes`` (callers pass digests
    ascending).
    """
    n = len(nodes)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work: list[tuple[int, int]] = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            neighbors = adj[v]
            for i in range(pi, len(neighbors)):
                w = neighbors[i]
                if index[w] == -1:
                    work[-1] = (v, i + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            if low[v] == index[v]:
                scc = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    scc.append(w)
                    if w == v:
                        break
                scc.sort()
                sccs.append(scc)
            work.pop()
            if work:
                u, _ = work[-1]
                if low[v] < low[u]:
                    low[u] = low[v]
    sccs.reverse()  # Tarjan emits in reverse topological order
    return sccs


def condensation_order(
    sccs: list[list[int]], adj: list[list[int]], nodes: list[str]
) -> list[list[int]]:
    """Canonical topological order of the condensation.

    Kahn's algorithm, ties broken by smallest member digest. The anchor
    truncation rule depends on which valid topological order is used, so this
    canonical rule is part of the protocol, not an implementation detail.
    """
    import heapq

    scc_of = {}
    for k_, scc in enumerate(sccs):
        for v in scc:
            scc_of[v] = k_
    out_edges: list[set[int]] = [set() for _ in sccs]
    indeg = [0] * len(sccs)
    for v in range(len(nodes)):
        a = scc_of[v]
        for w in adj[v]:
            b = scc_of[w]
            if a != b and b not in out_edges[a]:
                out_edges[a].add(b)
                indeg[b] += 1
    keys = [min(nodes[v] for v in scc) for scc in sccs]
    ready = [(keys[i], i) for i in range(len(sccs)) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(i)
        for b in sorted(out_edges[i]):
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, (keys[b], b))
    assert len(order) == len(sccs), "condensation contained a cycle"
    return [sccs[i] for i in order]


# -- Phase 3 ------------------------------------------------------------------


def phase3_anchor(graph: DepGraph) -> tuple[DepGraph, int, list[str], frozenset[str]]:
    """SCC decomposition, anchor truncation, and chain forwarding.

    The anchor is the last SCC (canonical condensation order) containing a
    solid vertex; everything after it returns to pending. With no solid vertex
    nothing is retained and the chain passes through unchanged.
    """
    sccs = condensation_order(tarjan_scc(graph.nodes, graph.adj), graph.adj, graph.nodes)
    solid_idx = {i for i, d in enumerate(graph.nodes) if d in graph.solids}
    anchor = 0
    for j, scc in enumerate(sccs, 1):
        if any(v in solid_idx for v in scc):
            anchor = j
    retained = sorted(v for scc in sccs[:anchor] for v in scc)
    remap = {v: i for i, v in enumerate(retained)}
    nodes = [graph.nodes[v] for v in retained]
    adj = [
        sorted(remap[w] for w in graph.adj[v] if w in remap) for v in retained
    ]
    kept_set = set(nodes)
    missing = [(u, v) for u, v in graph.missing if u in kept_set and v in kept_set]
    truncated = DepGraph(
        graph.r, nodes, adj, missing,
        frozenset(d for d in graph.solids if d in kept_set),
        graph.prior_chain, anchor,
    )
    token = frozenset(graph.prior_chain | kept_set)
    return truncated, anchor, nodes, token


# -- Phase 4 ------------------------------------------------------------------


def phase4_dispatch(graph: DepGraph) -> Finalized | Parked:
    """Finalize immediately when nothing is missing, otherwise park."""
    if not graph.missing:
        from .finalize import finalize_order

        return Finalized(finalize_order(graph))
    return Parked(graph)
