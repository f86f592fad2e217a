"""Independent reference implementations and trace checkers.

Everything here is deliberately written against different machinery than the
pipeline modules: support and weights by brute-force pair counting, SCCs by
reachability closure over bitmasks, votes replayed from the recorded stream.
Only the domain types are shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import ceil

import numpy as np

from .trace import RunTrace
from .types import CommitRecord, FinalOrder


# -- graph primitives (oracle-side) ---------------------------------------------


def reachability_scc(nodes: list[str], edges: set[tuple[str, str]]) -> list[list[str]]:
    """SCCs by transitive-closure bitmasks, in canonical condensation order.

    Canonical order: Kahn's algorithm over the condensation with ties broken
    by smallest member digest (the same protocol rule the pipeline follows,
    implemented independently).
    """
    m = len(nodes)
    idx = {d: i for i, d in enumerate(nodes)}
    succ = [0] * m
    for u, v in edges:
        succ[idx[u]] |= 1 << idx[v]
    reach = list(succ)
    changed = True
    while changed:
        changed = False
        for i in range(m):
            acc = reach[i]
            w = reach[i]
            while w:
                j = (w & -w).bit_length() - 1
                acc |= reach[j]
                w &= w - 1
            if acc != reach[i]:
                reach[i] = acc
                changed = True
    assigned = [False] * m
    sccs: list[list[str]] = []
    for i in range(m):
        if assigned[i]:
            continue
        members = [i]
        assigned[i] = True
        for j in range(i + 1, m):
            if not assigned[j] and (reach[i] >> j) & 1 and (reach[j] >> i) & 1:
                members.append(j)
                assigned[j] = True
        sccs.append(sorted(members))
    # condensation + canonical topological order
    comp_of = {}
    for k, scc in enumerate(sccs):
        for v in scc:
            comp_of[v] = k
    out_edges: list[set[int]] = [set() for _ in sccs]
    indeg = [0] * len(sccs)
    for u, v in edges:
        a, b = comp_of[idx[u]], comp_of[idx[v]]
        if a != b and b not in out_edges[a]:
            out_edges[a].add(b)
            indeg[b] += 1
    keys = [min(nodes[v] for v in scc) for scc in sccs]
    order: list[int] = []
    remaining = set(range(len(sccs)))
    while remaining:
        candidates = [k for k in remaining if indeg[k] == 0]
        nxt = min(candidates, key=lambda k: keys[k])
        remaining.discard(nxt)
        order.append(nxt)
        for b in out_edges[nxt]:
            indeg[b] -= 1
    return [[nodes[v] for v in sccs[k]] for k in order]


# -- serial reference -------------------------------------------------------------


@dataclass
class PairEvidence:
    """Per-pair observations collected while the serial reference runs."""

    weights: list[tuple[int, int]] = field(default_factory=list)  # (w_uv, w_vu), u < v
    vote_tally: tuple[int, int] | None = None


@dataclass
class SerialOutcome:
    orders: list[FinalOrder]
    stopped_at: int | None  # first subdag whose votes never sufficed, if any
    graphed_in: dict[str, int]  # digest -> subdag whose graph retained it
    evidence: dict[tuple[str, str], PairEvidence]
    vote_mismatches: list[dict]


def serial_reference(records: list[CommitRecord], n: int, f: int, gamma) -> SerialOutcome:
    """Serial execution of the fairness layer: each subdag's task completes,
    including vote resolution, before the next subdag is touched.

    Votes are replayed from the committed stream (scanning forward when a
    graph parks). Emits the same total order as the concurrent pipeline.
    """
    gamma = Fraction(gamma) if not isinstance(gamma, Fraction) else gamma
    tau = Fraction(n) * (1 - gamma) + f + 1
    tau_i = int(ceil(tau))
    tau_s = n - 2 * f
    pending: dict[int, list[str]] = {}
    seen: dict[int, set[str]] = {}
    proposed: set[str] = set()
    # precollect the vote stream in commit order, first vote per (author, target)
    votes_for: dict[int, dict[int, tuple]] = {}
    for rec in records:
        for vote in rec.votes():
            by_author = votes_for.setdefault(vote.target_r, {})
            if vote.author not in by_author:
                by_author[vote.author] = vote.edges
    orders: list[FinalOrder] = []
    graphed_in: dict[str, int] = {}
    evidence: dict[tuple[str, str], PairEvidence] = {}
    mismatches: list[dict] = []
    stopped = None

    for rec in records:
        for vr in rec.vertices:
            lst = pending.setdefault(vr.author, [])
            s = seen.setdefault(vr.author, set())
            for digest, _loi in vr.entries:
                if digest in proposed or digest in s:
                    continue
                s.add(digest)
                lst.append(digest)
        support: dict[str, int] = {}
        for author in pending:
            for d in pending[author]:
                support[d] = support.get(d, 0) + 1
        admitted = sorted(d for d, c in support.items() if c >= tau_i)
        admitted_set = set(admitted)
        solid = {d for d in admitted if support[d] >= tau_s}
        wcount: dict[tuple[str, str], int] = {}
        for author in sorted(pending):
            filtered = [d for d in pending[author] if d in admitted_set]
            for u, v in combinations(filtered, 2):
                wcount[(u, v)] = wcount.get((u, v), 0) + 1
        edges: set[tuple[str, str]] = set()
        missing: list[tuple[str, str]] = []
        for u, v in combinations(admitted, 2):
            wuv = wcount.get((u, v), 0)
            wvu = wcount.get((v, u), 0)
            ev = evidence.setdefault((u, v), PairEvidence())
            ev.weights.append((wuv, wvu))
            if wuv >= tau_i or wvu >= tau_i:
                edges.add((u, v) if wuv >= wvu else (v, u))
            else:
                missing.append((u, v))
        sccs = reachability_scc(admitted, edges)
        anchor = 0
        for j, scc in enumerate(sccs, 1):
            if any(d in solid for d in scc):
                anchor = j
        retained = {d for scc in sccs[:anchor] for d in scc}
        for d in retained:
            graphed_in[d] = rec.r
        proposed |= retained
        for author in pending:
            pending[author] = [d for d in pending[author] if d not in retained]
        live_missing = [(u, v) for u, v in missing if u in retained and v in retained]
        if live_missing:
            by_author = votes_for.get(rec.r, {})
            authors = list(by_author)
            resolved = None
            for k in range(n - f, len(authors) + 1):
                tallies = {}
                for u, v in live_missing:
                    a = b = 0
                    for author in authors[:k]:
                        for x, y in by_author[author]:
                            if (x, y) == (u, v):
                                a += 1
                            elif (x, y) == (v, u):
                                b += 1
                    tallies[(u, v)] = (a, b)
                if all(max(t) >= tau_i for t in tallies.values()):
                    resolved = tallies
                    break
            if resolved is None:
                stopped = rec.r
                break
            for (u, v), (a, b) in resolved.items():
                ev = evidence.setdefault((u, v), PairEvidence())
                ev.vote_tally = (a, b)
                edges.add((u, v) if a >= b else (v, u))
            # sanity: every honest vote should cover exactly the missing set
            for author in authors:
                covered = {
                    (x, y) if x <= y else (y, x) for x, y in by_author[author]
                }
                if not set(live_missing) <= covered:
                    mismatches.append({"r": rec.r, "author": author})
        kept_edges = {(u, v) for u, v in edges if u in retained and v in retained}
        final_sccs = reachability_scc(sorted(retained), kept_edges)
        digests: list[str] = []
        batches: list[tuple[int, int]] = []
        for scc in final_sccs:
            start = len(digests)
            digests.extend(sorted(scc))
            batches.append((start, len(digests)))
        orders.append(FinalOrder(rec.r, tuple(digests), tuple(batches)))
    return SerialOutcome(orders, stopped, graphed_in, evidence, mismatches)


# -- gamma-batch-order-fairness checker -----------------------------------------


@dataclass(frozen=True)
class FairnessViolation:
    first: str  # the transaction that gamma*n replicas received first
    second: str
    supporters: int
    first_batch: int
    second_batch: int


@dataclass
class BatchOfReport:
    violations: list[FairnessViolation]
    pairs_checked: int
    pairs_skipped_scope: int  # not received by all replicas
    pairs_skipped_unemitted: int

    @property
    def ok(self) -> bool:
        return not self.violations


def batch_ranks(emitted: list[FinalOrder]) -> dict[str, int]:
    """Global batch index per emitted transaction (batches = SCC runs)."""
    rank: dict[str, int] = {}
    b = 0
    for order in emitted:
        for s, e in order.batches:
            for d in order.digests[s:e]:
                rank[d] = b
            b += 1
    return rank


def check_batch_of(trace: RunTrace, emitted: list[FinalOrder], gamma) -> BatchOfReport:
    """Brute force over all ordered pairs of transactions received by every
    replica: if >= gamma*n replicas received u before v, u's emitted batch
    must be no later than v's."""
    gamma = Fraction(gamma) if not isinstance(gamma, Fraction) else gamma
    n = trace.n_replicas()
    need = int(ceil(gamma * n))
    receive = trace.receive_orders()
    common = set.intersection(*(set(o) for o in receive.values())) if receive else set()
    all_txs = set().union(*(set(o) for o in receive.values())) if receive else set()
    total_pairs = len(all_txs) * (len(all_txs) - 1) // 2
    rank = batch_ranks(emitted)
    scoped = sorted(common)
    emitted_scoped = [d for d in scoped if d in rank]
    skipped_unemitted = len(scoped) * (len(scoped) - 1) // 2 - len(emitted_scoped) * (
        len(emitted_scoped) - 1
    ) // 2
    txs = emitted_scoped
    t = len(txs)
    if t < 2:
        return BatchOfReport([], 0, total_pairs, skipped_unemitted)
    pos = np.zeros((n, t), dtype=np.int32)
    for i in range(n):
        where = {d: k for k, d in enumerate(receive[i])}
        for k, d in enumerate(txs):
            pos[i, k] = where[d]
    counts = np.zeros((t, t), dtype=np.int16)
    for i in range(n):
        counts += pos[i, :, None] < pos[i, None, :]
    b = np.array([rank[d] for d in txs], dtype=np.int32)
    bad = (counts >= need) & (b[:, None] > b[None, :])
    violations = [
        FairnessViolation(
            txs[u], txs[v], int(counts[u, v]), int(b[u]), int(b[v])
        )
        for u, v in np.argwhere(bad)
    ]
    checked = t * (t - 1) // 2
    return BatchOfReport(
        violations, checked, total_pairs - len(scoped) * (len(scoped) - 1) // 2,
        skipped_unemitted,
    )


# -- single-graph and LOI-monotonicity checkers ----------------------------------


def check_single_graph(trace: RunTrace) -> tuple[bool, str | None]:
    """Each digest enters at most one retained graph K_r."""
    seen: dict[str, int] = {}
    for r, k_digests in trace.retained_sets():
        for d in k_digests:
            if d in seen:
                return False, d
            seen[d] = r
    return True, None


def check_loi_monotone(trace: RunTrace) -> tuple[bool, dict | None]:
    """Per correct replica, committed contributions walked in subdag commit
    order carry strictly increasing LOIs (rests on the self-referencing rule)."""
    committed = trace.committed_lois()
    for replica in trace.correct_replicas():
        last = -1
        for digest, loi in committed[replica]:
            if loi <= last:
                return False, {"replica": replica, "tx": digest, "loi": loi, "prev": last}
            last = loi
    return True, None


def check_crashed_prefix_monotone(trace: RunTrace) -> tuple[bool, dict | None]:
    """Crash-faulted replicas are honest until they stop; their committed
    stream must be ascending too."""
    committed = trace.committed_lois()
    _, crashes = trace.fault_roles()
    for replica in crashes:
        last = -1
        for digest, loi in committed[replica]:
            if loi <= last:
                return False, {"replica": replica, "tx": digest, "loi": loi}
            last = loi
    return True, None


# -- adversarial Dist histogram ----------------------------------------------------


@dataclass
class DistRow:
    dist: int
    pair_count: int
    reversed_count: int

    @property
    def reversed_fraction(self) -> float:
        return self.reversed_count / self.pair_count if self.pair_count else 0.0


def dist_pair_table(
    trace: RunTrace, emitted: list[FinalOrder]
) -> list[tuple[str, str, int, bool]]:
    """Per-pair adversarial-closeness table: (u, v, Dist, reversed).

    Dist = |#(u before v) - #(v before u)| over all N reported orders
    (Byzantine reports included). A pair is reversed when its inter-batch
    emitted order disagrees with the honest-majority receive direction;
    same-batch pairs count as not reversed. Pairs with a tied honest count
    are excluded (no majority direction exists to disagree with)."""
    n = trace.n_replicas()
    reported = trace.reported_orders()
    receive = trace.receive_orders()
    correct = trace.correct_replicas()
    rank = batch_ranks(emitted)
    # scope: reported by all N replicas (keeps Dist parity exact) and emitted
    common = set.intersection(*(set(o) for o in reported.values()))
    txs = sorted(d for d in common if d in rank)
    t = len(txs)
    if t < 2:
        return []
    rpos = np.zeros((n, t), dtype=np.int32)
    for i in range(n):
        where = {d: k for k, d in enumerate(reported[i])}
        for k, d in enumerate(txs):
            rpos[i, k] = where[d]
    fwd = np.zeros((t, t), dtype=np.int16)
    for i in range(n):
        fwd += rpos[i, :, None] < rpos[i, None, :]
    dist = np.abs(fwd - fwd.T)
    hc = np.zeros((t, t), dtype=np.int16)
    for i in correct:
        where = {d: k for k, d in enumerate(receive[i])}
        cpos = np.array([where[d] for d in txs], dtype=np.int32)
        hc += cpos[:, None] < cpos[None, :]
    b = np.array([rank[d] for d in txs], dtype=np.int32)
    majority = hc > hc.T  # honest majority prefers u before v
    reversed_ = majority & (b[:, None] > b[None, :])
    table: list[tuple[str, str, int, bool]] = []
    iu = np.triu_indices(t, k=1)
    for u, v in zip(*iu):
        if hc[u, v] == hc[v, u]:
            continue
        table.append(
            (txs[u], txs[v], int(dist[u, v]), bool(reversed_[u, v] or reversed_[v, u]))
        )
    return table


def dist_histogram(trace: RunTrace, emitted: list[FinalOrder]) -> list[DistRow]:
    """Bucket the pair table by Dist in {N mod 2, ..., N} in steps of 2."""
    n = trace.n_replicas()
    rows = {d: DistRow(d, 0, 0) for d in range(n % 2, n + 1, 2)}
    for _u, _v, d_val, rev in dist_pair_table(trace, emitted):
        row = rows.get(d_val)
        if row is None:
            continue
        row.pair_count += 1
        if rev:
            row.reversed_count += 1
    return [rows[k] for k in sorted(rows)]


def certified_pairs(outcome: SerialOutcome, trace: RunTrace) -> set[tuple[str, str]]:
    """Pairs where the honest direction's weight reached tau in every snapshot
    observation (and every vote tally), both graphed in the same subdag.
    Such a pair can never be emitted against the honest direction."""
    cfg = trace.meta["config"]
    n, f = int(cfg["n"]), int(cfg["f"])
    gamma = Fraction(cfg["gamma"])
    tau_i = int(ceil(Fraction(n) * (1 - gamma) + f + 1))
    receive = trace.receive_orders()
    correct = trace.correct_replicas()
    pos = {i: {d: k for k, d in enumerate(receive[i])} for i in correct}
    out: set[tuple[str, str]] = set()
    for (u, v), ev in outcome.evidence.items():
        ru, rv = outcome.graphed_in.get(u), outcome.graphed_in.get(v)
        if ru is None or ru != rv:
            continue
        pref_uv = pref_vu = 0
        for i in correct:
            pu, pv = pos[i].get(u), pos[i].get(v)
            if pu is None or pv is None:
                continue
            if pu < pv:
                pref_uv += 1
            else:
                pref_vu += 1
        if pref_uv == pref_vu:
            continue
        honest_first = 0 if pref_uv > pref_vu else 1
        obs = list(ev.weights)
        if ev.vote_tally is not None:
            obs.append(ev.vote_tally)
        if all(o[honest_first] >= tau_i and o[honest_first] > o[1 - honest_first] for o in obs):
            out.add((u, v))
    return out
