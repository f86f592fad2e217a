"""Fairness-pipeline coordinator: per-subdag tasks, chain handoff, Emit gate.

Two execution modes over the same phase functions:

* event/serial mode: each committed subdag's task runs to completion inline
  (this is also how the simulator drives the pipeline at commit time);
* concurrent mode: phase-1 weight tasks run on a process pool across
  in-flight subdags, phase 2/3 tasks chain through the cumulative-token
  handoff, resolution tasks run on the pool, and the coordinator applies
  results serially in commit order.

Both modes produce bit-identical emitted orders; only wall-clock differs.
The vote tally scans author prefixes from n-f upward and keeps the minimal
sufficient prefix, so the outcome does not depend on how many extra votes
happen to be buffered when a tally runs. A process pool (not threads) does
the parallel work because the phase kernels are pure Python and the GIL
serializes threads.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import Future, ProcessPoolExecutor
from dataclasses import dataclass
from time import perf_counter_ns

from .finalize import (
    ParkedStore,
    apply_fair_update,
    emit,
    finalize_order,
    mark_ready,
    route_votes,
)
from .graph import (
    CumulativeState,
    DepGraph,
    Snapshot,
    apply_result,
    extract_snapshot,
    phase1_weights,
    phase2_build_graph,
    phase3_anchor,
)
from .params import edge_threshold
from .types import CommitRecord, FinalOrder


@dataclass
class PipelineResult:
    emitted: list[FinalOrder]
    profiles: list[dict]
    parked_left: list[int]
    ready_left: list[int]
    diagnostics: list[dict]


# -- pool task functions (module level so they pickle) -------------------------


def _weights_task(r: int, orders: dict, n: int, f: int, gamma) -> tuple:
    t0 = perf_counter_ns()
    report = phase1_weights(Snapshot(r, orders), n, f, gamma)
    return report, perf_counter_ns() - t0


@dataclass
class _BuildResult:
    r: int
    anchor: int
    k_digests: list[str]
    token: frozenset[str]
    n_admitted: int
    n_missing: int
    order: FinalOrder | None
    graph: DepGraph | None  # shipped back only when parked
    build_ns: int
    scc_ns: int
    final_ns: int


def _build_task(report, chain: frozenset[str], tau) -> _BuildResult:
    t0 = perf_counter_ns()
    graph = phase2_build_graph(report, chain, tau)
    t1 = perf_counter_ns()
    trunc, anchor, k_digests, token = phase3_anchor(graph)
    t2 = perf_counter_ns()
    order = None
    parked_graph = None
    if trunc.missing:
        parked_graph = trunc
    else:
        order = finalize_order(trunc)
    t3 = perf_counter_ns()
    return _BuildResult(
        report.r, anchor, k_digests, token, len(report.admitted),
        len(trunc.missing), order, parked_graph, t1 - t0, t2 - t1, t3 - t2,
    )


def _resolve_task(graph: DepGraph, votes: dict, tau, n: int, f: int) -> tuple:
    store = ParkedStore()
    store.parked[graph.r] = graph
    store.votes[graph.r] = votes
    order = apply_fair_update(store, graph.r, tau, n, f)
    return order, store.diagnostics


class FairnessPipeline:
    """Coordinator for one replica-equivalent fairness processor."""

    def __init__(self, n: int, f: int, gamma, trace_cb=None, fairpropose_cb=None):
        self.n = n
        self.f = f
        self.gamma = gamma
        self.tau = edge_threshold(n, f, gamma)
        self.state = CumulativeState(n, f, gamma)
        self.store = ParkedStore()
        self.chain: frozenset[str] = frozenset()
        self.profiles: list[dict] = []
        self.trace_cb = trace_cb
        self.fairpropose_cb = fairpropose_cb
        self.emitted: list[FinalOrder] = []
        self.now = 0
        self._tried: dict[int, int] = {}  # r -> author count at last tally attempt

    # -- shared bits -----------------------------------------------------------

    def _trace(self, ev: dict) -> None:
        if self.trace_cb is not None:
            self.trace_cb(ev)

    def _drain_emit(self) -> None:
        for order in emit(self.store):
            self.emitted.append(order)
            self._trace(
                {
                    "ev": "order_emitted",
                    "t": self.now,
                    "replica": None,
                    "r": order.r,
                    "digests": list(order.digests),
                    "batches": [list(b) for b in order.batches],
                }
            )

    def _retry_wanted(self, r: int) -> bool:
        """True when the vote set for parked r grew since the last tally."""
        have = len(self.store.votes.get(r, ()))
        if have < self.n - self.f or self._tried.get(r) == have:
            return False
        self._tried[r] = have
        return True

    def _try_resolve_serial(self, r: int) -> None:
        if self._retry_wanted(r):
            if apply_fair_update(self.store, r, self.tau, self.n, self.f) is not None:
                self._drain_emit()

    def _land(self, r: int, extract_ns: int, weights_ns: int, res: _BuildResult,
              resolve_hook=None) -> None:
        """Apply one finished build task on the coordinator, in commit order."""
        self.chain = res.token
        t0 = perf_counter_ns()
        apply_result(self.state, r, res.k_digests)
        result_ns = perf_counter_ns() - t0
        self._trace(
            {
                "ev": "graph_built",
                "t": self.now,
                "replica": None,
                "r": r,
                "v": res.n_admitted,
                "m": res.n_missing,
                "anchor": res.anchor,
                "k": len(res.k_digests),
                "k_digests": list(res.k_digests),
            }
        )
        profile = {
            "r": r,
            "extract_ns": extract_ns,
            "weights_ns": weights_ns,
            "build_ns": res.build_ns,
            "scc_ns": res.scc_ns,
            "result_ns": result_ns + res.final_ns,
        }
        self.profiles.append(profile)
        self._trace({"ev": "graph_profile", "t": self.now, "replica": None, **profile})
        if res.order is not None:
            mark_ready(self.store, res.order)
        else:
            self.store.parked[r] = res.graph
            self._trace(
                {
                    "ev": "graph_parked",
                    "t": self.now,
                    "replica": None,
                    "r": r,
                    "pairs": [list(p) for p in res.graph.missing],
                }
            )
            if self.fairpropose_cb is not None:
                self.fairpropose_cb(r, set(res.graph.missing))
            if resolve_hook is None:
                self._try_resolve_serial(r)
            else:
                resolve_hook(r)
        self._drain_emit()

    # -- event/serial mode -------------------------------------------------------

    def on_commit(self, record: CommitRecord, now: int = 0) -> None:
        """Process one committed subdag to completion (serial task execution)."""
        self.now = now
        for r in route_votes(self.store, record, self.n, self.f):
            self._try_resolve_serial(r)
        t0 = perf_counter_ns()
        snap, _claim = extract_snapshot(self.state, record)
        t1 = perf_counter_ns()
        report, weights_ns = _weights_task(snap.r, snap.orders, self.n, self.f, self.gamma)
        res = _build_task(report, self.chain, self.tau)
        self._land(record.r, t1 - t0, weights_ns, res)

    def finish(self) -> PipelineResult:
        return PipelineResult(
            self.emitted,
            self.profiles,
            sorted(self.store.parked),
            sorted(self.store.ready),
            self.store.diagnostics,
        )

    # -- replay drivers ------------------------------------------------------------

    def replay(self, records: list[CommitRecord]) -> PipelineResult:
        for rec in records:
            self.on_commit(rec)
        return self.finish()

    def replay_concurrent(
        self, records: list[CommitRecord], slots: int = 4,
        pool: ProcessPoolExecutor | None = None,
    ) -> PipelineResult:
        """Concurrent replay: phase 1 parallel across in-flight subdags.

        The chain token serializes phase 2/3 between consecutive subdags; the
        in-flight window is capped at ``slots``. Results are applied strictly
        in commit order, so emitted output is scheduling-independent.
        """
        own_pool = pool is None
        if own_pool:
            pool = ProcessPoolExecutor(max_workers=slots)
        inflight: deque[tuple[int, Future, int]] = deque()
        resolve_futs: dict[int, Future] = {}

        def submit_resolve(r: int) -> None:
            if r in resolve_futs:
                return  # an older tally is in flight; regrowth rechecked on completion
            if self._retry_wanted(r):
                resolve_futs[r] = pool.submit(
                    _resolve_task,
                    self.store.parked[r],
                    dict(self.store.votes[r]),
                    self.tau,
                    self.n,
                    self.f,
                )

        def check_resolves(block: bool = False) -> None:
            for r in sorted(resolve_futs):
                fut = resolve_futs[r]
                if block or fut.done():
                    order, diags = fut.result()
                    del resolve_futs[r]
                    self.store.diagnostics.extend(diags)
                    if order is not None:
                        del self.store.parked[r]
                        mark_ready(self.store, order)
                    else:
                        # votes that arrived while the tally ran trigger a retry
                        submit_resolve(r)
            self._drain_emit()

        def drain_one() -> None:
            r, fut, extract_ns = inflight.popleft()
            report, weights_ns = fut.result()
            res = pool.submit(_build_task, report, self.chain, self.tau).result()
            self._land(r, extract_ns, weights_ns, res, resolve_hook=submit_resolve)
            check_resolves()

        try:
            for rec in records:
                for r in route_votes(self.store, rec, self.n, self.f):
                    submit_resolve(r)
                check_resolves()
                t0 = perf_counter_ns()
                snap, _claim = extract_snapshot(self.state, rec)
                extract_ns = perf_counter_ns() - t0
                wfut = pool.submit(
                    _weights_task, snap.r, snap.orders, self.n, self.f, self.gamma
                )
                inflight.append((snap.r, wfut, extract_ns))
                while len(inflight) >= max(1, slots):
                    drain_one()
            while inflight:
                drain_one()
            while resolve_futs:
                check_resolves(block=True)
        finally:
            if own_pool:
                pool.shutdown()
        return self.finish()
