"""Deterministic discrete-event simulation of the adjusted DAG consensus.

Rounds follow the barrier model: advance_round pumps the message queue until
every live replica can propose (holds a quorum of previous-round certificates
and, under the self-referencing rule, its own), creates the round's vertices
at each replica's individual readiness time, and completes once the round's
certificates have formed. try_commit elects wave leaders with a seeded coin
and commits a leader once f+1 next-round vertices reference it.

Everything is driven by one event heap keyed (time, seq); all randomness
comes from generators seeded from the run seed, so identical configs produce
bit-identical traces.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .adversaries import ClientSchedule, DelaySpike, FaultSchedule
from .params import ConfigError, SimConfig
from .pipeline import FairnessPipeline, PipelineResult
from .trace import RunTrace
from .types import (
    Certificate,
    CommitRecord,
    Subdag,
    Vertex,
    record_from_subdag,
    tx_digest,
    vertex_id,
)
from .worker import WorkerState, decode_batch, encode_batch


@dataclass
class SimResult:
    config: SimConfig
    trace: RunTrace
    records: list[CommitRecord]
    pipeline: PipelineResult
    injected: list[str]  # digests of all client-submitted transactions
    injection_time: dict[str, int]
    emit_time: dict[int, int]  # subdag id -> simulated emit time
    final_time: int


class Simulator:
    def __init__(
        self,
        config: SimConfig,
        faults: FaultSchedule | None = None,
        clients: ClientSchedule | None = None,
        spikes: list[DelaySpike] | None = None,
        meta: dict | None = None,
    ):
        self.cfg = config
        self.faults = faults or FaultSchedule()
        self.clients = clients or ClientSchedule()
        self.spikes = spikes or []
        self.faults.check_budget(config.f)
        self.crash_round = self.faults.crash_rounds()
        if config.readiness > config.n - len(self.crash_round):
            raise ConfigError(
                f"readiness threshold {config.readiness} unreachable with "
                f"{len(self.crash_round)} scheduled crashes out of n={config.n}"
            )
        reversers = self.faults.reversers()
        self.workers = [
            WorkerState(i, reverse_order=(i in reversers)) for i in range(config.n)
        ]
        self.net_rng = random.Random(f"{config.seed}:net")
        self.trace = RunTrace(
            meta={
                "config": config.to_dict(),
                "faults": [
                    {"replica": d.replica, "strategy": d.strategy, "round": d.round}
                    for d in self.faults.directives
                ],
                **(meta or {}),
            }
        )
        self.pipeline = FairnessPipeline(
            config.n,
            config.f,
            config.gamma,
            trace_cb=self.trace.append,
            fairpropose_cb=self._broadcast_fair_propose,
        )
        for w in self.workers:
            w.vote_cb = self._on_vote_cast

        # DAG state
        self.by_round: dict[int, dict[int, Vertex]] = {}
        self.vertex_time: dict[str, int] = {}
        self.certs: dict[int, dict[int, Certificate]] = {}
        self.held: list[dict[int, dict[int, Certificate]]] = [
            {} for _ in range(config.n)
        ]
        self.attestors: dict[str, set[int]] = {}
        self.certified: set[str] = set()

        # event machinery
        self.heap: list[tuple[int, int, str, tuple]] = []
        self._seq = 0
        self.now = 0
        self.round = 0  # next round to propose
        self.proposed: dict[int, set[int]] = {}  # round -> authors
        self.ready_at: dict[tuple[int, int], int] = {}  # (replica, round) -> time
        self.crash_time: dict[int, int] = {
            i: -1 for i, r in self.crash_round.items() if r <= 0
        }

        # commit state
        self.committed_vids: set[str] = set()
        self.commit_seq = 0
        self.commit_time: dict[int, int] = {}
        self.checked_waves: set[int] = set()
        self.records: list[CommitRecord] = []

        # client bookkeeping
        self.client_plan = self.clients.by_replica_round()
        self.injected: list[str] = []
        self.injection_time: dict[str, int] = {}
        self.emit_time: dict[int, int] = {}
        self._emitted_seen = 0

    # -- helpers -----------------------------------------------------------------

    def _alive(self, replica: int, t: int) -> bool:
        ct = self.crash_time.get(replica)
        return ct is None or t <= ct

    def _live_set(self, round_: int) -> list[int]:
        return [
            i for i in range(self.cfg.n)
            if self.crash_round.get(i, 1 << 30) > round_
        ]

    def _delay(self, sender: int, receiver: int, kind: str, round_: int) -> int:
        if sender == receiver:
            return 0
        if self.cfg.delivery_model == "lockstep":
            d = 0
        else:
            d = self.net_rng.randint(self.cfg.delay_min, self.cfg.delay_max)
        for spike in self.spikes:
            if spike.round != round_:
                continue
            if spike.scope == "vertex" and kind == "vertex" and spike.replica == sender:
                d += spike.extra
            elif spike.scope == "inbound" and spike.replica == receiver:
                d += spike.extra
        return d

    def _post(self, t: int, kind: str, data: tuple) -> None:
        heapq.heappush(self.heap, (t, self._seq, kind, data))
        self._seq += 1

    def _on_vote_cast(self, replica: int, vote) -> None:
        self.trace.append(
            {
                "ev": "vote_cast",
                "t": self.now,
                "replica": replica,
                "target_r": vote.target_r,
                "edges": [list(e) for e in vote.edges],
            }
        )

    def _broadcast_fair_propose(self, r: int, missing: set) -> None:
        # the fairness processor of every live replica parks the same graph;
        # each local worker resolves against its own LOI table
        t = self.pipeline.now
        for i in range(self.cfg.n):
            if self._alive(i, t):
                self.now = t
                self.workers[i].on_fair_propose(r, missing)

    def _observe_client(self, replica: int, body: str, t: int) -> None:
        digest = tx_digest(body)
        if digest not in self.injection_time:
            self.injected.append(digest)
            self.injection_time[digest] = t
        w = self.workers[replica]
        fresh = not w.tracker.knows(digest)
        self.now = t
        loi = w.observe_client(body, digest)
        if fresh:
            self.trace.append(
                {"ev": "tx_received", "t": t, "replica": replica, "tx": digest,
                 "loi": loi, "src": "client"}
            )

    def _observe_remote(self, replica: int, digest: str, t: int) -> None:
        w = self.workers[replica]
        fresh = not w.tracker.knows(digest)
        self.now = t
        loi = w.observe_remote(digest)
        if fresh:
            self.trace.append(
                {"ev": "tx_received", "t": t, "replica": replica, "tx": digest,
                 "loi": loi, "src": "batch"}
            )

    # -- proposals ----------------------------------------------------------------

    def _propose(self, replica: int, round_: int, t: int) -> None:
        cfg = self.cfg
        for body in self.client_plan.get((replica, round_), []):
            self._observe_client(replica, body, t)
        if round_ == 0:
            batch = None
            parents: frozenset[str] = frozenset()
        else:
            batch = self.workers[replica].build_batch()
            if cfg.batch_wire:
                batch = decode_batch(encode_batch(batch, cfg.batch_wire), cfg.batch_wire)
            held = self.held[replica].get(round_ - 1, {})
            assert len(held) >= cfg.quorum, "proposed without a quorum of parents"
            if cfg.self_reference:
                assert replica in held, "correct replica missing its own certificate"
            parents = frozenset(c.vid for c in held.values())
        vid = vertex_id(round_, replica)
        vertex = Vertex(replica, round_, vid, parents, batch)
        self.by_round.setdefault(round_, {})[replica] = vertex
        self.vertex_time[vid] = t
        self.proposed.setdefault(round_, set()).add(replica)
        self.trace.append(
            {
                "ev": "vertex_created",
                "t": t,
                "replica": replica,
                "round": round_,
                "vid": vid,
                "parents": sorted(parents),
                "entries": [] if batch is None else [[e.kind, e.digest, e.loi] for e in batch.entries],
                "votes": [] if batch is None else [
                    {"author": v.author, "r": v.target_r, "edges": [list(e) for e in v.edges]}
                    for v in batch.votes
                ],
            }
        )
        # author attests its own vertex immediately
        self.attestors[vid] = {replica}
        self._maybe_certify(vertex, t)
        for j in range(cfg.n):
            if j != replica:
                self._post(t + self._delay(replica, j, "vertex", round_), "vertex", (vid, j))
        # a quorum may already be on hand (e.g. this proposal was delayed past
        # the certificates of its own round), so re-check readiness now
        self._note_ready(replica, round_ + 1, t)
        # crash boundary: a replica crashing at round R dies right after its
        # round R-1 proposal
        if self.crash_round.get(replica) == round_ + 1:
            self.crash_time[replica] = t

    def _maybe_certify(self, vertex: Vertex, t: int) -> None:
        if vertex.vid in self.certified:
            return
        if len(self.attestors[vertex.vid]) >= self.cfg.quorum:
            cert = Certificate(
                vertex.vid, vertex.round, vertex.author,
                frozenset(self.attestors[vertex.vid]),
            )
            self.certified.add(vertex.vid)
            self.certs.setdefault(vertex.round, {})[vertex.author] = cert
            self.trace.append(
                {
                    "ev": "certificate_formed",
                    "t": t,
                    "replica": vertex.author,
                    "round": vertex.round,
                    "vid": vertex.vid,
                    "attestors": sorted(cert.attestors),
                }
            )
            for j in range(self.cfg.n):
                d = self._delay(vertex.author, j, "cert", vertex.round)
                self._post(t + d, "cert", (cert, j))

    def _handle(self, t: int, kind: str, data: tuple) -> None:
        if kind == "vertex":
            vid, receiver = data
            if not self._alive(receiver, t):
                return
            vertex = self.by_round[int(vid[1:5])][int(vid[6:9])]
            if vertex.batch is not None:
                for e in vertex.batch.entries:
                    self._observe_remote(receiver, e.digest, t)
            back = self._delay(receiver, vertex.author, "attest", vertex.round)
            self._post(t + back, "attest", (vid, receiver))
        elif kind == "attest":
            vid, attestor = data
            vertex = self.by_round[int(vid[1:5])][int(vid[6:9])]
            if not self._alive(vertex.author, t):
                return
            self.attestors[vid].add(attestor)
            self._maybe_certify(vertex, t)
        elif kind == "cert":
            cert, receiver = data
            if not self._alive(receiver, t):
                return
            self.held[receiver].setdefault(cert.round, {})[cert.author] = cert
            self._note_ready(receiver, cert.round + 1, t)

    def _note_ready(self, replica: int, round_: int, t: int) -> None:
        if (replica, round_) in self.ready_at:
            return
        if replica not in self.proposed.get(round_ - 1, ()):
            return
        held = self.held[replica].get(round_ - 1, {})
        if len(held) < self.cfg.readiness:
            return
        if self.cfg.self_reference and replica not in held:
            return
        self.ready_at[(replica, round_)] = t

    # -- public operations ----------------------------------------------------------

    def advance_round(self) -> list[tuple[Vertex, Certificate]]:
        """Run one DAG round: every live replica proposes once its quorum of
        previous-round certificates (self-reference included) is in; returns
        the round's (vertex, certificate) pairs once certificates formed."""
        cfg = self.cfg
        r = self.round
        live = self._live_set(r)
        if r == 0:
            for i in live:
                self._propose(i, 0, 0)
        else:
            pending = set(live)
            for i in list(pending):
                at = self.ready_at.get((i, r))
                if at is not None:
                    self._propose(i, r, max(at, r) if cfg.delivery_model == "lockstep" else at)
                    pending.discard(i)
            while pending:
                if not self.heap:
                    raise ConfigError(
                        f"round {r} stalled: replicas {sorted(pending)} never became ready"
                    )
                t, _, kind, data = heapq.heappop(self.heap)
                self.now = t
                self._handle(t, kind, data)
                for i in list(pending):
                    at = self.ready_at.get((i, r))
                    if at is not None:
                        self._propose(i, r, max(at, r) if cfg.delivery_model == "lockstep" else at)
                        pending.discard(i)
        # pump until this round's certificates form; a replica that dies right
        # after proposing cannot assemble its own certificate, so don't wait
        want = {
            vertex_id(r, i) for i in live
            if self.crash_round.get(i, 1 << 30) > r + 1
        }
        while not want <= self.certified:
            if not self.heap:
                missing = sorted(want - self.certified)
                raise ConfigError(f"round {r} certificates never formed: {missing}")
            t, _, kind, data = heapq.heappop(self.heap)
            self.now = t
            self._handle(t, kind, data)
        self.round += 1
        return [
            (self.by_round[r][i], self.certs[r][i])
            for i in live
            if i in self.certs.get(r, {})
        ]

    def _coin(self, wave: int) -> int:
        return random.Random(f"{self.cfg.seed}:coin:{wave}").randrange(self.cfg.n)

    def try_commit(self) -> list[Subdag]:
        """Commit every unchecked wave whose leader got f+1 child references."""
        cfg = self.cfg
        out: list[Subdag] = []
        wave = 1
        while True:
            leader_round = (wave - 1) * cfg.wave_len + 1
            if leader_round + 1 >= self.round:
                break  # reference round not complete yet
            if wave in self.checked_waves:
                wave += 1
                continue
            self.checked_waves.add(wave)
            leader_author = self._coin(wave)
            leader = self.by_round.get(leader_round, {}).get(leader_author)
            if leader is not None and leader.vid in self.certified:
                children = sorted(
                    self.vertex_time[v.vid]
                    for v in self.by_round.get(leader_round + 1, {}).values()
                    if leader.vid in v.parents
                )
                if len(children) >= cfg.f + 1:
                    commit_t = children[cfg.f]
                    out.append(self._commit(leader, wave, commit_t))
            wave += 1
        return out

    def _commit(self, leader: Vertex, wave: int, commit_t: int) -> Subdag:
        # causal history of the leader minus already-committed vertices
        stack = [leader]
        collected: dict[str, Vertex] = {}
        while stack:
            v = stack.pop()
            if v.vid in self.committed_vids or v.vid in collected:
                continue
            collected[v.vid] = v
            for pvid in sorted(v.parents):
                parent = self.by_round[int(pvid[1:5])][int(pvid[6:9])]
                stack.append(parent)
        vertices = sorted(collected.values(), key=lambda v: (v.round, v.author))
        self.committed_vids.update(collected)
        self.commit_seq += 1
        self.commit_time[self.commit_seq] = commit_t
        subdag = Subdag(self.commit_seq, leader.vid, vertices)
        self.trace.append(
            {
                "ev": "subdag_committed",
                "t": commit_t,
                "replica": None,
                "r": subdag.r,
                "wave": wave,
                "leader": leader.vid,
                "vertices": [v.vid for v in vertices],
            }
        )
        return subdag

    # -- full run ---------------------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        while self.round <= cfg.max_rounds:
            self.advance_round()
            for subdag in self.try_commit():
                commit_t = self.commit_time[subdag.r]
                record = record_from_subdag(subdag)
                self.records.append(record)
                self.pipeline.on_commit(record, now=commit_t)
                for order in self.pipeline.emitted[self._emitted_seen:]:
                    self.emit_time[order.r] = commit_t
                self._emitted_seen = len(self.pipeline.emitted)
        return SimResult(
            cfg,
            self.trace,
            self.records,
            self.pipeline.finish(),
            self.injected,
            self.injection_time,
            self.emit_time,
            self.now,
        )
