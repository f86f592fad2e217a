"""Shared domain types: transactions, batches, DAG vertices, committed subdags.

These are the only definitions shared between the protocol pipeline and the
oracle checkers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass


def tx_digest(body: str | bytes) -> str:
    """Collision-resistant 32-byte digest of a transaction body, hex-encoded."""
    if isinstance(body, str):
        body = body.encode()
    return hashlib.sha256(body).hexdigest()


DIRECT = "d"
INDIRECT = "i"


@dataclass(frozen=True)
class Entry:
    """One ordering contribution inside a batch.

    Direct entries carry the transaction body; indirect entries carry only the
    digest of a transaction learned from a remote batch (one hop).
    """

    kind: str  # DIRECT or INDIRECT
    digest: str
    loi: int
    body: str | None = None


@dataclass(frozen=True)
class FairUpdateVote:
    """Directed resolutions of a parked subdag's complete missing-edge set."""

    author: int
    target_r: int
    edges: tuple[tuple[str, str], ...]  # (from digest, to digest)


@dataclass(frozen=True)
class Batch:
    """A sealed, immutable worker batch.

    ``entries`` is the author's reported contribution order. For a correct
    author it is ascending in LOI; a Byzantine author may report any order.
    """

    author: int
    seq: int
    entries: tuple[Entry, ...]
    votes: tuple[FairUpdateVote, ...] = ()

    @property
    def direct_entries(self) -> tuple[Entry, ...]:
        return tuple(e for e in self.entries if e.kind == DIRECT)

    @property
    def indirect_entries(self) -> tuple[Entry, ...]:
        return tuple(e for e in self.entries if e.kind == INDIRECT)


def vertex_id(round_: int, author: int) -> str:
    return f"r{round_:04d}a{author:03d}"


@dataclass(frozen=True)
class Vertex:
    """A round-stamped DAG proposal carrying its author's sealed batch."""

    author: int
    round: int
    vid: str
    parents: frozenset[str]  # vertex ids certified in round-1
    batch: Batch | None  # None only for genesis


@dataclass(frozen=True)
class Certificate:
    """Availability certificate for one vertex."""

    vid: str
    round: int
    author: int
    attestors: frozenset[int]


@dataclass
class Subdag:
    """Newly committed causal history of a leader, in deterministic topo order."""

    r: int  # 1-based consecutive commit sequence number
    leader_vid: str
    vertices: list[Vertex]


@dataclass(frozen=True)
class FinalOrder:
    """The finalized transaction order of one subdag.

    ``batches`` are (start, end) index runs; each run is one strongly
    connected component of the dependency graph, emitted contiguously.
    """

    r: int
    digests: tuple[str, ...]
    batches: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class VertexRecord:
    """Commit-stream view of one vertex, as the fairness layer consumes it."""

    author: int
    round: int
    vid: str
    entries: tuple[tuple[str, int], ...]  # (digest, loi) in reported order
    votes: tuple[FairUpdateVote, ...] = ()


@dataclass(frozen=True)
class CommitRecord:
    """One committed subdag as seen by the fairness layer."""

    r: int
    leader_vid: str
    vertices: tuple[VertexRecord, ...]

    def votes(self) -> list[FairUpdateVote]:
        out = []
        for v in self.vertices:
            out.extend(v.votes)
        return out


def record_from_subdag(subdag: Subdag) -> CommitRecord:
    vrs = []
    for v in subdag.vertices:
        if v.batch is None:
            vrs.append(VertexRecord(v.author, v.round, v.vid, ()))
        else:
            entries = tuple((e.digest, e.loi) for e in v.batch.entries)
            vrs.append(VertexRecord(v.author, v.round, v.vid, entries, v.batch.votes))
    return CommitRecord(subdag.r, subdag.leader_vid, tuple(vrs))


def orders_digest(orders: list[FinalOrder]) -> str:
    """Canonical digest of an emitted order sequence, for bitwise comparison."""
    h = hashlib.sha256()
    for fo in orders:
        h.update(f"#{fo.r}:".encode())
        for d in fo.digests:
            h.update(d.encode())
            h.update(b",")
        for s, e in fo.batches:
            h.update(f"[{s},{e})".encode())
    return h.hexdigest()
