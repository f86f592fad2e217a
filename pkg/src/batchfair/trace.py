"""Append-only run traces: JSONL persistence and derived views for checkers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .types import CommitRecord, FairUpdateVote, FinalOrder, VertexRecord

# event kinds that must be bit-identical across runs of the same config;
# graph_profile carries wall-clock nanoseconds and is excluded
DETERMINISTIC_EVENTS = (
    "tx_received",
    "vertex_created",
    "certificate_formed",
    "subdag_committed",
    "vote_cast",
    "order_emitted",
    "graph_built",
    "graph_parked",
)


@dataclass
class RunTrace:
    meta: dict = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)

    def append(self, event: dict) -> None:
        self.events.append(event)

    # -- persistence -------------------------------------------------------

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"ev": "meta", **self.meta}, sort_keys=True) + "\n")
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "RunTrace":
        meta: dict = {}
        events: list[dict] = []
        with open(path) as fh:
            for line in fh:
                doc = json.loads(line)
                if doc.get("ev") == "meta":
                    doc.pop("ev")
                    meta = doc
                else:
                    events.append(doc)
        return cls(meta, events)

    def deterministic_view(self) -> list[dict]:
        return [e for e in self.events if e["ev"] in DETERMINISTIC_EVENTS]

    # -- derived views -------------------------------------------------------

    def n_replicas(self) -> int:
        return int(self.meta["config"]["n"])

    def fault_roles(self) -> tuple[set[int], dict[int, int]]:
        """Return (reversing replicas, crash replica -> activation round)."""
        reversers: set[int] = set()
        crashes: dict[int, int] = {}
        for d in self.meta.get("faults", []):
            if d["strategy"] == "reverse_local_order":
                reversers.add(d["replica"])
            elif d["strategy"] == "silent_crash":
                crashes[d["replica"]] = d["round"]
        return reversers, crashes

    def correct_replicas(self) -> list[int]:
        reversers, crashes = self.fault_roles()
        return [i for i in range(self.n_replicas()) if i not in reversers and i not in crashes]

    def receive_orders(self) -> dict[int, list[str]]:
        """True first-observation order per replica (ground truth)."""
        out: dict[int, list[str]] = {i: [] for i in range(self.n_replicas())}
        for e in self.events:
            if e["ev"] == "tx_received":
                out[e["replica"]].append(e["tx"])
        return out

    def reported_orders(self) -> dict[int, list[str]]:
        """Sealed contribution order per replica (what the protocol saw)."""
        out: dict[int, list[str]] = {i: [] for i in range(self.n_replicas())}
        for e in self.events:
            if e["ev"] == "vertex_created":
                for _kind, digest, _loi in e["entries"]:
                    out[e["replica"]].append(digest)
        return out

    def contribution_lois(self) -> dict[int, list[tuple[str, int]]]:
        """Per replica, (digest, loi) stream in vertex creation order."""
        out: dict[int, list[tuple[str, int]]] = {i: [] for i in range(self.n_replicas())}
        for e in self.events:
            if e["ev"] == "vertex_created":
                for _kind, digest, loi in e["entries"]:
                    out[e["replica"]].append((digest, loi))
        return out

    def commit_records(self) -> list[CommitRecord]:
        """Reassemble the committed-subdag stream the fairness layer consumed."""
        verts: dict[str, dict] = {}
        for e in self.events:
            if e["ev"] == "vertex_created":
                verts[e["vid"]] = e
        records: list[CommitRecord] = []
        for e in self.events:
            if e["ev"] != "subdag_committed":
                continue
            vrs = []
            for vid in e["vertices"]:
                ve = verts[vid]
                entries = tuple((d, loi) for _k, d, loi in ve["entries"])
                votes = tuple(
                    FairUpdateVote(v["author"], v["r"], tuple(tuple(x) for x in v["edges"]))
                    for v in ve["votes"]
                )
                vrs.append(VertexRecord(ve["replica"], ve["round"], vid, entries, votes))
            records.append(CommitRecord(e["r"], e["leader"], tuple(vrs)))
        return records

    def emitted_orders(self) -> list[FinalOrder]:
        out = []
        for e in self.events:
            if e["ev"] == "order_emitted":
                out.append(
                    FinalOrder(
                        e["r"],
                        tuple(e["digests"]),
                        tuple((b[0], b[1]) for b in e["batches"]),
                    )
                )
        return out

    def committed_lois(self) -> dict[int, list[tuple[str, int]]]:
        """Per replica, (digest, loi) entries of committed vertices in commit order."""
        verts: dict[str, dict] = {}
        for e in self.events:
            if e["ev"] == "vertex_created":
                verts[e["vid"]] = e
        out: dict[int, list[tuple[str, int]]] = {i: [] for i in range(self.n_replicas())}
        for e in self.events:
            if e["ev"] != "subdag_committed":
                continue
            for vid in e["vertices"]:
                ve = verts[vid]
                for _k, d, loi in ve["entries"]:
                    out[ve["replica"]].append((d, loi))
        return out

    def retained_sets(self) -> list[tuple[int, list[str]]]:
        """(r, K_r digests) from graph_built events."""
        return [
            (e["r"], e["k_digests"]) for e in self.events if e["ev"] == "graph_built"
        ]
