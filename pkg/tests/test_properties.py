"""Property tests over synthetic committed-record streams.

These bypass the simulator entirely: random (including adversarially odd)
per-author contribution streams go straight into the fairness pipeline, so
claim/chain/truncation behavior is exercised on shapes the simulator would
rarely produce (duplicate listings, empty subdags, single-author bursts).
"""

from fractions import Fraction

from hypothesis import given, settings, strategies as st

from batchfair.graph import (
    CumulativeState,
    Snapshot,
    apply_result,
    extract_snapshot,
    phase1_weights,
    phase2_build_graph,
    phase3_anchor,
)
from batchfair.oracle import serial_reference
from batchfair.pipeline import FairnessPipeline
from batchfair.types import CommitRecord, VertexRecord, tx_digest

N, F = 5, 1
GAMMA = Fraction(1)
UNIVERSE = sorted(tx_digest(f"p{i}") for i in range(10))


@st.composite
def record_streams(draw):
    """A stream of commit records with per-author LOI-consistent entries."""
    n_records = draw(st.integers(1, 6))
    # per author, a global arrival order over a subset of the universe
    arrivals = {}
    for author in range(N):
        txs = draw(st.permutations(UNIVERSE))
        cut = draw(st.integers(0, len(UNIVERSE)))
        arrivals[author] = txs[:cut]
    # split each author's arrival order into per-record chunks (prefix rule)
    cuts = {
        author: sorted(
            draw(
                st.lists(
                    st.integers(0, len(arrivals[author])),
                    min_size=n_records - 1,
                    max_size=n_records - 1,
                )
            )
        )
        for author in range(N)
    }
    records = []
    for r in range(1, n_records + 1):
        vrs = []
        for author in range(N):
            seq = arrivals[author]
            bounds = [0, *cuts[author], len(seq)]
            chunk = seq[bounds[r - 1] : bounds[r]]
            entries = tuple((dg, bounds[r - 1] + k) for k, dg in enumerate(chunk))
            if entries:
                vrs.append(VertexRecord(author, r, f"r{r:04d}a{author:03d}", entries))
        records.append(CommitRecord(r, f"r{r:04d}a000", tuple(vrs)))
    return records


@settings(max_examples=50, deadline=None)
@given(records=record_streams())
def test_single_graph_and_chain_invariants_on_random_streams(records):
    pipe = FairnessPipeline(N, F, GAMMA)
    k_sets = []
    chains = []
    for rec in records:
        pipe.on_commit(rec)
        chains.append(set(pipe.chain))
    for p, rec in zip(pipe.profiles, records):
        assert p["r"] == rec.r
    # single graph: each digest retained at most once across the run
    retained = [d for o in pipe.store.emitted for d in o.digests]
    for r in sorted(pipe.store.ready):
        retained.extend(pipe.store.ready[r].digests)
    assert len(retained) == len(set(retained))
    # chain monotonicity
    for a, b in zip(chains, chains[1:]):
        assert a <= b


@settings(max_examples=30, deadline=None)
@given(records=record_streams())
def test_oracle_matches_serial_pipeline_on_random_streams(records):
    pipe = FairnessPipeline(N, F, GAMMA)
    out = pipe.replay(records)
    oracle = serial_reference(records, N, F, GAMMA)
    assert oracle.orders == out.emitted


@settings(max_examples=15, deadline=None)
@given(records=record_streams(), slots=st.sampled_from([1, 3]))
def test_concurrent_matches_serial_on_random_streams(records, slots, pool):
    serial = FairnessPipeline(N, F, GAMMA).replay(records)
    conc = FairnessPipeline(N, F, GAMMA).replay_concurrent(
        records, slots=slots, pool=pool
    )
    assert serial.emitted == conc.emitted
    assert serial.parked_left == conc.parked_left


@settings(max_examples=50, deadline=None)
@given(records=record_streams())
def test_solid_retention_and_claim_subset(records):
    # every snapshot solid lands in that subdag's K_r; claims minus the chain
    # are always retained
    state = CumulativeState(N, F, GAMMA)
    chain = frozenset()
    tau = Fraction(2)  # n(1-gamma)+f+1 at gamma=1
    for rec in records:
        snap, claim = extract_snapshot(state, rec)
        report = phase1_weights(snap, N, F, GAMMA)
        graph = phase2_build_graph(report, chain, tau)
        trunc, anchor, k_digests, token = phase3_anchor(graph)
        assert claim - chain <= set(k_digests)
        assert report.solid - chain <= set(k_digests)
        chain = token
        apply_result(state, rec.r, k_digests)


def test_byzantine_double_listing_deduped():
    dg = tx_digest("dup")
    rec = CommitRecord(
        1,
        "r0001a000",
        (
            VertexRecord(0, 1, "r0001a000", ((dg, 0), (dg, 5))),
            VertexRecord(1, 1, "r0001a001", ((dg, 0),)),
            VertexRecord(2, 1, "r0001a002", ((dg, 0),)),
        ),
    )
    state = CumulativeState(N, F, GAMMA)
    snap, _ = extract_snapshot(state, rec)
    assert snap.orders[0] == (dg,)  # first listing wins, duplicate dropped
    report = phase1_weights(snap, N, F, GAMMA)
    assert report.support[dg] == 3
