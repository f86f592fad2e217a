import pytest
from hypothesis import given, settings, strategies as st

from batchfair.types import DIRECT, INDIRECT, tx_digest
from batchfair.worker import WorkerState, decode_batch, encode_batch


def d(name: str) -> str:
    return tx_digest(name)


def make_worker(reverse=False) -> WorkerState:
    return WorkerState(0, reverse_order=reverse)


# -- LOI tracker -----------------------------------------------------------------


def test_loi_counter_base_and_increment():
    w = make_worker()
    assert w.observe_client("a", d("a")) == 0
    assert w.observe_client("b", d("b")) == 1


def test_loi_idempotent_reobservation():
    w = make_worker()
    assert w.observe_client("a", d("a")) == 0
    assert w.observe_client("a", d("a")) == 0
    assert w.tracker.next_loi == 1


def test_same_loi_for_remote_then_client_path():
    w = make_worker()
    first = w.observe_remote(d("a"))
    again = w.observe_client("a", d("a"))
    assert first == again == 0


@given(st.lists(st.integers(0, 30), min_size=1, max_size=60))
def test_loi_bijection_gapless(ids):
    w = make_worker()
    for i in ids:
        w.observe_client(f"tx{i}", d(f"tx{i}"))
    lois = [w.tracker.loi_of(d(f"tx{i}")) for i in sorted(set(ids))]
    assert sorted(lois) == list(range(len(set(ids))))
    # observation order matches assignment order
    assert [w.tracker.loi_of(x) for x in w.receive_log] == list(range(len(set(ids))))


# -- batch assembly ---------------------------------------------------------------


def test_batch_entries_in_loi_order_and_kinds():
    w = make_worker()
    w.observe_client("a", d("a"))
    w.observe_remote(d("x"))
    w.observe_client("b", d("b"))
    batch = w.build_batch()
    assert [e.loi for e in batch.entries] == [0, 1, 2]
    assert [e.kind for e in batch.entries] == [DIRECT, INDIRECT, DIRECT]
    assert batch.direct_entries[0].body == "a"
    assert batch.indirect_entries[0].body is None


def test_indirect_one_hop_never_reforwarded():
    w = make_worker()
    w.observe_remote(d("x"))
    first = w.build_batch()
    assert [e.digest for e in first.indirect_entries] == [d("x")]
    w.observe_remote(d("x"))  # second sighting of the same digest
    assert w.build_batch().entries == ()


def test_sealed_batches_strictly_ascending_across_seals():
    w = make_worker()
    seen = []
    for k in range(7):
        w.observe_client(f"t{k}", d(f"t{k}"))
        if k % 2:
            seen.extend(e.loi for e in w.build_batch().entries)
    seen.extend(e.loi for e in w.build_batch().entries)
    assert seen == sorted(seen) == list(range(7))


def test_reverser_reports_exact_reverse():
    w = make_worker(reverse=True)
    for name in ("a", "b", "c"):
        w.observe_client(name, d(name))
    batch = w.build_batch()
    assert [e.body for e in batch.entries] == ["c", "b", "a"]
    # single transaction batches are unchanged
    w.observe_client("z", d("z"))
    assert [e.body for e in w.build_batch().entries] == ["z"]


# -- Algorithm-1 voting --------------------------------------------------------------


def test_fair_propose_both_known_votes_min_to_max():
    w = make_worker()
    w.observe_client("a", d("a"))  # loi 0
    w.observe_client("b", d("b"))  # loi 1
    w.on_fair_propose(3, {(d("a"), d("b"))})
    assert len(w.vote_queue) == 1
    vote = w.vote_queue[0]
    assert vote.target_r == 3 and vote.edges == ((d("a"), d("b")),)


def test_fair_propose_defers_unknown_endpoint():
    w = make_worker()
    w.observe_client("a", d("a"))
    w.on_fair_propose(4, {(d("a"), d("c"))})
    assert w.vote_queue == []
    assert w.edge_store.pending[4]


def test_deferred_pair_resolves_on_new_tx():
    w = make_worker()
    w.observe_client("a", d("a"))
    w.on_fair_propose(5, {(d("a"), d("c"))})
    w.observe_remote(d("c"))  # loi 1 > loi(a) = 0
    assert len(w.vote_queue) == 1
    assert w.vote_queue[0].edges == ((d("a"), d("c")),)


def test_two_subdags_pending_on_same_tx_both_release():
    w = make_worker()
    w.observe_client("x", d("x"))
    w.observe_client("y", d("y"))
    w.on_fair_propose(4, {(d("t"), d("x"))})
    w.on_fair_propose(6, {(d("y"), d("t"))})
    assert w.vote_queue == []
    w.observe_remote(d("t"))
    targets = sorted(v.target_r for v in w.vote_queue)
    assert targets == [4, 6]
    # directional honesty: every edge goes small LOI -> large LOI
    for vote in w.vote_queue:
        for u, v in vote.edges:
            assert w.tracker.loi_of(u) < w.tracker.loi_of(v)


def test_unrelated_tx_is_noop_for_pending():
    w = make_worker()
    w.on_fair_propose(2, {(d("p"), d("q"))})
    w.observe_client("zzz", d("zzz"))
    assert w.vote_queue == [] and w.edge_store.pending[2]


def test_duplicate_fair_propose_rejected():
    w = make_worker()
    w.on_fair_propose(7, set())
    with pytest.raises(ValueError):
        w.on_fair_propose(7, set())


def test_vote_covers_complete_missing_set():
    w = make_worker()
    for name in ("a", "b", "c", "e"):
        w.observe_client(name, d(name))
    missing = {(d("a"), d("b")), (d("c"), d("e")), (d("a"), d("e"))}
    w.on_fair_propose(9, missing)
    vote = w.vote_queue[0]
    assert len(vote.edges) == len(missing)
    covered = {tuple(sorted(e)) for e in vote.edges}
    assert covered == {tuple(sorted(p)) for p in missing}


# -- wire formats ----------------------------------------------------------------------


def _example_batch():
    w = make_worker()
    w.observe_client("pay-alice-5", d("pay-alice-5"))
    w.observe_remote(d("remote-tx"))
    w.on_fair_propose(2, {(d("pay-alice-5"), d("remote-tx"))})
    w.observe_client("pay-bob-7", d("pay-bob-7"))
    return w.build_batch()


@pytest.mark.parametrize("fmt", ["json", "binary"])
def test_batch_wire_round_trip(fmt):
    batch = _example_batch()
    assert batch.votes and batch.entries  # both payload kinds present
    wire = encode_batch(batch, fmt)
    assert decode_batch(wire, fmt) == batch


def test_binary_wire_is_length_prefixed():
    import struct

    wire = encode_batch(_example_batch(), "binary")
    (length,) = struct.unpack_from("<I", wire, 0)
    assert length == len(wire) - 4


@settings(max_examples=40)
@given(
    names=st.lists(st.text(alphabet="abcdef", min_size=1, max_size=6), min_size=0, max_size=12),
    fmt=st.sampled_from(["json", "binary"]),
    reverse=st.booleans(),
)
def test_wire_round_trip_property(names, fmt, reverse):
    w = make_worker(reverse=reverse)
    for i, name in enumerate(names):
        if i % 3 == 2:
            w.observe_remote(d(name + "!remote"))
        else:
            w.observe_client(name, d(name))
    batch = w.build_batch()
    assert decode_batch(encode_batch(batch, fmt), fmt) == batch
