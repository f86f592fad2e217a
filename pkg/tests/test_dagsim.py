import pytest

from batchfair.adversaries import (
    REVERSE_ORDER,
    SILENT_CRASH,
    ClientDirective,
    ClientSchedule,
    FaultDirective,
    FaultSchedule,
    random_crash_schedule,
    uniform_load,
)
from batchfair.dagsim import Simulator
from batchfair.params import ConfigError, SimConfig
from batchfair.types import Certificate, Vertex, vertex_id


def lockstep_sim(n=5, f=1, seed=7, max_rounds=10, **kw) -> Simulator:
    cfg = SimConfig(n=n, f=f, gamma=1, seed=seed, max_rounds=max_rounds,
                    delivery_model="lockstep", **kw)
    return Simulator(cfg, clients=uniform_load(n, 20, 1, max(2, max_rounds - 4), seed=seed))


def test_genesis_round_yields_n_vertices_and_certificates():
    sim = lockstep_sim()
    pairs = sim.advance_round()
    assert len(pairs) == 5
    for vertex, cert in pairs:
        assert isinstance(vertex, Vertex) and isinstance(cert, Certificate)
        assert vertex.round == 0 and vertex.parents == frozenset()
        assert vertex.batch is None  # genesis carries no payload
        assert len(cert.attestors) >= sim.cfg.quorum


def test_vertices_reference_quorum_and_self():
    sim = lockstep_sim()
    sim.advance_round()
    pairs = sim.advance_round()
    for vertex, _ in pairs:
        assert len(vertex.parents) >= sim.cfg.quorum
        own_prev = vertex_id(vertex.round - 1, vertex.author)
        assert own_prev in vertex.parents  # self-referencing rule


def test_crashed_replica_stops_proposing():
    cfg = SimConfig(n=5, f=1, gamma=1, seed=3, max_rounds=8, delivery_model="lockstep")
    faults = FaultSchedule([FaultDirective(2, SILENT_CRASH, 3)])
    sim = Simulator(cfg, faults=faults)
    for _ in range(4):
        sim.advance_round()
    assert sorted(sim.by_round[2]) == [0, 1, 2, 3, 4]
    assert sorted(sim.by_round[3]) == [0, 1, 3, 4]  # 4 vertices at round 3
    for v in sim.by_round[3].values():
        assert len(v.parents) >= 4  # quorum_size(5,1,1) = 4


def test_round_counter_advances_by_one():
    sim = lockstep_sim()
    assert sim.round == 0
    sim.advance_round()
    assert sim.round == 1
    sim.advance_round()
    assert sim.round == 2


def test_subdag_ids_consecutive_no_gaps():
    sim = lockstep_sim(seed=7, max_rounds=12)
    res = sim.run()
    ids = [rec.r for rec in res.records]
    assert ids == list(range(1, len(ids) + 1))
    assert ids  # the run committed something


def test_subdags_partition_committed_vertices():
    res = lockstep_sim(seed=11, max_rounds=12).run()
    seen = set()
    for rec in res.records:
        for vr in rec.vertices:
            assert vr.vid not in seen
            seen.add(vr.vid)


def test_causal_closure_parents_in_earlier_or_same_subdag():
    sim = lockstep_sim(seed=5, max_rounds=12)
    res = sim.run()
    placed = {}
    for rec in res.records:
        for vr in rec.vertices:
            placed[vr.vid] = rec.r
    for rec in res.records:
        for vr in rec.vertices:
            vertex = sim.by_round[vr.round][vr.author]
            for parent in vertex.parents:
                assert placed[parent] <= rec.r


def test_leader_commits_only_with_f_plus_one_references():
    sim = lockstep_sim(n=5, f=1, seed=2, max_rounds=4)
    for _ in range(4):
        sim.advance_round()
    leader_author = sim._coin(1)
    leader = sim.by_round[1][leader_author]
    children = {a: v for a, v in sim.by_round[2].items() if leader.vid in v.parents}
    assert len(children) >= 2  # sanity: the run would commit naturally
    # strip the leader reference from all but f=1 round-2 vertices
    keep = sorted(children)[:1]
    for author, v in list(sim.by_round[2].items()):
        if author in children and author not in keep:
            sim.by_round[2][author] = Vertex(
                v.author, v.round, v.vid, v.parents - {leader.vid}, v.batch
            )
    assert sim.try_commit() == []  # exactly f references: below threshold
    # restore one reference: f+1 reached, the wave commits
    sim.checked_waves.discard(1)
    restore = sorted(set(children) - set(keep))[0]
    v = sim.by_round[2][restore]
    sim.by_round[2][restore] = Vertex(
        v.author, v.round, v.vid, v.parents | {leader.vid}, v.batch
    )
    committed = sim.try_commit()
    assert committed and committed[0].leader_vid == leader.vid


def test_uncommitted_wave_yields_empty_list_and_later_sweep():
    # crash the wave-1 leader before its leader round: the wave is skipped,
    # ids stay consecutive, and the leader's earlier vertices are swept later
    cfg = SimConfig(n=5, f=1, gamma=1, seed=7, max_rounds=12, delivery_model="lockstep")
    sim = Simulator(cfg)
    leader_author = sim._coin(1)
    faults = FaultSchedule([FaultDirective(leader_author, SILENT_CRASH, 1)])
    res = Simulator(cfg, faults=faults).run()
    ids = [rec.r for rec in res.records]
    assert ids == list(range(1, len(ids) + 1))


def test_determinism_bit_identical_traces():
    def run():
        cfg = SimConfig(n=9, f=2, gamma=1, seed=77, max_rounds=14)
        faults = FaultSchedule([FaultDirective(4, SILENT_CRASH, 5),
                                FaultDirective(7, REVERSE_ORDER, 0)])
        clients = uniform_load(9, 50, 1, 10, seed=77, skew_p=0.2)
        return Simulator(cfg, faults=faults, clients=clients).run()

    a, b = run(), run()
    assert a.trace.deterministic_view() == b.trace.deterministic_view()
    assert a.pipeline.emitted == b.pipeline.emitted


def test_infeasible_crash_schedule_rejected():
    cfg = SimConfig(n=5, f=1, gamma=1, seed=1, max_rounds=6)
    too_many = FaultSchedule([FaultDirective(0, SILENT_CRASH, 2),
                              FaultDirective(1, SILENT_CRASH, 2)])
    with pytest.raises(ValueError):
        Simulator(cfg, faults=too_many)  # budget f=1 exceeded


def test_wire_round_trip_inside_simulation():
    cfg = SimConfig(n=5, f=1, gamma=1, seed=4, max_rounds=16, batch_wire="binary")
    clients = uniform_load(5, 25, 1, 6, seed=4, skew_p=0.2)
    res = Simulator(cfg, clients=clients).run()
    assert sum(len(o.digests) for o in res.pipeline.emitted) == len(res.injected)


# -- schedules ---------------------------------------------------------------------


def test_fault_schedule_validation():
    with pytest.raises(ValueError):
        FaultSchedule([FaultDirective(0, "drop_alternate", 1)])
    with pytest.raises(ValueError):
        FaultSchedule([FaultDirective(0, SILENT_CRASH, 1),
                       FaultDirective(0, REVERSE_ORDER, 2)])
    sched = FaultSchedule([FaultDirective(0, SILENT_CRASH, 1)])
    with pytest.raises(ValueError):
        sched.check_budget(0)


def test_client_schedule_rounds_nondecreasing_per_replica():
    with pytest.raises(ValueError):
        ClientSchedule([
            ClientDirective("a", 0, 5, 0),
            ClientDirective("b", 0, 3, 1),
        ])


def test_random_crash_schedule_respects_budget():
    for seed in range(20):
        sched = random_crash_schedule(9, 2, 20, seed)
        assert sched.f_actual <= 2
        assert all(d.strategy == SILENT_CRASH for d in sched.directives)


def test_self_reference_chain_commits_in_round_order():
    # if replica i's round-r vertex is committed in subdag k, every earlier
    # vertex of i is committed in some subdag j <= k
    res = lockstep_sim(seed=13, max_rounds=14).run()
    commit_of: dict[tuple[int, int], int] = {}
    for rec in res.records:
        for vr in rec.vertices:
            commit_of[(vr.author, vr.round)] = rec.r
    for (author, rnd), k in commit_of.items():
        for earlier in range(rnd):
            assert commit_of.get((author, earlier), 10**9) <= k


@pytest.mark.parametrize("wave_len", [2, 3, 4])
def test_longer_waves_commit_consecutively_and_emit_everything(wave_len):
    cfg = SimConfig(n=5, f=1, gamma=1, seed=11, max_rounds=24, wave_len=wave_len)
    res = Simulator(cfg, clients=uniform_load(5, 40, 1, 16, seed=11, skew_p=0.2)).run()
    ids = [rec.r for rec in res.records]
    assert ids == list(range(1, len(ids) + 1)) and ids
    assert sum(len(o.digests) for o in res.pipeline.emitted) == len(res.injected)
