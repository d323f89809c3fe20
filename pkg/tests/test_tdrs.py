import math
import random

import pytest

from orbitledger.ledger import Chain, mine_genesis, validate_chain
from orbitledger.tdrs import (
    Follower,
    ImageQuery,
    InvalidQuery,
    NoFollowers,
    NotCompleted,
    TdrsWorkflow,
    angular_distance,
    causality_violations,
    decode_query_ids,
    encode_query_ids,
    query_trail,
    reallocate_followers,
)
from orbitledger.tokens import DownlinkFeedbackToken, UplinkToken, decode_token


def query(qid, lat=0.0, lon=0.0, fee=1, submitted=0):
    return ImageQuery(qid, requester=50, locations=((lat, lon),), timeframes=((0, 100),), fee=fee, submitted=submitted)


def workflow(followers=None):
    chain = Chain(mine_genesis(difficulty=1), 1)
    return TdrsWorkflow(chain, ground_station=1, tdrs=2,
                        followers=followers or [Follower(10, 0, 0, 5.0), Follower(11, 45, 90, 5.0)])


def test_haversine_reference_points():
    assert angular_distance((0, 0), (0, 90)) == pytest.approx(90)
    assert angular_distance((90, 0), (-90, 0)) == pytest.approx(180)
    assert angular_distance((10, 20), (10, 20)) == 0


class TestSubmit:
    def test_two_tokens_committed(self):
        w = workflow()
        request, session = w.submit_image_query(query(1), tick=0)
        committed = [tx for b in w.chain.blocks[1:] for tx in b.transactions]
        assert set(committed) == {request, session}

    def test_empty_locations(self):
        w = workflow()
        with pytest.raises(InvalidQuery):
            w.submit_image_query(ImageQuery(1, 50, (), ((0, 1),), 1), 0)

    def test_same_tick_fee_order(self):
        w = workflow()
        w.submit_image_query(query(1, fee=2), tick=3, commit=False)
        w.submit_image_query(query(2, fee=7), tick=3, commit=False)
        w.flush(3)
        txs = [tx for b in w.chain.blocks[1:] for tx in b.transactions]
        assert [(-t.fee, t.tx_id) for t in txs] == sorted((-t.fee, t.tx_id) for t in txs)
        assert len(txs) == 4


class TestUplink:
    def test_empty_batch_noop(self):
        w = workflow()
        assert w.uplink_to_tdrs(0) is None and len(w.chain) == 1

    def test_batch_of_three(self):
        w = workflow()
        for q in (3, 1, 2):
            w.submit_image_query(query(q), 0)
        tx = w.uplink_to_tdrs(1)
        token = decode_token(tx.payload)
        assert isinstance(token, UplinkToken)
        assert decode_query_ids(token.command) == [1, 2, 3]
        uplinks = [t for b in w.chain.blocks for t in b.transactions if isinstance(decode_token(t.payload), UplinkToken)]
        assert len(uplinks) == 1

    def test_ids_roundtrip(self):
        ids = [0, 5, 2**64 - 1]
        assert decode_query_ids(encode_query_ids(ids)) == ids
        with pytest.raises(ValueError):
            decode_query_ids(encode_query_ids(ids)[:-1])


class TestReallocate:
    def test_nearer_follower(self):
        near, far = Follower(1, 10, 10, 1.0), Follower(2, -60, -120, 1.0)
        a = reallocate_followers([query(7, 12, 12)], [far, near])
        assert a.followers == {7: 1}

    def test_zero_queries(self):
        a = reallocate_followers([], [Follower(1, 0, 0, 1.0)])
        assert a.followers == {} and a.completion == {}

    def test_no_followers(self):
        with pytest.raises(NoFollowers):
            reallocate_followers([query(1)], [])

    def test_tie_goes_to_smaller_id(self):
        a = reallocate_followers([query(1, 0, 10)], [Follower(9, 0, 0, 1.0), Follower(4, 0, 20, 1.0)])
        assert a.followers == {1: 4}

    def test_busy_follower_load_counts(self):
        busy, idle = Follower(1, 0, 0, 1.0, busy_until=100), Follower(2, 0, 30, 1.0)
        a = reallocate_followers([query(1, 0, 1)], [busy, idle], now=0)
        assert a.followers == {1: 2} and a.completion[1] == 29

    def test_higher_fee_served_first(self):
        f = Follower(1, 0, 0, 1.0)
        a = reallocate_followers([query(1, 0, -10, fee=1), query(2, 0, 10, fee=5)], [f])
        assert a.completion[2] == 10 and a.start[1] == 10 and a.completion[1] == 30

    @pytest.mark.parametrize("seed", range(10))
    def test_single_query_matches_exhaustive(self, seed):
        rng = random.Random(seed)
        for n in range(1, 5):
            fs = [Follower(i, rng.uniform(-90, 90), rng.uniform(-180, 180), rng.uniform(0.5, 5), rng.randint(0, 30))
                  for i in range(n)]
            q = query(1, rng.uniform(-90, 90), rng.uniform(-180, 180))
            now = rng.randint(0, 20)
            best = min(
                max(f.busy_until, now) + math.ceil(angular_distance((f.lat, f.lon), q.locations[0]) / f.rate)
                for f in fs
            )
            assert reallocate_followers([q], fs, now).completion[1] == best


def run_schedule(rng: random.Random):
    w = workflow([Follower(10 + i, rng.uniform(-60, 60), rng.uniform(-180, 180), rng.uniform(1, 10)) for i in range(3)])
    queries = [query(q, rng.uniform(-80, 80), rng.uniform(-180, 180), rng.randint(0, 9), submitted=rng.randint(0, 30))
               for q in range(rng.randint(1, 8))]
    events = []
    for q in queries:
        events.append((q.submitted, 0, "submit", q))
        events.append((q.submitted + rng.randint(0, 3), 1, "uplink", q))
    events.sort(key=lambda e: (e[0], e[1], e[3].query_id))
    for tick, _, what, q in events:
        if what == "submit":
            w.submit_image_query(q, tick)
        else:
            before = list(w.pending_uplink)
            w.uplink_to_tdrs(tick)
            if before:
                w.reallocate(before, tick)
    done = sorted(w.assignment.completion.items(), key=lambda kv: (kv[1], kv[0]))
    for qid, t in done:
        w.downlink_feedback(qid, t)
        w.downlink_feedback(qid, t + 1)  # repeated downlink must stay exactly-once
    return w, queries


@pytest.mark.parametrize("seed", range(20))
def test_random_schedule_causality(seed):
    w, queries = run_schedule(random.Random(seed))
    assert validate_chain(w.chain, 1).valid
    assert causality_violations(w.chain) == []
    trail = query_trail(w.chain)
    by_id = {q.query_id: q for q in queries}
    for qid, marks in trail.items():
        assert len(marks.get("feedback", [])) == 1
    for b in w.chain.blocks:
        for tx in b.transactions:
            t = decode_token(tx.payload)
            if isinstance(t, DownlinkFeedbackToken):
                assert t.completion_tick >= t.start_tick >= by_id[t.query_id].submitted


def test_downlink_before_completion():
    w = workflow()
    w.submit_image_query(query(1, 40, 40), 0)
    w.uplink_to_tdrs(0)
    a = w.reallocate([1], 0)
    with pytest.raises(NotCompleted):
        w.downlink_feedback(1, a.completion[1] - 1)
    with pytest.raises(NotCompleted):
        w.downlink_feedback(2, 100)


def test_feedback_out_of_order_is_a_violation():
    w = workflow()
    w.submit_image_query(query(1), 0)
    w.reallocate([1], 0)
    w.downlink_feedback(1, 100)
    w.uplink_to_tdrs(101)
    assert causality_violations(w.chain) == ["query 1: order request<uplink<feedback violated"]


def test_greedy_never_idles_follower_while_query_waits():
    rng = random.Random(3)
    for _ in range(50):
        fs = [Follower(i, rng.uniform(-60, 60), rng.uniform(-180, 180), rng.uniform(1, 5)) for i in range(3)]
        qs = [query(q, rng.uniform(-60, 60), rng.uniform(-180, 180), rng.randint(0, 5)) for q in range(5)]
        a = reallocate_followers(qs, fs)
        assert set(a.followers) == {q.query_id for q in qs}
        for f in fs:
            starts = sorted(a.start[q] for q, fid in a.followers.items() if fid == f.id)
            ends = sorted(a.completion[q] for q, fid in a.followers.items() if fid == f.id)
            assert all(s == e for s, e in zip(starts[1:], ends[:-1]))
