"""Prioritization, replay, discovery, and endpoint integration."""

from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinbridge.bridge import (
    BridgeEndpoint,
    DiscoveryConfig,
    EndpointConfig,
    EndpointState,
    PriorityPolicy,
    QueuedFrame,
    ReplayBuffer,
    TierScheduler,
    run_bridge_endpoint,
    tier_scheduler,
)
from twinbridge.envelope import (
    TIER_BULK,
    TIER_CRITICAL,
    TIER_STANDARD,
    Envelope,
    encode_envelope,
)
from twinbridge.msgbus import MessageKind, TopicBus
from twinbridge.netsim import (
    NetLink,
    NetworkConditions,
    PiecewiseConstant,
    SimClock,
    link_pair,
)


def frame(topic="/t", tier=TIER_STANDARD, seq=0, size=100):
    env = Envelope(tier, 0, seq, 0, topic, 0, bytes(size))
    return QueuedFrame(env, encode_envelope(env))


def queues(critical=(), standard=(), bulk=()):
    return {
        TIER_CRITICAL: deque(critical),
        TIER_STANDARD: deque(standard),
        TIER_BULK: deque(bulk),
    }


class TestPolicy:
    def test_first_match_wins(self):
        policy = PriorityPolicy(
            rules=(("/robot*/pose", TIER_CRITICAL), ("/robot1/*", TIER_BULK)),
            default_tier=TIER_STANDARD,
        )
        assert policy.classify("/robot1/pose") == TIER_CRITICAL
        assert policy.classify("/robot1/points") == TIER_BULK
        assert policy.classify("/other") == TIER_STANDARD

    def test_from_dict_with_names(self):
        policy = PriorityPolicy.from_dict(
            {"default": "bulk", "rules": [{"pattern": "/a", "tier": "critical"}]}
        )
        assert policy.classify("/a") == TIER_CRITICAL
        assert policy.classify("/b") == TIER_BULK

    def test_unknown_tier_rejected(self):
        with pytest.raises(ValueError):
            PriorityPolicy.from_dict({"rules": [{"pattern": "/a", "tier": "super"}]})

    def test_load_policy_file(self, tmp_path):
        from twinbridge.bridge import load_policy

        path = tmp_path / "policy.yaml"
        path.write_text(
            "default: standard\n"
            "rules:\n"
            "  - {pattern: '/cmd/*', tier: critical}\n"
            "  - {pattern: '/lidar/*', tier: bulk}\n",
            encoding="utf-8",
        )
        policy = load_policy(path)
        assert policy.classify("/cmd/stop") == TIER_CRITICAL
        assert policy.classify("/lidar/points") == TIER_BULK
        assert policy.classify("/misc") == TIER_STANDARD


class TestTierScheduler:
    def test_only_bulk_uses_full_budget(self):
        q = queues(bulk=[frame(tier=TIER_BULK, size=900) for _ in range(10)])
        plan = tier_scheduler(q, budget=5000)
        sent = sum(item.size for item in plan)
        assert sent >= 4 * 930  # frames are ~934 bytes; most of the budget used
        assert all(item.env.tier == TIER_BULK for item in plan)

    def test_strict_priority_critical_saturates(self):
        q = queues(
            critical=[frame(tier=TIER_CRITICAL, size=400) for _ in range(10)],
            standard=[frame(tier=TIER_STANDARD, size=400) for _ in range(10)],
        )
        plan = tier_scheduler(q, budget=1000)
        assert plan  # some critical sent
        assert all(item.env.tier == TIER_CRITICAL for item in plan)

    def test_bulk_floor_under_saturation(self):
        q = queues(
            critical=[frame(tier=TIER_CRITICAL, size=1000) for _ in range(200)],
            standard=[frame(tier=TIER_STANDARD, size=1000) for _ in range(200)],
            bulk=[frame(tier=TIER_BULK, size=1000) for _ in range(200)],
        )
        plan = tier_scheduler(q, budget=100 * 1024)
        bulk_bytes = sum(item.size for item in plan if item.env.tier == TIER_BULK)
        assert bulk_bytes >= 5 * 1024

    def test_deficit_lets_oversized_frame_send_eventually(self):
        sched = TierScheduler()
        q = queues(critical=[frame(tier=TIER_CRITICAL, size=5000)])
        sent = []
        for _ in range(12):
            sent.extend(sched.plan(q, budget=500))
        assert len(sent) == 1

    def test_leftover_cascades_down(self):
        q = queues(
            critical=[frame(tier=TIER_CRITICAL, size=100)],
            standard=[frame(tier=TIER_STANDARD, size=100) for _ in range(3)],
        )
        plan = tier_scheduler(q, budget=10_000)
        assert len(plan) == 4

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            tier_scheduler(queues(), 0)

    def test_shares_override(self):
        sched = TierScheduler(shares=(0.5, 0.3, 0.2))
        q = queues(
            critical=[frame(tier=TIER_CRITICAL, size=100) for _ in range(100)],
            standard=[frame(tier=TIER_STANDARD, size=100) for _ in range(100)],
            bulk=[frame(tier=TIER_BULK, size=100) for _ in range(100)],
        )
        plan = sched.plan(q, budget=1000)
        by_tier = {}
        for item in plan:
            by_tier[item.env.tier] = by_tier.get(item.env.tier, 0) + item.size
        assert by_tier.get(TIER_STANDARD, 0) > 0
        assert by_tier.get(TIER_BULK, 0) > 0

    @given(
        crit_sizes=st.lists(st.integers(1, 400), max_size=12),
        std_sizes=st.lists(st.integers(1, 400), max_size=12),
        bulk_sizes=st.lists(st.integers(1, 400), max_size=12),
        budget=st.integers(200, 5000),
    )
    @settings(max_examples=150, deadline=None)
    def test_starvation_guard_property(self, crit_sizes, std_sizes, bulk_sizes, budget):
        q = queues(
            critical=[frame(tier=TIER_CRITICAL, size=s) for s in crit_sizes],
            standard=[frame(tier=TIER_STANDARD, size=s) for s in std_sizes],
            bulk=[frame(tier=TIER_BULK, size=s) for s in bulk_sizes],
        )
        bulk_available = sum(item.size for item in q[TIER_BULK])
        plan = tier_scheduler(q, budget=budget)
        # transmit order is strictly by tier
        tiers_in_plan = [item.env.tier for item in plan]
        assert tiers_in_plan == sorted(tiers_in_plan)
        # bulk gets its floor whenever it has traffic: at least 5% of the
        # budget worth of bulk bytes, or everything it had queued
        if bulk_available:
            bulk_sent = sum(item.size for item in plan if item.env.tier == TIER_BULK)
            assert bulk_sent >= min(0.05 * budget, bulk_available)


class TestReplayBuffer:
    def env(self, topic="/t", seq=0, tier=TIER_CRITICAL):
        return Envelope(tier, 0, seq, 0, topic, 0, b"x")

    def test_range_fully_buffered(self):
        buf = ReplayBuffer(capacity=10)
        for i in range(5):
            buf.insert(self.env(seq=i))
        assert [e.seq for e in buf.get_range("/t", 1, 3)] == [1, 2, 3]

    def test_unknown_topic_empty(self):
        buf = ReplayBuffer(capacity=10)
        assert buf.get_range("/missing", 0, 5) == []

    def test_eviction_prefers_bulk_then_standard(self):
        buf = ReplayBuffer(capacity=3)
        buf.insert(self.env(seq=0, tier=TIER_CRITICAL))
        buf.insert(self.env(seq=1, tier=TIER_BULK))
        buf.insert(self.env(seq=2, tier=TIER_STANDARD))
        buf.insert(self.env(seq=3, tier=TIER_CRITICAL))  # evicts the bulk entry
        assert [e.seq for e in buf.get_range("/t", 0, 10)] == [0, 2, 3]
        buf.insert(self.env(seq=4, tier=TIER_CRITICAL))  # evicts the standard entry
        assert [e.seq for e in buf.get_range("/t", 0, 10)] == [0, 3, 4]
        buf.insert(self.env(seq=5, tier=TIER_CRITICAL))  # all critical: oldest goes
        assert [e.seq for e in buf.get_range("/t", 0, 10)] == [3, 4, 5]
        assert buf.dropped == 3

    def test_half_evicted_range(self):
        buf = ReplayBuffer(capacity=4)
        for i in range(8):
            buf.insert(self.env(seq=i))
        assert [e.seq for e in buf.get_range("/t", 2, 5)] == [4, 5]


def ideal_pair(clock, seed=1, **kwargs):
    cond = NetworkConditions(
        PiecewiseConstant(kwargs.pop("latency", 0.0)),
        PiecewiseConstant(kwargs.pop("loss", 0.0)),
        kwargs.pop("bandwidth", None),
        tuple(kwargs.pop("disconnects", ())),
    )
    return link_pair(clock, cond, seed)


def make_pair(clock, fwd, rev, policy=None, config=None, discovery=None, remote_config=None):
    policy = policy or PriorityPolicy()
    config = config or EndpointConfig(topics=("/data",))
    bus_a, bus_b = TopicBus(), TopicBus()
    local = run_bridge_endpoint(
        bus_a, fwd, rev, policy, discovery or DiscoveryConfig(enabled=False), clock, config
    )
    remote = run_bridge_endpoint(
        bus_b, rev, fwd, policy, DiscoveryConfig(enabled=False), clock,
        remote_config or EndpointConfig(topics=()),
    )
    return bus_a, bus_b, local, remote


class TestEndpoint:
    def test_basic_bridging(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev)
        pub = bus_a.advertise("/data", MessageKind.POSE)
        sub = bus_b.subscribe("/data", 64)
        for i in range(5):
            pub.publish(bytes([i]), clock.now)
            clock.advance(0.05)
        clock.advance(1.0)
        got = sub.drain()
        assert [m.payload[0] for m in got] == [0, 1, 2, 3, 4]
        assert bus_b.kind_of("/data") == MessageKind.POSE

    def test_order_preserved_under_loss_standard_tier(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock, loss=0.3, seed=9)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev)
        pub = bus_a.advertise("/data", MessageKind.BLOB)
        sub = bus_b.subscribe("/data", 256)
        for i in range(60):
            pub.publish(bytes([i]), clock.now)
            clock.advance(0.02)
        clock.advance(2.0)
        seqs = [m.payload[0] for m in sub.drain()]
        assert seqs == sorted(seqs)
        assert len(seqs) < 60  # standard tier is not repaired

    def test_critical_tier_eventual_delivery_under_loss(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock, loss=0.25, seed=4)
        policy = PriorityPolicy(rules=(("/data", TIER_CRITICAL),))
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev, policy=policy)
        pub = bus_a.advertise("/data", MessageKind.COMMAND)
        sub = bus_b.subscribe("/data", 512)
        for i in range(80):
            pub.publish(i.to_bytes(2, "little"), clock.now)
            clock.advance(0.02)
        clock.advance(15.0)  # drain window for replays
        got = [int.from_bytes(m.payload, "little") for m in sub.drain()]
        assert got == list(range(80))  # exactly once, in order

    def test_disconnect_then_replay(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock, disconnects=((1.0, 6.0),), seed=2)
        policy = PriorityPolicy(rules=(("/data", TIER_CRITICAL),))
        config = EndpointConfig(topics=("/data",), replay_capacity=128)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev, policy=policy, config=config)
        pub = bus_a.advertise("/data", MessageKind.COMMAND)
        sub = bus_b.subscribe("/data", 512)
        # 10 Hz for 8 seconds straddling the 5 s blackout
        for i in range(80):
            pub.publish(i.to_bytes(2, "little"), clock.now)
            clock.advance(0.1)
        clock.advance(10.0)
        got = [int.from_bytes(m.payload, "little") for m in sub.drain()]
        assert got == list(range(80))

    def test_discovery_picks_up_new_topic_within_two_periods(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        discovery = DiscoveryConfig(enabled=True, period=0.5, deny=("/skip*",))
        config = EndpointConfig()
        bus_a, bus_b, local, remote = make_pair(
            clock, fwd, rev, config=config, discovery=discovery
        )
        clock.advance(0.2)
        pub = bus_a.advertise("/fresh", MessageKind.POSE)
        deny_pub = bus_a.advertise("/skip/this", MessageKind.POSE)
        sub = bus_b.subscribe("/fresh", 16)
        t_advertised = clock.now
        # publish continuously; first delivery must happen within 2 periods
        delivered_at = None
        while clock.now < t_advertised + 2.0:
            pub.publish(b"x", clock.now)
            deny_pub.publish(b"y", clock.now)
            clock.advance(0.05)
            if delivered_at is None and len(sub):
                delivered_at = clock.now
        assert delivered_at is not None
        assert delivered_at - t_advertised <= 2 * discovery.period
        assert "/skip/this" not in local.bridged_topics()
        assert bus_b.kind_of("/skip/this") is None

    def test_no_echo_loop_with_bidirectional_discovery(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        policy = PriorityPolicy()
        discovery = DiscoveryConfig(enabled=True, period=0.3)
        bus_a, bus_b = TopicBus(), TopicBus()
        local = run_bridge_endpoint(bus_a, fwd, rev, policy, discovery, clock, EndpointConfig())
        remote = run_bridge_endpoint(bus_b, rev, fwd, policy, discovery, clock, EndpointConfig())
        pub = bus_a.advertise("/ping", MessageKind.POSE)
        sub = bus_b.subscribe("/ping", 64)
        clock.advance(0.4)  # let discovery subscribe before traffic starts
        for i in range(20):
            pub.publish(bytes([i]), clock.now)
            clock.advance(0.1)
        clock.advance(2.0)
        # each message crosses exactly once; nothing bounces back
        assert len(sub.drain()) == 20
        assert remote.republished.get("/ping", 0) == 20
        assert local.republished.get("/ping", 0) == 0

    def test_link_closed_stops_endpoint(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev)
        fwd.close()
        clock.advance(0.5)
        assert local.state == EndpointState.LINK_CLOSED

    def test_request_replay_counts(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        policy = PriorityPolicy(rules=(("/data", TIER_CRITICAL),))
        config = EndpointConfig(topics=("/data",), replay_capacity=4)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev, policy=policy, config=config)
        pub = bus_a.advertise("/data", MessageKind.COMMAND)
        for i in range(8):
            pub.publish(bytes([i]), clock.now)
            clock.advance(0.05)
        clock.advance(1.0)
        # capacity 4: seqs 4..7 retained
        assert local.request_replay("/data", 0, 7) == 4
        assert local.request_replay("/data", 0, 3) == 0
        assert local.request_replay("/missing", 0, 3) == 0
        with pytest.raises(ValueError):
            local.request_replay("/data", 5, 2)

    def test_replayed_frames_carry_replay_flag(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock)
        policy = PriorityPolicy(rules=(("/data", TIER_CRITICAL),))
        config = EndpointConfig(topics=("/data",), replay_capacity=64)
        bus_a, bus_b, local, remote = make_pair(clock, fwd, rev, policy=policy, config=config)
        pub = bus_a.advertise("/data", MessageKind.COMMAND)
        for i in range(4):
            pub.publish(bytes([i]), clock.now)
            clock.advance(0.05)
        clock.advance(0.5)
        local.request_replay("/data", 1, 2)
        flagged = [item.env for q in local._queues.values() for item in q]
        assert flagged and all(env.is_replay for env in flagged)
        assert [env.seq for env in flagged] == [1, 2]

    def test_batching_reduces_link_sends(self):
        def sends_with(batch_size):
            clock = SimClock()
            fwd, rev = ideal_pair(clock)
            config = EndpointConfig(topics=("/data",), batch_size=batch_size)
            bus_a, _, local, _ = make_pair(clock, fwd, rev, config=config)
            pub = bus_a.advertise("/data", MessageKind.BLOB)
            for i in range(8):  # all in one tick: batchable burst
                pub.publish(bytes([i]), clock.now)
            clock.advance(0.5)
            return local.link_sends

        assert sends_with(8) < sends_with(1)

    def test_fifo_baseline_no_replay(self):
        clock = SimClock()
        fwd, rev = ideal_pair(clock, loss=0.25, seed=4)
        config = EndpointConfig(topics=("/data",), prioritized=False)
        bus_a, bus_b, local, remote = make_pair(
            clock, fwd, rev, config=config,
            remote_config=EndpointConfig(prioritized=False, topics=()),
        )
        pub = bus_a.advertise("/data", MessageKind.COMMAND)
        sub = bus_b.subscribe("/data", 512)
        for i in range(80):
            pub.publish(i.to_bytes(2, "little"), clock.now)
            clock.advance(0.02)
        clock.advance(10.0)
        got = [int.from_bytes(m.payload, "little") for m in sub.drain()]
        assert 0 < len(got) < 80  # loss is permanent without replay
        assert got == sorted(got)
