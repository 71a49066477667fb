"""Prioritized, fault-tolerant topic bridging between two buses over a link.

An endpoint runs three duties on the shared simulation clock:

* egress: drain subscribed topics, classify each message into a priority tier,
  frame it, and feed per-tier send queues emptied by the tier scheduler under
  a per-tick byte budget;
* ingress: decode arriving frames, deduplicate by sequence number, republish
  on the local bus in per-topic sequence order, and detect gaps;
* discovery: periodically subscribe to newly advertised topics that pass the
  allow/deny lists.

Critical-tier gaps trigger replay requests over the reverse link; requests
are re-sent on a timer until the gap closes or the attempt budget runs out.
Every frame sent is retained in a per-topic replay ring that evicts bulk
first, then standard, and touches critical only when nothing else remains.

A baseline mode (prioritization, replay, and discovery all off, single FIFO
queue) stands in for a conventional unprioritized setup in comparisons.
"""

from __future__ import annotations

import itertools
import struct
from collections import deque
from dataclasses import dataclass, field
from fnmatch import fnmatchcase

from .envelope import (
    FLAG_REPLAY,
    TIER_BULK,
    TIER_BY_NAME,
    TIER_CRITICAL,
    TIER_NAMES,
    TIER_STANDARD,
    TIERS,
    Envelope,
    FrameError,
    decode_stream,
    encode_envelope,
    with_replay_flag,
)
from .msgbus import Message, MessageKind, Publisher, Subscription, TopicBus
from .netsim import NetLink, SimClock

CONTROL_PREFIX = "/__bridge"
REPLAY_TOPIC = "/__bridge/replay"
HEARTBEAT_TOPIC = "/__bridge/beat"

_REQ_HEAD = struct.Struct("<H")
_REQ_RANGE = struct.Struct("<QQ")
_BEAT_SEQ = struct.Struct("<Q")

BULK_BUDGET_FRACTION = 0.05


# --- prioritization -------------------------------------------------------------


@dataclass(frozen=True)
class PriorityPolicy:
    """Ordered glob rules mapping topics to tiers; first match wins."""

    rules: tuple[tuple[str, int], ...] = ()
    default_tier: int = TIER_STANDARD

    def classify(self, topic: str) -> int:
        for pattern, tier in self.rules:
            if fnmatchcase(topic, pattern):
                return tier
        return self.default_tier

    @staticmethod
    def from_dict(data: dict) -> "PriorityPolicy":
        rules = tuple(
            (rule["pattern"], _tier_code(rule["tier"])) for rule in data.get("rules", ())
        )
        return PriorityPolicy(rules, _tier_code(data.get("default", "standard")))


def _tier_code(value) -> int:
    if isinstance(value, int):
        if value not in TIERS:
            raise ValueError(f"tier {value} not in {TIERS}")
        return value
    try:
        return TIER_BY_NAME[str(value)]
    except KeyError:
        raise ValueError(f"unknown tier name {value!r}") from None


def load_policy(path) -> PriorityPolicy:
    """Load a priority policy from its YAML file."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        return PriorityPolicy.from_dict(yaml.safe_load(fh) or {})


# --- replay buffer ---------------------------------------------------------------


class ReplayBuffer:
    """Per-topic ring of sent envelopes with tier-aware eviction.

    When a topic's ring exceeds capacity the oldest bulk envelope goes first,
    then the oldest standard; critical entries are evicted only when the ring
    holds nothing else.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = capacity
        self.dropped = 0
        self._rings: dict[str, deque[Envelope]] = {}

    def insert(self, env: Envelope) -> None:
        ring = self._rings.setdefault(env.topic, deque())
        ring.append(env)
        if len(ring) > self.capacity:
            self._evict(ring)

    def _evict(self, ring: deque[Envelope]) -> None:
        for tier in (TIER_BULK, TIER_STANDARD, TIER_CRITICAL):
            for i, env in enumerate(ring):
                if env.tier == tier:
                    del ring[i]
                    self.dropped += 1
                    return

    def get_range(self, topic: str, from_seq: int, to_seq: int) -> list[Envelope]:
        ring = self._rings.get(topic)
        if not ring:
            return []
        return [e for e in ring if from_seq <= e.seq <= to_seq]

    def topics(self) -> list[str]:
        return sorted(self._rings)

    def held(self, topic: str) -> int:
        return len(self._rings.get(topic, ()))

    def contains(self, topic: str, seq: int) -> bool:
        ring = self._rings.get(topic)
        return any(e.seq == seq for e in ring) if ring else False


# --- discovery ------------------------------------------------------------------


@dataclass(frozen=True)
class DiscoveryConfig:
    """Dynamic topic discovery: period and allow/deny glob lists."""

    enabled: bool = True
    period: float = 0.5
    allow: tuple[str, ...] = ()
    deny: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.enabled and self.period <= 0:
            raise ValueError("discovery period must be positive when enabled")

    def permits(self, topic: str) -> bool:
        if topic.startswith(CONTROL_PREFIX):
            return False
        if self.allow and not any(fnmatchcase(topic, pat) for pat in self.allow):
            return False
        return not any(fnmatchcase(topic, pat) for pat in self.deny)


# --- tier scheduling --------------------------------------------------------------


@dataclass
class QueuedFrame:
    env: Envelope
    frame: bytes

    @property
    def size(self) -> int:
        return len(self.frame)


class TierScheduler:
    """Strict-priority scheduler with a bulk floor and per-tier byte credit.

    Each tick the bulk tier reserves 5% of the budget whenever it has traffic;
    critical then standard drain the remainder in strict priority, and unused
    allowance cascades down. A tier sends whole frames while its credit is
    positive and may borrow ahead (credit goes negative), which keeps the
    long-run byte rate at the allowance while letting frames larger than one
    tick's budget through instead of stalling.
    """

    def __init__(self, shares: tuple[float, float, float] | None = None) -> None:
        if shares is not None:
            if len(shares) != 3 or any(s < 0 for s in shares) or sum(shares) > 1.0 + 1e-9:
                raise ValueError("shares must be 3 non-negative fractions summing to <= 1")
        self.shares = shares
        self._credit = {tier: 0.0 for tier in TIERS}

    def plan(self, queues: dict[int, deque[QueuedFrame]], budget: float) -> list[QueuedFrame]:
        """Pop frames to send this tick, in transmit order."""
        if budget <= 0:
            raise ValueError("budget must be positive")
        out: list[QueuedFrame] = []
        bulk_waiting = bool(queues.get(TIER_BULK))

        if self.shares is None:
            reserve = BULK_BUDGET_FRACTION * budget if bulk_waiting else 0.0
            quanta = {TIER_CRITICAL: budget - reserve, TIER_STANDARD: 0.0, TIER_BULK: reserve}
        else:
            sc, ss, sb = self.shares
            spare = max(0.0, 1.0 - (sc + ss + sb))
            if bulk_waiting:
                sb = max(sb, BULK_BUDGET_FRACTION)
            quanta = {
                TIER_CRITICAL: (sc + spare) * budget,
                TIER_STANDARD: ss * budget,
                TIER_BULK: sb * budget,
            }

        carry = 0.0
        for tier in (TIER_CRITICAL, TIER_STANDARD, TIER_BULK):
            queue = queues.get(tier) or deque()
            self._credit[tier] += quanta[tier] + carry
            carry = 0.0
            while queue and self._credit[tier] > 0:
                item = queue.popleft()
                self._credit[tier] -= item.size
                out.append(item)
            if not queue:
                # an idle tier neither banks nor owes; surplus cascades down
                carry = max(self._credit[tier], 0.0)
                self._credit[tier] = 0.0
        return out


def tier_scheduler(
    queues: dict[int, deque[QueuedFrame]], budget: float
) -> list[QueuedFrame]:
    """Single-tick scheduling with fresh state (no carried deficit)."""
    return TierScheduler().plan(queues, budget)


# --- bridge endpoint ---------------------------------------------------------------


class EndpointState:
    RUNNING = "running"
    STOPPED = "stopped"
    LINK_CLOSED = "link_closed"


@dataclass(frozen=True)
class EndpointConfig:
    """Tunable endpoint parameters; `prioritized=False` is the FIFO baseline."""

    prioritized: bool = True
    tick: float = 0.01
    budget_per_tick: float | None = None  # default: bandwidth cap * tick
    batch_size: int = 4
    redundancy: int = 0
    shares: tuple[float, float, float] | None = None
    replay_capacity: int = 256
    sub_capacity: int = 4096
    heartbeat_interval: float = 0.25
    replay_retry: float = 0.3
    replay_attempts: int = 12
    topics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.tick <= 0:
            raise ValueError("tick must be positive")
        if not 0 <= self.redundancy <= 3:
            raise ValueError("redundancy must be in 0..3")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class _RxTopic:
    expected: int = 0
    ahead: dict[int, Envelope] = field(default_factory=dict)
    seen: set[int] = field(default_factory=set)
    gaps: dict[tuple[int, int], tuple[float, int]] = field(default_factory=dict)
    duplicates: int = 0
    late_drops: int = 0
    skipped: int = 0


@dataclass
class _TxTopic:
    tier: int
    kind: int
    sub: Subscription
    next_seq: int = 0
    last_sent_at: float = 0.0
    sent: int = 0


class BridgeEndpoint:
    """One side of a bridged link; also the handle reporting its state."""

    _ids = itertools.count()

    def __init__(
        self,
        bus: TopicBus,
        tx_link: NetLink,
        rx_link: NetLink,
        policy: PriorityPolicy,
        discovery: DiscoveryConfig,
        clock: SimClock,
        config: EndpointConfig = EndpointConfig(),
    ) -> None:
        self.bus = bus
        self.tx_link = tx_link
        self.rx_link = rx_link
        self.policy = policy
        self.discovery = discovery
        self.clock = clock
        self.config = config
        self.state = EndpointState.RUNNING
        self.origin_id = f"bridge-{next(self._ids)}"

        self.replay_buffer = ReplayBuffer(config.replay_capacity)
        self._scheduler = TierScheduler(config.shares)
        self._tx: dict[str, _TxTopic] = {}
        self._rx: dict[str, _RxTopic] = {}
        self._queues: dict[int, deque[QueuedFrame]] = {t: deque() for t in TIERS}
        self._fifo: deque[QueuedFrame] = deque()
        self._publishers: dict[str, Publisher] = {}
        self._republished_topics: set[str] = set()
        self._control_seq = {REPLAY_TOPIC: 0, HEARTBEAT_TOPIC: 0}

        # op counters feed the deterministic compute metric and reports
        self.encodes = 0
        self.decodes = 0
        self.link_sends = 0
        self.bytes_sent = 0
        self.republished: dict[str, int] = {}
        self.delivered_seqs: dict[str, set[int]] = {}
        self.latencies: dict[str, list[float]] = {}
        self.decode_errors = 0
        self.replays_served = 0
        self.replays_requested = 0

        rx_link.on_deliver = self._on_deliver
        for topic in config.topics:
            self._ensure_subscription(topic)
        self._schedule_tick()
        if discovery.enabled and config.prioritized:
            self._run_discovery()

    # --- wiring -------------------------------------------------------------

    def _schedule_tick(self) -> None:
        self.clock.schedule(self.clock.now + self.config.tick, self._tick, tag=(self.origin_id, "tick"))

    def _budget(self) -> float:
        if self.config.budget_per_tick is not None:
            return self.config.budget_per_tick
        cap = self.tx_link.conditions.bandwidth_cap
        # 10% headroom keeps backlog in the prioritized tier queues instead
        # of the link's FIFO serialization queue
        return 0.9 * cap * self.config.tick if cap else 1_000_000.0

    def stop(self) -> None:
        if self.state == EndpointState.RUNNING:
            self.state = EndpointState.STOPPED

    # --- discovery duty -------------------------------------------------------

    def _run_discovery(self) -> None:
        if self.state != EndpointState.RUNNING:
            return
        for topic, _kind in sorted(self.bus.list_topics()):
            if topic in self._tx or topic in self._republished_topics:
                continue
            if self.discovery.permits(topic):
                self._ensure_subscription(topic)
        self.clock.schedule(
            self.clock.now + self.discovery.period, self._run_discovery, tag=(self.origin_id, "disc")
        )

    def _ensure_subscription(self, topic: str) -> None:
        if topic in self._tx:
            return
        kind = self.bus.kind_of(topic)
        sub = self.bus.subscribe(topic, self.config.sub_capacity)
        tier = self.policy.classify(topic) if self.config.prioritized else TIER_STANDARD
        self._tx[topic] = _TxTopic(
            tier=tier, kind=int(kind) if kind is not None else int(MessageKind.BLOB), sub=sub
        )

    def bridged_topics(self) -> list[str]:
        return sorted(self._tx)

    # --- egress duty ----------------------------------------------------------

    def _tick(self) -> None:
        if self.state != EndpointState.RUNNING:
            return
        if self.tx_link.closed:
            self.state = EndpointState.LINK_CLOSED
            return
        now = self.clock.now
        self._drain_bus(now)
        if self.config.prioritized:
            self._emit_heartbeats(now)
            self._retry_gap_requests(now)
            plan = self._scheduler.plan(self._queues, self._budget())
        else:
            plan = self._plan_fifo(self._budget())
        self._transmit(plan)
        self._schedule_tick()

    def _drain_bus(self, now: float) -> None:
        for topic in sorted(self._tx):
            tx = self._tx[topic]
            kind = self.bus.kind_of(topic)
            if kind is not None:
                tx.kind = int(kind)
            for msg in tx.sub.drain():
                if msg.origin == self.origin_id:
                    continue
                env = Envelope(
                    tier=tx.tier,
                    flags=0,
                    seq=tx.next_seq,
                    sim_time_us=int(round(msg.publish_time * 1e6)),
                    topic=topic,
                    kind=int(msg.kind),
                    payload=msg.payload,
                )
                tx.next_seq += 1
                tx.sent += 1
                tx.last_sent_at = now
                frame = encode_envelope(env)
                self.encodes += 1
                if self.config.prioritized:
                    self.replay_buffer.insert(env)
                for _ in range(1 + self.config.redundancy):
                    self._enqueue(QueuedFrame(env, frame))

    def _enqueue(self, item: QueuedFrame) -> None:
        if self.config.prioritized:
            self._queues[item.env.tier].append(item)
        else:
            self._fifo.append(item)

    def _plan_fifo(self, budget: float) -> list[QueuedFrame]:
        out: list[QueuedFrame] = []
        spent = 0.0
        while self._fifo and (not out or spent + self._fifo[0].size <= budget):
            item = self._fifo.popleft()
            spent += item.size
            out.append(item)
        return out

    def _transmit(self, plan: list[QueuedFrame]) -> None:
        # one transport packet never mixes tiers, so a small critical packet
        # is not serialized behind bulk bytes sharing its batch
        batch: list[bytes] = []
        batch_tier: int | None = None
        for item in plan:
            if batch and (item.env.tier != batch_tier or len(batch) >= self.config.batch_size):
                self._send_batch(batch)
                batch = []
            batch_tier = item.env.tier
            batch.append(item.frame)
        if batch:
            self._send_batch(batch)

    def _send_batch(self, frames: list[bytes]) -> None:
        payload = b"".join(frames)
        self.tx_link.send(payload)
        self.link_sends += 1
        self.bytes_sent += len(payload)

    def _emit_heartbeats(self, now: float) -> None:
        for topic in sorted(self._tx):
            tx = self._tx[topic]
            if tx.tier != TIER_CRITICAL or tx.next_seq == 0:
                continue
            if now - tx.last_sent_at < self.config.heartbeat_interval:
                continue
            tx.last_sent_at = now
            payload = _pack_topic(topic) + _BEAT_SEQ.pack(tx.next_seq - 1)
            self._send_control(HEARTBEAT_TOPIC, payload, now)

    def _send_control(self, control_topic: str, payload: bytes, now: float) -> None:
        env = Envelope(
            tier=TIER_CRITICAL,
            flags=0,
            seq=self._control_seq[control_topic],
            sim_time_us=int(round(now * 1e6)),
            topic=control_topic,
            kind=int(MessageKind.COMMAND),
            payload=payload,
        )
        self._control_seq[control_topic] += 1
        self.encodes += 1
        self._queues[TIER_CRITICAL].append(QueuedFrame(env, encode_envelope(env)))

    # --- ingress duty -----------------------------------------------------------

    def _on_deliver(self, payload: bytes, at: float) -> None:
        if self.state != EndpointState.RUNNING:
            return
        try:
            frames = decode_stream(payload)
        except FrameError:
            self.decode_errors += 1
            return
        for env in frames:
            self.decodes += 1
            if env.topic.startswith(CONTROL_PREFIX):
                self._handle_control(env, at)
            else:
                self._handle_data(env, at)

    def _handle_control(self, env: Envelope, at: float) -> None:
        if env.topic == REPLAY_TOPIC:
            topic, rest = _unpack_topic(env.payload)
            from_seq, to_seq = _REQ_RANGE.unpack(rest)
            self.request_replay(topic, from_seq, to_seq)
        elif env.topic == HEARTBEAT_TOPIC:
            topic, rest = _unpack_topic(env.payload)
            (last_seq,) = _BEAT_SEQ.unpack(rest)
            rx = self._rx.setdefault(topic, _RxTopic())
            if self.config.prioritized and last_seq >= rx.expected:
                self._note_gap(rx, topic, rx.expected, last_seq, at)

    def _handle_data(self, env: Envelope, at: float) -> None:
        rx = self._rx.setdefault(env.topic, _RxTopic())
        if not self.config.prioritized:
            if env.seq >= rx.expected:
                self._republish(env, at)
                rx.expected = env.seq + 1
            else:
                rx.late_drops += 1
            return

        if env.tier == TIER_CRITICAL:
            self._handle_critical(rx, env, at)
        else:
            if env.seq >= rx.expected:
                self._republish(env, at)
                rx.expected = env.seq + 1
            else:
                rx.late_drops += 1

    def _handle_critical(self, rx: _RxTopic, env: Envelope, at: float) -> None:
        if env.seq < rx.expected or env.seq in rx.seen or env.seq in rx.ahead:
            rx.duplicates += 1
            return
        if env.seq == rx.expected:
            self._republish(env, at)
            rx.seen.add(env.seq)
            rx.expected += 1
            self._flush_ahead(rx, at)
        else:
            rx.ahead[env.seq] = env
            self._note_gap(rx, env.topic, rx.expected, env.seq - 1, at)
        self._trim_seen(rx)

    def _flush_ahead(self, rx: _RxTopic, at: float) -> None:
        while rx.expected in rx.ahead:
            nxt = rx.ahead.pop(rx.expected)
            self._republish(nxt, at)
            rx.seen.add(nxt.seq)
            rx.expected += 1
        rx.gaps = {
            (lo, hi): v for (lo, hi), v in rx.gaps.items() if hi >= rx.expected
        }

    def _trim_seen(self, rx: _RxTopic) -> None:
        window = self.config.replay_capacity
        if len(rx.seen) > 2 * window:
            floor = rx.expected - window
            rx.seen = {s for s in rx.seen if s >= floor}

    def _note_gap(self, rx: _RxTopic, topic: str, lo: int, hi: int, at: float) -> None:
        if hi < lo:
            return
        for (glo, ghi) in rx.gaps:
            if glo <= lo and hi <= ghi:
                return
        rx.gaps[(lo, hi)] = (at, 0)  # retry bookkeeping starts immediately
        self._send_gap_request(topic, lo, hi, at)
        rx.gaps[(lo, hi)] = (at + self.config.replay_retry, 1)

    def _send_gap_request(self, topic: str, lo: int, hi: int, now: float) -> None:
        payload = _pack_topic(topic) + _REQ_RANGE.pack(lo, hi)
        self._send_control(REPLAY_TOPIC, payload, now)
        self.replays_requested += 1

    def _retry_gap_requests(self, now: float) -> None:
        for topic in sorted(self._rx):
            rx = self._rx[topic]
            if not rx.gaps:
                continue
            updated: dict[tuple[int, int], tuple[float, int]] = {}
            for (lo, hi), (retry_at, attempts) in sorted(rx.gaps.items()):
                live_lo = max(lo, rx.expected)
                if hi < live_lo:
                    continue
                if now < retry_at:
                    updated[(lo, hi)] = (retry_at, attempts)
                    continue
                if attempts >= self.config.replay_attempts:
                    self._give_up_gap(rx, live_lo, hi, now)
                    continue
                self._send_gap_request(topic, live_lo, hi, now)
                updated[(lo, hi)] = (now + self.config.replay_retry, attempts + 1)
            rx.gaps = updated

    def _give_up_gap(self, rx: _RxTopic, lo: int, hi: int, now: float) -> None:
        rx.skipped += hi - max(lo, rx.expected) + 1
        rx.expected = max(rx.expected, hi + 1)
        self._flush_ahead(rx, now)

    def _republish(self, env: Envelope, at: float) -> None:
        pub = self._publishers.get(env.topic)
        if pub is None:
            kind = MessageKind(env.kind) if env.kind in MessageKind._value2member_map_ else MessageKind.BLOB
            pub = self.bus.advertise(env.topic, kind)
            self._publishers[env.topic] = pub
            self._republished_topics.add(env.topic)
        pub.publish(env.payload, at, origin=self.origin_id)
        self.republished[env.topic] = self.republished.get(env.topic, 0) + 1
        self.delivered_seqs.setdefault(env.topic, set()).add(env.seq)
        self.latencies.setdefault(env.topic, []).append(at - env.sim_time)

    # --- replay -------------------------------------------------------------------

    def request_replay(self, topic: str, from_seq: int, to_seq: int) -> int:
        """Re-enqueue buffered envelopes in [from_seq, to_seq]; returns count found."""
        if from_seq > to_seq:
            raise ValueError("from_seq must be <= to_seq")
        found = self.replay_buffer.get_range(topic, from_seq, to_seq)
        for env in found:
            flagged = with_replay_flag(env)
            self._queues[flagged.tier].append(QueuedFrame(flagged, encode_envelope(flagged)))
            self.encodes += 1
        self.replays_served += len(found)
        return len(found)

    # --- audits ---------------------------------------------------------------------

    def pending_frames(self) -> list[Envelope]:
        """Frames waiting in send queues (for end-of-run audits)."""
        out = [item.env for q in self._queues.values() for item in q]
        out.extend(item.env for item in self._fifo)
        return out

    def held_for_reassembly(self) -> list[Envelope]:
        return [env for rx in self._rx.values() for env in rx.ahead.values()]

    def rx_stats(self) -> dict[str, _RxTopic]:
        return dict(self._rx)

    def tx_stats(self) -> dict[str, _TxTopic]:
        return dict(self._tx)


def run_bridge_endpoint(
    bus: TopicBus,
    tx_link: NetLink,
    rx_link: NetLink,
    policy: PriorityPolicy,
    discovery: DiscoveryConfig,
    clock: SimClock,
    config: EndpointConfig = EndpointConfig(),
) -> BridgeEndpoint:
    """Attach a bridge endpoint to a bus and link pair; returns its handle."""
    return BridgeEndpoint(bus, tx_link, rx_link, policy, discovery, clock, config)


def _pack_topic(topic: str) -> bytes:
    raw = topic.encode("utf-8")
    return _REQ_HEAD.pack(len(raw)) + raw


def _unpack_topic(payload: bytes) -> tuple[str, bytes]:
    (n,) = _REQ_HEAD.unpack_from(payload, 0)
    topic = payload[2 : 2 + n].decode("utf-8")
    return topic, payload[2 + n :]
