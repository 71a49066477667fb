"""Engine-level traffic runs and configuration measurement behavior."""

import pytest

from twinbridge.bridge import EndpointConfig, PriorityPolicy
from twinbridge.engine import BridgeScenario, TopicTraffic, percentile, run_traffic
from twinbridge.envelope import TIER_BULK, TIER_CRITICAL
from twinbridge.mmcf import BridgeConfig, ScenarioError, measure_config
from twinbridge.msgbus import MessageKind
from twinbridge.netsim import NetworkConditions, PiecewiseConstant

POLICY = PriorityPolicy(
    rules=(("/*/pose", TIER_CRITICAL), ("/*/points", TIER_BULK)),
)


def simple_scenario(loss=0.0, cap=None, seed=5, duration=6.0, drain=1.0):
    cond = NetworkConditions(PiecewiseConstant(0.02), PiecewiseConstant(loss), cap)
    traffic = (
        TopicTraffic("/r1/pose", MessageKind.POSE, 10.0, 64),
        TopicTraffic("/r1/scan", MessageKind.SCAN2D, 5.0, 600),
    )
    return BridgeScenario(
        "simple", seed, duration, cond, traffic, POLICY,
        endpoint=EndpointConfig(tick=0.02), drain=drain,
    )


class TestRunTraffic:
    def test_conservation_under_loss(self):
        result = run_traffic(simple_scenario(loss=0.2))
        for topic, res in result.topics.items():
            assert res.sent == res.delivered + res.dropped + res.buffered, topic

    def test_no_traffic_scenario(self):
        cond = NetworkConditions.ideal()
        scenario = BridgeScenario(
            "none", 1, 2.0, cond, (), PriorityPolicy(), endpoint=EndpointConfig(tick=0.02)
        )
        result = run_traffic(scenario)
        assert result.totals() == (0, 0, 0, 0)

    def test_zero_impairment_delivers_everything(self):
        result = run_traffic(simple_scenario())
        sent, delivered, dropped, buffered = result.totals()
        assert sent == delivered
        assert dropped == 0

    def test_percentile_nearest_rank(self):
        values = [float(i) for i in range(1, 101)]
        assert percentile(values, 50) == 50.0
        assert percentile(values, 95) == 95.0
        assert percentile(values, 100) == 100.0
        assert percentile([], 95) == 0.0


class TestMeasureConfig:
    def test_zero_impairment_zero_loss(self):
        metrics = measure_config(BridgeConfig(), simple_scenario())
        assert metrics.loss == 0.0
        assert metrics.latency > 0.0

    def test_same_seed_identical(self):
        cfg = BridgeConfig(redundancy=1)
        a = measure_config(cfg, simple_scenario(loss=0.15))
        b = measure_config(cfg, simple_scenario(loss=0.15))
        assert a == b

    def test_redundancy_monotonicity_under_loss(self):
        # doubling redundancy never worsens loss and never shrinks bandwidth
        scenario = simple_scenario(loss=0.2, duration=8.0, drain=1.0)
        metrics = [
            measure_config(BridgeConfig(redundancy=r), scenario) for r in (0, 1, 2)
        ]
        for worse, better in zip(metrics, metrics[1:]):
            assert better.loss <= worse.loss + 1e-12
            assert better.bandwidth >= worse.bandwidth - 1e-9

    def test_scenario_failure_wrapped(self):
        cond = NetworkConditions.ideal()
        bad = BridgeScenario(
            "bad", 1, 1.0, cond,
            (TopicTraffic("/x", MessageKind.POSE, 1.0, 8),),
            PriorityPolicy(),
            endpoint=EndpointConfig(tick=0.02, budget_per_tick=-5.0),
        )
        with pytest.raises(ScenarioError):
            measure_config(BridgeConfig(), bad)
