# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Tests for the metric functions and the windowed accumulator.
"""

import math

import pytest

from fullmesh.common import DomainError
from fullmesh.metrics import (
    MetricsAccumulator,
    hop_distribution,
    jain_index,
    latency_percentiles,
    link_utilization_split,
)


class TestJainIndex:
    def test_equal_loads(self):
        assert jain_index([0.4] * 16) == pytest.approx(1.0)

    def test_half_idle(self):
        assert jain_index([1, 1, 0, 0]) == pytest.approx(0.5)

    def test_single_loaded_server(self):
        assert jain_index([0, 0, 3, 0, 0, 0, 0, 0]) == pytest.approx(1 / 8)

    @pytest.mark.parametrize("values", [[], [0, 0, 0], [1, -1]])
    def test_domain(self, values):
        with pytest.raises(DomainError):
            jain_index(values)


class TestDistributions:
    def test_hop_distribution(self):
        assert hop_distribution([1, 1, 2, 0]) == {0: 0.25, 1: 0.5, 2: 0.25}

    def test_empty_hops(self):
        with pytest.raises(DomainError):
            hop_distribution([])

    def test_nearest_rank_percentiles(self):
        result = latency_percentiles(list(range(1, 101)))
        assert result[0.99] == 99
        assert result[0.9999] == 100

    def test_single_sample(self):
        assert latency_percentiles([42]) == {0.99: 42, 0.999: 42, 0.9999: 42}

    def test_empty_latencies(self):
        with pytest.raises(DomainError):
            latency_percentiles([])


class TestAccumulator:
    """Window handling and the summary row."""

    def test_window_excludes_warmup(self):
        acc = MetricsAccumulator(2, [(0, 1), (1, 0)], window_start=10, window_end=20)
        acc.record_ejected_flit(0, 5)
        for cycle in range(10, 20):
            acc.record_ejected_flit(0, cycle)
        acc.record_ejected_flit(1, 25)
        acc.close(30)
        assert acc.measured_cycles == 10
        assert acc.accepted_load() == pytest.approx(10 / (2 * 10))

    def test_delivery_counted_by_creation_cycle(self):
        acc = MetricsAccumulator(1, [], window_start=100, window_end=200)
        acc.record_delivery(created=90, delivered=130, hops=1)
        acc.record_delivery(created=150, delivered=260, hops=2)
        assert acc.latencies == [110]
        assert acc.hop_counts == [2]

    def test_summary(self):
        acc = MetricsAccumulator(2, [(0, 1), (1, 0)])
        for latency, hops in ((20, 0), (24, 1), (30, 2), (40, 5)):
            acc.record_delivery(0, latency, hops)
        acc.record_injected_flit(0, 0)
        acc.record_injected_flit(1, 0)
        acc.record_phase(12)
        acc.close(50, finished=True)
        summary = acc.summary()
        assert summary.mean_latency == pytest.approx(28.5)
        assert summary.hops == [0.25, 0.25, 0.25, 0.0, 0.25]
        assert summary.jain == pytest.approx(1.0)
        assert summary.cycles_to_finish == 50
        assert summary.phase_completions == [12]
        assert summary.util_service is None

    def test_empty_summary_is_nan(self):
        acc = MetricsAccumulator(4, [(0, 1)], window_start=0, window_end=10)
        summary = acc.summary()
        assert math.isnan(summary.mean_latency)
        assert math.isnan(summary.jain)
        assert summary.accepted == 0.0


class TestLinkUtilizationSplit:
    def test_main_and_service(self):
        arcs = [(0, 1), (1, 0), (0, 2), (2, 0)]
        acc = MetricsAccumulator(3, arcs, window_end=10, service_arcs=frozenset({(0, 1), (1, 0)}))
        for cycle in range(10):
            acc.record_link_flit((0, 2), cycle)
            acc.record_link_flit((2, 0), cycle)
        for cycle in range(5):
            acc.record_link_flit((0, 1), cycle)
        split = link_utilization_split(acc)
        assert split["main"] == pytest.approx(1.0)
        assert split["service"] == pytest.approx(0.25)

    def test_without_service_set(self):
        acc = MetricsAccumulator(2, [(0, 1), (1, 0)], window_end=4)
        acc.record_link_flit((0, 1), 0)
        assert link_utilization_split(acc) == {"main": pytest.approx(0.125)}

    def test_empty_service_set(self):
        acc = MetricsAccumulator(2, [(0, 1), (1, 0)], window_end=4, service_arcs=frozenset())
        assert set(link_utilization_split(acc)) == {"main"}
