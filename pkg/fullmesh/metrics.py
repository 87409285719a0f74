# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Run metrics: accepted throughput, latency percentiles, hop distribution,
Jain index of injected load, cycles-to-finish and link utilization.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from loguru import logger

from fullmesh.common import DomainError

DEFAULT_PERCENTILES = (0.99, 0.999, 0.9999)
HOP_BUCKETS = 5


def jain_index(x: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1.0 is perfect equity."""
    values = np.asarray(x, dtype=float)
    if values.size == 0:
        raise DomainError("Jain index of an empty vector")
    if (values < 0).any():
        raise DomainError("Jain index needs non-negative loads")
    squares = float(np.square(values).sum())
    if squares == 0.0:
        raise DomainError("Jain index is undefined when every load is zero")
    return float(values.sum()) ** 2 / (values.size * squares)


def hop_distribution(hop_counts: Iterable[int]) -> dict[int, float]:
    """Relative frequency per hop count; bucket 0 is same-switch delivery."""
    counts = Counter(hop_counts)
    total = sum(counts.values())
    if total == 0:
        raise DomainError("hop distribution needs at least one delivered packet")
    return {hops: counts[hops] / total for hops in sorted(counts)}


def latency_percentiles(
    samples: Sequence[float], ps: Sequence[float] = DEFAULT_PERCENTILES
) -> dict[float, float]:
    """Nearest-rank percentiles."""
    if len(samples) == 0:
        raise DomainError("percentiles of an empty sample")
    values = np.quantile(np.asarray(samples, dtype=float), ps, method="inverted_cdf")
    return {p: float(v) for p, v in zip(ps, np.atleast_1d(values))}


@dataclass
class MetricsSummary:
    accepted: float
    mean_latency: float
    p99: float
    p999: float
    p9999: float
    jain: float
    hops: list[float]
    util_main: float
    util_service: float | None
    cycles_to_finish: int | None
    delivered_packets: int
    measured_cycles: int
    phase_completions: list[int] = field(default_factory=list)


class MetricsAccumulator:
    """Counters for one run, restricted to a measurement window [start, end)."""

    def __init__(
        self,
        n_servers: int,
        arcs: Iterable[tuple[int, int]],
        window_start: int = 0,
        window_end: int | None = None,
        service_arcs: frozenset[tuple[int, int]] | None = None,
    ):
        self.n_servers = n_servers
        self.window_start = window_start
        self.window_end = window_end
        self.service_arcs = service_arcs
        self.injected_flits = np.zeros(n_servers, dtype=np.int64)
        self.delivered_flits = np.zeros(n_servers, dtype=np.int64)
        self.arc_flits: dict[tuple[int, int], int] = {arc: 0 for arc in arcs}
        self.latencies: list[int] = []
        self.hop_counts: list[int] = []
        self.phase_completions: list[int] = []
        self.cycles_to_finish: int | None = None
        self.last_cycle = window_start

    def in_window(self, cycle: int) -> bool:
        return cycle >= self.window_start and (self.window_end is None or cycle < self.window_end)

    def record_injected_flit(self, server: int, cycle: int) -> None:
        if self.in_window(cycle):
            self.injected_flits[server] += 1

    def record_ejected_flit(self, server: int, cycle: int) -> None:
        if self.in_window(cycle):
            self.delivered_flits[server] += 1

    def record_link_flit(self, arc: tuple[int, int], cycle: int) -> None:
        if self.in_window(cycle):
            self.arc_flits[arc] += 1

    def record_delivery(self, created: int, delivered: int, hops: int) -> None:
        """Latency and hops of a packet, counted when it was created inside the window."""
        if self.in_window(created):
            self.latencies.append(delivered - created)
            self.hop_counts.append(hops)

    def record_phase(self, cycle: int) -> None:
        self.phase_completions.append(cycle)

    def close(self, cycle: int, finished: bool = False) -> None:
        if self.window_end is None:
            self.window_end = cycle
        self.last_cycle = cycle
        if finished:
            self.cycles_to_finish = cycle

    @property
    def measured_cycles(self) -> int:
        end = self.window_end if self.window_end is not None else self.last_cycle
        return max(0, end - self.window_start)

    def accepted_load(self) -> float:
        """Delivered flits per cycle per server over the window."""
        if self.measured_cycles == 0:
            return 0.0
        return float(self.delivered_flits.sum()) / (self.n_servers * self.measured_cycles)

    def arc_utilization(self) -> dict[tuple[int, int], float]:
        cycles = max(1, self.measured_cycles)
        return {arc: flits / cycles for arc, flits in self.arc_flits.items()}

    def summary(self) -> MetricsSummary:
        if self.latencies:
            percentiles = latency_percentiles(self.latencies)
            mean_latency = float(np.mean(self.latencies))
            histogram = hop_distribution(self.hop_counts)
        else:
            percentiles = {p: float("nan") for p in DEFAULT_PERCENTILES}
            mean_latency = float("nan")
            histogram = {}
        hops = [0.0] * HOP_BUCKETS
        for count, share in histogram.items():
            hops[min(count, HOP_BUCKETS - 1)] += share
        split = link_utilization_split(self)
        try:
            jain = jain_index(self.injected_flits)
        except DomainError:
            jain = float("nan")
        return MetricsSummary(
            accepted=self.accepted_load(),
            mean_latency=mean_latency,
            p99=percentiles[0.99],
            p999=percentiles[0.999],
            p9999=percentiles[0.9999],
            jain=jain,
            hops=hops,
            util_main=split["main"],
            util_service=split.get("service"),
            cycles_to_finish=self.cycles_to_finish,
            delivered_packets=len(self.latencies),
            measured_cycles=self.measured_cycles,
            phase_completions=list(self.phase_completions),
        )


def link_utilization_split(acc: MetricsAccumulator) -> dict[str, float]:
    """Mean busy fraction of main and service arcs; main-only without a service set."""
    utilization = acc.arc_utilization()
    if not utilization:
        return {"main": 0.0}
    if acc.service_arcs is None:
        return {"main": float(np.mean(list(utilization.values())))}
    main = [u for arc, u in utilization.items() if arc not in acc.service_arcs]
    service = [u for arc, u in utilization.items() if arc in acc.service_arcs]
    if not service:
        logger.warning("service arc set is empty; reporting main links only")
        return {"main": float(np.mean(main)) if main else 0.0}
    return {
        "main": float(np.mean(main)) if main else 0.0,
        "service": float(np.mean(service)),
    }
