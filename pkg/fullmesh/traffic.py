# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Traffic: destination patterns, generation modes (Bernoulli, fixed burst) and
application kernels with their process-to-server mapping.

Sources talk to the simulator through four hooks, `start`, `tick`,
`on_injected` and `on_delivered`, and enqueue packets with `net.enqueue`.
"""

from abc import ABC
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np
from loguru import logger

from fullmesh.common import ConfigError, InvalidSizeError
from fullmesh.topology import Topology, mixed_radix, from_mixed_radix, near_square_dims

if TYPE_CHECKING:
    from fullmesh.engine import Network, Packet


class Pattern(StrEnum):
    UNIFORM = "uniform"
    RSP = "rsp"
    FIXED_RANDOM = "fixed_random"
    SHIFT = "shift"
    COMPLEMENT = "complement"


class Kernel(StrEnum):
    ALL2ALL = "all2all"
    STENCIL2D = "stencil2d"
    STENCIL3D = "stencil3d"
    FFT3D = "fft3d"
    ALLREDUCE = "allreduce"


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation with no fixed point, by resampling."""
    if n < 2:
        raise InvalidSizeError(f"a derangement needs n >= 2, got {n}")
    while True:
        sigma = rng.permutation(n)
        if not (sigma == np.arange(n)).any():
            return sigma


class DestinationPattern:
    """Maps a source server to its next destination server."""

    def __init__(self, pattern: Pattern | str, topology: Topology, rng: np.random.Generator):
        try:
            self.pattern = Pattern(pattern)
        except ValueError:
            raise ConfigError(
                f"traffic.pattern: unknown pattern {pattern!r}; known: {', '.join(Pattern)}"
            ) from None
        self.topology = topology
        n = topology.n_switches
        self.switch_map: np.ndarray | None = None
        self.fixed: np.ndarray | None = None
        match self.pattern:
            case Pattern.RSP:
                self.switch_map = random_derangement(n, rng)
            case Pattern.SHIFT:
                self.switch_map = (np.arange(n) + 1) % n
            case Pattern.COMPLEMENT:
                self.switch_map = (-np.arange(n) - 1) % n
            case Pattern.FIXED_RANDOM:
                self.fixed = np.array(
                    [self._other_server(s, rng) for s in range(topology.n_servers)]
                )

    def _other_server(self, source: int, rng: np.random.Generator) -> int:
        total = self.topology.n_servers
        if total < 2:
            raise InvalidSizeError("traffic needs at least two servers")
        pick = int(rng.integers(total - 1))
        return pick + 1 if pick >= source else pick

    def destination_switch(self, switch: int) -> int | None:
        if self.switch_map is None:
            return None
        return int(self.switch_map[switch])

    def next_destination(self, source: int, rng: np.random.Generator) -> int:
        match self.pattern:
            case Pattern.UNIFORM:
                return self._other_server(source, rng)
            case Pattern.FIXED_RANDOM:
                return int(self.fixed[source])
            case _:
                spp = self.topology.servers_per_switch
                switch = int(self.switch_map[self.topology.switch_of(source)])
                return switch * spp + int(rng.integers(spp))


def next_destination(pattern: DestinationPattern, source: int, rng: np.random.Generator) -> int:
    return pattern.next_destination(source, rng)


# ============================================================================
# Generation modes
# ============================================================================


class TrafficSource(ABC):
    """Feeds packets into a network. Hooks default to doing nothing."""

    def start(self, net: "Network") -> None:
        pass

    def tick(self, net: "Network", cycle: int) -> None:
        pass

    def on_injected(self, net: "Network", packet: "Packet") -> None:
        pass

    def on_delivered(self, net: "Network", packet: "Packet") -> None:
        pass

    def finished(self, net: "Network") -> bool:
        return False


class BernoulliSource(TrafficSource):
    """Each server starts a packet with probability load / packet_size every cycle."""

    def __init__(self, pattern: DestinationPattern, load: float, rng: np.random.Generator):
        if not 0.0 <= load <= 1.0:
            raise ConfigError(f"traffic.load must be in [0, 1], got {load}")
        if pattern.pattern is Pattern.FIXED_RANDOM:
            logger.warning("fixed_random under Bernoulli injection creates endpoint hotspots")
        self.pattern = pattern
        self.load = load
        self.rng = rng

    def tick(self, net, cycle):
        if self.load == 0.0:
            return
        fire = self.rng.random(net.topology.n_servers) < self.load / net.params.packet_size
        for server in np.flatnonzero(fire):
            net.enqueue(int(server), self.pattern.next_destination(int(server), self.rng))


class BurstSource(TrafficSource):
    """Every server sends `packets_per_server` packets as fast as it can."""

    window = 2

    def __init__(
        self, pattern: DestinationPattern, packets_per_server: int, rng: np.random.Generator
    ):
        if packets_per_server < 1:
            raise ConfigError(f"traffic.packets_per_server must be positive, got {packets_per_server}")
        self.pattern = pattern
        self.packets_per_server = packets_per_server
        self.rng = rng
        self.remaining: np.ndarray | None = None
        self.total = 0

    def _send(self, net, server: int) -> None:
        self.remaining[server] -= 1
        net.enqueue(server, self.pattern.next_destination(server, self.rng))

    def start(self, net):
        servers = net.topology.n_servers
        self.remaining = np.full(servers, self.packets_per_server, dtype=np.int64)
        self.total = servers * self.packets_per_server
        for server in range(servers):
            for _ in range(min(self.window, self.packets_per_server)):
                self._send(net, server)

    def on_injected(self, net, packet):
        if self.remaining[packet.source] > 0:
            self._send(net, packet.source)

    def finished(self, net):
        return net.delivered == self.total


# ============================================================================
# Kernels
# ============================================================================

Message = tuple[int, int]  # (destination process, packets)


@dataclass
class KernelSchedule:
    """phases[p][i] lists the messages process p sends in phase i."""

    name: Kernel
    process_count: int
    phases: list[list[list[Message]]]
    mapping: np.ndarray

    @property
    def phase_count(self) -> int:
        return max((len(p) for p in self.phases), default=0)

    def message_count(self) -> int:
        return sum(len(phase) for process in self.phases for phase in process)

    def packet_count(self) -> int:
        return sum(k for process in self.phases for phase in process for _, k in phase)

    def expected_receives(self) -> np.ndarray:
        """expected[p, i]: packets process p receives in phase i."""
        expected = np.zeros((self.process_count, self.phase_count), dtype=np.int64)
        for p, process in enumerate(self.phases):
            for i, phase in enumerate(process):
                for dst, packets in phase:
                    expected[dst, i] += packets
        return expected


def _grid_neighbors(coords: tuple[int, ...], dims: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Moore neighborhood on a torus: every offset in {-1, 0, 1}^d but zero."""
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * len(dims), indexing="ij")).reshape(len(dims), -1).T
    neighbors = []
    for offset in offsets:
        if not offset.any():
            continue
        neighbors.append(tuple((c + o) % k for c, o, k in zip(coords, offset, dims)))
    return neighbors


def _stencil(process_count: int, d: int, iterations: int) -> list[list[list[Message]]]:
    dims = near_square_dims(process_count, d)
    if min(dims) < 3:
        raise InvalidSizeError(f"stencil grid {dims} needs every side >= 3")
    phases = []
    for p in range(process_count):
        targets = [
            (from_mixed_radix(c, dims), 1) for c in _grid_neighbors(mixed_radix(p, dims), dims)
        ]
        phases.append([list(targets) for _ in range(iterations)])
    return phases


def _all2all(process_count: int) -> list[list[list[Message]]]:
    return [
        [[((t + i) % process_count, 1)] for i in range(1, process_count)]
        for t in range(process_count)
    ]


def _fft3d(process_count: int) -> list[list[list[Message]]]:
    rows, cols = near_square_dims(process_count, 2)
    phases = []
    for p in range(process_count):
        c, r = p % rows, p // rows
        steps = [[((c + i) % rows + r * rows, 1)] for i in range(1, rows)]
        steps += [[(c + ((r + i) % cols) * rows, 1)] for i in range(1, cols)]
        phases.append(steps)
    return phases


def _allreduce(process_count: int, base_packets: int) -> list[list[list[Message]]]:
    """Rabenseifner: recursive-halving scatter-reduce, then recursive-doubling all-gather."""
    if process_count < 2 or process_count & (process_count - 1):
        raise InvalidSizeError(f"allreduce needs a power-of-two process count, got {process_count}")
    steps = process_count.bit_length() - 1
    phases = []
    for t in range(process_count):
        plan = []
        for k in range(steps):
            partner = t ^ (process_count >> (k + 1))
            plan.append([(partner, max(1, base_packets >> (k + 1)))])
        for k in range(steps):
            partner = t ^ (1 << k)
            plan.append([(partner, max(1, base_packets >> (steps - k)))])
        phases.append(plan)
    return phases


def kernel_driver(
    name: Kernel | str,
    process_count: int,
    mapping: str = "linear",
    rng: np.random.Generator | None = None,
    iterations: int = 1,
    allreduce_base_packets: int = 64,
) -> KernelSchedule:
    try:
        kernel = Kernel(name)
    except ValueError:
        raise ConfigError(f"traffic.kernel: unknown kernel {name!r}; known: {', '.join(Kernel)}") from None
    if process_count < 2:
        raise InvalidSizeError(f"a kernel needs at least 2 processes, got {process_count}")
    match kernel:
        case Kernel.ALL2ALL:
            phases = _all2all(process_count)
        case Kernel.STENCIL2D:
            phases = _stencil(process_count, 2, iterations)
        case Kernel.STENCIL3D:
            phases = _stencil(process_count, 3, iterations)
        case Kernel.FFT3D:
            phases = _fft3d(process_count)
        case Kernel.ALLREDUCE:
            phases = _allreduce(process_count, allreduce_base_packets)
    match mapping:
        case "linear":
            placement = np.arange(process_count)
        case "random":
            if rng is None:
                raise ConfigError("traffic.mapping: random mapping needs a seeded stream")
            placement = rng.permutation(process_count)
        case _:
            raise ConfigError(f"traffic.mapping: expected linear or random, got {mapping!r}")
    return KernelSchedule(kernel, process_count, phases, placement)


@dataclass
class KernelState:
    """Phase barrier per process: advance once phase sends are delivered and receives arrived."""

    phase: np.ndarray
    pending_sends: np.ndarray
    received: np.ndarray
    expected: np.ndarray
    completed_per_phase: np.ndarray
    finished_processes: int = 0
    completion_cycles: list[int] = field(default_factory=list)

    @classmethod
    def for_schedule(cls, schedule: KernelSchedule) -> "KernelState":
        expected = schedule.expected_receives()
        return cls(
            phase=np.full(schedule.process_count, -1, dtype=np.int64),
            pending_sends=np.zeros(schedule.process_count, dtype=np.int64),
            received=np.zeros_like(expected),
            expected=expected,
            completed_per_phase=np.zeros(schedule.phase_count, dtype=np.int64),
        )


class KernelSource(TrafficSource):
    def __init__(self, schedule: KernelSchedule, topology: Topology):
        if schedule.process_count != topology.n_servers:
            raise InvalidSizeError(
                f"{schedule.name} runs {schedule.process_count} processes, "
                f"{topology.name} has {topology.n_servers} servers"
            )
        self.schedule = schedule
        self.state = KernelState.for_schedule(schedule)
        self.process_of = np.empty_like(schedule.mapping)
        self.process_of[schedule.mapping] = np.arange(schedule.process_count)

    def start(self, net):
        for p in range(self.schedule.process_count):
            self._advance(net, p)

    def _advance(self, net, p: int) -> None:
        state = self.state
        plan = self.schedule.phases[p]
        while True:
            current = int(state.phase[p])
            if current >= 0:
                if state.pending_sends[p] or state.received[p, current] < state.expected[p, current]:
                    return
                self._phase_done(net, current)
            nxt = current + 1
            state.phase[p] = nxt
            if nxt >= len(plan):
                state.finished_processes += 1
                return
            for dst, packets in plan[nxt]:
                state.pending_sends[p] += packets
                for _ in range(packets):
                    net.enqueue(
                        int(self.schedule.mapping[p]),
                        int(self.schedule.mapping[dst]),
                        tag=(p, dst, nxt),
                    )

    def _phase_done(self, net, phase: int) -> None:
        state = self.state
        state.completed_per_phase[phase] += 1
        if state.completed_per_phase[phase] == self.schedule.process_count:
            state.completion_cycles.append(net.cycle)
            net.metrics.record_phase(net.cycle)
            logger.debug(f"{self.schedule.name}: phase {phase} complete at cycle {net.cycle}")

    def on_delivered(self, net, packet):
        sender, receiver, phase = packet.tag
        self.state.pending_sends[sender] -= 1
        self.state.received[receiver, phase] += 1
        self._advance(net, sender)
        if receiver != sender:
            self._advance(net, receiver)

    def finished(self, net):
        return self.state.finished_processes == self.schedule.process_count
