# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Cycle-driven, flit-level simulator of input-queued switches.

Each cycle: flits and credits due this cycle land; the traffic source
generates; the crossbar runs `speedup` allocation passes (random matching,
one flit per input and output port per pass); every output link sends at
most one flit. Buffers allocate at packet granularity (virtual cut-through):
a packet acquires an output VC with room for the whole packet, and a link is
held by one packet from head to tail. Credits for a whole packet are taken
when its head leaves and come back one per flit as the downstream input
buffer drains.
"""

import time
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

import numpy as np
from loguru import logger

from fullmesh.common import (
    ConfigError,
    DeadlockDetected,
    InvariantViolation,
    RoutingInconsistencyError,
    is_test_mode,
)
from fullmesh.metrics import MetricsAccumulator, MetricsSummary
from fullmesh.routing import EntryClass, RouteState, Routing, RoutingContext
from fullmesh.topology import Topology
from fullmesh.traffic import TrafficSource

if TYPE_CHECKING:
    from fullmesh.models import RunPoint

STREAMS = ("traffic", "allocator", "routing", "mapping")


@dataclass(frozen=True)
class SwitchParams:
    packet_size: int = 16
    input_buffer_packets: int = 10
    output_buffer_packets: int = 5
    speedup: int = 2
    link_latency: int = 1
    credit_latency: int = 1
    router_latency: int = 3
    deadlock_window: int = 10_000
    check_every: int = 0

    def __post_init__(self):
        for name in ("packet_size", "input_buffer_packets", "output_buffer_packets", "speedup"):
            if getattr(self, name) < 1:
                raise ConfigError(f"params.{name}: must be at least 1")
        if self.link_latency < 1 or self.credit_latency < 1:
            raise ConfigError("params: link and credit latencies must be at least one cycle")
        if self.check_every < 0:
            raise ConfigError("params.check_every: must be 0 (off) or a positive cycle count")

    @property
    def input_capacity(self) -> int:
        return self.input_buffer_packets * self.packet_size

    @property
    def output_capacity(self) -> int:
        return self.output_buffer_packets * self.packet_size

    def zero_load_latency(self, hops: int) -> int:
        """Generation-to-tail-delivery latency of a lone packet crossing `hops` links.

        hops + 2 links (injection, network, ejection), hops + 1 router
        pipelines, and the size - 1 flits that trail the head.
        """
        return (
            (hops + 2) * self.link_latency
            + (hops + 1) * self.router_latency
            + self.packet_size
            - 1
        )


@dataclass(slots=True, eq=False)
class Packet:
    id: int
    source: int
    destination: int
    src_switch: int
    dst_switch: int
    created: int
    size: int
    state: RouteState
    tag: tuple[int, int, int] | None = None
    injected: int = -1
    delivered: int = -1
    hops: list[int] = field(default_factory=list)
    vcs: list[int] = field(default_factory=list)

    @property
    def hop_count(self) -> int:
        return max(0, len(self.hops) - 1)

    @property
    def latency(self) -> int:
        return self.delivered - self.created


@dataclass(slots=True, eq=False)
class Slot:
    """One packet's share of a buffer: flits arrived so far and flits already forwarded."""

    packet: Packet
    arrived: int = 0
    left: int = 0
    ready: int = 0


class InputVC:
    __slots__ = ("slots", "occupancy", "grant")

    def __init__(self):
        self.slots: deque[Slot] = deque()
        self.occupancy = 0
        self.grant: tuple[int, int] | None = None


class InputPort:
    __slots__ = ("vcs", "upstream", "neighbor")

    def __init__(self, vcs: int, neighbor: int | None):
        self.vcs = [InputVC() for _ in range(vcs)]
        self.upstream: "OutputPort | None" = None
        self.neighbor = neighbor


class OutputVC:
    __slots__ = ("slots", "reserved", "writer")

    def __init__(self):
        self.slots: deque[Slot] = deque()
        self.reserved = 0
        self.writer = False


class OutputPort:
    """A channel: network link, ejection link to a server, or a server's injection link."""

    __slots__ = ("kind", "vcs", "credits", "credit_limit", "downstream", "arc", "server", "current", "rr")

    def __init__(
        self,
        kind: str,
        vcs: int,
        credit_limit: int | None,
        downstream: tuple[int, int] | None = None,
        arc: tuple[int, int] | None = None,
        server: int | None = None,
    ):
        self.kind = kind
        self.vcs = [OutputVC() for _ in range(vcs)]
        self.credit_limit = credit_limit
        self.credits = [credit_limit if credit_limit is not None else 0 for _ in range(vcs)]
        self.downstream = downstream
        self.arc = arc
        self.server = server
        self.current: int | None = None
        self.rr = 0

    def has_credits(self, vc: int, size: int) -> bool:
        return self.credit_limit is None or self.credits[vc] >= size


class SwitchState:
    """Input ports 0..degree-1 face neighbors, then one injection port per local server.

    Output ports follow the same numbering: network ports, then ejection ports.
    """

    __slots__ = ("id", "degree", "inputs", "outputs", "occupancy")

    def __init__(self, switch: int, topology: Topology, vcs: int, params: SwitchParams):
        self.id = switch
        self.degree = topology.degree(switch)
        spp = topology.servers_per_switch
        self.inputs = [
            InputPort(vcs, topology.neighbor_at(switch, p)) for p in range(self.degree)
        ] + [InputPort(1, None) for _ in range(spp)]
        self.outputs = []
        for p in range(self.degree):
            y = topology.neighbor_at(switch, p)
            self.outputs.append(
                OutputPort(
                    "network",
                    vcs,
                    params.input_capacity,
                    downstream=(y, topology.port_of(y, switch)),
                    arc=(switch, y),
                )
            )
        for local in range(spp):
            self.outputs.append(OutputPort("eject", 1, None, server=switch * spp + local))
        self.occupancy = [0] * self.degree


@dataclass
class StepCounts:
    generated: int = 0
    crossed: int = 0
    sent: int = 0
    delivered: int = 0

    @property
    def moved(self) -> int:
        return self.crossed + self.sent


class Network:
    def __init__(
        self,
        topology: Topology,
        routing: Routing,
        params: SwitchParams | None = None,
        seed: int = 0,
        metrics: MetricsAccumulator | None = None,
        trace: bool = False,
    ):
        self.topology = topology
        self.routing = routing
        self.params = params or SwitchParams()
        self.seed = seed
        # test mode checks conservation and credits after every cycle
        self.check_every = self.params.check_every or (1 if is_test_mode() else 0)
        self.streams = {
            name: np.random.default_rng(child)
            for name, child in zip(STREAMS, np.random.SeedSequence(seed).spawn(len(STREAMS)))
        }
        self.max_hops = routing.max_hops()
        self.switches = [
            SwitchState(x, topology, routing.vcs, self.params) for x in range(topology.n_switches)
        ]
        spp = topology.servers_per_switch
        self.injectors = []
        for server in range(topology.n_servers):
            x = topology.switch_of(server)
            port = self.switches[x].degree + server - x * spp
            injector = OutputPort(
                "inject", 1, self.params.input_capacity, downstream=(x, port), server=server
            )
            self.injectors.append(injector)
            self.switches[x].inputs[port].upstream = injector
        for sw in self.switches:
            for p in range(sw.degree):
                y, q = sw.outputs[p].downstream
                self.switches[y].inputs[q].upstream = sw.outputs[p]
        self.metrics = metrics or MetricsAccumulator(
            topology.n_servers, sorted(topology.arcs), service_arcs=routing.service_arcs()
        )
        self.source: TrafficSource | None = None
        self.cycle = 0
        self.created = 0
        self.delivered = 0
        self.last_progress = 0
        self.trace: list[Packet] | None = [] if trace else None
        self._flits: deque[tuple] = deque()
        self._credits: deque[tuple] = deque()
        self._active_inputs: dict[tuple[int, int, int], InputVC] = {}
        self._active_outputs: dict[tuple[int, int], OutputPort] = {}

    # ------------------------------------------------------------------
    # Traffic entry points
    # ------------------------------------------------------------------

    def attach(self, source: TrafficSource) -> None:
        self.source = source
        source.start(self)

    def enqueue(self, source: int, destination: int, tag: tuple[int, int, int] | None = None) -> Packet:
        """Append a new packet to the unbounded source queue of server `source`."""
        src_switch = self.topology.switch_of(source)
        dst_switch = self.topology.switch_of(destination)
        packet = Packet(
            id=self.created,
            source=source,
            destination=destination,
            src_switch=src_switch,
            dst_switch=dst_switch,
            created=self.cycle,
            size=self.params.packet_size,
            state=self.routing.prepare(src_switch, dst_switch, self.streams["routing"]),
            tag=tag,
        )
        injector = self.injectors[source]
        injector.vcs[0].slots.append(Slot(packet, arrived=packet.size))
        injector.vcs[0].reserved += packet.size
        self._active_outputs[(-1, source)] = injector
        self.created += 1
        return packet

    @property
    def in_flight(self) -> int:
        return self.created - self.delivered

    # ------------------------------------------------------------------
    # One cycle
    # ------------------------------------------------------------------

    def step(self) -> StepCounts:
        now = self.cycle
        counts = StepCounts()
        self._land(now)
        if self.source is not None:
            before = self.created
            self.source.tick(self, now)
            counts.generated = self.created - before
        for _ in range(self.params.speedup):
            self._allocate(now, counts)
        self._traverse(now, counts)
        if counts.moved or self.in_flight == 0:
            self.last_progress = now
        elif now - self.last_progress >= self.params.deadlock_window:
            logger.error(
                f"{self.routing.label}: deadlock at cycle {now}, {self.in_flight} packets stalled"
            )
            raise DeadlockDetected(now, self.in_flight, self.params.deadlock_window)
        self.cycle += 1
        if self.check_every and self.cycle % self.check_every == 0:
            self.check_invariants()
        return counts

    def _land(self, now: int) -> None:
        flits = self._flits
        while flits and flits[0][0] <= now:
            _, x, port, vc, packet, head = flits.popleft()
            sw = self.switches[x]
            ivc = sw.inputs[port].vcs[vc]
            if head:
                ivc.slots.append(Slot(packet, 1, 0, now + self.params.router_latency))
                packet.hops.append(x)
                if port < sw.degree:
                    packet.vcs.append(vc)
                self._active_inputs[(x, port, vc)] = ivc
            else:
                tail = ivc.slots[-1] if ivc.slots else None
                if tail is None or tail.packet is not packet:
                    raise InvariantViolation(
                        f"packet {packet.id} interleaved with another packet at switch {x} port {port}"
                    )
                tail.arrived += 1
            ivc.occupancy += 1
            if ivc.occupancy > self.params.input_capacity:
                raise InvariantViolation(
                    f"input buffer overflow at switch {x} port {port} vc {vc}: {ivc.occupancy} flits"
                )
        credits = self._credits
        while credits and credits[0][0] <= now:
            _, out, vc = credits.popleft()
            out.credits[vc] += 1
            if out.credits[vc] > out.credit_limit:
                raise InvariantViolation(f"credit overflow on {out.kind} port {out.arc or out.server}")

    def _allocate(self, now: int, counts: StepCounts) -> None:
        requests = []
        for key, ivc in self._active_inputs.items():
            slot = ivc.slots[0]
            if slot.left >= slot.arrived:
                continue
            if ivc.grant is None and now < slot.ready:
                continue
            requests.append(key)
        if not requests:
            return
        busy_in: set[tuple[int, int]] = set()
        busy_out: set[tuple[int, int]] = set()
        size = self.params.packet_size
        for k in self.streams["allocator"].permutation(len(requests)):
            x, port, vc = requests[k]
            if (x, port) in busy_in:
                continue
            sw = self.switches[x]
            ivc = sw.inputs[port].vcs[vc]
            slot = ivc.slots[0]
            if ivc.grant is None:
                out_port, out_vc, state = self._route(sw, port, vc, slot.packet)
                if (x, out_port) in busy_out:
                    continue
                ovc = sw.outputs[out_port].vcs[out_vc]
                if ovc.writer or self.params.output_capacity - ovc.reserved < size:
                    continue
                if state is not None:
                    slot.packet.state = state
                ivc.grant = (out_port, out_vc)
                ovc.writer = True
                ovc.reserved += size
                ovc.slots.append(Slot(slot.packet))
                if out_port < sw.degree:
                    sw.occupancy[out_port] += size
                self._active_outputs[(x, out_port)] = sw.outputs[out_port]
            else:
                out_port, out_vc = ivc.grant
                if (x, out_port) in busy_out:
                    continue
                ovc = sw.outputs[out_port].vcs[out_vc]
            busy_in.add((x, port))
            busy_out.add((x, out_port))
            slot.left += 1
            ivc.occupancy -= 1
            ovc.slots[-1].arrived += 1
            self._credits.append((now + self.params.credit_latency, sw.inputs[port].upstream, vc))
            counts.crossed += 1
            if slot.left == slot.packet.size:
                ivc.slots.popleft()
                ivc.grant = None
                ovc.writer = False
                if not ivc.slots:
                    del self._active_inputs[(x, port, vc)]

    def _route(self, sw: SwitchState, port: int, vc: int, packet: Packet) -> tuple[int, int, RouteState | None]:
        injection = port >= sw.degree
        choice = self.routing.route(
            RoutingContext(
                current=sw.id,
                destination=packet.dst_switch,
                entry_class=EntryClass.INJECTION if injection else EntryClass.TRANSIT,
                occupancy=sw.occupancy,
                rng=self.streams["routing"],
                state=packet.state,
                in_vc=vc,
                previous=None if injection else sw.inputs[port].neighbor,
            )
        )
        if choice.is_ejection:
            if packet.dst_switch != sw.id:
                raise RoutingInconsistencyError(
                    f"{self.routing.label}: ejection at {sw.id} for a packet bound to {packet.dst_switch}"
                )
            local = packet.destination - sw.id * self.topology.servers_per_switch
            return sw.degree + local, 0, None
        if not 0 <= choice.port < sw.degree or not 0 <= choice.vc < self.routing.vcs:
            raise RoutingInconsistencyError(
                f"{self.routing.label}: port {choice.port} vc {choice.vc} does not exist at switch {sw.id}"
            )
        return choice.port, choice.vc, choice.state

    def _select_vc(self, out: OutputPort) -> int | None:
        n = len(out.vcs)
        size = self.params.packet_size
        for offset in range(n):
            vc = (out.rr + offset) % n
            ovc = out.vcs[vc]
            if ovc.slots and ovc.slots[0].arrived > 0 and out.has_credits(vc, size):
                out.rr = (vc + 1) % n
                return vc
        return None

    def _traverse(self, now: int, counts: StepCounts) -> None:
        latency = self.params.link_latency
        for key, out in list(self._active_outputs.items()):
            if out.current is None:
                vc = self._select_vc(out)
                if vc is None:
                    continue
                out.current = vc
                if out.credit_limit is not None:
                    out.credits[vc] -= self.params.packet_size
                    if out.credits[vc] < 0:
                        raise InvariantViolation(f"credit underflow on {out.kind} port {out.arc or out.server}")
            ovc = out.vcs[out.current]
            slot = ovc.slots[0]
            if slot.left >= slot.arrived:
                continue
            slot.left += 1
            ovc.reserved -= 1
            packet = slot.packet
            head = slot.left == 1
            tail = slot.left == packet.size
            counts.sent += 1
            match out.kind:
                case "network":
                    self.switches[key[0]].occupancy[key[1]] -= 1
                    y, q = out.downstream
                    self._flits.append((now + latency, y, q, out.current, packet, head))
                    self.metrics.record_link_flit(out.arc, now)
                case "inject":
                    y, q = out.downstream
                    self._flits.append((now + latency, y, q, 0, packet, head))
                    self.metrics.record_injected_flit(out.server, now)
                    if head:
                        packet.injected = now
                        if self.source is not None:
                            self.source.on_injected(self, packet)
                case "eject":
                    self.metrics.record_ejected_flit(out.server, now)
                    if tail:
                        self._complete(packet, now + latency)
                        counts.delivered += 1
            if tail:
                ovc.slots.popleft()
                out.current = None
                if not any(v.slots for v in out.vcs):
                    del self._active_outputs[key]

    def _complete(self, packet: Packet, cycle: int) -> None:
        packet.delivered = cycle
        self.delivered += 1
        if packet.hop_count > self.max_hops:
            raise InvariantViolation(
                f"packet {packet.id} took {packet.hop_count} hops, {self.routing.label} allows {self.max_hops}"
            )
        self.metrics.record_delivery(packet.created, cycle, packet.hop_count)
        if self.trace is not None:
            self.trace.append(packet)
        if self.source is not None:
            self.source.on_delivered(self, packet)

    # ------------------------------------------------------------------
    # Whole-network checks
    # ------------------------------------------------------------------

    def _resident_packets(self) -> Iterator[Packet]:
        for injector in self.injectors:
            yield from (s.packet for s in injector.vcs[0].slots)
        for sw in self.switches:
            for port in sw.inputs:
                for ivc in port.vcs:
                    yield from (s.packet for s in ivc.slots)
            for out in sw.outputs:
                for ovc in out.vcs:
                    yield from (s.packet for s in ovc.slots)
        yield from (event[4] for event in self._flits)

    def check_invariants(self) -> None:
        """Conservation and credit accounting over the whole network."""
        resident = {packet.id for packet in self._resident_packets()}
        if len(resident) != self.in_flight:
            raise InvariantViolation(
                f"conservation: {self.created} created, {self.delivered} delivered, "
                f"{len(resident)} resident"
            )
        on_link: dict[tuple[int, int, int], int] = {}
        for _, x, port, vc, _, _ in self._flits:
            on_link[(x, port, vc)] = on_link.get((x, port, vc), 0) + 1
        returning: dict[tuple[int, int], int] = {}
        for _, out, vc in self._credits:
            returning[(id(out), vc)] = returning.get((id(out), vc), 0) + 1
        channels = list(self.injectors) + [
            out for sw in self.switches for out in sw.outputs if out.kind == "network"
        ]
        for out in channels:
            y, q = out.downstream
            for vc, ovc in enumerate(out.vcs):
                pending = 0
                if out.current == vc:
                    pending = ovc.slots[0].packet.size - ovc.slots[0].left
                ivc = self.switches[y].inputs[q].vcs[vc]
                total = (
                    out.credits[vc]
                    + pending
                    + on_link.get((y, q, vc), 0)
                    + ivc.occupancy
                    + returning.get((id(out), vc), 0)
                )
                if total != out.credit_limit:
                    raise InvariantViolation(
                        f"credits of {out.kind} channel into switch {y} port {q} vc {vc}: "
                        f"{total} accounted, {out.credit_limit} expected"
                    )

    # ------------------------------------------------------------------
    # Drivers
    # ------------------------------------------------------------------

    def run_cycles(self, cycles: int) -> None:
        for _ in range(cycles):
            self.step()

    def run_until_finished(self, max_cycles: int) -> int:
        """Step until the source reports completion and the network is empty."""
        if self.source is None:
            raise InvariantViolation("run_until_finished needs an attached traffic source")
        while not (self.source.finished(self) and self.in_flight == 0):
            if self.cycle >= max_cycles:
                raise InvariantViolation(
                    f"{self.routing.label}: not finished after {max_cycles} cycles, "
                    f"{self.in_flight} packets in flight"
                )
            self.step()
        return self.cycle


@dataclass
class RunResult:
    summary: MetricsSummary
    routing: str
    topology: str
    cycles: int
    created: int
    delivered: int
    trace: list[Packet] | None = None


def run(point: "RunPoint") -> RunResult:
    """Simulate one (topology, routing, traffic, load, seed) point."""
    topology = point.topology.build()
    routing = point.build_routing(topology)
    params = point.params.switch_params()
    mode = point.traffic.mode
    if mode == "bernoulli":
        warmup = point.cycles // 3
        metrics = MetricsAccumulator(
            topology.n_servers,
            sorted(topology.arcs),
            window_start=warmup,
            window_end=warmup + point.cycles,
            service_arcs=routing.service_arcs(),
        )
    else:
        warmup = 0
        metrics = MetricsAccumulator(
            topology.n_servers, sorted(topology.arcs), service_arcs=routing.service_arcs()
        )
    net = Network(topology, routing, params, seed=point.seed, metrics=metrics, trace=point.trace)
    source = point.traffic.build_source(topology, point.load, net.streams)

    logger.info(
        f"run {topology.name} {routing.label} {point.traffic.describe()} "
        f"load={point.load} seed={point.seed}"
    )
    started = time.perf_counter()
    try:
        net.attach(source)
        if mode == "bernoulli":
            net.run_cycles(warmup + point.cycles)
            metrics.close(net.cycle)
        else:
            finish = net.run_until_finished(point.params.max_cycles)
            metrics.close(finish, finished=True)
    except (DeadlockDetected, InvariantViolation, RoutingInconsistencyError) as e:
        logger.error(f"{routing.label} seed={point.seed} aborted: {e}")
        raise
    elapsed = time.perf_counter() - started
    logger.info(
        f"done {routing.label} seed={point.seed}: {net.cycle} cycles, "
        f"{net.delivered} packets delivered in {elapsed:.1f}s"
    )
    return RunResult(
        summary=metrics.summary(),
        routing=routing.label,
        topology=topology.name,
        cycles=net.cycle,
        created=net.created,
        delivered=net.delivered,
        trace=net.trace,
    )
