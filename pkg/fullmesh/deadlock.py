# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Channel dependency graphs (CDG) and the escape-path argument for TERA.

Nodes are (source switch, target switch, vc) channels. Server injection and
ejection channels are left out: they are pure sources and sinks. Adaptive
routings contribute every candidate they could emit, not only the chosen one.
"""

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
from loguru import logger

from fullmesh.common import RoutingInconsistencyError
from fullmesh.routing import EntryClass, RouteState, Routing, RoutingContext
from fullmesh.topology import ServiceEmbedding, Topology

Channel = tuple[int, int, int]


@dataclass
class ChannelDependencyGraph:
    graph: nx.DiGraph = field(default_factory=nx.DiGraph)
    vcs: int = 1

    @property
    def nodes(self) -> set[Channel]:
        return set(self.graph.nodes)

    @property
    def edges(self) -> set[tuple[Channel, Channel]]:
        return set(self.graph.edges)

    def add_dependency(self, held: Channel, requested: Channel) -> None:
        self.graph.add_edge(held, requested)


def _check_channel(topo: Topology, channel: Channel, vcs: int, routing: Routing) -> None:
    a, b, vc = channel
    if not topo.has_arc(a, b) or not 0 <= vc < vcs:
        raise RoutingInconsistencyError(
            f"{routing.label} emitted channel {channel} outside {topo.name} with {vcs} VCs"
        )


def build_cdg(topo: Topology, routing: Routing, vcs: int | None = None) -> ChannelDependencyGraph:
    """Every dependency a packet of any (source, destination, state) can create.

    Walks the routing's candidate sets from every injection state,
    following every candidate, until the packet reaches its destination.
    """
    vcs = routing.vcs if vcs is None else vcs
    cdg = ChannelDependencyGraph(vcs=vcs)
    bound = routing.max_hops()
    for x in range(topo.n_switches):
        for d in range(topo.n_switches):
            if x == d:
                continue
            for variant in routing.variants(x, d):
                _explore(topo, routing, cdg, x, d, variant, bound)
    logger.debug(
        f"CDG of {routing.label} on {topo.name}: "
        f"{cdg.graph.number_of_nodes()} channels, {cdg.graph.number_of_edges()} dependencies"
    )
    return cdg


def _explore(
    topo: Topology,
    routing: Routing,
    cdg: ChannelDependencyGraph,
    source: int,
    destination: int,
    state: RouteState,
    bound: int,
) -> None:
    # (current, held channel, state, hops so far)
    pending: deque[tuple[int, Channel | None, RouteState, int]] = deque(
        [(source, None, state, 0)]
    )
    seen: set[tuple[int, Channel | None, RouteState]] = set()
    while pending:
        current, held, state, hops = pending.popleft()
        if current == destination:
            continue
        if (current, held, state) in seen:
            continue
        seen.add((current, held, state))
        if hops >= bound:
            raise RoutingInconsistencyError(
                f"{routing.label}: {source}->{destination} exceeds {bound} hops at {current}"
            )
        ctx = RoutingContext(
            current=current,
            destination=destination,
            entry_class=EntryClass.INJECTION if held is None else EntryClass.TRANSIT,
            occupancy=[0] * topo.degree(current),
            state=state,
            in_vc=0 if held is None else held[2],
            previous=None if held is None else held[0],
        )
        for choice in routing.candidates(ctx):
            if not 0 <= choice.port < topo.degree(current):
                raise RoutingInconsistencyError(
                    f"{routing.label}: port {choice.port} does not exist at switch {current}"
                )
            channel = (current, topo.neighbor_at(current, choice.port), choice.vc)
            _check_channel(topo, channel, cdg.vcs, routing)
            if held is None:
                cdg.graph.add_node(channel)
            else:
                cdg.add_dependency(held, channel)
            next_state = choice.state if choice.state is not None else state
            pending.append((channel[1], channel, next_state, hops + 1))


def has_cycle(cdg: ChannelDependencyGraph) -> bool:
    return not nx.is_directed_acyclic_graph(cdg.graph)


def find_cycle(cdg: ChannelDependencyGraph) -> list[Channel] | None:
    """One witness cycle as a list of channels, or None when acyclic."""
    try:
        edges = nx.find_cycle(cdg.graph)
    except nx.NetworkXNoCycle:
        return None
    return [u for u, _ in edges]


def export_edge_list(cdg: ChannelDependencyGraph, path: str | Path) -> None:
    """`a b vc c d vc` per dependency: channel (a,b,vc) waits on channel (c,d,vc)."""
    lines = [
        " ".join(str(v) for v in (*u, *w)) for u, w in sorted(cdg.graph.edges)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def service_cdg(emb: ServiceEmbedding, service_next=None) -> ChannelDependencyGraph:
    """Dependencies created by routing only over service arcs with `service_next`."""
    step = service_next or emb.service_next
    n = emb.base.n_switches
    cdg = ChannelDependencyGraph(vcs=1)
    for source in range(n):
        for destination in range(n):
            if source == destination:
                continue
            previous: Channel | None = None
            current = source
            for _ in range(n):
                if current == destination:
                    break
                nxt = step(current, destination)
                channel = (current, nxt, 0)
                if not emb.is_service(current, nxt):
                    raise RoutingInconsistencyError(
                        f"service route {source}->{destination} leaves the service subgraph at {channel}"
                    )
                if previous is None:
                    cdg.graph.add_node(channel)
                else:
                    cdg.add_dependency(previous, channel)
                previous, current = channel, nxt
            else:
                raise RoutingInconsistencyError(
                    f"service route {source}->{destination} does not terminate"
                )
    return cdg


def verify_escape(emb: ServiceEmbedding, routing: Routing) -> bool:
    """Every transit state keeps a service-path port, and the service sub-CDG is acyclic."""
    topo = emb.base
    service_next = getattr(routing, "service_next", emb.service_next)
    for x in range(topo.n_switches):
        for d in range(topo.n_switches):
            if x == d:
                continue
            escape = topo.port_of(x, service_next(x, d))
            for previous in topo.neighbors[x]:
                ctx = RoutingContext(
                    current=x,
                    destination=d,
                    entry_class=EntryClass.TRANSIT,
                    occupancy=[0] * topo.degree(x),
                    previous=previous,
                )
                ports = {choice.port for choice in routing.candidates(ctx)}
                if escape not in ports:
                    logger.warning(f"{routing.label}: no service port at {x} toward {d}")
                    return False
    try:
        cdg = service_cdg(emb, service_next)
    except RoutingInconsistencyError as e:
        logger.warning(f"{routing.label}: {e}")
        return False
    if has_cycle(cdg):
        logger.warning(f"{routing.label}: service sub-CDG has a cycle {find_cycle(cdg)}")
        return False
    return True


def max_hop_bound(emb: ServiceEmbedding) -> int:
    """1 + diameter of the service subgraph."""
    return 1 + emb.diameter()
