# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Routing algorithms for Full-mesh and 2D-HyperX networks.

Every algorithm is a pure decision function. `candidates` lists every
(port, VC) option admissible in a context, weighted by output occupancy in
flits plus the non-minimal penalty q; `route` returns the minimum-weight
candidate with ties broken by the routing RNG stream. The deadlock checker
walks `candidates` exhaustively, the simulator calls `route`.
"""

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import StrEnum
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fullmesh.common import ConfigError, RoutingInconsistencyError
from fullmesh.ordering import ArcLabelling, read_labelling, srinr_labelling
from fullmesh.topology import (
    Arc,
    ServiceEmbedding,
    Topology,
    embed_service,
    hyperx_dimension_service,
)

DEFAULT_PENALTY = 54


class EntryClass(StrEnum):
    INJECTION = "injection"
    TRANSIT = "transit"


@dataclass(frozen=True, slots=True)
class RouteState:
    """Per-packet routing state fixed at injection (or committed on the first hop)."""

    intermediate: int | None = None
    order: int = 0
    minimal: bool | None = None


@dataclass(frozen=True, slots=True)
class RoutingContext:
    current: int
    destination: int
    entry_class: EntryClass
    occupancy: Sequence[int]
    rng: np.random.Generator | None = None
    state: RouteState = RouteState()
    in_vc: int = 0
    previous: int | None = None


@dataclass(frozen=True, slots=True)
class RoutingChoice:
    port: int
    vc: int
    weight: int
    state: RouteState | None = None

    @property
    def is_ejection(self) -> bool:
        return self.port < 0


EJECT = RoutingChoice(port=-1, vc=0, weight=0)


@dataclass(frozen=True)
class PortSets:
    """R_main(x), R_serv(x, y) and R_min(x, y) as local port indexes of x."""

    main: frozenset[int]
    service: frozenset[int]
    minimal: frozenset[int]


class Routing(ABC):
    name: str = "routing"
    vcs: int = 1

    def __init__(self, topology: Topology, q: int = DEFAULT_PENALTY):
        if q < 0:
            raise ConfigError(f"penalty q must be non-negative, got {q}")
        self.topology = topology
        self.q = q

    @property
    def label(self) -> str:
        return self.name

    def prepare(
        self, source: int, destination: int, rng: np.random.Generator
    ) -> RouteState:
        """Sample the per-packet state when the packet is generated."""
        return RouteState()

    def variants(self, source: int, destination: int) -> list[RouteState]:
        """Every state `prepare` can return for this pair."""
        return [RouteState()]

    @abstractmethod
    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]: ...

    @abstractmethod
    def max_hops(self) -> int: ...

    def service_arcs(self) -> frozenset[Arc] | None:
        return None

    def route(self, ctx: RoutingContext) -> RoutingChoice:
        if ctx.current == ctx.destination:
            return EJECT
        options = self.candidates(ctx)
        if not options:
            raise RoutingInconsistencyError(
                f"{self.label}: no candidate at {ctx.current} toward {ctx.destination}"
            )
        return pick_minimum(options, ctx.rng)

    def _port(self, current: int, neighbor: int) -> int:
        try:
            return self.topology.port_of(current, neighbor)
        except KeyError:
            raise RoutingInconsistencyError(
                f"{self.label}: {current} has no link to {neighbor}"
            ) from None

    def _weighted(
        self,
        ctx: RoutingContext,
        neighbor: int,
        vc: int = 0,
        state: RouteState | None = None,
        reaches: int | None = None,
    ) -> RoutingChoice:
        """Algorithm-1 weight: occupancy, plus q unless the port reaches the target."""
        port = self._port(ctx.current, neighbor)
        target = ctx.destination if reaches is None else reaches
        penalty = 0 if neighbor == target else self.q
        return RoutingChoice(port, vc, int(ctx.occupancy[port]) + penalty, state)


def pick_minimum(
    options: Sequence[RoutingChoice], rng: np.random.Generator | None
) -> RoutingChoice:
    best = min(option.weight for option in options)
    tied = [option for option in options if option.weight == best]
    if len(tied) == 1 or rng is None:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def _sample_intermediate(
    n: int, source: int, destination: int, rng: np.random.Generator
) -> int | None:
    if source == destination or n < 3:
        return None
    while True:
        candidate = int(rng.integers(n))
        if candidate not in (source, destination):
            return candidate


# ============================================================================
# Full-mesh baselines
# ============================================================================


class MinRouting(Routing):
    name = "MIN"

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        return [self._weighted(ctx, ctx.destination)]

    def max_hops(self) -> int:
        return 1


class ValiantRouting(Routing):
    """Two hops through a uniformly drawn intermediate: VC 0, then VC 1."""

    name = "Valiant"
    vcs = 2

    def prepare(self, source, destination, rng) -> RouteState:
        return RouteState(
            intermediate=_sample_intermediate(
                self.topology.n_switches, source, destination, rng
            )
        )

    def variants(self, source, destination) -> list[RouteState]:
        if source == destination or self.topology.n_switches < 3:
            return [RouteState()]
        return [
            RouteState(intermediate=m)
            for m in range(self.topology.n_switches)
            if m not in (source, destination)
        ]

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        middle = ctx.state.intermediate
        if middle is None:
            return [self._weighted(ctx, ctx.destination)]
        if ctx.entry_class is EntryClass.INJECTION:
            return [self._weighted(ctx, middle, vc=0, reaches=middle)]
        return [self._weighted(ctx, ctx.destination, vc=1)]

    def max_hops(self) -> int:
        return 2


class UgalRouting(ValiantRouting):
    """UGAL-L: source-only choice between MIN and one sampled Valiant path.

    Queue length times hop count on local output ports: the minimal queue is
    weighted by 1 hop and the Valiant first-hop queue by 2 hops, with a zero
    threshold. MIN wins ties.
    """

    name = "UGAL"

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        middle = ctx.state.intermediate
        if ctx.entry_class is EntryClass.INJECTION:
            direct = self._port(ctx.current, ctx.destination)
            options = [
                RoutingChoice(
                    direct,
                    0,
                    int(ctx.occupancy[direct]),
                    replace(ctx.state, minimal=True),
                )
            ]
            if middle is not None:
                port = self._port(ctx.current, middle)
                options.append(
                    RoutingChoice(
                        port,
                        0,
                        2 * int(ctx.occupancy[port]),
                        replace(ctx.state, minimal=False),
                    )
                )
            return options
        return [self._weighted(ctx, ctx.destination, vc=1)]

    def route(self, ctx: RoutingContext) -> RoutingChoice:
        if ctx.current == ctx.destination:
            return EJECT
        options = self.candidates(ctx)
        if len(options) == 1:
            return options[0]
        minimal, valiant = options
        return minimal if minimal.weight <= valiant.weight else valiant


class OmniWarRouting(Routing):
    """Adaptive penalized choice among the direct port and every non-minimal first hop.

    Non-minimal routes move to VC 1 on their second hop.
    """

    name = "Omni-WAR-style"
    vcs = 2

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        if ctx.entry_class is EntryClass.INJECTION:
            return [
                self._weighted(ctx, neighbor, vc=0)
                for neighbor in self.topology.neighbors[ctx.current]
            ]
        return [self._weighted(ctx, ctx.destination, vc=1)]

    def max_hops(self) -> int:
        return 2


class UnrestrictedRouting(OmniWarRouting):
    """Every 2-path on a single VC. Deadlock-prone; kept as a negative control."""

    name = "unrestricted"
    vcs = 1

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        return [replace(option, vc=0) for option in super().candidates(ctx)]


class OrderingRouting(Routing):
    """Link-ordering routing: a 2-path is allowed when its labels strictly increase."""

    name = "ordering"

    def __init__(self, topology: Topology, labelling: ArcLabelling, q: int = DEFAULT_PENALTY):
        super().__init__(topology, q)
        if labelling.n != topology.n_switches:
            raise ConfigError(
                f"labelling is for K_{labelling.n}, topology has {topology.n_switches} switches"
            )
        self.labelling = labelling
        self._allowed: dict[tuple[int, int], tuple[int, ...]] = {}

    @property
    def label(self) -> str:
        return "sRINR" if self.labelling.kind == "srinr" else "ordering"

    def allowed_intermediates(self, source: int, destination: int) -> tuple[int, ...]:
        key = (source, destination)
        if (cached := self._allowed.get(key)) is None:
            L = self.labelling.matrix
            cached = tuple(
                m
                for m in range(self.labelling.n)
                if m not in key and L[source, m] < L[m, destination]
            )
            self._allowed[key] = cached
        return cached

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        options = [self._weighted(ctx, ctx.destination)]
        if ctx.entry_class is EntryClass.INJECTION:
            options.extend(
                self._weighted(ctx, m)
                for m in self.allowed_intermediates(ctx.current, ctx.destination)
            )
        return options

    def max_hops(self) -> int:
        return 2


# ============================================================================
# Service-topology routings
# ============================================================================


class ServiceRouting(Routing):
    """Minimal routing restricted to the service subgraph (DOR or up/down)."""

    name = "service"

    def __init__(self, embedding: ServiceEmbedding, q: int = DEFAULT_PENALTY):
        super().__init__(embedding.base, q)
        self.embedding = embedding

    @property
    def label(self) -> str:
        return f"SERVICE-{self.embedding.kind.label}"

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        step = self.embedding.service_next(ctx.current, ctx.destination)
        return [self._weighted(ctx, step)]

    @cached_property
    def _diameter(self) -> int:
        return self.embedding.diameter()

    def max_hops(self) -> int:
        return self._diameter

    def service_arcs(self) -> frozenset[Arc]:
        return self.embedding.service_arcs


class TeraRouting(Routing):
    """Main/service split of the Full-mesh.

    Injection: R_serv(current, destination) plus every main port.
    Transit: R_serv(current, destination) plus the direct port.
    One VC; the service route is the escape path.
    """

    name = "TERA"

    def __init__(
        self,
        embedding: ServiceEmbedding,
        q: int = DEFAULT_PENALTY,
        service_next: Callable[[int, int], int] | None = None,
    ):
        super().__init__(embedding.base, q)
        self.embedding = embedding
        self.service_next = service_next or embedding.service_next

    @property
    def label(self) -> str:
        return f"TERA-{self.embedding.kind.label}"

    def port_sets(self, current: int, destination: int) -> PortSets:
        return PortSets(
            main=frozenset(
                self._port(current, y) for y in self.embedding.main_neighbors(current)
            ),
            service=frozenset(
                {self._port(current, self.service_next(current, destination))}
            ),
            minimal=frozenset({self._port(current, destination)}),
        )

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        sets = self.port_sets(ctx.current, ctx.destination)
        if ctx.entry_class is EntryClass.INJECTION:
            ports = sets.service | sets.main
        else:
            ports = sets.service | sets.minimal
        neighbors = self.topology.neighbors[ctx.current]
        return [self._weighted(ctx, neighbors[p]) for p in sorted(ports)]

    @cached_property
    def _diameter(self) -> int:
        return self.embedding.diameter()

    def max_hops(self) -> int:
        return 1 + self._diameter

    def service_arcs(self) -> frozenset[Arc]:
        return self.embedding.service_arcs


class HyperX2DTeraRouting(Routing):
    """TERA applied inside each dimension of a 2D-HyperX, one dimension at a time.

    `dor` corrects X then Y on one VC. `o1turn` draws XY or YX per packet and
    keeps each order on its own VC. Each dimension is a Full-mesh with a
    hypercube service embedding; a packet entering a dimension may use main
    ports as at injection.
    """

    def __init__(self, topology: Topology, order: str = "dor", q: int = DEFAULT_PENALTY):
        super().__init__(topology, q)
        if len(topology.dims) != 2:
            raise ConfigError(f"hyperx_tera needs a 2D-HyperX topology, got {topology.name}")
        if order not in ("dor", "o1turn"):
            raise ConfigError(f"hyperx_tera order must be dor or o1turn, got {order!r}")
        self.order = order
        self.vcs = 2 if order == "o1turn" else 1
        self.dimension_services = hyperx_dimension_service(topology.dims)

    @property
    def name(self) -> str:
        return f"{self.order}_tera"

    @property
    def label(self) -> str:
        prefix = "O1TURN" if self.order == "o1turn" else "DOR"
        return f"{prefix}-TERA-HX{len(self.dimension_services[0].radix)}"

    def prepare(self, source, destination, rng) -> RouteState:
        if self.order == "o1turn":
            return RouteState(order=int(rng.integers(2)))
        return RouteState(order=0)

    def variants(self, source, destination) -> list[RouteState]:
        if self.order == "o1turn":
            return [RouteState(order=0), RouteState(order=1)]
        return [RouteState(order=0)]

    def candidates(self, ctx: RoutingContext) -> list[RoutingChoice]:
        cc = self.topology.coords(ctx.current)
        cd = self.topology.coords(ctx.destination)
        dims = (0, 1) if ctx.state.order == 0 else (1, 0)
        d = next(dim for dim in dims if cc[dim] != cd[dim])
        service = self.dimension_services[d]
        entering = ctx.previous is None or _differing_dims(
            self.topology.coords(ctx.previous), cc
        ) != [d]
        here, target = cc[d], cd[d]
        values = {service.service_next(here, target)}
        if entering:
            values.update(service.main_neighbors(here))
        else:
            values.add(target)
        vc = ctx.state.order if self.order == "o1turn" else 0
        options = []
        for value in sorted(values):
            neighbor = self._switch_with(cc, d, value)
            reaches = neighbor if value == target else ctx.destination
            options.append(self._weighted(ctx, neighbor, vc=vc, reaches=reaches))
        return options

    def _switch_with(self, coords: tuple[int, ...], dim: int, value: int) -> int:
        a, b = self.topology.dims
        moved = list(coords)
        moved[dim] = value
        return moved[0] + a * moved[1]

    def max_hops(self) -> int:
        return sum(1 + service.diameter() for service in self.dimension_services)

    def service_arcs(self) -> frozenset[Arc]:
        arcs = set()
        for x, y in self.topology.arcs:
            cx, cy = self.topology.coords(x), self.topology.coords(y)
            (d,) = _differing_dims(cx, cy)
            if self.dimension_services[d].is_service(cx[d], cy[d]):
                arcs.add((x, y))
        return frozenset(arcs)


def _differing_dims(a: tuple[int, ...], b: tuple[int, ...]) -> list[int]:
    return [d for d, (u, v) in enumerate(zip(a, b)) if u != v]


# ============================================================================
# Spec strings and the registry
# ============================================================================

_SPEC_RE = re.compile(r"^\s*([a-zA-Z_][a-zA-Z0-9_-]*)\s*(?:\((.*)\))?\s*$", re.S)


def split_arguments(text: str) -> list[str]:
    """Split on commas that are not nested inside parentheses."""
    parts, depth, current = [], 0, []
    for char in text:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        if char == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(char)
    if "".join(current).strip():
        parts.append("".join(current).strip())
    return parts


def parse_spec_string(text: str) -> tuple[str, dict[str, str]]:
    """`tera(service=hyperx(4,4,4), q=54)` -> ("tera", {"service": "hyperx(4,4,4)", "q": "54"}).

    Bare positional arguments are stored under "0", "1", ...
    """
    if (match := _SPEC_RE.match(text)) is None:
        raise ConfigError(f"cannot parse routing spec {text!r}")
    name = match.group(1).lower()
    params: dict[str, str] = {}
    for position, arg in enumerate(split_arguments(match.group(2) or "")):
        key, sep, value = arg.partition("=")
        if sep:
            params[key.strip()] = value.strip()
        else:
            params[str(position)] = arg
    return name, params


def _int_param(params: dict[str, str], key: str, default: int) -> int:
    try:
        return int(params.get(key, default))
    except ValueError:
        raise ConfigError(f"routing parameter {key}={params[key]!r} is not an integer") from None


def _service_param(topology: Topology, params: dict[str, str]) -> ServiceEmbedding:
    kind = params.get("service", params.get("0"))
    if kind is None:
        raise ConfigError("routing needs a service=<kind> parameter")
    return embed_service(topology, kind)


def _build_ordering(topology: Topology, params: dict[str, str]) -> Routing:
    q = _int_param(params, "q", DEFAULT_PENALTY)
    if (path := params.get("file")) is not None:
        labelling = read_labelling(Path(path))
    else:
        scheme = params.get("0", "srinr")
        if scheme != "srinr":
            raise ConfigError(f"unknown ordering scheme {scheme!r}; use srinr or file=<path>")
        labelling = srinr_labelling(topology.n_switches)
    return OrderingRouting(topology, labelling, q=q)


ROUTINGS: dict[str, Callable[[Topology, dict[str, str]], Routing]] = {
    "min": lambda t, p: MinRouting(t),
    "valiant": lambda t, p: ValiantRouting(t),
    "ugal": lambda t, p: UgalRouting(t),
    "omniwar": lambda t, p: OmniWarRouting(t, q=_int_param(p, "q", DEFAULT_PENALTY)),
    "unrestricted": lambda t, p: UnrestrictedRouting(t, q=_int_param(p, "q", DEFAULT_PENALTY)),
    "ordering": _build_ordering,
    "srinr": lambda t, p: OrderingRouting(t, srinr_labelling(t.n_switches), q=_int_param(p, "q", DEFAULT_PENALTY)),
    "service": lambda t, p: ServiceRouting(_service_param(t, p)),
    "tera": lambda t, p: TeraRouting(_service_param(t, p), q=_int_param(p, "q", DEFAULT_PENALTY)),
    "hyperx_tera": lambda t, p: HyperX2DTeraRouting(
        t, order=p.get("order", p.get("0", "dor")), q=_int_param(p, "q", DEFAULT_PENALTY)
    ),
}


def build_routing(spec: str, topology: Topology) -> Routing:
    name, params = parse_spec_string(spec)
    if (builder := ROUTINGS.get(name)) is None:
        raise ConfigError(f"unknown routing {name!r}; known: {', '.join(sorted(ROUTINGS))}")
    return builder(topology, params)
