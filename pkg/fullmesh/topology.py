# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Switch graphs: the Full-mesh (complete graph), the 2D-HyperX, and the service
topologies embedded in a Full-mesh.
"""

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import networkx as nx

from fullmesh.common import DomainError, EmbeddingMismatchError, InvalidSizeError

Arc = tuple[int, int]


def mixed_radix(index: int, dims: tuple[int, ...]) -> tuple[int, ...]:
    """Coordinates of `index` in the radix system `dims`, first dimension fastest."""
    coords = []
    for radix in dims:
        coords.append(index % radix)
        index //= radix
    return tuple(coords)


def from_mixed_radix(coords: tuple[int, ...], dims: tuple[int, ...]) -> int:
    index = 0
    for coord, radix in zip(reversed(coords), reversed(dims)):
        index = index * radix + coord
    return index


@dataclass(frozen=True)
class Topology:
    """A direct network of switches, each port wired to exactly one neighbor.

    `neighbors[x]` lists the neighbors of switch x in local port order, so the
    port map of x is the position of each neighbor in that tuple.
    """

    n_switches: int
    servers_per_switch: int
    neighbors: tuple[tuple[int, ...], ...]
    name: str = "fullmesh"
    dims: tuple[int, ...] = ()
    _ports: tuple[dict[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ports = tuple(
            {neighbor: port for port, neighbor in enumerate(row)}
            for row in self.neighbors
        )
        for x, mapping in enumerate(ports):
            if len(mapping) != len(self.neighbors[x]) or x in mapping:
                raise InvalidSizeError(f"switch {x} has a duplicated or self port")
        object.__setattr__(self, "_ports", ports)

    @property
    def n_servers(self) -> int:
        return self.n_switches * self.servers_per_switch

    @cached_property
    def arcs(self) -> frozenset[Arc]:
        return frozenset(
            (x, y) for x in range(self.n_switches) for y in self.neighbors[x]
        )

    def port_map(self, switch: int) -> dict[int, int]:
        return dict(self._ports[switch])

    def port_of(self, switch: int, neighbor: int) -> int:
        return self._ports[switch][neighbor]

    def has_arc(self, a: int, b: int) -> bool:
        return b in self._ports[a]

    def neighbor_at(self, switch: int, port: int) -> int:
        return self.neighbors[switch][port]

    def degree(self, switch: int) -> int:
        return len(self.neighbors[switch])

    def switch_of(self, server: int) -> int:
        return server // self.servers_per_switch

    def is_complete(self) -> bool:
        return len(self.arcs) == self.n_switches * (self.n_switches - 1)

    def coords(self, switch: int) -> tuple[int, ...]:
        return mixed_radix(switch, self.dims) if self.dims else (switch,)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n_switches))
        g.add_edges_from(self.arcs)
        return g

    def diameter(self) -> int:
        return nx.diameter(self.graph())

    def to_dict(self, roles: dict[Arc, str] | None = None) -> dict:
        return {
            "name": self.name,
            "n_switches": self.n_switches,
            "servers_per_switch": self.servers_per_switch,
            "dims": list(self.dims),
            "arcs": [
                [a, b, (roles or {}).get((a, b), "main")] for a, b in sorted(self.arcs)
            ],
        }


def build_complete_graph(n: int, servers_per_switch: int) -> Topology:
    """Full-mesh K_n: every pair of distinct switches is linked, n(n-1) arcs."""
    if n < 2:
        raise InvalidSizeError(f"a complete graph needs at least 2 switches, got {n}")
    if servers_per_switch < 0:
        raise InvalidSizeError("servers_per_switch must be non-negative")
    neighbors = tuple(tuple(y for y in range(n) if y != x) for x in range(n))
    return Topology(n, servers_per_switch, neighbors, name=f"fm{n}")


def build_hyperx(dims: tuple[int, ...], servers_per_switch: int) -> Topology:
    """HyperX: cartesian product of complete graphs, one per dimension.

    Ports are grouped by dimension, then ordered by the neighbor's coordinate.
    """
    if not dims or any(k < 2 for k in dims):
        raise InvalidSizeError(f"every HyperX dimension needs 2 or more switches: {dims}")
    n = math.prod(dims)
    neighbors = []
    for x in range(n):
        cx = mixed_radix(x, dims)
        row = []
        for d, radix in enumerate(dims):
            for value in range(radix):
                if value != cx[d]:
                    cy = cx[:d] + (value,) + cx[d + 1 :]
                    row.append(from_mixed_radix(cy, dims))
        neighbors.append(tuple(row))
    name = "hx" + "x".join(str(k) for k in dims)
    return Topology(n, servers_per_switch, tuple(neighbors), name=name, dims=dims)


# ============================================================================
# Service topologies
# ============================================================================

_KIND_RE = re.compile(r"^\s*([a-z_]+)(\d)?\s*(?:\(\s*([0-9,\s]*)\s*\))?\s*$")
_KIND_ALIASES = {"d_mesh": "mesh", "k_tree": "tree", "hx": "hyperx"}
KIND_NAMES = ("path", "mesh", "tree", "hypercube", "hyperx")


@dataclass(frozen=True)
class ServiceKind:
    """`hyperx(4,4,4)` fixes the sides; `hyperx3` or `mesh2` fix only the rank
    and take the most balanced sides for the Full-mesh they are embedded in."""

    name: str
    dims: tuple[int, ...] = ()
    rank: int = 0

    @classmethod
    def parse(cls, text: "str | ServiceKind") -> "ServiceKind":
        if isinstance(text, ServiceKind):
            return text
        if (match := _KIND_RE.match(text)) is None:
            raise EmbeddingMismatchError(f"cannot parse service kind {text!r}")
        name = _KIND_ALIASES.get(match.group(1), match.group(1))
        if name not in KIND_NAMES:
            raise EmbeddingMismatchError(f"unknown service kind {name!r}")
        rank = int(match.group(2) or 0)
        args = match.group(3) or ""
        dims = tuple(int(v) for v in args.replace(" ", "").split(",") if v)
        if name == "tree" and len(dims) != 1:
            raise EmbeddingMismatchError("tree needs exactly one arity, e.g. tree(4)")
        if rank:
            if name not in ("mesh", "hyperx"):
                raise EmbeddingMismatchError(f"only mesh and hyperx take a rank, got {text!r}")
            if dims and len(dims) != rank:
                raise EmbeddingMismatchError(f"{text!r}: rank {rank} with {len(dims)} sides")
        return cls(name, dims, rank)

    def __str__(self) -> str:
        if self.dims:
            return f"{self.name}({','.join(str(d) for d in self.dims)})"
        if self.rank:
            return f"{self.name}{self.rank}"
        return self.name

    def sides(self, n: int) -> tuple[int, ...]:
        """Radix of a mesh or HyperX on n switches."""
        if self.dims:
            return self.dims
        if self.name == "mesh":
            return near_square_dims(n, self.rank or 2)
        if self.rank:
            return near_square_dims(n, self.rank)
        return ()

    @property
    def label(self) -> str:
        """Short label used in result tables, e.g. HX3 for a 3D HyperX."""
        match self.name:
            case "hyperx":
                return f"HX{len(self.dims) or self.rank}"
            case "tree":
                return f"{self.dims[0]}-TREE"
            case "mesh":
                return f"MESH{len(self.dims) or self.rank or 2}"
            case _:
                return self.name.upper()


def near_square_dims(n: int, d: int = 2) -> tuple[int, ...]:
    """Factorization of n into d factors closest to equal, largest factor last."""
    if d == 1:
        return (n,)
    best: tuple[int, ...] | None = None
    for first in range(1, n + 1):
        if n % first:
            continue
        rest = near_square_dims(n // first, d - 1)
        dims = tuple(sorted((first,) + rest))
        if best is None or (max(dims) - min(dims)) < (max(best) - min(best)):
            best = dims
    assert best is not None
    return best


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class ServiceEmbedding:
    """A spanning service subgraph embedded in a Full-mesh; the other arcs are main."""

    base: Topology
    kind: ServiceKind
    service_arcs: frozenset[Arc]
    service_coords: tuple[tuple[int, ...], ...]
    radix: tuple[int, ...] = ()

    @cached_property
    def main_arcs(self) -> frozenset[Arc]:
        return self.base.arcs - self.service_arcs

    @cached_property
    def _service_adjacency(self) -> tuple[frozenset[int], ...]:
        adjacency: list[set[int]] = [set() for _ in range(self.base.n_switches)]
        for a, b in self.service_arcs:
            adjacency[a].add(b)
        return tuple(frozenset(s) for s in adjacency)

    def is_service(self, a: int, b: int) -> bool:
        return (a, b) in self.service_arcs

    def service_neighbors(self, switch: int) -> frozenset[int]:
        return self._service_adjacency[switch]

    def main_neighbors(self, switch: int) -> tuple[int, ...]:
        return tuple(
            y for y in self.base.neighbors[switch] if y not in self._service_adjacency[switch]
        )

    def service_degree(self, switch: int) -> int:
        return len(self._service_adjacency[switch])

    def main_degree(self, switch: int) -> int:
        return self.base.degree(switch) - self.service_degree(switch)

    def service_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.base.n_switches))
        g.add_edges_from(self.service_arcs)
        return g

    def diameter(self) -> int:
        return nx.diameter(self.service_graph())

    def service_next(self, current: int, destination: int) -> int:
        """Next switch on the deadlock-free minimal service route to `destination`.

        Meshes, hypercubes and HyperX use strict dimension order (lowest
        uncorrected dimension first); trees use up/down routing.
        """
        if current == destination:
            raise EmbeddingMismatchError("service_next called at the destination")
        match self.kind.name:
            case "tree":
                return self._tree_next(current, destination)
            case "hypercube":
                diff = current ^ destination
                return current ^ (diff & -diff)
            case _:
                cc = self.service_coords[current]
                cd = self.service_coords[destination]
                for d, (a, b) in enumerate(zip(cc, cd)):
                    if a == b:
                        continue
                    if self.kind.name == "hyperx":
                        step = b
                    else:
                        step = a + (1 if b > a else -1)
                    return from_mixed_radix(cc[:d] + (step,) + cc[d + 1 :], self.radix)
        raise EmbeddingMismatchError(f"no service route {current}->{destination}")

    def _tree_next(self, current: int, destination: int) -> int:
        k = self.kind.dims[0]
        node = destination
        while node > current:
            parent = (node - 1) // k
            if parent == current:
                return node
            node = parent
        return (current - 1) // k

    def service_distance(self, a: int, b: int) -> int:
        hops = 0
        while a != b:
            a = self.service_next(a, b)
            hops += 1
        return hops

    def roles(self) -> dict[Arc, str]:
        return {
            arc: ("service" if arc in self.service_arcs else "main")
            for arc in self.base.arcs
        }

    def to_json(self) -> str:
        payload = self.base.to_dict(self.roles())
        payload["service"] = str(self.kind)
        return json.dumps(payload, indent=2)


def _arcs_from_edges(edges) -> frozenset[Arc]:
    arcs = set()
    for a, b in edges:
        arcs.add((a, b))
        arcs.add((b, a))
    return frozenset(arcs)


def embed_service(base: Topology, kind: "ServiceKind | str") -> ServiceEmbedding:
    """Embed a service topology of `kind` into the complete graph `base`.

    Switch i takes the coordinates of i in the service topology's mixed radix
    (first dimension fastest); trees are laid out in level order from root 0.
    """
    kind = ServiceKind.parse(kind)
    if not base.is_complete():
        raise EmbeddingMismatchError(f"{base.name} is not a complete graph")
    n = base.n_switches

    match kind.name:
        case "path":
            radix = (n,)
        case "mesh" | "hyperx":
            radix = kind.sides(n)
        case "hypercube":
            if not _is_power_of_two(n) or n < 2:
                raise EmbeddingMismatchError(f"hypercube needs a power of two, got n={n}")
            radix = (2,) * (n.bit_length() - 1)
        case "tree":
            if kind.dims[0] < 1:
                raise EmbeddingMismatchError("tree arity must be positive")
            radix = ()
        case _:
            raise EmbeddingMismatchError(f"unknown service kind {kind}")

    if kind.name != "tree":
        if not radix or math.prod(radix) != n or any(r < 1 for r in radix):
            raise EmbeddingMismatchError(
                f"{kind} has {math.prod(radix) if radix else 0} switches, base has {n}"
            )
        coords = tuple(mixed_radix(i, radix) for i in range(n))
        edges = []
        for i, j in product(range(n), repeat=2):
            if i >= j:
                continue
            differing = [d for d in range(len(radix)) if coords[i][d] != coords[j][d]]
            if len(differing) != 1:
                continue
            d = differing[0]
            if kind.name in ("path", "mesh") and abs(coords[i][d] - coords[j][d]) != 1:
                continue
            edges.append((i, j))
    else:
        k = kind.dims[0]
        coords = tuple((i,) for i in range(n))
        edges = [((i - 1) // k, i) for i in range(1, n)]

    embedding = ServiceEmbedding(
        base=base,
        kind=kind,
        service_arcs=_arcs_from_edges(edges),
        service_coords=coords,
        radix=tuple(radix),
    )
    if not nx.is_connected(embedding.service_graph()):
        raise EmbeddingMismatchError(f"{kind} does not span {base.name}")
    return embedding


def main_degree_ratio(emb: ServiceEmbedding) -> float:
    """p: average main degree divided by n-1."""
    n = emb.base.n_switches
    main = len(emb.main_arcs)
    if main == 0:
        raise DomainError(f"{emb.kind} covers every arc of {emb.base.name}; no main topology")
    return main / (n * (n - 1))


def hyperx_dimension_service(dims: tuple[int, ...]) -> tuple[ServiceEmbedding, ...]:
    """One hypercube service embedding per HyperX dimension (each dimension is an FM)."""
    return tuple(embed_service(build_complete_graph(k, 0), "hypercube") for k in dims)
