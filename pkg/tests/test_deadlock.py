# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Tests for channel dependency graphs and the TERA escape-path check.
"""

import pytest

from fullmesh.common import RoutingInconsistencyError
from fullmesh.deadlock import (
    build_cdg,
    export_edge_list,
    find_cycle,
    has_cycle,
    max_hop_bound,
    service_cdg,
    verify_escape,
)
from fullmesh.routing import (
    MinRouting,
    OmniWarRouting,
    RoutingChoice,
    TeraRouting,
    UgalRouting,
    UnrestrictedRouting,
    ValiantRouting,
    build_routing,
)
from fullmesh.topology import build_complete_graph, embed_service

# Hamiltonian cycle over the K_4 hypercube service edges 0-1, 1-3, 3-2, 2-0
RING = (0, 1, 3, 2)


def _clockwise(current: int, destination: int) -> int:
    return RING[(RING.index(current) + 1) % len(RING)]


class _WanderingRouting(MinRouting):
    """Always detours through the next switch; never reaches anything in bounded hops."""

    def candidates(self, ctx):
        nxt = (ctx.current + 1) % self.topology.n_switches
        if nxt == ctx.destination:
            nxt = (nxt + 1) % self.topology.n_switches
        return [RoutingChoice(self._port(ctx.current, nxt), 0, 0)]


# ---------------------------------------------------------------------------
# Channel dependency graphs
# ---------------------------------------------------------------------------


class TestBuildCdg:
    """Acyclicity of the routings that claim deadlock freedom, and a cyclic control."""

    def test_srinr_is_acyclic(self):
        topo = build_complete_graph(8, 1)
        cdg = build_cdg(topo, build_routing("srinr", topo))
        assert not has_cycle(cdg)
        assert find_cycle(cdg) is None
        assert cdg.graph.number_of_edges() > 0

    @pytest.mark.parametrize("routing_cls", [ValiantRouting, UgalRouting, OmniWarRouting])
    def test_two_vc_routings_are_acyclic(self, routing_cls):
        topo = build_complete_graph(8, 1)
        cdg = build_cdg(topo, routing_cls(topo))
        assert not has_cycle(cdg)
        assert {vc for _, _, vc in cdg.nodes} == {0, 1}

    def test_min_has_no_dependencies(self):
        topo = build_complete_graph(6, 1)
        cdg = build_cdg(topo, MinRouting(topo))
        assert cdg.graph.number_of_edges() == 0
        assert len(cdg.nodes) == 30

    def test_unrestricted_has_a_cycle(self):
        topo = build_complete_graph(4, 1)
        cdg = build_cdg(topo, UnrestrictedRouting(topo))
        assert has_cycle(cdg)
        witness = find_cycle(cdg)
        assert witness is not None and len(witness) >= 2
        for (a, b, _), (c, _, _) in zip(witness, witness[1:] + witness[:1]):
            assert b == c

    def test_tera_relies_on_escape(self):
        topo = build_complete_graph(8, 1)
        emb = embed_service(topo, "hypercube")
        # main arcs alone are cyclic on one VC; the service escape breaks the deadlock
        assert has_cycle(build_cdg(topo, TeraRouting(emb)))
        assert verify_escape(emb, TeraRouting(emb))

    def test_hop_bound_exceeded(self):
        topo = build_complete_graph(5, 1)
        with pytest.raises(RoutingInconsistencyError):
            build_cdg(topo, _WanderingRouting(topo))

    def test_export(self, tmp_path):
        topo = build_complete_graph(4, 1)
        cdg = build_cdg(topo, ValiantRouting(topo))
        path = tmp_path / "cdg.txt"
        export_edge_list(cdg, path)
        lines = path.read_text().splitlines()
        assert len(lines) == cdg.graph.number_of_edges()
        a, b, vc, c, d, vc2 = (int(v) for v in lines[0].split())
        assert b == c
        assert (vc, vc2) == (0, 1)


# ---------------------------------------------------------------------------
# Escape paths
# ---------------------------------------------------------------------------


class TestEscape:
    @pytest.mark.parametrize("n, kind", [(16, "hypercube"), (4, "path"), (16, "hyperx(4,4)"), (15, "tree(2)")])
    def test_tera_escape_holds(self, n, kind):
        emb = embed_service(build_complete_graph(n, 1), kind)
        assert verify_escape(emb, TeraRouting(emb))

    @pytest.mark.parametrize(
        "n, kind",
        [
            (4, "path"),
            (16, "mesh"),
            (12, "mesh(3,4)"),
            (16, "hypercube"),
            (16, "hyperx(4,4)"),
            (8, "hyperx(2,2,2)"),
            (16, "hyperx3"),
            (15, "tree(2)"),
            (13, "tree(3)"),
        ],
    )
    def test_service_routing_is_acyclic(self, n, kind):
        """Dimension order on grids and up/down on trees, walked directly and through the routing."""
        topo = build_complete_graph(n, 1)
        emb = embed_service(topo, kind)
        direct = service_cdg(emb)
        routing = build_routing(f"service(service={kind})", topo)
        assert routing.label.startswith("SERVICE-")
        routed = build_cdg(topo, routing)
        assert not has_cycle(direct)
        assert not has_cycle(routed)
        assert routed.edges == direct.edges
        assert routed.nodes == direct.nodes

    def test_clockwise_service_routing_is_rejected(self):
        emb = embed_service(build_complete_graph(4, 1), "hypercube")
        routing = TeraRouting(emb, service_next=_clockwise)
        assert has_cycle(service_cdg(emb, _clockwise))
        assert not verify_escape(emb, routing)

    def test_routing_without_service_port_is_rejected(self):
        emb = embed_service(build_complete_graph(8, 1), "hypercube")
        # MIN never offers the service hop toward a non-adjacent service destination
        assert not verify_escape(emb, MinRouting(emb.base))


class TestMaxHopBound:
    @pytest.mark.parametrize(
        "n, kind, bound",
        [(4, "path", 4), (64, "hyperx(4,4,4)", 4), (64, "hyperx(8,8)", 3), (16, "hypercube", 5)],
    )
    def test_bound(self, n, kind, bound):
        emb = embed_service(build_complete_graph(n, 1), kind)
        assert max_hop_bound(emb) == bound
        assert TeraRouting(emb).max_hops() == bound
