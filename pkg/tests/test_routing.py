# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Tests for the routing decision functions and the routing spec strings.
"""

import numpy as np
import pytest

from fullmesh.common import ConfigError, RoutingInconsistencyError
from fullmesh.routing import (
    DEFAULT_PENALTY,
    EJECT,
    EntryClass,
    HyperX2DTeraRouting,
    MinRouting,
    OmniWarRouting,
    OrderingRouting,
    RouteState,
    RoutingChoice,
    RoutingContext,
    TeraRouting,
    UgalRouting,
    ValiantRouting,
    build_routing,
    parse_spec_string,
    pick_minimum,
    split_arguments,
)
from fullmesh.ordering import srinr_labelling
from fullmesh.topology import build_complete_graph, build_hyperx, embed_service


def _ctx(topo, current, destination, occupancy=None, entry=EntryClass.INJECTION, **kwargs):
    return RoutingContext(
        current=current,
        destination=destination,
        entry_class=entry,
        occupancy=occupancy if occupancy is not None else [0] * topo.degree(current),
        **kwargs,
    )


@pytest.fixture
def fm64():
    return build_complete_graph(64, 1)


@pytest.fixture
def tera_hx3(fm64):
    return TeraRouting(embed_service(fm64, "hyperx(4,4,4)"))


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


class TestPickMinimum:
    def test_lowest_weight_wins(self):
        options = [RoutingChoice(0, 0, 10), RoutingChoice(1, 0, 3), RoutingChoice(2, 0, 7)]
        assert pick_minimum(options, None).port == 1

    def test_ties_are_broken_by_the_stream(self):
        options = [RoutingChoice(p, 0, 5) for p in range(4)]
        rng = np.random.default_rng(0)
        picked = {pick_minimum(options, rng).port for _ in range(200)}
        assert picked == {0, 1, 2, 3}

    def test_ejection_at_destination(self, fm64):
        assert MinRouting(fm64).route(_ctx(fm64, 7, 7)) == EJECT


# ---------------------------------------------------------------------------
# TERA
# ---------------------------------------------------------------------------


class TestTera:
    """Candidate sets and penalties of the main/service split."""

    def test_injection_candidates(self, fm64, tera_hx3):
        options = tera_hx3.candidates(_ctx(fm64, 0, 63))
        neighbors = {fm64.neighbor_at(0, o.port) for o in options}
        # 54 main ports plus the DOR service hop
        assert len(neighbors) == 55
        assert tera_hx3.embedding.service_next(0, 63) in neighbors

    def test_transit_candidates(self, fm64, tera_hx3):
        options = tera_hx3.candidates(_ctx(fm64, 5, 63, entry=EntryClass.TRANSIT, previous=0))
        neighbors = {fm64.neighbor_at(5, o.port) for o in options}
        assert neighbors == {63, tera_hx3.embedding.service_next(5, 63)}

    def test_minimal_when_idle(self, fm64, tera_hx3):
        choice = tera_hx3.route(_ctx(fm64, 0, 63, rng=np.random.default_rng(1)))
        assert fm64.neighbor_at(0, choice.port) == 63
        assert choice.weight == 0

    def test_penalty_on_non_minimal(self, fm64, tera_hx3):
        options = tera_hx3.candidates(_ctx(fm64, 0, 63))
        weights = {fm64.neighbor_at(0, o.port): o.weight for o in options}
        assert weights[63] == 0
        assert all(w == DEFAULT_PENALTY for y, w in weights.items() if y != 63)

    def test_detours_when_direct_port_is_congested(self, fm64, tera_hx3):
        occupancy = [0] * 63
        occupancy[fm64.port_of(0, 63)] = 80
        choice = tera_hx3.route(_ctx(fm64, 0, 63, occupancy, rng=np.random.default_rng(2)))
        assert fm64.neighbor_at(0, choice.port) != 63
        assert choice.weight == DEFAULT_PENALTY

    def test_one_vc(self, tera_hx3):
        assert tera_hx3.vcs == 1
        assert tera_hx3.label == "TERA-HX3"


class TestTeraLaws:
    """Every (current, destination) pair on small Full-meshes, under random occupancy."""

    CASES = [(8, "hypercube"), (6, "path"), (7, "tree(2)"), (9, "hyperx(3,3)")]

    @staticmethod
    def _contexts(topo, x, d, occupancy=None):
        # a transit packet arrives from some switch other than x and d
        previous = next(y for y in range(topo.n_switches) if y not in (x, d))
        return [
            _ctx(topo, x, d, occupancy),
            _ctx(topo, x, d, occupancy, entry=EntryClass.TRANSIT, previous=previous),
        ]

    @staticmethod
    def _pairs(n):
        return [(x, d) for x in range(n) for d in range(n) if x != d]

    @pytest.mark.parametrize("n, kind", CASES)
    def test_candidate_ports(self, n, kind):
        topo = build_complete_graph(n, 1)
        routing = TeraRouting(embed_service(topo, kind))
        emb = routing.embedding
        for x, d in self._pairs(n):
            sets = routing.port_sets(x, d)
            injection, transit = self._contexts(topo, x, d)
            assert {o.port for o in routing.candidates(injection)} == sets.main | sets.service
            assert {o.port for o in routing.candidates(transit)} == sets.service | sets.minimal
            assert not any(emb.is_service(x, topo.neighbor_at(x, p)) for p in sets.main)
            assert all(emb.is_service(x, topo.neighbor_at(x, p)) for p in sets.service)

    @pytest.mark.parametrize("n, kind", CASES)
    def test_weights_and_vc(self, n, kind):
        topo = build_complete_graph(n, 1)
        routing = TeraRouting(embed_service(topo, kind), q=7)
        rng = np.random.default_rng(n)
        for x, d in self._pairs(n):
            occupancy = [int(v) for v in rng.integers(0, 20, topo.degree(x))]
            minimal = routing.port_sets(x, d).minimal
            for ctx in self._contexts(topo, x, d, occupancy):
                for option in routing.candidates(ctx):
                    penalty = 0 if option.port in minimal else 7
                    assert option.weight == occupancy[option.port] + penalty
                    assert option.vc == 0
        assert routing.vcs == 1

    @pytest.mark.parametrize("n, kind", CASES)
    def test_choice_ignores_a_uniform_occupancy_shift(self, n, kind):
        topo = build_complete_graph(n, 1)
        routing = TeraRouting(embed_service(topo, kind))
        rng = np.random.default_rng(100 + n)

        def best(options):
            low = min(o.weight for o in options)
            return {o.port for o in options if o.weight == low}

        for x, d in self._pairs(n):
            occupancy = [int(v) for v in rng.integers(0, 80, topo.degree(x))]
            shifted = [v + 13 for v in occupancy]
            for before, after in zip(
                self._contexts(topo, x, d, occupancy), self._contexts(topo, x, d, shifted)
            ):
                assert best(routing.candidates(before)) == best(routing.candidates(after))
                assert routing.route(before).port == routing.route(after).port


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


class TestValiant:
    def test_two_hops_on_two_vcs(self):
        topo = build_complete_graph(8, 1)
        routing = ValiantRouting(topo)
        state = routing.prepare(0, 5, np.random.default_rng(4))
        assert state.intermediate not in (None, 0, 5)
        first = routing.route(_ctx(topo, 0, 5, state=state))
        assert topo.neighbor_at(0, first.port) == state.intermediate
        assert first.vc == 0
        middle = state.intermediate
        second = routing.route(_ctx(topo, middle, 5, entry=EntryClass.TRANSIT, state=state, previous=0))
        assert topo.neighbor_at(middle, second.port) == 5
        assert second.vc == 1

    def test_variants_cover_every_intermediate(self):
        routing = ValiantRouting(build_complete_graph(6, 1))
        assert {v.intermediate for v in routing.variants(0, 1)} == {2, 3, 4, 5}


class TestUgal:
    def test_prefers_minimal_on_ties(self):
        topo = build_complete_graph(8, 1)
        routing = UgalRouting(topo)
        state = RouteState(intermediate=3)
        choice = routing.route(_ctx(topo, 0, 5, state=state))
        assert topo.neighbor_at(0, choice.port) == 5
        assert choice.state.minimal

    def test_takes_valiant_when_minimal_queue_is_long(self):
        topo = build_complete_graph(8, 1)
        routing = UgalRouting(topo)
        occupancy = [0] * 7
        occupancy[topo.port_of(0, 5)] = 48
        occupancy[topo.port_of(0, 3)] = 16
        choice = routing.route(_ctx(topo, 0, 5, occupancy, state=RouteState(intermediate=3)))
        assert topo.neighbor_at(0, choice.port) == 3
        assert choice.state.minimal is False


class TestOmniWar:
    def test_every_port_at_injection(self):
        topo = build_complete_graph(8, 1)
        options = OmniWarRouting(topo).candidates(_ctx(topo, 0, 5))
        assert len(options) == 7
        assert {o.vc for o in options} == {0}

    def test_direct_on_vc1_in_transit(self):
        topo = build_complete_graph(8, 1)
        options = OmniWarRouting(topo).candidates(
            _ctx(topo, 2, 5, entry=EntryClass.TRANSIT, previous=0)
        )
        assert [(topo.neighbor_at(2, o.port), o.vc) for o in options] == [(5, 1)]


class TestOrdering:
    def test_srinr_intermediates_only(self):
        topo = build_complete_graph(8, 1)
        routing = OrderingRouting(topo, srinr_labelling(8))
        options = routing.candidates(_ctx(topo, 0, 3))
        neighbors = {topo.neighbor_at(0, o.port) for o in options}
        assert neighbors == {3} | set(routing.allowed_intermediates(0, 3))
        assert len(neighbors) == 4

    def test_labelling_size_mismatch(self):
        with pytest.raises(ConfigError):
            OrderingRouting(build_complete_graph(8, 1), srinr_labelling(6))


class TestHyperXTera:
    def test_dor_corrects_x_first(self):
        topo = build_hyperx((8, 8), 1)
        routing = HyperX2DTeraRouting(topo, "dor")
        # 0 = (0,0) -> 63 = (7,7): every option stays in row 0
        for option in routing.candidates(_ctx(topo, 0, 63)):
            y = topo.neighbor_at(0, option.port)
            assert topo.coords(y)[1] == 0
        assert routing.vcs == 1
        assert routing.label == "DOR-TERA-HX3"

    def test_o1turn_uses_the_order_as_vc(self):
        topo = build_hyperx((8, 8), 1)
        routing = HyperX2DTeraRouting(topo, "o1turn")
        options = routing.candidates(_ctx(topo, 0, 63, state=RouteState(order=1)))
        assert {o.vc for o in options} == {1}
        for option in options:
            assert topo.coords(topo.neighbor_at(0, option.port))[0] == 0
        assert routing.vcs == 2

    def test_needs_a_hyperx(self):
        with pytest.raises(ConfigError):
            HyperX2DTeraRouting(build_complete_graph(8, 1))


# ---------------------------------------------------------------------------
# Spec strings
# ---------------------------------------------------------------------------


class TestSpecStrings:
    def test_split_respects_parentheses(self):
        assert split_arguments("service=hyperx(4,4,4), q=54") == ["service=hyperx(4,4,4)", "q=54"]

    def test_parse(self):
        assert parse_spec_string("tera(service=hyperx(4,4,4), q=54)") == (
            "tera",
            {"service": "hyperx(4,4,4)", "q": "54"},
        )
        assert parse_spec_string("min") == ("min", {})

    def test_build(self, fm64):
        routing = build_routing("tera(service=hyperx(8,8), q=20)", fm64)
        assert isinstance(routing, TeraRouting)
        assert routing.q == 20
        assert routing.label == "TERA-HX2"

    def test_unknown_routing(self, fm64):
        with pytest.raises(ConfigError):
            build_routing("dimwar", fm64)

    def test_bad_penalty(self, fm64):
        with pytest.raises(ConfigError):
            build_routing("omniwar(q=abc)", fm64)

    def test_missing_link(self):
        topo = build_hyperx((4, 4), 1)
        with pytest.raises(RoutingInconsistencyError):
            MinRouting(topo).candidates(_ctx(topo, 0, 5))
