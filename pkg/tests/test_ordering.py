# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Tests for arc labellings, the allowed-path combinatorics and the sRINR counts.
"""

import numpy as np
import pytest

from fullmesh.common import InvalidPairError, MalformedOrderingError
from fullmesh.ordering import (
    allowed_2path,
    arc_utilization,
    claim_report,
    count_allowed_paths,
    intermediates,
    pairing_identity_holds,
    pluggable_ordering,
    random_ordering,
    read_labelling,
    srinr_allowed_paths,
    srinr_labelling,
    srinr_utilization,
    verify_fair_ordering_theorem,
    write_labelling,
)


def _all_arcs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


# ---------------------------------------------------------------------------
# Labellings
# ---------------------------------------------------------------------------


class TestSrinrLabelling:
    def test_k4_labels(self):
        lab = srinr_labelling(4)
        assert [lab.label(0, j) for j in (1, 2, 3)] == [1, 2, 3]
        assert lab.label(3, 0) == 1

    def test_wraps_modulo_n(self):
        assert srinr_labelling(5).label(4, 1) == 2

    def test_self_arc(self):
        with pytest.raises(InvalidPairError):
            srinr_labelling(4).label(2, 2)


class TestPluggableOrdering:
    def test_identity_order(self):
        lab = pluggable_ordering(3, _all_arcs(3))
        assert lab.label(0, 1) == 1
        assert lab.label(2, 1) == 6

    def test_duplicate_arc(self):
        arcs = _all_arcs(3)
        arcs[-1] = arcs[0]
        with pytest.raises(MalformedOrderingError):
            pluggable_ordering(3, arcs)

    def test_missing_arc(self):
        with pytest.raises(MalformedOrderingError):
            pluggable_ordering(3, _all_arcs(3)[:-1])

    def test_file_roundtrip(self, tmp_path):
        lab = random_ordering(5, np.random.default_rng(3))
        path = tmp_path / "order.txt"
        write_labelling(lab, path)
        again = read_labelling(path)
        assert np.array_equal(again.matrix, lab.matrix)

    def test_file_with_missing_arcs(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("0 1 1\n1 0 2\n0 2 3\n")
        with pytest.raises(MalformedOrderingError):
            read_labelling(path)


# ---------------------------------------------------------------------------
# Allowed 2-paths
# ---------------------------------------------------------------------------


class TestAllowedPaths:
    def test_increasing_labels(self):
        lab = srinr_labelling(4)
        assert allowed_2path(lab, 0, 1, 3)
        assert not allowed_2path(lab, 0, 3, 1)

    def test_repeated_switch_is_never_allowed(self):
        assert not allowed_2path(srinr_labelling(4), 0, 2, 0)

    def test_no_paths_on_two_switches(self):
        assert count_allowed_paths(srinr_labelling(2)) == 0

    @pytest.mark.parametrize("n", [3, 4, 5, 8, 13, 16])
    def test_srinr_count_matches_closed_form(self, n):
        assert count_allowed_paths(srinr_labelling(n)) == srinr_allowed_paths(n)

    def test_srinr_counts(self):
        assert srinr_allowed_paths(4) == 8
        assert srinr_allowed_paths(8) == 144
        assert srinr_allowed_paths(3) == 0

    @pytest.mark.parametrize("n", [4, 7, 8])
    def test_srinr_utilization(self, n):
        lab = srinr_labelling(n)
        for arc in _all_arcs(n):
            assert arc_utilization(lab, arc) == srinr_utilization(n, arc)

    def test_random_total_order_stays_within_universe(self):
        lab = random_ordering(5, np.random.default_rng(0))
        assert 0 < count_allowed_paths(lab) <= 5 * 4 * 3


class TestIntermediates:
    def test_fm8_same_parity(self):
        assert len(intermediates(srinr_labelling(8), 0, 2)) == 2

    def test_fm8_different_parity(self):
        assert len(intermediates(srinr_labelling(8), 0, 3)) == 3

    def test_fm4_same_parity_has_none(self):
        assert intermediates(srinr_labelling(4), 0, 2) == set()

    def test_same_endpoints(self):
        with pytest.raises(InvalidPairError):
            intermediates(srinr_labelling(4), 1, 1)

    @pytest.mark.parametrize("n", range(3, 33))
    def test_claim(self, n):
        report = claim_report(n)
        assert report.holds
        assert report.minimum == report.expected_minimum

    @pytest.mark.parametrize("n", [4, 5, 8, 9, 12])
    def test_pairing_identity(self, n):
        assert pairing_identity_holds(n)


# ---------------------------------------------------------------------------
# Fair-ordering theorem
# ---------------------------------------------------------------------------


class TestFairOrderingReport:
    @pytest.mark.parametrize("n", range(3, 17))
    def test_srinr_report(self, n):
        report = verify_fair_ordering_theorem(srinr_labelling(n))
        assert not report.strict
        assert report.implication_holds
        assert report.allowed_paths == srinr_allowed_paths(n)
        # odd n: every arc carries n-3 paths
        assert report.fair == (n % 2 == 1)

    def test_random_total_order_is_strict(self):
        report = verify_fair_ordering_theorem(random_ordering(5, np.random.default_rng(11)))
        assert report.strict
        assert report.implication_holds
        assert report.formula == 30

    def test_first_arc_starts_n_minus_2_paths(self):
        # the lowest arc is a valid first hop toward every other switch
        lab = pluggable_ordering(4, _all_arcs(4))
        first_hops = sum(allowed_2path(lab, 0, 1, d) for d in (2, 3))
        assert first_hops == 2
