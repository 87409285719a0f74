# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Tests for the analytical throughput estimate.
"""

import pytest

from fullmesh.analysis import (
    EstimateInput,
    compatible_sizes,
    estimate_curve,
    estimate_from_embedding,
    estimate_throughput,
    gamma_bound_chain,
    service_for,
)
from fullmesh.common import DomainError
from fullmesh.topology import build_complete_graph, embed_service


class TestEstimate:
    def test_no_service(self):
        assert estimate_throughput(1.0) == pytest.approx(0.5)

    def test_hyperx444_in_fm64(self):
        emb = embed_service(build_complete_graph(64, 1), "hyperx(4,4,4)")
        assert estimate_from_embedding(emb) == pytest.approx(0.4615, abs=1e-4)

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.2])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            estimate_throughput(p)

    def test_monotone_in_p(self):
        values = [estimate_throughput(p / 10) for p in range(1, 11)]
        assert values == sorted(values)


class TestCurves:
    def test_service_for(self):
        assert service_for("hyperx", 64, 3) == "hyperx(4,4,4)"
        assert service_for("tree", 31, 4) == "tree(4)"
        assert service_for("hypercube", 32, 0) == "hypercube"

    def test_hypercube_sizes(self):
        assert compatible_sizes("hypercube", range(4, 20), 0) == [4, 8, 16]

    def test_estimate_grows_with_n(self):
        curve = estimate_curve("hyperx", [16, 64, 256], 2)
        estimates = [e for _, _, e in curve]
        assert estimates == sorted(estimates)
        assert estimates[-1] < 0.5

    def test_path_leaves_most_links_main(self):
        ((n, p, _),) = estimate_curve("path", [32], 1)
        assert n == 32
        assert p == pytest.approx(1 - 2 / 32)


class TestGammaBound:
    @pytest.mark.parametrize("p, n, gamma1", [(54 / 63, 64, 0.0), (0.5, 16, 0.3), (1.0, 8, 1.0)])
    def test_chain_holds(self, p, n, gamma1):
        chain = gamma_bound_chain(p, n, gamma1)
        assert chain.holds
        assert chain.per_server <= chain.estimate + 1 / n

    def test_invalid_inputs(self):
        with pytest.raises(DomainError):
            EstimateInput(p=0.5, n=1)
        with pytest.raises(DomainError):
            gamma_bound_chain(0.5, 16, 1.5)
