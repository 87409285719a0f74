# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Analytical throughput estimate for TERA: with a fraction p of the arcs in the
main topology, a switch permutation saturates near 1 / (1 + 1/p) flits per
cycle per server.
"""

from dataclasses import dataclass
from typing import Iterable

from loguru import logger

from fullmesh.common import DomainError, EmbeddingMismatchError
from fullmesh.topology import (
    ServiceEmbedding,
    build_complete_graph,
    embed_service,
    main_degree_ratio,
    near_square_dims,
)

# Default estimate curves: (label, service family, dimensions)
DEFAULT_CURVES = (
    ("path", "path", 1),
    ("2D-mesh", "mesh", 2),
    ("2-tree", "tree", 2),
    ("4-tree", "tree", 4),
    ("hypercube", "hypercube", 0),
    ("2D-HyperX", "hyperx", 2),
    ("3D-HyperX", "hyperx", 3),
)


@dataclass(frozen=True)
class EstimateInput:
    p: float
    n: int
    gamma1: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise DomainError(f"p must be in (0, 1], got {self.p}")
        if not 0.0 <= self.gamma1 <= 1.0:
            raise DomainError(f"gamma1 must be in [0, 1], got {self.gamma1}")
        if self.n < 2:
            raise DomainError(f"n must be at least 2, got {self.n}")


def estimate_throughput(p: float) -> float:
    if p <= 0:
        raise DomainError(f"main-degree ratio must be positive, got {p}")
    if p > 1:
        raise DomainError(f"main-degree ratio cannot exceed 1, got {p}")
    return 1.0 / (1.0 + 1.0 / p)


def estimate_from_embedding(emb: ServiceEmbedding) -> float:
    return estimate_throughput(main_degree_ratio(emb))


def service_for(family: str, n: int, dimensions: int) -> str:
    """Service kind string of `family` sized for K_n."""
    match family:
        case "mesh" | "hyperx":
            dims = near_square_dims(n, dimensions)
            if min(dims) < 2:
                raise EmbeddingMismatchError(f"{n} switches do not form a {dimensions}D {family}")
            return f"{family}({','.join(str(d) for d in dims)})"
        case "tree":
            return f"tree({dimensions})"
        case _:
            return family


def estimate_curve(family: str, ns: Iterable[int], dimensions: int = 2) -> list[tuple[int, float, float]]:
    """(n, p, estimate) for each n; raises when an n cannot host the service."""
    series = []
    for n in ns:
        emb = embed_service(build_complete_graph(n, 0), service_for(family, n, dimensions))
        p = main_degree_ratio(emb)
        series.append((n, p, estimate_throughput(p)))
    return series


def compatible_sizes(family: str, ns: Iterable[int], dimensions: int = 2) -> list[int]:
    sizes = []
    for n in ns:
        try:
            embed_service(build_complete_graph(n, 0), service_for(family, n, dimensions))
        except (EmbeddingMismatchError, DomainError):
            logger.debug(f"{family} skips n={n}")
            continue
        sizes.append(n)
    return sizes


@dataclass(frozen=True)
class GammaBoundChain:
    n: int
    p: float
    gamma1: float
    gamma2_max: float
    gamma_max: float
    per_server: float
    estimate: float

    @property
    def holds(self) -> bool:
        eps = 1e-9
        n, p = self.n, self.p
        capacity = n * (p * self.gamma1 + (1 + p) * self.gamma2_max)
        alt_gamma2 = ((n - 1) - self.gamma1) / (1 + 1 / p)
        split = (n - 1) / (1 + 1 / p) + self.gamma1 / (1 + p)
        return (
            capacity <= p * (n - 1) * n + eps
            and abs(alt_gamma2 - self.gamma2_max) <= eps * max(1.0, n)
            and abs(split - self.gamma_max) <= eps * max(1.0, n)
            and self.gamma_max <= (n - 1) / (1 + 1 / p) + 1 + eps
            and self.per_server <= self.estimate + 1 / n + eps
        )


def gamma_bound_chain(p: float, n: int, gamma1: float) -> GammaBoundChain:
    """Largest 2-hop rate the main links carry, and the resulting per-server bound."""
    inputs = EstimateInput(p=p, n=n, gamma1=gamma1)
    gamma2_max = (inputs.p * (n - 1) - inputs.p * gamma1) / (1 + inputs.p)
    gamma_max = gamma1 + gamma2_max
    return GammaBoundChain(
        n=n,
        p=p,
        gamma1=gamma1,
        gamma2_max=gamma2_max,
        gamma_max=gamma_max,
        per_server=gamma_max / n,
        estimate=estimate_throughput(p),
    )
