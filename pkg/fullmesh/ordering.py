# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Arc labellings for link-ordering routing on a complete graph.

A path is allowed when its arc labels strictly increase. The brute-force
checks below count allowed 2-paths, per-arc utilization and per-pair
intermediates over every ordered triple of switches, vectorized with numpy.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from loguru import logger

from fullmesh.common import InvalidPairError, InvalidSizeError, MalformedOrderingError

Arc = tuple[int, int]


class ArcLabelling:
    """Total assignment of integer labels to the arcs of K_n.

    Labels are compared by value, so sRINR may reuse a value on many arcs
    while generic orderings use their position in a strict total order.
    """

    def __init__(self, n: int, matrix: np.ndarray, kind: str = "generic"):
        if n < 2:
            raise InvalidSizeError(f"a labelling needs n >= 2, got {n}")
        if matrix.shape != (n, n):
            raise MalformedOrderingError(f"label matrix shape {matrix.shape} != ({n}, {n})")
        self.n = n
        self.kind = kind
        self.matrix = matrix.astype(np.int64, copy=True)
        np.fill_diagonal(self.matrix, -1)
        self.matrix.setflags(write=False)

    def label(self, i: int, j: int) -> int:
        if i == j:
            raise InvalidPairError(f"no self-arc ({i},{i}) in a complete graph")
        return int(self.matrix[i, j])

    def arcs(self) -> Iterable[Arc]:
        return ((i, j) for i in range(self.n) for j in range(self.n) if i != j)

    def __repr__(self) -> str:
        return f"ArcLabelling(n={self.n}, kind={self.kind!r})"


def srinr_labelling(n: int) -> ArcLabelling:
    """Symmetric labelling: arc (i, j) gets (j - i) mod n, a value in [1, n-1]."""
    if n < 2:
        raise InvalidSizeError(f"sRINR needs n >= 2, got {n}")
    idx = np.arange(n)
    matrix = (idx[None, :] - idx[:, None]) % n
    return ArcLabelling(n, matrix, kind="srinr")


def pluggable_ordering(n: int, order_spec: Sequence[Arc]) -> ArcLabelling:
    """Labelling given by each arc's position in an external ordering list."""
    expected = n * (n - 1)
    seen: set[Arc] = set()
    matrix = np.full((n, n), -1, dtype=np.int64)
    for position, arc in enumerate(order_spec, start=1):
        i, j = (int(v) for v in arc)
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise MalformedOrderingError(f"arc {arc} is not an arc of K_{n}")
        if (i, j) in seen:
            raise MalformedOrderingError(f"arc {arc} appears twice in the ordering")
        seen.add((i, j))
        matrix[i, j] = position
    if len(seen) != expected:
        raise MalformedOrderingError(
            f"ordering lists {len(seen)} arcs, K_{n} has {expected}"
        )
    return ArcLabelling(n, matrix, kind="generic")


def write_labelling(lab: ArcLabelling, path: str | Path) -> None:
    """One line per arc, `src dst label`, sorted by (src, dst)."""
    lines = [f"{i} {j} {lab.label(i, j)}" for i, j in sorted(lab.arcs())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labelling(path: str | Path) -> ArcLabelling:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MalformedOrderingError(f"{path}:{lineno}: expected 'src dst label'")
        rows.append(tuple(int(p) for p in parts))
    if not rows:
        raise MalformedOrderingError(f"{path}: empty labelling")
    n = max(max(i, j) for i, j, _ in rows) + 1
    matrix = np.full((n, n), -1, dtype=np.int64)
    for i, j, value in rows:
        if i == j or matrix[i, j] != -1:
            raise MalformedOrderingError(f"{path}: arc ({i},{j}) repeated or self-arc")
        matrix[i, j] = value
    if len(rows) != n * (n - 1):
        raise MalformedOrderingError(f"{path}: {len(rows)} arcs listed, K_{n} has {n * (n - 1)}")
    return ArcLabelling(n, matrix, kind="file")


# ============================================================================
# Brute-force combinatorics
# ============================================================================


def _distinct_mask(n: int) -> np.ndarray:
    idx = np.arange(n)
    s, m, d = np.meshgrid(idx, idx, idx, indexing="ij")
    return (s != m) & (m != d) & (s != d)


def allowed_tensor(lab: ArcLabelling) -> np.ndarray:
    """Boolean tensor T[s, m, d]: the 2-path s -> m -> d is allowed."""
    L = lab.matrix
    return (L[:, :, None] < L[None, :, :]) & _distinct_mask(lab.n)


def allowed_2path(lab: ArcLabelling, s: int, m: int, d: int) -> bool:
    if s == m or m == d or s == d:
        return False
    return lab.label(s, m) < lab.label(m, d)


def count_allowed_paths(lab: ArcLabelling) -> int:
    return int(allowed_tensor(lab).sum())


def utilization_matrix(lab: ArcLabelling) -> np.ndarray:
    """U[a, b]: allowed 2-paths whose first or second hop is the arc (a, b)."""
    T = allowed_tensor(lab)
    return T.sum(axis=2) + T.sum(axis=0)


def arc_utilization(lab: ArcLabelling, arc: Arc) -> int:
    a, b = arc
    if a == b:
        raise InvalidPairError(f"no self-arc ({a},{a})")
    T = allowed_tensor(lab)
    return int(T[a, b, :].sum() + T[:, a, b].sum())


def intermediates(lab: ArcLabelling, a: int, b: int) -> set[int]:
    if a == b:
        raise InvalidPairError(f"source and destination coincide ({a})")
    L = lab.matrix
    return {
        m for m in range(lab.n) if m not in (a, b) and L[a, m] < L[m, b]
    }


def forward_gap(n: int, a: int, b: int, i: int) -> int:
    """G_ab(i) = D(i, b) - D(a, i) for the sRINR distance D, taken mod n."""
    return (b - i) % n - (i - a) % n


@dataclass(frozen=True)
class FairnessReport:
    n: int
    strict: bool
    fair: bool
    min_utilization: int
    max_utilization: int
    allowed_paths: int
    formula: int

    @property
    def matches_formula(self) -> bool:
        return self.allowed_paths == self.formula

    @property
    def implication_holds(self) -> bool:
        """On a strict total order, equal utilization forces the n(n-1)(n-2)/2 path count.

        Labellings with repeated labels (sRINR) fall outside the hypothesis.
        """
        return not (self.strict and self.fair) or self.matches_formula


def verify_fair_ordering_theorem(lab: ArcLabelling) -> FairnessReport:
    n = lab.n
    U = utilization_matrix(lab)
    values = U[~np.eye(n, dtype=bool)]
    labels = lab.matrix[~np.eye(n, dtype=bool)]
    report = FairnessReport(
        n=n,
        strict=bool(np.unique(labels).size == labels.size),
        fair=bool(values.min() == values.max()),
        min_utilization=int(values.min()),
        max_utilization=int(values.max()),
        allowed_paths=count_allowed_paths(lab),
        formula=n * (n - 1) * (n - 2) // 2,
    )
    if not report.implication_holds:
        logger.error(f"fair labelling with a wrong path count: {report}")
    return report


def srinr_allowed_paths(n: int) -> int:
    """Closed form of count_allowed_paths(srinr_labelling(n))."""
    if n % 2 == 0:
        return n * (n - 2) ** 2 // 2
    return n * (n - 1) * (n - 3) // 2


def srinr_utilization(n: int, arc: Arc) -> int:
    """Closed form of arc_utilization under sRINR: n-2 on the arcs labelled n/2, n-3 elsewhere."""
    a, b = arc
    if a == b:
        raise InvalidPairError(f"no self-arc ({a},{a})")
    return n - 2 if 2 * ((b - a) % n) == n else n - 3


def pairing_identity_holds(n: int) -> bool:
    """-G_ab(y + x) == G_ab(y - x) for every center y with 2y = a + b (mod n)."""
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            centers = [y for y in range(n) if (2 * y - a - b) % n == 0]
            for y in centers:
                for x in range(n):
                    if -forward_gap(n, a, b, (y + x) % n) != forward_gap(n, a, b, (y - x) % n):
                        return False
    return True


@dataclass(frozen=True)
class ClaimReport:
    n: int
    minimum: int
    same_parity_counts: frozenset[int]
    different_parity_counts: frozenset[int]

    @property
    def expected_minimum(self) -> int:
        return (self.n - 4) // 2 if self.n % 2 == 0 else (self.n - 3) // 2

    @property
    def holds(self) -> bool:
        if self.n % 2 == 1:
            counts = self.same_parity_counts | self.different_parity_counts
            return counts == {(self.n - 3) // 2}
        return (
            self.minimum == (self.n - 4) // 2
            and self.same_parity_counts == {(self.n - 4) // 2}
            and self.different_parity_counts == {(self.n - 2) // 2}
        )


def claim_report(n: int) -> ClaimReport:
    """Exhaustive intermediate counts under sRINR for every ordered pair."""
    if n < 3:
        raise InvalidSizeError(f"intermediates need n >= 3, got {n}")
    T = allowed_tensor(srinr_labelling(n))
    counts = T.sum(axis=1)  # counts[a, b] = |intermediates(a, b)|
    same, different = set(), set()
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            (same if (a - b) % 2 == 0 else different).add(int(counts[a, b]))
    off_diagonal = counts[~np.eye(n, dtype=bool)]
    return ClaimReport(n, int(off_diagonal.min()), frozenset(same), frozenset(different))


def random_ordering(n: int, rng: np.random.Generator) -> ArcLabelling:
    arcs = [(i, j) for i in range(n) for j in range(n) if i != j]
    order = rng.permutation(len(arcs))
    return pluggable_ordering(n, [arcs[k] for k in order])
