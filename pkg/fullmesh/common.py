# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Common module for fullmesh: environment settings and the error hierarchy
"""

import os
from dotenv import load_dotenv
from loguru import logger


load_dotenv()


class FullMeshError(Exception):
    """Base class of every error raised by fullmesh."""


class InvalidSizeError(FullMeshError, ValueError):
    pass


class EmbeddingMismatchError(FullMeshError, ValueError):
    pass


class InvalidPairError(FullMeshError, ValueError):
    pass


class MalformedOrderingError(FullMeshError, ValueError):
    pass


class DomainError(FullMeshError, ValueError):
    pass


class ConfigError(FullMeshError, ValueError):
    """Malformed experiment config. The message names the offending field."""


class RoutingInconsistencyError(FullMeshError, RuntimeError):
    pass


class InvariantViolation(FullMeshError, RuntimeError):
    pass


class DeadlockDetected(FullMeshError, RuntimeError):
    """No flit moved for a whole detection window while packets were still in flight."""

    def __init__(self, cycle: int, stalled: int, window: int):
        self.cycle = cycle
        self.stalled = stalled
        self.window = window
        super().__init__(
            f"no flit moved for {window} cycles at cycle {cycle} "
            f"with {stalled} packets in flight"
        )

    def __reduce__(self):
        return (DeadlockDetected, (self.cycle, self.stalled, self.window))


def is_test_mode() -> bool:
    return os.getenv("FULLMESH_TEST", "").lower() in ("1", "true", "yes")


def get_fullmesh_workers() -> int:
    if (workers := os.environ.get("FULLMESH_WORKERS")) is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(workers))
    except ValueError:
        logger.warning(f"FULLMESH_WORKERS={workers!r} is not an integer; using 1")
        return 1


def get_fullmesh_profile() -> str:
    if (profile := os.environ.get("FULLMESH_PROFILE")) is None:
        profile = "ci"
    if profile not in ("ci", "full"):
        logger.warning(f"unknown FULLMESH_PROFILE {profile!r}; using ci")
        profile = "ci"
    return profile


def get_fullmesh_db() -> str | None:
    if is_test_mode():
        return "sqlite:///results-deleteme.db"
    return os.environ.get("FULLMESH_DB")


def get_fullmesh_out() -> str:
    if (out := os.environ.get("FULLMESH_OUT")) is None:
        out = "results"
    return out
