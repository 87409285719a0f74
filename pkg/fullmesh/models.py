# SPDX-FileCopyrightText: Copyright © 2026 Idiap Research Institute <contact@idiap.ch>
# SPDX-FileContributor: William Droz <william.droz@idiap.ch>
# SPDX-License-Identifier: MIT

"""
Experiment configuration and result models.

Configs are plain SQLModel (pydantic) models loaded from JSON; results are a
SQLModel table written to CSV and, when FULLMESH_DB is set, to a database.
"""

import csv
import hashlib
import json
import math
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Optional

import numpy as np
from loguru import logger
from pydantic import ValidationError
from sqlmodel import Field, Session, SQLModel, create_engine, select

from fullmesh.common import ConfigError, FullMeshError, get_fullmesh_db
from fullmesh.routing import ROUTINGS, Routing, build_routing, parse_spec_string
from fullmesh.topology import Topology, build_complete_graph, build_hyperx
from fullmesh.traffic import (
    BernoulliSource,
    BurstSource,
    DestinationPattern,
    Kernel,
    KernelSource,
    Pattern,
    TrafficSource,
    kernel_driver,
)

if TYPE_CHECKING:
    from fullmesh.engine import RunResult

CONFIG_DIR = Path(__file__).parent / "configs"
MODES = ("bernoulli", "fixed_burst", "kernel")


class TopologySpec(SQLModel):
    kind: str = "fullmesh"
    n: int = 16
    dims: list[int] = Field(default_factory=list)
    servers_per_switch: int = 4

    def build(self) -> Topology:
        match self.kind:
            case "fullmesh":
                return build_complete_graph(self.n, self.servers_per_switch)
            case "hyperx":
                if not self.dims:
                    raise ConfigError("topology.dims: hyperx needs its dimensions, e.g. [8, 8]")
                return build_hyperx(tuple(self.dims), self.servers_per_switch)
        raise ConfigError(f"topology.kind: expected fullmesh or hyperx, got {self.kind!r}")


class RoutingSpec(SQLModel):
    spec: str

    @property
    def name(self) -> str:
        return parse_spec_string(self.spec)[0]

    def build(self, topology: Topology) -> Routing:
        return build_routing(self.spec, topology)


class TrafficSpec(SQLModel):
    pattern: str = "uniform"
    mode: str = "bernoulli"
    packets_per_server: int = 1250
    kernel: Optional[str] = None
    mapping: str = "linear"
    iterations: int = 1
    allreduce_base_packets: int = 64

    def describe(self) -> str:
        match self.mode:
            case "kernel":
                return f"{self.kernel}/{self.mapping}"
            case "fixed_burst":
                return f"{self.pattern} burst={self.packets_per_server}"
        return self.pattern

    def build_source(
        self, topology: Topology, load: float | None, streams: dict[str, np.random.Generator]
    ) -> TrafficSource:
        traffic = streams["traffic"]
        match self.mode:
            case "bernoulli":
                if load is None:
                    raise ConfigError("loads: bernoulli traffic needs at least one load point")
                pattern = DestinationPattern(self.pattern, topology, traffic)
                return BernoulliSource(pattern, load, traffic)
            case "fixed_burst":
                pattern = DestinationPattern(self.pattern, topology, traffic)
                return BurstSource(pattern, self.packets_per_server, traffic)
            case "kernel":
                if self.kernel is None:
                    raise ConfigError("traffic.kernel: kernel mode needs a kernel name")
                schedule = kernel_driver(
                    self.kernel,
                    topology.n_servers,
                    self.mapping,
                    rng=streams["mapping"],
                    iterations=self.iterations,
                    allreduce_base_packets=self.allreduce_base_packets,
                )
                return KernelSource(schedule, topology)
        raise ConfigError(f"traffic.mode: expected one of {', '.join(MODES)}, got {self.mode!r}")


class SimulationParams(SQLModel):
    packet_size: int = 16
    input_buffer_packets: int = 10
    output_buffer_packets: int = 5
    speedup: int = 2
    link_latency: int = 1
    credit_latency: int = 1
    router_latency: int = 3
    deadlock_window: int = 10_000
    check_every: int = 0
    max_cycles: int = 5_000_000

    def switch_params(self):
        from fullmesh.engine import SwitchParams

        return SwitchParams(**self.model_dump(exclude={"max_cycles"}))


class RunPoint(SQLModel):
    """One simulation job: a single routing, load point and seed."""

    experiment: str
    config_hash: str
    profile: str
    topology: TopologySpec
    routing: str
    traffic: TrafficSpec
    load: Optional[float] = None
    seed: int = 1
    cycles: int = 80_000
    params: SimulationParams = Field(default_factory=SimulationParams)
    trace: bool = False

    def build_routing(self, topology: Topology) -> Routing:
        return build_routing(self.routing, topology)


class ExperimentConfig(SQLModel):
    name: str
    topology: TopologySpec = Field(default_factory=TopologySpec)
    routings: list[str]
    traffic: TrafficSpec = Field(default_factory=TrafficSpec)
    sizes: list[int] = []
    patterns: list[str] = []
    loads: list[float] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0]
    seeds: list[int] = [1]
    cycles: int = 80_000
    params: SimulationParams = Field(default_factory=SimulationParams)
    output: Optional[str] = None
    profile: str = "default"
    profiles: dict[str, dict[str, Any]] = {}

    def config_hash(self) -> str:
        payload = self.model_dump(exclude={"output", "profiles", "profile", "seeds"})
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:12]

    def with_profile(self, profile: str | None) -> "ExperimentConfig":
        """Apply the `profiles[profile]` overrides on top of the base fields."""
        if profile is None:
            return self
        if profile not in self.profiles:
            if self.profiles:
                raise ConfigError(
                    f"profiles: {self.name} has no {profile!r} profile "
                    f"(known: {', '.join(sorted(self.profiles))})"
                )
            return self
        merged = _deep_merge(self.model_dump(), self.profiles[profile])
        merged["profile"] = profile
        return _validate(merged, f"{self.name}[{profile}]")

    def with_seeds(self, count: int | None) -> "ExperimentConfig":
        if count is None:
            return self
        if count < 1:
            raise ConfigError(f"--seeds must be positive, got {count}")
        first = self.seeds[0] if self.seeds else 1
        return self.model_copy(update={"seeds": list(range(first, first + count))})

    def topologies(self) -> list[TopologySpec]:
        """One topology per entry of `sizes`, or the base topology."""
        if not self.sizes:
            return [self.topology]
        return [self.topology.model_copy(update={"n": n}) for n in self.sizes]

    def traffics(self) -> list[TrafficSpec]:
        """One traffic per entry of `patterns`; kernels ignore patterns."""
        if not self.patterns or self.traffic.mode == "kernel":
            return [self.traffic]
        return [self.traffic.model_copy(update={"pattern": p}) for p in self.patterns]

    def points(self, trace: bool = False) -> list[RunPoint]:
        loads: list[float | None] = list(self.loads) if self.traffic.mode == "bernoulli" else [None]
        digest = self.config_hash()
        return [
            RunPoint(
                experiment=self.name,
                config_hash=digest,
                profile=self.profile,
                topology=topology,
                routing=routing,
                traffic=traffic,
                load=load,
                seed=seed,
                cycles=self.cycles,
                params=self.params,
                trace=trace,
            )
            for topology in self.topologies()
            for traffic in self.traffics()
            for routing in self.routings
            for load in loads
            for seed in self.seeds
        ]

    def check(self) -> None:
        """Resolve every name the config refers to; raise ConfigError naming the field."""
        if self.sizes and self.topology.kind != "fullmesh":
            raise ConfigError(f"sizes: only fullmesh topologies take sizes, got {self.topology.kind!r}")
        topologies = []
        for topology_spec in self.topologies():
            where = f"sizes: n={topology_spec.n}" if self.sizes else "topology"
            try:
                topologies.append(topology_spec.build())
            except ConfigError:
                raise
            except FullMeshError as e:
                raise ConfigError(f"{where}: {e}") from e
        if not self.routings:
            raise ConfigError("routings: at least one routing is needed")
        for i, spec in enumerate(self.routings):
            try:
                name, _ = parse_spec_string(spec)
            except ConfigError as e:
                raise ConfigError(f"routings[{i}]: {e}") from e
            if name not in ROUTINGS:
                raise ConfigError(
                    f"routings[{i}]: unknown routing {name!r}; known: {', '.join(sorted(ROUTINGS))}"
                )
            for topology in topologies:
                try:
                    RoutingSpec(spec=spec).build(topology)
                except FullMeshError as e:
                    raise ConfigError(f"routings[{i}] on {topology.name}: {e}") from e
        if self.traffic.mode not in MODES:
            raise ConfigError(f"traffic.mode: expected one of {', '.join(MODES)}, got {self.traffic.mode!r}")
        if self.traffic.mode == "kernel":
            if self.traffic.kernel not in set(Kernel):
                raise ConfigError(f"traffic.kernel: unknown kernel {self.traffic.kernel!r}")
        elif self.patterns:
            for i, pattern in enumerate(self.patterns):
                if pattern not in set(Pattern):
                    raise ConfigError(f"patterns[{i}]: unknown pattern {pattern!r}")
        elif self.traffic.pattern not in set(Pattern):
            raise ConfigError(f"traffic.pattern: unknown pattern {self.traffic.pattern!r}")
        for i, load in enumerate(self.loads):
            if not 0.0 <= load <= 1.0:
                raise ConfigError(f"loads[{i}]: {load} is outside [0, 1]")
        if self.cycles < 1:
            raise ConfigError(f"cycles: must be positive, got {self.cycles}")


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _validate(data: Any, origin: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        field = ".".join(str(part) for part in err["loc"]) or "<root>"
        raise ConfigError(f"{origin}: field {field}: {err['msg']}") from None


def resolve_config_path(name: str | Path) -> Path:
    """A path on disk, or the name of a bundled config."""
    path = Path(name)
    if path.exists():
        return path
    bundled = CONFIG_DIR / f"{Path(name).stem}.json"
    if bundled.exists():
        return bundled
    raise ConfigError(f"--config: no such file or bundled config {str(name)!r}")


def load_config(name: str | Path, profile: str | None = None) -> ExperimentConfig:
    path = resolve_config_path(name)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    config = _validate(data, str(path)).with_profile(profile)
    config.check()
    logger.debug(f"loaded {path} profile={config.profile} hash={config.config_hash()}")
    return config


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.json"))


# ============================================================================
# Results
# ============================================================================

CSV_COLUMNS = (
    "config_hash",
    "seed",
    "routing",
    "pattern",
    "offered",
    "accepted",
    "mean_latency",
    "p99",
    "p999",
    "p9999",
    "jain",
    "hops_0",
    "hops_1",
    "hops_2",
    "hops_3",
    "hops_4",
    "util_main",
    "util_service",
    "cycles_to_finish",
    "routing_spec",
    "experiment",
    "topology",
    "profile",
    "mapping",
    "kernel",
    "created_at",
)


class ResultRow(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    config_hash: str = Field(index=True)
    experiment: str
    topology: str
    profile: str
    seed: int
    routing: str
    routing_spec: str
    pattern: str
    mapping: Optional[str] = None
    kernel: Optional[str] = None
    offered: Optional[float] = None
    accepted: float
    mean_latency: Optional[float] = None
    p99: Optional[float] = None
    p999: Optional[float] = None
    p9999: Optional[float] = None
    jain: Optional[float] = None
    hops_0: float
    hops_1: float
    hops_2: float
    hops_3: float
    hops_4: float
    util_main: float
    util_service: Optional[float] = None
    cycles_to_finish: Optional[int] = None
    created_at: datetime = Field(default_factory=datetime.now)

    def sort_key(self) -> tuple:
        return (
            self.config_hash,
            len(self.topology),
            self.topology,
            self.routing,
            self.pattern,
            -1.0 if self.offered is None else self.offered,
            self.seed,
        )

    def csv_row(self) -> dict[str, Any]:
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    @classmethod
    def from_run(cls, point: RunPoint, result: "RunResult") -> "ResultRow":
        summary = result.summary
        traffic = point.traffic
        return cls(
            config_hash=point.config_hash,
            experiment=point.experiment,
            topology=result.topology,
            profile=point.profile,
            seed=point.seed,
            routing=result.routing,
            routing_spec=point.routing,
            pattern=traffic.kernel if traffic.mode == "kernel" else traffic.pattern,
            mapping=traffic.mapping if traffic.mode == "kernel" else None,
            kernel=traffic.kernel if traffic.mode == "kernel" else None,
            offered=point.load,
            accepted=summary.accepted,
            mean_latency=_finite(summary.mean_latency),
            p99=_finite(summary.p99),
            p999=_finite(summary.p999),
            p9999=_finite(summary.p9999),
            jain=_finite(summary.jain),
            hops_0=summary.hops[0],
            hops_1=summary.hops[1],
            hops_2=summary.hops[2],
            hops_3=summary.hops[3],
            hops_4=summary.hops[4],
            util_main=summary.util_main,
            util_service=summary.util_service,
            cycles_to_finish=summary.cycles_to_finish,
        )


def _finite(value: float | None) -> float | None:
    if value is None or math.isnan(value):
        return None
    return value


def canonical_order(rows: Iterable[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=ResultRow.sort_key)


def write_csv(rows: Iterable[ResultRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in canonical_order(rows):
            writer.writerow(row.csv_row())
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))


def get_engine():
    if (url := get_fullmesh_db()) is None:
        return None
    return create_engine(url)


def create_db_and_tables():
    if (engine := get_engine()) is not None:
        SQLModel.metadata.create_all(engine)
    return engine


def save_results(rows: list[ResultRow]) -> bool:
    """Persist rows when a results database is configured. Returns True if written."""
    if (engine := create_db_and_tables()) is None:
        return False
    with Session(engine) as session:
        session.add_all(rows)
        session.commit()
    logger.info(f"stored {len(rows)} result rows in {engine.url}")
    return True


def get_results(config_hash: str) -> list[ResultRow]:
    """Rows of one experiment config from the results database."""
    if (engine := create_db_and_tables()) is None:
        return []
    with Session(engine) as session:
        statement = select(ResultRow).where(ResultRow.config_hash == config_hash)
        return canonical_order(session.exec(statement).all())
