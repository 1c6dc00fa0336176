"""Scenario configuration: protocol parameters, client load, fault
assignments, link model, and run horizon.  Loadable from JSON with a
versioned schema; validation errors name the offending field."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core.types import BadParams, ProtocolParams

SCHEMA_VERSION = 1

STRATEGY_KINDS = (
    "honest",
    "crash",
    "silent_leader",
    "selective",
    "equivocate",
    "flood",
    "fake_ready",
)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class FaultSpec:
    replica: int
    strategy: str
    at_ms: int = 0  # activation time for crash / silent_leader
    subset: int = 0  # selective: how many replicas (incl. leader) still get our datablocks
    multiplier: int = 4  # flood: datablocks per flush interval


@dataclass(frozen=True)
class ClientLoad:
    count: int = 1
    rate_rps: float = 100.0
    total_requests: int = 100
    requests_per_submission: int = 1
    start_ms: int = 0
    max_retries: int | None = None  # None: up to f retries


@dataclass(frozen=True)
class LinkModel:
    min_ms: float = 5.0
    max_ms: float = 100.0  # must not exceed delta


@dataclass(frozen=True)
class Scenario:
    params: ProtocolParams
    seed: int = 1
    duration_ms: int = 30_000
    gst_ms: int = 0
    clients: ClientLoad = field(default_factory=ClientLoad)
    faults: tuple[FaultSpec, ...] = ()
    link: LinkModel = field(default_factory=LinkModel)
    capacity_bytes_per_sec: int | None = None
    name: str = "scenario"

    def __post_init__(self) -> None:
        validate_scenario(self)

    @property
    def duration_us(self) -> int:
        return self.duration_ms * 1000

    @property
    def gst_us(self) -> int:
        return self.gst_ms * 1000


def validate_scenario(sc: Scenario) -> None:
    p = sc.params
    if sc.gst_ms > sc.duration_ms:
        raise ConfigError("gst_ms", f"gst {sc.gst_ms} exceeds duration {sc.duration_ms}")
    if len(sc.faults) > p.f:
        raise ConfigError("faults", f"{len(sc.faults)} faulty replicas exceed the tolerated f={p.f}")
    seen = set()
    for i, fs in enumerate(sc.faults):
        path = f"faults[{i}]"
        if not 0 <= fs.replica < p.n:
            raise ConfigError(f"{path}.replica", f"replica {fs.replica} outside [0, {p.n})")
        if fs.replica in seen:
            raise ConfigError(f"{path}.replica", f"replica {fs.replica} assigned twice")
        seen.add(fs.replica)
        if fs.strategy not in STRATEGY_KINDS:
            raise ConfigError(f"{path}.strategy", f"unknown strategy {fs.strategy!r}")
        if fs.strategy == "selective" and not 1 <= fs.subset < p.n:
            raise ConfigError(f"{path}.subset", f"subset must be in [1, {p.n})")
    if sc.clients.count < 1:
        raise ConfigError("clients.count", "need at least one client")
    if sc.clients.rate_rps <= 0:
        raise ConfigError("clients.rate_rps", "rate must be positive")
    if sc.clients.requests_per_submission < 1:
        raise ConfigError("clients.requests_per_submission", "must be >= 1")
    if sc.link.min_ms < 0 or sc.link.max_ms < sc.link.min_ms:
        raise ConfigError("link", "need 0 <= min_ms <= max_ms")
    if sc.link.max_ms * 1000 > p.delta_us:
        raise ConfigError("link.max_ms", "post-GST latency bound must not exceed delta")
    if sc.capacity_bytes_per_sec is not None and sc.capacity_bytes_per_sec <= 0:
        raise ConfigError("capacity_bytes_per_sec", "must be positive when set")


def _params_from_dict(d: dict, path: str = "params") -> ProtocolParams:
    known = {
        "n", "f", "window", "block_batch", "datablock_batch", "payload",
        "delta_ms", "flush_ms", "retrieval_timer_ms", "viewchange_timer_ms",
        "client_retry_ms", "rate_limit_per_sec",
    }
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown parameter")
    if "n" not in d or "f" not in d:
        raise ConfigError(path, "n and f are required")
    kwargs = {
        "n": d["n"],
        "f": d["f"],
        "window": d.get("window", 100),
        "block_batch": d.get("block_batch", 100),
        "datablock_batch": d.get("datablock_batch", 2000),
        "payload": d.get("payload", 128),
        "delta_us": int(d.get("delta_ms", 100) * 1000),
        "flush_us": int(d.get("flush_ms", 50) * 1000),
        "retrieval_timer_us": int(d.get("retrieval_timer_ms", 200) * 1000),
        "viewchange_timer_us": int(d.get("viewchange_timer_ms", 1000) * 1000),
        "client_retry_us": int(d.get("client_retry_ms", 2000) * 1000),
        "rate_limit_per_sec": d.get("rate_limit_per_sec"),
    }
    try:
        return ProtocolParams(**kwargs)
    except BadParams as exc:
        raise ConfigError(path, str(exc)) from exc


def scenario_from_dict(d: dict) -> Scenario:
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    if "params" not in d:
        raise ConfigError("params", "missing")
    params = _params_from_dict(d["params"])
    cl = d.get("clients", {})
    clients = ClientLoad(
        count=cl.get("count", 1),
        rate_rps=cl.get("rate_rps", 100.0),
        total_requests=cl.get("total_requests", 100),
        requests_per_submission=cl.get("requests_per_submission", 1),
        start_ms=cl.get("start_ms", 0),
        max_retries=cl.get("max_retries"),
    )
    faults = []
    for i, fd in enumerate(d.get("faults", [])):
        if "replica" not in fd or "strategy" not in fd:
            raise ConfigError(f"faults[{i}]", "replica and strategy are required")
        faults.append(
            FaultSpec(
                replica=fd["replica"],
                strategy=fd["strategy"],
                at_ms=fd.get("at_ms", 0),
                subset=fd.get("subset", 0),
                multiplier=fd.get("multiplier", 4),
            )
        )
    ld = d.get("link", {})
    link = LinkModel(min_ms=ld.get("min_ms", 5.0), max_ms=ld.get("max_ms", 100.0))
    try:
        return Scenario(
            params=params,
            seed=d.get("seed", 1),
            duration_ms=d.get("duration_ms", 30_000),
            gst_ms=d.get("gst_ms", 0),
            clients=clients,
            faults=tuple(faults),
            link=link,
            capacity_bytes_per_sec=d.get("capacity_bytes_per_sec"),
            name=d.get("name", "scenario"),
        )
    except BadParams as exc:
        raise ConfigError("params", str(exc)) from exc


def scenario_to_dict(sc: Scenario) -> dict:
    p = sc.params
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "seed": sc.seed,
        "duration_ms": sc.duration_ms,
        "gst_ms": sc.gst_ms,
        "params": {
            "n": p.n,
            "f": p.f,
            "window": p.window,
            "block_batch": p.block_batch,
            "datablock_batch": p.datablock_batch,
            "payload": p.payload,
            "delta_ms": p.delta_us // 1000,
            "flush_ms": p.flush_us // 1000,
            "retrieval_timer_ms": p.retrieval_timer_us // 1000,
            "viewchange_timer_ms": p.viewchange_timer_us // 1000,
            "client_retry_ms": p.client_retry_us // 1000,
            "rate_limit_per_sec": p.rate_limit_per_sec,
        },
        "clients": {
            "count": sc.clients.count,
            "rate_rps": sc.clients.rate_rps,
            "total_requests": sc.clients.total_requests,
            "requests_per_submission": sc.clients.requests_per_submission,
            "start_ms": sc.clients.start_ms,
            "max_retries": sc.clients.max_retries,
        },
        "faults": [
            {
                "replica": fs.replica,
                "strategy": fs.strategy,
                "at_ms": fs.at_ms,
                "subset": fs.subset,
                "multiplier": fs.multiplier,
            }
            for fs in sc.faults
        ],
        "link": {"min_ms": sc.link.min_ms, "max_ms": sc.link.max_ms},
        "capacity_bytes_per_sec": sc.capacity_bytes_per_sec,
    }


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data)
