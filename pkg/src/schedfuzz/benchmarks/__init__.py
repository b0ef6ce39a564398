"""Benchmark registry: a benchmark bundles a system, its model, and defaults."""

from __future__ import annotations

from dataclasses import dataclass

from ..harness import SystemUnderTest
from ..model import Lts
from ..schedule import GenParams
from .micro import MicroBench, micro_model
from .raftlite import RaftLiteBench, raftlite_model
from .tpc import TpcBench, tpc_model


@dataclass(frozen=True)
class Benchmark:
    name: str
    sut: SystemUnderTest
    lts: Lts
    gen_defaults: GenParams


def _gen(sut: SystemUnderTest, max_steps: int, max_messages: int, quota: int) -> GenParams:
    return GenParams(
        num_processes=sut.process_count,
        max_steps=max_steps,
        max_messages_per_step=max_messages,
        crash_quota=quota,
        extra_buffers=tuple(sut.extra_buffers),
    )


def build_micro(m: int = 1, n: int = 1, bug_enabled: bool = True,
                max_steps: int = 60) -> Benchmark:
    sut = MicroBench(m=m, n=n, bug_enabled=bug_enabled)
    return Benchmark("micro", sut, micro_model(m=m, n=n), _gen(sut, max_steps, 1, 0))


def build_tpc(rm_count: int = 3, var_count: int = 2, request_count: int = 5,
              max_steps: int = 100) -> Benchmark:
    sut = TpcBench(rm_count=rm_count, var_count=var_count, request_count=request_count)
    return Benchmark(
        "tpc", sut, tpc_model(rm_count, var_count, request_count),
        _gen(sut, max_steps, 5, 0),
    )


def build_raftlite(proc_count: int = 3, request_count: int = 2,
                   quorum_bug: bool = False, snapshot_threshold: int = 8,
                   max_steps: int = 100, crash_quota: int = 10) -> Benchmark:
    sut = RaftLiteBench(
        proc_count=proc_count,
        request_count=request_count,
        quorum_bug=quorum_bug,
        snapshot_threshold=snapshot_threshold,
    )
    return Benchmark(
        "raftlite", sut,
        raftlite_model(proc_count),
        _gen(sut, max_steps, 5, crash_quota),
    )


def make_benchmark(name: str, params: dict | None = None) -> Benchmark:
    """Build a benchmark from dotted config keys (micro.m, raft.procs, ...)."""
    p = params or {}
    if name == "micro":
        return build_micro(
            m=int(p.get("micro.m", 2)),
            n=int(p.get("micro.n", 5)),
            bug_enabled=_truthy(p.get("micro.bug", True)),
            max_steps=int(p.get("micro.max_steps", 60)),
        )
    if name == "tpc":
        return build_tpc(
            rm_count=int(p.get("tpc.rm", 3)),
            var_count=int(p.get("tpc.vars", 2)),
            request_count=int(p.get("tpc.requests", 5)),
            max_steps=int(p.get("tpc.max_steps", 100)),
        )
    if name == "raftlite":
        return build_raftlite(
            proc_count=int(p.get("raft.procs", 3)),
            request_count=int(p.get("raft.requests", 2)),
            quorum_bug=_truthy(p.get("raft.quorum_bug", False)),
            snapshot_threshold=int(p.get("raft.snapshot_threshold", 8)),
            max_steps=int(p.get("raft.max_steps", 100)),
            crash_quota=int(p.get("raft.crash_quota", 10)),
        )
    raise ValueError(f"unknown benchmark {name!r}")


def _truthy(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).lower() in ("1", "true", "yes", "on")
