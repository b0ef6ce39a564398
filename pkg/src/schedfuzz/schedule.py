"""Event schedules and their generation: the shared vocabulary of the fuzzer.

A schedule is a sequence of abstract steps, each naming a FIFO buffer (an
ordered sender/receiver process pair) and an action on it: deliver up to
``count`` messages, crash the receiver, or restart it.  Steps never name
concrete messages, so any reordering of a schedule stays executable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import NamedTuple

DELIVER = "deliver"
CRASH = "crash"
RESTART = "restart"


class ScheduleError(ValueError):
    """Invalid schedule parameters or malformed serialized schedule."""


class BufferId(NamedTuple):
    sender: int
    receiver: int


class ScheduleStep(NamedTuple):
    buffer: BufferId
    op: str
    count: int = 1  # messages to deliver; meaningful for DELIVER only


@dataclass(frozen=True)
class Schedule:
    steps: tuple[ScheduleStep, ...]
    seed: int = 0

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class GenParams:
    num_processes: int
    max_steps: int
    max_messages_per_step: int
    crash_quota: int
    # Control/injection channels (e.g. per-process timeout sources) on top of
    # the ordinary sender!=receiver pairs.
    extra_buffers: tuple[BufferId, ...] = ()

    def buffer_universe(self) -> list[BufferId]:
        pairs = [
            BufferId(i, j)
            for i in range(self.num_processes)
            for j in range(self.num_processes)
            if i != j
        ]
        pairs.extend(self.extra_buffers)
        return pairs


def generate_random_schedule(params: GenParams, rng: random.Random) -> Schedule:
    """Generate a uniformly random schedule of exactly ``max_steps`` steps.

    Each step independently picks a uniform buffer and a deliver count
    uniform in [1, max_messages_per_step].  With probability
    crash_quota/max_steps (while quota remains) the step becomes a crash of
    the buffer's receiver instead, and a matching restart is placed at a
    uniformly chosen later free slot, keeping crash/restart alternation
    valid by construction.
    """
    if params.num_processes < 2:
        raise ScheduleError("need at least 2 processes")
    if params.max_steps < 1:
        raise ScheduleError("need at least 1 step")
    if params.max_messages_per_step < 1:
        raise ScheduleError("need max_messages_per_step >= 1")
    if params.crash_quota < 0:
        raise ScheduleError("crash quota must be >= 0")

    universe = params.buffer_universe()
    slots: list[ScheduleStep | None] = [None] * params.max_steps
    crash_prob = params.crash_quota / params.max_steps
    crashes_left = params.crash_quota
    # Processes with a pending restart slot: no further crash of the same
    # process until past that slot, so crash/restart alternate per process.
    blocked_until: dict[int, int] = {}

    for i in range(params.max_steps):
        if slots[i] is not None:
            continue
        buf = rng.choice(universe)
        target = buf.receiver
        blocked = blocked_until.get(target, -1) >= i
        if crashes_left > 0 and not blocked and rng.random() < crash_prob:
            slots[i] = ScheduleStep(buf, CRASH)
            crashes_left -= 1
            free = [j for j in range(i + 1, params.max_steps) if slots[j] is None]
            if free:
                j = rng.choice(free)
                slots[j] = ScheduleStep(buf, RESTART)
                blocked_until[target] = j
        else:
            count = rng.randint(1, params.max_messages_per_step)
            slots[i] = ScheduleStep(buf, DELIVER, count)

    steps = tuple(s for s in slots if s is not None)
    return Schedule(steps=steps, seed=rng.getrandbits(64))


def validate_schedule(s: Schedule, params: GenParams | None = None) -> None:
    """Raise ScheduleError if ``s`` breaks a schedule invariant.

    Checked: positive deliver counts, crash quota and length against
    ``params`` when given, and per-process alternation (each crash of p is
    followed by at most one restart of p before p's next crash).
    """
    crashes = 0
    restarts_since_crash: dict[int, int] = {}
    for idx, step in enumerate(s.steps):
        if step.op == DELIVER:
            if step.count < 1:
                raise ScheduleError(f"step {idx}: deliver count must be >= 1")
            if params is not None and step.count > params.max_messages_per_step:
                raise ScheduleError(f"step {idx}: deliver count over limit")
        elif step.op == CRASH:
            crashes += 1
            restarts_since_crash[step.buffer.receiver] = 0
        elif step.op == RESTART:
            p = step.buffer.receiver
            if p in restarts_since_crash:
                restarts_since_crash[p] += 1
                if restarts_since_crash[p] > 1:
                    raise ScheduleError(
                        f"step {idx}: second restart of process {p} "
                        "before its next crash"
                    )
        else:
            raise ScheduleError(f"step {idx}: unknown op {step.op!r}")
    if params is not None:
        if len(s.steps) > params.max_steps:
            raise ScheduleError("schedule longer than max_steps")
        if crashes > params.crash_quota:
            raise ScheduleError("crash quota exceeded")


def serialize_schedule(s: Schedule) -> bytes:
    """Corpus file format: one schedule as JSON bytes."""
    steps = []
    for step in s.steps:
        obj = {"from": step.buffer.sender, "to": step.buffer.receiver, "op": step.op}
        if step.op == DELIVER:
            obj["n"] = step.count
        steps.append(obj)
    return json.dumps({"seed": s.seed, "steps": steps}, separators=(",", ":")).encode()


def parse_schedule(data: bytes) -> Schedule:
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as e:
        raise ScheduleError(f"malformed schedule JSON: {e}") from e
    if not isinstance(obj, dict) or "steps" not in obj:
        raise ScheduleError("malformed schedule JSON: missing 'steps'")
    steps = []
    for idx, raw in enumerate(obj["steps"]):
        try:
            op = raw["op"]
            if op not in (DELIVER, CRASH, RESTART):
                raise ScheduleError(f"step {idx}: unknown op {op!r}")
            buf = BufferId(int(raw["from"]), int(raw["to"]))
            count = int(raw.get("n", 1)) if op == DELIVER else 1
            steps.append(ScheduleStep(buf, op, count))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ScheduleError):
                raise
            raise ScheduleError(f"step {idx}: malformed step: {e}") from e
    seed = int(obj.get("seed", 0))
    s = Schedule(steps=tuple(steps), seed=seed)
    validate_schedule(s)
    return s
