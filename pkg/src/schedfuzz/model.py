"""In-process labeled transition system interpreter.

Replaces an external model checker with a controlled simulation: given a
mapped action sequence, walk the model and report every state that could be
visited.  The interpreter supports nondeterministic successor sets (a
frontier per step), though the shipped protocol models are deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .fingerprint import fingerprint


class ModelAction(NamedTuple):
    name: str
    args: tuple = ()


class MappingContractError(RuntimeError):
    """An action the model does not know: a mapper bug, not model drift."""


class StateExplosion(RuntimeError):
    def __init__(self, count: int):
        super().__init__(f"state enumeration aborted after {count} states")
        self.count = count


@dataclass(frozen=True)
class Lts:
    """A labeled transition system <states, initial, actions, successors>.

    ``step(state, action) -> tuple of successors`` is a pure function; an
    empty tuple means the action is disabled in that state.  ``enabled``
    enumerates candidate actions for exhaustive reachability.  ``abstraction``
    optionally post-processes a deterministic run's state path before
    coverage is taken (identity when None).
    """

    name: str
    initial: tuple
    step: Callable[[object, ModelAction], tuple]
    enabled: Callable[[object], list]
    abstraction: Callable[[list], list] | None = None


class RunResult(NamedTuple):
    states: frozenset            # every state that appeared in any frontier
    frontiers: tuple             # frontier (tuple of states) per step, incl. initial
    unmatched: tuple             # indices of actions disabled in the whole frontier

    @property
    def visited(self) -> frozenset:
        """Fingerprints of the visited states."""
        return frozenset(fingerprint(s) for s in self.states)

    @property
    def path(self) -> list:
        """Deterministic view of the frontiers (one state per step)."""
        return [f[0] for f in self.frontiers]


def run_actions(lts: Lts, actions) -> RunResult:
    """Run a mapped action sequence on the model.

    Maintains a frontier, initially the initial states.  An action with no
    successor anywhere in the frontier is recorded as unmatched and skipped;
    the frontier is left unchanged so one divergence does not poison the
    rest of the run.  An action whose *name* the model has never heard of is
    a mapping-contract violation and raises instead.
    """
    frontier = tuple(lts.initial)
    visited = set(frontier)
    frontiers = [frontier]
    unmatched = []
    for idx, action in enumerate(actions):
        nxt = []
        seen = set()
        for q in frontier:
            for q2 in lts.step(q, action):
                if q2 not in seen:
                    seen.add(q2)
                    nxt.append(q2)
        if not nxt:
            unmatched.append(idx)
            frontiers.append(frontier)
            continue
        frontier = tuple(nxt)
        visited.update(nxt)
        frontiers.append(frontier)
    return RunResult(frozenset(visited), tuple(frontiers), tuple(unmatched))


class BfsResult(NamedTuple):
    states: frozenset
    fingerprints: frozenset
    depth_reached: int


def bfs_reachable(lts: Lts, depth_limit: int | None = None,
                  max_states: int = 10_000_000) -> BfsResult:
    """Exact set of states reachable in <= depth_limit transitions.

    The ground-truth oracle for model coverage.  Aborts with StateExplosion
    past ``max_states``.
    """
    if depth_limit is not None and depth_limit < 0:
        raise ValueError("depth_limit must be >= 0")
    seen = set(lts.initial)
    frontier = deque(lts.initial)
    depth = 0
    while frontier and (depth_limit is None or depth < depth_limit):
        depth += 1
        nxt = deque()
        while frontier:
            q = frontier.popleft()
            for action in lts.enabled(q):
                for q2 in lts.step(q, action):
                    if q2 not in seen:
                        seen.add(q2)
                        if len(seen) > max_states:
                            raise StateExplosion(len(seen))
                        nxt.append(q2)
        frontier = nxt
    return BfsResult(
        frozenset(seen),
        frozenset(fingerprint(s) for s in seen),
        depth,
    )


def abstract_raft_states(path: list) -> list:
    """Collapse term-number churn of non-leaders along a state path.

    Two consecutive states that are identical except for the current-term
    values of processes that are not leaders merge: the later state is
    replaced by the earlier one.  Leaders' terms are never abstracted away.
    Output length equals input length; duplicates collapse under set
    semantics downstream.  Idempotent.
    """
    if not path:
        return []
    out = [path[0]]
    for state in path[1:]:
        prev = out[-1]
        out.append(prev if _merge_terms(prev, state) else state)
    return out


def _merge_terms(a, b) -> bool:
    if a is b:
        return True
    if type(a) is not type(b):
        return False
    # Raft model states expose terms/roles plus the remaining fields.
    if a._replace(terms=b.terms) != b:
        return False
    leader = 2  # role code for leaders, see benchmarks.raftlite.LEADER
    for ta, tb, role in zip(a.terms, b.terms, a.roles):
        if ta != tb and role == leader:
            return False
    return True
