"""Multi-state event-history data model and competing-risks reduction.

A subject's history is a right-continuous jump path over states
``0..n_states-1`` observed until an independent censoring time.  For a target
state set J, the path is reduced to a competing-risks record by tracking the
first entry into either of two absorbing sets derived from the transition
graph: the set of states from which occupancy of J is certain forever, and
the set from which J can never be reached again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import FrozenSet, Iterable, Sequence, Tuple

import numpy as np

from .errors import ValidationError

INF = math.inf


class Cause(IntEnum):
    """Exit cause of the reduced competing-risks process."""

    NONE = 0
    ABSORBED = 1  # entered the sure-occupancy set of J
    EXCLUDED = 2  # entered the never-again set of J


@dataclass(frozen=True)
class StateSpace:
    """State labels ``0..n_states-1`` plus the allowed transition pairs."""

    n_states: int
    transitions: FrozenSet[Tuple[int, int]]

    def __post_init__(self):
        if self.n_states < 1:
            raise ValidationError("state space needs at least one state")
        object.__setattr__(self, "transitions", frozenset(self.transitions))
        for a, b in self.transitions:
            if a == b:
                raise ValidationError(f"self-transition {a}->{b} not allowed")
            if not (0 <= a < self.n_states and 0 <= b < self.n_states):
                raise ValidationError(f"transition {a}->{b} outside state space")

    def allows(self, a: int, b: int) -> bool:
        return (a, b) in self.transitions

    def successors(self, a: int) -> frozenset:
        return frozenset(b for (x, b) in self.transitions if x == a)


def illness_death_space(recovery: bool = True) -> StateSpace:
    """Three-state space 0=healthy, 1=ill, 2=dead."""
    edges = {(0, 1), (0, 2), (1, 2)}
    if recovery:
        edges.add((1, 0))
    return StateSpace(3, frozenset(edges))


def _reachable(space: StateSpace, start: int) -> set:
    """States reachable from ``start`` in one or more allowed transitions."""
    seen, frontier = set(), [start]
    while frontier:
        nxt = []
        for a in frontier:
            for b in space.successors(a):
                if b not in seen:
                    seen.add(b)
                    nxt.append(b)
        frontier = nxt
    return seen


def derive_absorbing_sets(space: StateSpace, target: Iterable[int]):
    """Absorbing sets of a target state set J.

    Returns ``(sure, barred)``: ``sure`` are the states in J from which every
    reachable state stays in J (entry implies occupancy of J at all later
    times); ``barred`` are the states outside J from which no state of J is
    reachable.
    """
    J = frozenset(target)
    if not J:
        raise ValidationError("target set must be nonempty")
    if not all(0 <= j < space.n_states for j in J):
        raise ValidationError("target set outside state space")
    sure = frozenset(j for j in J if _reachable(space, j) <= J)
    others = set(range(space.n_states)) - J
    barred = frozenset(a for a in others if not (_reachable(space, a) & J))
    return sure, barred


@dataclass(frozen=True)
class SubjectPath:
    """One subject's observed trajectory.

    ``times[0]`` must be 0; states change at the jump times and are
    right-continuous.  Observation stops at ``censor_time`` (exclusive: the
    subject is no longer observed *at* the censoring instant).
    """

    times: np.ndarray
    states: np.ndarray
    censor_time: float = INF

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=np.int64)
        if t.ndim != 1 or t.shape != s.shape or t.size == 0:
            raise ValidationError("path needs equal-length nonempty times/states")
        if t[0] != 0.0:
            raise ValidationError("path must start at time 0")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("jump times must be strictly increasing")
        if np.any(s[1:] == s[:-1]):
            raise ValidationError("consecutive states must differ")
        if not (self.censor_time > 0):
            raise ValidationError("censor_time must be positive")
        if t[-1] > self.censor_time:
            raise ValidationError("jump strictly after censor_time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)


def state_at(path: SubjectPath, t: float):
    """State occupied at time ``t``, or ``None`` once censored (t >= C)."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    if t >= path.censor_time:
        return None
    idx = int(np.searchsorted(path.times, t, side="right")) - 1
    return int(path.states[idx])


def states_at(path: SubjectPath, ts: np.ndarray) -> np.ndarray:
    """Vectorized ``state_at``; censored queries return -1."""
    ts = np.asarray(ts, dtype=float)
    idx = np.searchsorted(path.times, ts, side="right") - 1
    out = path.states[np.maximum(idx, 0)].astype(np.int64)
    out[ts >= path.censor_time] = -1
    return out


@dataclass(frozen=True)
class Sample:
    """A collection of subject paths over a common state space."""

    paths: Tuple[SubjectPath, ...]
    state_space: StateSpace
    subject_ids: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ValidationError("sample must be nonempty")
        ids = tuple(self.subject_ids) or tuple(f"s{i:05d}" for i in range(len(self.paths)))
        if len(ids) != len(self.paths):
            raise ValidationError("subject_ids length mismatch")
        object.__setattr__(self, "subject_ids", ids)
        for i, p in enumerate(self.paths):
            if np.any(p.states >= self.state_space.n_states) or np.any(p.states < 0):
                raise ValidationError(f"subject {ids[i]}: state label outside state space")
            for a, b in zip(p.states[:-1], p.states[1:]):
                if not self.state_space.allows(int(a), int(b)):
                    raise ValidationError(f"subject {ids[i]}: transition {a}->{b} not allowed")

    @property
    def n(self) -> int:
        return len(self.paths)


@dataclass(frozen=True)
class CompetingRisksRecord:
    """Reduced (T, delta, cause) triple for one subject, relative to start s.

    ``in_I_at_s`` and ``at_risk_at_s`` are the subgroup-membership indicators;
    subjects failing either take no part in any subgroup estimator.
    """

    exit_time: float
    observed: bool
    cause: Cause
    in_I_at_s: bool
    at_risk_at_s: bool


def _first_absorbing_entry(path: SubjectPath, s: float, absorbing: frozenset):
    """First time >= s at which the path occupies a state of ``absorbing``.

    Returns ``(time, state)`` or ``(inf, -1)``.  An entry that happened before
    s counts as an entry at s.
    """
    j0 = int(np.searchsorted(path.times, s, side="right")) - 1
    if int(path.states[j0]) in absorbing:
        return s, int(path.states[j0])
    for j in range(j0 + 1, path.n_jumps):
        if int(path.states[j]) in absorbing:
            return float(path.times[j]), int(path.states[j])
    return INF, -1


def reduce_to_competing_risks(
    path: SubjectPath,
    s: float,
    I: Iterable[int],
    sure: frozenset,
    barred: frozenset,
    tau: float,
) -> CompetingRisksRecord:
    """Reduce a path to its competing-risks record on ``[s, tau]``.

    Exit happens at the first of: entry into ``sure`` or ``barred`` (cause 1
    resp. 2, observed), censoring, or the horizon tau (administrative,
    unobserved).  Ties with censoring resolve censoring-first.
    """
    if not s < tau:
        raise ValidationError("need s < tau")
    I = frozenset(I)
    entry, entry_state = _first_absorbing_entry(path, s, sure | barred)
    exit_time = min(entry, path.censor_time, tau)
    observed = entry <= tau and entry < path.censor_time
    if observed:
        cause = Cause.ABSORBED if entry_state in sure else Cause.EXCLUDED
    else:
        cause = Cause.NONE
    st = state_at(path, s)
    return CompetingRisksRecord(
        exit_time=max(exit_time, s),
        observed=observed,
        cause=cause,
        in_I_at_s=st is not None and st in I,
        at_risk_at_s=path.censor_time > s,
    )


def reduce_sample(sample: Sample, s, I, sure, barred, tau) -> list:
    return [reduce_to_competing_risks(p, s, I, sure, barred, tau) for p in sample.paths]
