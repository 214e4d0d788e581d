"""Transition-probability estimators.

The non-Markov estimator for P(X(t) in J | X(s) in I) decomposes into

    P_hat(s, t) = F1_hat(t) + F0_hat(t) * p_hat(t)

where F0_hat is the Kaplan-Meier survival function of the reduced
competing-risks process on the subgroup observed in I at s, F1_hat is the
cumulative incidence of entering the sure-occupancy set of J, and p_hat is
the empirical proportion of at-risk subgroup members occupying J.  A standard
product-integral (Aalen-Johansen) estimator over the full sample is provided
as the Markov comparator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySubgroup, UndefinedProportion, ValidationError
from .model import (
    Cause,
    CompetingRisksRecord,
    Sample,
    derive_absorbing_sets,
    reduce_sample,
    state_at,
    states_at,
)
from .stepfun import StepFunction


@dataclass(frozen=True)
class SubgroupEstimate:
    """Competing-risks estimates on one subgroup.

    F0 + F1 + F2 = 1 holds exactly at every knot.  The event table
    (times, counts by cause, at-risk counts) and the total sample size are
    kept for downstream variance plug-ins.
    """

    F0: StepFunction
    F1: StepFunction
    F2: StepFunction
    n_subgroup: int
    n_total: int
    event_times: np.ndarray
    d_absorbed: np.ndarray
    d_excluded: np.ndarray
    n_at_risk: np.ndarray


@dataclass(frozen=True)
class TransitionCurve:
    """The estimated transition probability curve t -> P_hat(s, t)."""

    estimate: StepFunction
    p_cond: StepFunction
    components: SubgroupEstimate
    s: float
    tau: float


def select_subgroup(sample: Sample, s: float, I: Iterable[int]) -> np.ndarray:
    """Indices of subjects observed in a state of I at time s."""
    I = frozenset(I)
    idx = [i for i, p in enumerate(sample.paths) if state_at(p, s) in I]
    if not idx:
        raise EmptySubgroup(f"no subject observed in {sorted(I)} at s={s}")
    return np.asarray(idx, dtype=np.intp)


def _subgroup_records(records: Sequence[CompetingRisksRecord]):
    sub = [r for r in records if r.in_I_at_s and r.at_risk_at_s]
    if not sub:
        raise EmptySubgroup("no record belongs to the subgroup")
    return sub


def _event_table(records: Sequence[CompetingRisksRecord], s: float, tau: float):
    """Aggregate observed exits into (times, d1, d2, at-risk) with ties merged."""
    T = np.array([r.exit_time for r in records])
    obs = np.array([r.observed for r in records], dtype=bool)
    cause = np.array([int(r.cause) for r in records])
    keep = obs & (T > s) & (T <= tau)
    times, inv = np.unique(T[keep], return_inverse=True)
    d1 = np.bincount(inv[cause[keep] == Cause.ABSORBED], minlength=times.size).astype(float)
    d2 = np.bincount(inv[cause[keep] == Cause.EXCLUDED], minlength=times.size).astype(float)
    at_risk = (T.size - np.searchsorted(np.sort(T), times, side="left")).astype(float)
    return times, d1, d2, at_risk


def kaplan_meier(records: Sequence[CompetingRisksRecord], s: float, tau: float) -> StepFunction:
    """Product-limit survival estimate of the all-cause exit time.

    Drops only at observed exit times; censorings (and the administrative
    horizon) enter through the risk sets.  Tied events share one factor.
    """
    if not records:
        raise EmptySubgroup("no records")
    times, d1, d2, at_risk = _event_table(records, s, tau)
    surv = np.cumprod(1.0 - (d1 + d2) / at_risk)
    return StepFunction(s, times, surv, initial_value=1.0)


def aj_cif(records: Sequence[CompetingRisksRecord], cause: Cause, s: float, tau: float) -> StepFunction:
    """Cumulative incidence of one exit cause: F_k(t) = sum F0(e-) d_k(e)/Y(e)."""
    if not records:
        raise EmptySubgroup("no records")
    times, d1, d2, at_risk = _event_table(records, s, tau)
    surv = np.cumprod(1.0 - (d1 + d2) / at_risk)
    surv_before = np.concatenate(([1.0], surv[:-1]))
    d = d1 if cause == Cause.ABSORBED else d2
    cif = np.cumsum(surv_before * d / at_risk)
    return StepFunction(s, times, cif, initial_value=0.0)


def subgroup_estimate(records: Sequence[CompetingRisksRecord], s: float, tau: float) -> SubgroupEstimate:
    """F0/F1/F2 on the subgroup carried by ``records`` (full-sample list)."""
    sub = _subgroup_records(records)
    times, d1, d2, at_risk = _event_table(sub, s, tau)
    surv = np.cumprod(1.0 - (d1 + d2) / at_risk)
    surv_before = np.concatenate(([1.0], surv[:-1]))
    return SubgroupEstimate(
        F0=StepFunction(s, times, surv, initial_value=1.0),
        F1=StepFunction(s, times, np.cumsum(surv_before * d1 / at_risk), initial_value=0.0),
        F2=StepFunction(s, times, np.cumsum(surv_before * d2 / at_risk), initial_value=0.0),
        n_subgroup=len(sub),
        n_total=len(records),
        event_times=times,
        d_absorbed=d1,
        d_excluded=d2,
        n_at_risk=at_risk,
    )


def empirical_proportion(sample: Sample, s, I, J, t, tau=np.inf) -> float:
    """Share of at-risk subgroup members occupying J at time t.

    Raises UndefinedProportion when nobody is at risk at t; curve-level code
    carries the last defined value forward instead.
    """
    if not (s <= t <= tau):
        raise ValidationError("need s <= t <= tau")
    I, J = frozenset(I), frozenset(J)
    sure, barred = derive_absorbing_sets(sample.state_space, J)
    records = reduce_sample(sample, s, I, sure, barred, tau)
    num = den = 0
    for p, r in zip(sample.paths, records):
        if not (r.in_I_at_s and r.exit_time > t):
            continue
        den += 1
        if state_at(p, t) in J:
            num += 1
    if den == 0:
        raise UndefinedProportion(f"no at-risk subgroup member at t={t}")
    return num / den


def transition_grid(sample: Sample, records, subgroup: np.ndarray, s: float, tau: float) -> np.ndarray:
    """Knot grid: subgroup exit times plus subgroup jump times in (s, tau), with {s, tau}."""
    cuts = {s, tau}
    for i in subgroup:
        T = records[i].exit_time
        if s < T <= tau:
            cuts.add(T)
        jt = sample.paths[i].times
        cuts.update(jt[(jt > s) & (jt < tau)].tolist())
    return np.array(sorted(cuts))


def _proportion_on_grid(sample, records, subgroup, J, grid):
    """p_hat on the grid with last-observation-carried-forward past the risk set."""
    J = frozenset(J)
    num = np.zeros(grid.size)
    den = np.zeros(grid.size)
    for i in subgroup:
        at_risk = grid < records[i].exit_time
        st = states_at(sample.paths[i], grid)
        in_j = np.isin(st, list(J))
        den += at_risk
        num += at_risk & in_j
    p = np.zeros(grid.size)
    ok = den > 0
    p[ok] = num[ok] / den[ok]
    last = 0.0
    for k in range(grid.size):  # LOCF where the risk set is empty
        if ok[k]:
            last = p[k]
        else:
            p[k] = last
    return p


def estimate_transition(sample: Sample, s, I, J, tau) -> TransitionCurve:
    """Non-Markov estimate of t -> P(X(t) in J | X(s) in I) on [s, tau]."""
    I, J = frozenset(I), frozenset(J)
    sure, barred = derive_absorbing_sets(sample.state_space, J)
    records = reduce_sample(sample, s, I, sure, barred, tau)
    subgroup = np.array([i for i, r in enumerate(records) if r.in_I_at_s and r.at_risk_at_s], dtype=np.intp)
    if subgroup.size == 0:
        raise EmptySubgroup(f"no subject observed in {sorted(I)} at s={s}")
    est = subgroup_estimate(records, s, tau)
    grid = transition_grid(sample, records, subgroup, s, tau)
    p = _proportion_on_grid(sample, records, subgroup, J, grid)
    values = est.F1(grid) + est.F0(grid) * p
    return TransitionCurve(
        estimate=StepFunction.from_grid(s, grid, values),
        p_cond=StepFunction.from_grid(s, grid, p),
        components=est,
        s=s,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# Markov comparator: product-integral over Nelson-Aalen increments
# ---------------------------------------------------------------------------

def _observed_jumps(sample: Sample, s: float, tau: float):
    """All observed jumps in (s, tau]: arrays (time, from, to, subject)."""
    ts, fr, to, subj = [], [], [], []
    for i, p in enumerate(sample.paths):
        for j in range(1, p.n_jumps):
            t = float(p.times[j])
            if s < t <= tau and t < p.censor_time:
                ts.append(t)
                fr.append(int(p.states[j - 1]))
                to.append(int(p.states[j]))
                subj.append(i)
    order = np.argsort(ts, kind="stable")
    return (np.asarray(ts)[order], np.asarray(fr)[order], np.asarray(to)[order],
            np.asarray(subj)[order])


def _at_risk_counts(sample: Sample, times: np.ndarray) -> np.ndarray:
    """Counts by state occupied just before each time, among the uncensored."""
    R = sample.state_space.n_states
    out = np.zeros((times.size, R))
    rows = np.arange(times.size)
    for p in sample.paths:
        idx = np.searchsorted(p.times, times, side="left") - 1
        st = p.states[np.maximum(idx, 0)]
        obs = p.censor_time >= times
        out[rows[obs], st[obs]] += 1.0
    return out


def _aj_factors(sample: Sample, s: float, tau: float):
    """Product-integral factors I + dA_hat(e) at the unique jump times in (s, tau]."""
    R = sample.state_space.n_states
    times, fr, to, _ = _observed_jumps(sample, s, tau)
    uniq, inv = np.unique(times, return_inverse=True)
    risk = _at_risk_counts(sample, uniq)
    offsets = np.concatenate(([0], np.cumsum(np.bincount(inv, minlength=uniq.size)))).astype(int)
    factors = np.tile(np.eye(R), (uniq.size, 1, 1))
    for k in range(uniq.size):
        for j in range(offsets[k], offsets[k + 1]):
            y = risk[k, fr[j]]
            if y > 0:
                factors[k, fr[j], to[j]] += 1.0 / y
                factors[k, fr[j], fr[j]] -= 1.0 / y
    return uniq, factors


def aj_markov_transition(sample: Sample, s: float, t: float) -> np.ndarray:
    """Aalen-Johansen transition matrix P_hat(s, t) on the full sample."""
    if t < s:
        raise ValidationError("need s <= t")
    R = sample.state_space.n_states
    P = np.eye(R)
    if t == s:
        return P
    uniq, factors = _aj_factors(sample, s, t)
    for k in range(uniq.size):
        P = P @ factors[k]
    return P


def aj_transition_curve(sample: Sample, s, tau, origin: int, targets) -> StepFunction:
    """Aalen-Johansen estimate of t -> P(X(t) in targets | X(s) = origin)."""
    targets = sorted(frozenset(targets))
    init = 1.0 if origin in targets else 0.0
    uniq, factors = _aj_factors(sample, s, tau)
    if uniq.size == 0:
        return StepFunction.constant(s, init)
    R = sample.state_space.n_states
    P = np.eye(R)
    vals = np.empty(uniq.size)
    for k in range(uniq.size):
        P = P @ factors[k]
        vals[k] = P[origin, targets].sum()
    return StepFunction(s, uniq, vals, initial_value=init)
