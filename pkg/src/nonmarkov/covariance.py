"""Plug-in asymptotic covariance functions for the transition estimator.

The normalized estimator sqrt(N)(P_hat(s,.) - P(s,.)) converges to a
zero-mean Gaussian process whose covariance combines the Kaplan-Meier and
cumulative-incidence covariances (Sigma00, Sigma11, Sigma01, Sigma10), the
occupation-proportion covariance (SigmaGG, from empirical second moments),
and the cross terms between them:

    Gamma(r,t) = p(r)p(t)Sigma00(r,t) + Sigma11(r,t) + F0(r)F0(t)SigmaGG(r,t)
               + p(r)Sigma01(r,t) + p(t)Sigma10(r,t)
               + p(r v t)F0(r ^ t)Sigma0G(r v t, r ^ t)
               + F0(r ^ t)Sigma1G(r v t, r ^ t).

All quantities are exact empirical plug-ins on the knot grid; double
integrals are exact cell sums of the step surface.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aj import AJFit, aj_gamma  # noqa: F401  (re-exported op)
from .engine import SubgroupEngine
from .errors import EmptySubsubgroupWarning, ValidationError, ZeroRiskSet
from .estimators import SubgroupEstimate, aj_cif, kaplan_meier, subgroup_estimate
from .model import Cause, Sample, derive_absorbing_sets, reduce_sample, state_at


@dataclass(frozen=True)
class CovComponents:
    """Empirical moment plug-ins for the occupation-proportion process."""

    grid: np.ndarray
    p_I: np.ndarray
    p_JI: np.ndarray
    Sigma_JI: np.ndarray
    Sigma_I: np.ndarray
    Omega_JI: np.ndarray


@dataclass(frozen=True)
class CovSurface:
    """A two-argument covariance function on a shared time grid."""

    grid: np.ndarray
    values: np.ndarray
    s: float = 0.0
    tau: float = 0.0

    def __call__(self, r: float, t: float) -> float:
        i = int(np.searchsorted(self.grid, r, side="right")) - 1
        j = int(np.searchsorted(self.grid, t, side="right")) - 1
        if i < 0 or j < 0:
            raise ValidationError("evaluation before the grid start")
        return float(self.values[i, j])


def _indicators(sample: Sample, s, I, J, grid, tau):
    """Per-subject rows 1{X(s) in I, X(g) in J, Y(g)=1} and 1{X(s) in I, Y(g)=1}."""
    I, J = frozenset(I), frozenset(J)
    sure, barred = derive_absorbing_sets(sample.state_space, J)
    records = reduce_sample(sample, s, I, sure, barred, tau)
    n, G = sample.n, grid.size
    W = np.zeros((n, G))
    A = np.zeros((n, G))
    for i, (p, r) in enumerate(zip(sample.paths, records)):
        if not (r.in_I_at_s and r.at_risk_at_s):
            continue
        at_risk = grid < r.exit_time
        A[i] = at_risk
        idx = np.searchsorted(p.times, grid, side="right") - 1
        st = p.states[np.maximum(idx, 0)]
        W[i] = at_risk & np.isin(st, list(J))
    return W, A


def estimate_components(sample: Sample, s, I, J, grid, tau=None) -> CovComponents:
    """Exact empirical second-moment plug-ins on ``grid`` (no smoothing)."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid.size == 0 or grid[0] < s:
        raise ValidationError("grid must be increasing and inside [s, tau]")
    tau = float(grid[-1]) if tau is None else float(tau)
    W, A = _indicators(sample, s, I, J, grid, tau)
    n = sample.n
    p_JI = W.mean(axis=0)
    p_I = A.mean(axis=0)
    return CovComponents(
        grid=grid,
        p_I=p_I,
        p_JI=p_JI,
        Sigma_JI=W.T @ W / n - np.outer(p_JI, p_JI),
        Sigma_I=A.T @ A / n - np.outer(p_I, p_I),
        Omega_JI=W.T @ A / n - np.outer(p_JI, p_I),
    )


def cov_G(comp: CovComponents, u: float, v: float) -> float:
    """Plug-in cov(G(u), G(v)) of the normalized occupation proportion."""
    i = int(np.searchsorted(comp.grid, u, side="right")) - 1
    j = int(np.searchsorted(comp.grid, v, side="right")) - 1
    if i < 0 or j < 0:
        raise ValidationError("arguments before the grid start")
    if comp.p_I[i] <= 0 or comp.p_I[j] <= 0:
        raise ZeroRiskSet("p_I vanishes at a requested argument")
    p_u = comp.p_JI[i] / comp.p_I[i]
    p_v = comp.p_JI[j] / comp.p_I[j]
    num = (comp.Sigma_JI[i, j] + comp.Sigma_I[i, j] * p_u * p_v
           - comp.Omega_JI[i, j] * p_v - comp.Omega_JI[j, i] * p_u)
    return float(num / (comp.p_I[i] * comp.p_I[j]))


def cov_G_surface(comp: CovComponents) -> CovSurface:
    if np.any(comp.p_I <= 0):
        raise ZeroRiskSet("p_I vanishes on the grid")
    p = comp.p_JI / comp.p_I
    num = (comp.Sigma_JI + comp.Sigma_I * np.outer(p, p)
           - comp.Omega_JI * p[None, :] - comp.Omega_JI.T * p[:, None])
    return CovSurface(comp.grid, num / np.outer(comp.p_I, comp.p_I))


def _sub_subgroup_records(sample, s, I, J, u, tau):
    """Records of subjects observed in I at s and at risk in J at u."""
    I, J = frozenset(I), frozenset(J)
    sure, barred = derive_absorbing_sets(sample.state_space, J)
    records = reduce_sample(sample, s, I, sure, barred, tau)
    out = []
    for p, r in zip(sample.paths, records):
        if r.in_I_at_s and r.at_risk_at_s and r.exit_time > u and state_at(p, u) in J:
            out.append(r)
    return records, out


def p_IJk_hat(sample: Sample, s, I, J, u, t, cause: Cause, tau=None) -> float:
    """Plug-in for P(Z(t)=k, X(u) in J | X(s) in I), s <= u <= t.

    The mass already absorbed by u (cause 1 only) is F1_hat(u); the remainder
    factors as a sub-subgroup product-limit from origin u times
    F0_hat(u) p_hat(u).  An empty sub-subgroup contributes zero with a warning.
    """
    if not (s <= u <= t):
        raise ValidationError("need s <= u <= t")
    tau = max(t, u) if tau is None else tau
    records, sub = _sub_subgroup_records(sample, s, I, J, u, tau)
    est = subgroup_estimate(records, s, tau)
    base = est.F0(u) * _p_hat_at(sample, s, I, J, u, records)
    head = est.F1(u) if cause == Cause.ABSORBED else 0.0
    if not sub:
        warnings.warn("empty sub-subgroup; contribution set to 0", EmptySubsubgroupWarning)
        return float(head)
    if cause == Cause.NONE:
        q = kaplan_meier(sub, u, tau)(t)
    else:
        q = aj_cif(sub, cause, u, tau)(t)
    return float(head + q * base)


def _p_hat_at(sample, s, I, J, u, records) -> float:
    I, J = frozenset(I), frozenset(J)
    num = den = 0
    for p, r in zip(sample.paths, records):
        if r.in_I_at_s and r.at_risk_at_s and r.exit_time > u:
            den += 1
            num += state_at(p, u) in J
    return num / den if den else 0.0


def _pI_at(sample, s, I, J, u, records) -> float:
    den = sum(1 for r in records if r.in_I_at_s and r.at_risk_at_s and r.exit_time > u)
    return den / sample.n


def cov_L0_G(sample: Sample, s, I, J, u, r, tau=None) -> float:
    """Plug-in cov(L0(r), G(u)) = 1{u<r}/p_I(u) (P_IJ0(s,u,r) - F0(r) p(u))."""
    if u >= r:
        return 0.0
    tau = r if tau is None else tau
    records, _ = _sub_subgroup_records(sample, s, I, J, u, tau)
    pI = _pI_at(sample, s, I, J, u, records)
    if pI <= 0:
        raise ZeroRiskSet(f"p_I({u}) = 0")
    est = subgroup_estimate(records, s, tau)
    p_u = _p_hat_at(sample, s, I, J, u, records)
    pij0 = p_IJk_hat(sample, s, I, J, u, r, Cause.NONE, tau)
    return float((pij0 - est.F0(r) * p_u) / pI)


def cov_L1_G(sample: Sample, s, I, J, u, t, tau=None) -> float:
    """Plug-in cov(L1(t), G(u)): zero unless u < t."""
    if u >= t:
        return 0.0
    tau = t if tau is None else tau
    records, _ = _sub_subgroup_records(sample, s, I, J, u, tau)
    pI = _pI_at(sample, s, I, J, u, records)
    if pI <= 0:
        raise ZeroRiskSet(f"p_I({u}) = 0")
    est = subgroup_estimate(records, s, tau)
    p_u = _p_hat_at(sample, s, I, J, u, records)
    pij1 = p_IJk_hat(sample, s, I, J, u, t, Cause.ABSORBED, tau)
    return float((pij1 - est.F1(u) - p_u * (est.F1(t) - est.F1(u))) / pI)


def cov_L2_G(sample: Sample, s, I, J, u, t, tau=None) -> float:
    """Plug-in cov(L2(t), G(u)): zero unless u < t."""
    if u >= t:
        return 0.0
    tau = t if tau is None else tau
    records, _ = _sub_subgroup_records(sample, s, I, J, u, tau)
    pI = _pI_at(sample, s, I, J, u, records)
    if pI <= 0:
        raise ZeroRiskSet(f"p_I({u}) = 0")
    est = subgroup_estimate(records, s, tau)
    p_u = _p_hat_at(sample, s, I, J, u, records)
    pij2 = p_IJk_hat(sample, s, I, J, u, t, Cause.EXCLUDED, tau)
    return float((pij2 - p_u * (est.F2(t) - est.F2(u))) / pI)


def cov_L0_L1(sample: Sample, s, I, J, r, t, tau=None) -> float:
    """The closed form -F0(r) int_s^{r^t} dF1(v) / p_I(v) over the F1 knots.

    Stated this way in the source material; Gamma itself uses the
    martingale-based Sigma01 plug-in, which satisfies the partition identity.
    """
    tau = max(r, t) if tau is None else tau
    I, J = frozenset(I), frozenset(J)
    sure, barred = derive_absorbing_sets(sample.state_space, J)
    records = reduce_sample(sample, s, I, sure, barred, tau)
    est = subgroup_estimate(records, s, tau)
    m = min(r, t)
    total = 0.0
    prev = 0.0
    for e, d1, y in zip(est.event_times, est.d_absorbed, est.n_at_risk):
        if e > m:
            break
        f1 = est.F1(e)
        dF1 = f1 - prev
        prev = f1
        if dF1 > 0:
            pI = sum(1 for rec in records
                     if rec.in_I_at_s and rec.at_risk_at_s and rec.exit_time > e) / len(records)
            if pI <= 0:
                raise ZeroRiskSet(f"p_I({e}) = 0")
            total += dF1 / pI
    return float(-est.F0(r) * total)


def km_aj_covariances(est: SubgroupEstimate, r: float, t: float):
    """(Sigma00, Sigma11, Sigma01, Sigma10) at (r, t) on the sqrt(N) scale.

    Sigma00 is the Greenwood-type Kaplan-Meier covariance; the cumulative-
    incidence terms use the standard competing-risks martingale plug-ins.
    """
    times, d1, d2, Y = est.event_times, est.d_absorbed, est.d_excluded, est.n_at_risk
    N = est.n_total
    d = d1 + d2
    keep = times <= min(r, t)
    if not keep.any():
        return 0.0, 0.0, 0.0, 0.0
    F0r, F0t = est.F0(r), est.F0(t)
    F1r, F1t = est.F1(r), est.F1(t)
    surv = np.cumprod(1.0 - d / Y)
    F0m = np.concatenate(([1.0], surv[:-1]))
    F1m = np.concatenate(([0.0], np.cumsum(F0m * d1 / Y)[:-1]))
    A = F0m + F1m
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.where(Y > d, d / (Y * np.where(Y > d, Y - d, 1.0)), 0.0)
    k = keep
    s00 = F0r * F0t * N * np.sum(gw[k])
    y2 = Y[k] ** 2
    s11 = N * np.sum(((A[k] - F1t) * (A[k] - F1r) * d1[k] + (F1t - F1m[k]) * (F1r - F1m[k]) * d2[k]) / y2)
    s01 = -F0r * N * np.sum(((A[k] - F1t) * d1[k] - (F1t - F1m[k]) * d2[k]) / y2)
    s10 = -F0t * N * np.sum(((A[k] - F1r) * d1[k] - (F1r - F1m[k]) * d2[k]) / y2)
    return float(s00), float(s11), float(s01), float(s10)


def gamma_surface(sample: Sample, s, I, J, tau) -> CovSurface:
    """The full plug-in covariance surface of sqrt(N)(P_hat - P) on the knot grid."""
    eng = SubgroupEngine(sample, s, I, J, tau)
    return CovSurface(eng.grid, eng.gamma(), s=float(s), tau=float(tau))


def gamma_IJ(sample: Sample, s, I, J, tau, r, t) -> float:
    """Pointwise Gamma(r, t); see ``gamma_surface`` for the whole grid."""
    surf = gamma_surface(sample, s, I, J, tau)
    return surf(r, t)


def elos_variance(surface: CovSurface) -> float:
    """Exact double integral of the step surface over [s, tau]^2 (>= 0)."""
    w = np.diff(surface.grid)
    v = float(w @ surface.values[:-1, :-1] @ w)
    if v < -1e-9:
        raise ValidationError(f"integrated variance below tolerance: {v}")
    return max(v, 0.0)


def surface_to_csv(surface: CovSurface, path) -> None:
    """Diagnostics export: header row/column carry the grid."""
    with open(path, "w") as fh:
        fh.write("t," + ",".join(repr(float(g)) for g in surface.grid) + "\n")
        for g, row in zip(surface.grid, surface.values):
            fh.write(repr(float(g)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
