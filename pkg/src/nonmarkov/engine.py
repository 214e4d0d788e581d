"""Vectorized estimation kernel on a fixed knot grid.

Precomputes per-subject indicator structures for one (sample, s, I, J, tau)
analysis so that the transition curve, its plug-in covariance surface, and
the double-integrated variance can be recomputed cheaply under multiplicity
weights (bootstrap resamples reweight subjects instead of rebuilding paths).

All covariance quantities are on the sqrt(N) scale, N the full sample size:
the plug-in surface estimates the limit covariance of sqrt(N) (P_hat - P).
"""
from __future__ import annotations

import numpy as np

from .errors import EmptySubgroup, ValidationError
from .model import Cause, Sample, derive_absorbing_sets, reduce_sample
from .stepfun import StepFunction


class SubgroupEngine:
    """Shared computations for the non-Markov estimator on one analysis window."""

    def __init__(self, sample: Sample, s, I, J, tau):
        if not s < tau:
            raise ValidationError("need s < tau")
        self.s, self.tau = float(s), float(tau)
        self.I, self.J = frozenset(I), frozenset(J)
        self.n = sample.n
        sure, barred = derive_absorbing_sets(sample.state_space, self.J)
        self.sure, self.barred = sure, barred
        records = reduce_sample(sample, s, self.I, sure, barred, tau)
        self.records = records
        sub = np.array([i for i, r in enumerate(records) if r.in_I_at_s and r.at_risk_at_s], dtype=np.intp)
        if sub.size == 0:
            raise EmptySubgroup(f"no subject observed in {sorted(self.I)} at s={s}")
        self.subgroup = sub

        # Knot grid: subgroup exits plus subgroup jump times inside (s, tau).
        cuts = {self.s, self.tau}
        for i in sub:
            T = records[i].exit_time
            if self.s < T <= self.tau:
                cuts.add(T)
            jt = sample.paths[i].times
            cuts.update(jt[(jt > self.s) & (jt < self.tau)].tolist())
        self.grid = np.array(sorted(cuts))
        G = self.grid.size

        ns = sub.size
        self.ns = ns
        self.T = np.array([records[i].exit_time for i in sub])
        self.delta = np.array([records[i].observed for i in sub], dtype=bool)
        self.cause = np.array([int(records[i].cause) for i in sub], dtype=np.int8)
        self.eidx = np.searchsorted(self.grid, self.T)
        if np.any(self.grid[np.minimum(self.eidx, G - 1)] != self.T):
            raise ValidationError("exit time missing from grid")

        # J-occupancy ranges [lo, hi) in grid indices, intersected with g < T.
        r_subj, r_lo, r_hi = [], [], []
        jset = self.J
        for k, i in enumerate(sub):
            p = sample.paths[i]
            seg_end = np.append(p.times[1:], np.inf)
            for t0, t1, st in zip(p.times, seg_end, p.states):
                if int(st) not in jset:
                    continue
                lo, hi = max(t0, self.s), min(t1, self.T[k])
                if hi <= lo:
                    continue
                a = int(np.searchsorted(self.grid, lo, side="left"))
                b = int(np.searchsorted(self.grid, hi, side="left"))
                if b > a:
                    r_subj.append(k)
                    r_lo.append(a)
                    r_hi.append(b)
        self.r_subj = np.array(r_subj, dtype=np.intp)
        self.r_lo = np.array(r_lo, dtype=np.intp)
        self.r_hi = np.array(r_hi, dtype=np.intp)
        self._mats = None

    # -- indicator matrices for the moment plug-ins (built lazily, cached) --
    def _matrices(self):
        if self._mats is None:
            G, ns = self.grid.size, self.ns
            MJ = np.zeros((ns, G))
            for k, a, b in zip(self.r_subj, self.r_lo, self.r_hi):
                MJ[k, a:b] = 1.0
            cols = np.arange(G)
            MA = (cols[None, :] < self.eidx[:, None]).astype(float)   # T > g
            MGE = (cols[None, :] <= self.eidx[:, None]).astype(float)  # T >= g
            EvAll = np.zeros((ns, G))
            Ev1 = np.zeros((ns, G))
            rows = np.flatnonzero(self.delta)
            EvAll[rows, self.eidx[rows]] = 1.0
            rows1 = np.flatnonzero(self.delta & (self.cause == Cause.ABSORBED))
            Ev1[rows1, self.eidx[rows1]] = 1.0
            self._mats = (MJ, MA, MGE, EvAll, Ev1)
        return self._mats

    def _weights(self, m):
        if m is None:
            return np.ones(self.ns), float(self.n)
        m = np.asarray(m, dtype=float)
        if m.shape != (self.n,):
            raise ValidationError("weights must have full-sample length")
        return m[self.subgroup], float(m.sum())

    # ------------------------------------------------------------------
    # Curves
    # ------------------------------------------------------------------
    def curves(self, m=None):
        """Grid-aligned arrays (F0, F1, F2, p, P, den, risk, d1, d2)."""
        msub, N = self._weights(m)
        S = msub.sum()
        if S <= 0:
            raise EmptySubgroup("resample contains no subgroup member")
        G = self.grid.size
        wT = np.bincount(self.eidx, weights=msub, minlength=G)
        cum = np.cumsum(wT)
        den = S - cum                # at risk strictly after g
        risk = den + wT              # at risk at g
        sel1 = self.delta & (self.cause == Cause.ABSORBED)
        sel2 = self.delta & (self.cause == Cause.EXCLUDED)
        d1 = np.bincount(self.eidx[sel1], weights=msub[sel1], minlength=G)
        d2 = np.bincount(self.eidx[sel2], weights=msub[sel2], minlength=G)
        d = d1 + d2
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(risk > 0, 1.0 - d / np.where(risk > 0, risk, 1.0), 1.0)
        F0 = np.cumprod(f)
        F0m = np.concatenate(([1.0], F0[:-1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            inc1 = np.where(risk > 0, F0m * d1 / np.where(risk > 0, risk, 1.0), 0.0)
            inc2 = np.where(risk > 0, F0m * d2 / np.where(risk > 0, risk, 1.0), 0.0)
        F1 = np.cumsum(inc1)
        F2 = np.cumsum(inc2)

        diff = np.zeros(G + 1)
        np.add.at(diff, self.r_lo, msub[self.r_subj])
        np.subtract.at(diff, self.r_hi, msub[self.r_subj])
        num = np.cumsum(diff[:-1])
        p = np.zeros(G)
        ok = den > 0
        p[ok] = num[ok] / den[ok]
        if not ok.all():  # carry the last defined proportion forward
            idx = np.where(ok, np.arange(G), -1)
            np.maximum.accumulate(idx, out=idx)
            p = np.where(idx >= 0, p[np.maximum(idx, 0)], 0.0)
        P = F1 + F0 * p
        return {"F0": F0, "F1": F1, "F2": F2, "p": p, "P": P,
                "den": den, "risk": risk, "d1": d1, "d2": d2, "num": num, "N": N}

    def value_at(self, t, key="P", m=None):
        c = self.curves(m)
        idx = int(np.searchsorted(self.grid, t, side="right")) - 1
        if idx < 0:
            raise ValidationError("evaluation before s")
        return float(c[key][idx])

    def elos(self, m=None, curves=None) -> float:
        c = curves if curves is not None else self.curves(m)
        return float(np.sum(c["P"][:-1] * np.diff(self.grid)))

    def step(self, key="P", m=None, curves=None) -> StepFunction:
        c = curves if curves is not None else self.curves(m)
        return StepFunction.from_grid(self.s, self.grid, c[key])

    # ------------------------------------------------------------------
    # Plug-in covariance of sqrt(N) (P_hat(s,.) - P(s,.))
    # ------------------------------------------------------------------
    def gamma(self, m=None, curves=None) -> np.ndarray:
        """Full G x G covariance surface on the grid (seven-term plug-in)."""
        msub, N = self._weights(m)
        c = curves if curves is not None else self.curves(m)
        G = self.grid.size
        gmax = self._gmax(c)
        sl = slice(0, gmax + 1)
        F0, F1, p = c["F0"][sl], c["F1"][sl], c["p"][sl]
        den, risk, d1, d2 = c["den"][sl], c["risk"][sl], c["d1"][sl], c["d2"][sl]
        pI, pJI = den / N, c["num"][sl] / N
        k = gmax + 1
        mn = np.minimum.outer(np.arange(k), np.arange(k))

        S00 = np.outer(F0, F0) * (N * np.cumsum(_safe_div(d1 + d2, risk * (risk - d1 - d2))))[mn]

        MJ, MA, MGE, EvAll, Ev1 = (M[:, sl] for M in self._matrices())
        Wm = MJ * msub[:, None]
        MJJ = Wm.T @ MJ / N
        MII = (MA * msub[:, None]).T @ MA / N
        MJI = Wm.T @ MA / N
        SJJ = MJJ - np.outer(pJI, pJI)
        SII = MII - np.outer(pI, pI)
        OJI = MJI - np.outer(pJI, pI)
        covG = (SJJ + SII * np.outer(p, p) - OJI * p[None, :] - OJI.T * p[:, None]) / np.outer(pI, pI)

        # Sub-subgroup product limits q0(b -> a), q1(b -> a) for the L-G terms.
        D0 = Wm.T @ EvAll
        R0 = Wm.T @ MGE
        ratio = 1.0 - _safe_div(D0, R0)
        ratio[np.tril(np.ones((k, k), dtype=bool))] = 1.0  # only events after b count
        Q0 = np.cumprod(ratio, axis=1)
        # cov(L0(a), G(b)) = [q0(b,a) F0(b) p(b) - F0(a) p(b)] / pI(b), nonzero iff b < a
        covL0G = (Q0.T * (F0 * p)[None, :] - np.outer(F0, p)) / pI[None, :]
        covL0G[np.triu_indices(k)] = 0.0

        mx = np.maximum.outer(np.arange(k), np.arange(k))
        T6 = p[mx] * F0[mn] * covL0G[mx, mn]

        gam = np.outer(p, p) * S00 + np.outer(F0, F0) * covG + T6

        if d1.any():
            F0m = np.concatenate(([1.0], F0[:-1]))
            F1m = np.concatenate(([0.0], F1[:-1]))
            A = F0m + F1m
            r2 = _safe_div(np.ones_like(risk), risk ** 2)
            C1 = N * np.cumsum((A ** 2 * d1 + F1m ** 2 * d2) * r2)
            C2 = N * np.cumsum((A * d1 + F1m * d2) * r2)
            C3 = N * np.cumsum((d1 + d2) * r2)
            S11 = C1[mn] - np.add.outer(F1, F1) * C2[mn] + np.outer(F1, F1) * C3[mn]
            S01 = -F0[:, None] * (C2[mn] - F1[None, :] * C3[mn])
            D1 = Wm.T @ Ev1
            Q0_prev = np.concatenate((np.ones((k, 1)), Q0[:, :-1]), axis=1)
            q1inc = Q0_prev * _safe_div(D1, R0)
            q1inc[np.tril_indices(k)] = 0.0
            q1cum = np.cumsum(q1inc, axis=1)
            # cov(L1(t), G(b)) = [q1(b,t) F0(b) p(b) - p(b)(F1(t)-F1(b))] / pI(b), b < t
            covL1G = (q1cum.T * (F0 * p)[None, :] - p[None, :] * (F1[:, None] - F1[None, :])) / pI[None, :]
            covL1G[np.triu_indices(k)] = 0.0
            gam = gam + S11 + p[:, None] * S01 + p[None, :] * S01.T + F0[mn] * covL1G[mx, mn]

        if gmax < G - 1:  # carry the surface forward past the last at-risk time
            idx = np.minimum(np.arange(G), gmax)
            gam = gam[np.ix_(idx, idx)]
        dg = np.diagonal(gam)
        if dg.min() < -1e-9:
            raise ValidationError(f"covariance diagonal below tolerance: {dg.min()}")
        np.fill_diagonal(gam, np.maximum(dg, 0.0))
        return gam

    def gamma_diag(self, m=None, curves=None) -> np.ndarray:
        """Diagonal Gamma(t,t) on the grid (the L-G cross terms vanish there)."""
        msub, N = self._weights(m)
        c = curves if curves is not None else self.curves(m)
        G = self.grid.size
        gmax = self._gmax(c)
        sl = slice(0, gmax + 1)
        F0, F1, p = c["F0"][sl], c["F1"][sl], c["p"][sl]
        den, risk, d1, d2 = c["den"][sl], c["risk"][sl], c["d1"][sl], c["d2"][sl]
        pI, pJI = den / N, c["num"][sl] / N
        s00 = F0 ** 2 * N * np.cumsum(_safe_div(d1 + d2, risk * (risk - d1 - d2)))
        covg = (pJI * (1 - pJI) + (pI - pI ** 2) * p ** 2 - 2 * (pJI - pJI * pI) * p) / pI ** 2
        out = p ** 2 * s00 + F0 ** 2 * covg
        if d1.any():
            F0m = np.concatenate(([1.0], F0[:-1]))
            F1m = np.concatenate(([0.0], F1[:-1]))
            A = F0m + F1m
            r2 = _safe_div(np.ones_like(risk), risk ** 2)
            C1 = N * np.cumsum((A ** 2 * d1 + F1m ** 2 * d2) * r2)
            C2 = N * np.cumsum((A * d1 + F1m * d2) * r2)
            C3 = N * np.cumsum((d1 + d2) * r2)
            s11 = C1 - 2 * F1 * C2 + F1 ** 2 * C3
            s01 = -F0 * (C2 - F1 * C3)
            out = out + s11 + 2 * p * s01
        if gmax < G - 1:
            out = out[np.minimum(np.arange(G), gmax)]
        return np.maximum(out, 0.0)

    def elos_variance(self, m=None, curves=None, gamma=None) -> float:
        """Exact cell-sum of the double integral of Gamma over [s, tau]^2."""
        gam = gamma if gamma is not None else self.gamma(m, curves)
        w = np.diff(self.grid)
        v = float(w @ gam[:-1, :-1] @ w)
        if v < -1e-9:
            raise ValidationError(f"negative integrated variance: {v}")
        return max(v, 0.0)

    def _gmax(self, c) -> int:
        ok = np.flatnonzero(c["den"] > 0)
        if ok.size == 0:
            raise EmptySubgroup("risk set empty on the whole grid")
        return int(ok[-1])


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, a / np.where(b > 0, b, 1.0), 0.0)
