"""Weighted Aalen-Johansen machinery for the Markov comparator.

Supports multiplicity-weighted recomputation (classical bootstrap), the
pointwise plug-in covariance of the normalized estimator,

    gamma(r,t) = sum_j sum_{k!=j} int_s^{r^t} P_oj(s,u-)^2
                 (P_k.(u,t) - P_j.(u,t)) (P_k.(u,r) - P_j.(u,r)) dA_jk(u) N / Y_j(u),

with Nelson-Aalen increments, and the double-integrated version used for the
expected-length-of-stay variance.  Backward recursions over the event list
avoid forming transition matrices between all pairs of times.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import Sample
from .stepfun import StepFunction
from .estimators import _observed_jumps


class AJFit:
    """Aalen-Johansen estimate of t -> P(X(t) in targets | X(s)=origin) on (s, t_max]."""

    def __init__(self, sample: Sample, s: float, t_max: float, origin: int, targets):
        self.s, self.t_max = float(s), float(t_max)
        self.origin = int(origin)
        self.targets = sorted(frozenset(targets))
        self.n = sample.n
        self.R = sample.state_space.n_states
        times, fr, to, subj = _observed_jumps(sample, s, t_max)
        self.uniq, col = np.unique(times, return_inverse=True)
        self.rcol = col.astype(np.intp)
        self.rfrom = fr.astype(np.intp)
        self.rto = to.astype(np.intp)
        self.rsubj = subj.astype(np.intp)
        E = self.uniq.size
        # State occupied just before each event time, per subject, while observed.
        st = np.zeros((self.n, E), dtype=np.int8)
        obs = np.zeros((self.n, E), dtype=bool)
        for i, p in enumerate(sample.paths):
            idx = np.searchsorted(p.times, self.uniq, side="left") - 1
            st[i] = p.states[np.maximum(idx, 0)]
            obs[i] = p.censor_time >= self.uniq
        self._in_state = [((st == j) & obs) for j in range(self.R)]
        self._evec = np.zeros(self.R)
        self._evec[self.targets] = 1.0
        # record ranges per unique time (rcol is nondecreasing)
        self._offsets = np.searchsorted(self.rcol, np.arange(E + 1))

    def _records_at(self, e):
        return range(self._offsets[e], self._offsets[e + 1])

    def _risk(self, m):
        m = np.ones(self.n) if m is None else np.asarray(m, dtype=float)
        Y = np.stack([m @ S for S in self._in_state]) if self.uniq.size else np.zeros((self.R, 0))
        return m, Y

    def _event_weights(self, m, Y):
        """Per-record weighted counts and the guard for empty risk sets."""
        w = m[self.rsubj]
        y = Y[self.rfrom, self.rcol]
        ok = y > 0
        return np.where(ok, w, 0.0), np.where(ok, y, 1.0)

    def factors(self, m=None):
        """(E, R, R) product-integral factors I + dA_hat at the unique times."""
        m, Y = self._risk(m)
        E = self.uniq.size
        F = np.tile(np.eye(self.R), (E, 1, 1))
        w, y = self._event_weights(m, Y)
        np.add.at(F, (self.rcol, self.rfrom, self.rto), w / y)
        np.add.at(F, (self.rcol, self.rfrom, self.rfrom), -w / y)
        return F, Y, m

    def curve(self, m=None) -> StepFunction:
        F, _, _ = self.factors(m)
        init = 1.0 if self.origin in self.targets else 0.0
        if self.uniq.size == 0:
            return StepFunction.constant(self.s, init)
        P = np.eye(self.R)
        vals = np.empty(self.uniq.size)
        for k in range(self.uniq.size):
            P = P @ F[k]
            vals[k] = P[self.origin] @ self._evec
        return StepFunction(self.s, self.uniq, vals, initial_value=init)

    def _origin_rows(self, F):
        """P(s, u-) row of the origin state, before each event (E, R)."""
        rows = np.empty((self.uniq.size, self.R))
        r = np.zeros(self.R)
        r[self.origin] = 1.0
        for k in range(self.uniq.size):
            rows[k] = r
            r = r @ F[k]
        return rows

    def gamma_diag(self, ts, m=None) -> np.ndarray:
        """gamma(t,t) at the requested times (one forward and one backward pass)."""
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < self.s) or np.any(ts > self.t_max):
            raise ValidationError("gamma times outside the fitted window")
        mw, Y = self._risk(m)
        F, _, _ = self.factors(m)
        rows = self._origin_rows(F)
        w, y = self._event_weights(mw, Y)
        N = float(mw.sum())
        order = np.argsort(ts, kind="stable")
        out = np.zeros(ts.size)
        E = self.uniq.size
        H = np.zeros((self.R, ts.size))
        active = np.zeros(ts.size, dtype=bool)
        nxt = ts.size - 1
        for e in range(E - 1, -1, -1):
            while nxt >= 0 and ts[order[nxt]] >= self.uniq[e]:
                c = order[nxt]
                H[:, c] = self._evec
                active[c] = True
                nxt -= 1
            if active.any():
                for r in self._records_at(e):
                    if w[r] <= 0:
                        continue
                    j, k = self.rfrom[r], self.rto[r]
                    diff = H[k] - H[j]
                    out += active * rows[e, j] ** 2 * diff ** 2 * (N * w[r] / y[r] ** 2)
            H = F[e] @ H
        return out

    def elos(self, tau: float, m=None, curve=None) -> float:
        c = curve if curve is not None else self.curve(m)
        return c.integrate(self.s, tau)

    def elos_variance(self, tau: float, m=None) -> float:
        """Double integral of gamma over (s, tau]^2 via a backward g-recursion."""
        if tau > self.t_max:
            raise ValidationError("tau beyond the fitted window")
        mw, Y = self._risk(m)
        F, _, _ = self.factors(m)
        rows = self._origin_rows(F)
        w, y = self._event_weights(mw, Y)
        N = float(mw.sum())
        keep = self.uniq <= tau
        idxs = np.flatnonzero(keep)
        out = 0.0
        g = np.zeros(self.R)
        if idxs.size:
            g = (tau - self.uniq[idxs[-1]]) * self._evec.copy()
        for pos in range(idxs.size - 1, -1, -1):
            e = idxs[pos]
            for r in self._records_at(e):
                if w[r] <= 0:
                    continue
                j, k = self.rfrom[r], self.rto[r]
                out += rows[e, j] ** 2 * (g[k] - g[j]) ** 2 * (N * w[r] / y[r] ** 2)
            prev = self.uniq[idxs[pos - 1]] if pos > 0 else self.s
            g = (self.uniq[e] - prev) * self._evec + F[e] @ g
        return float(out)


def aj_gamma(sample: Sample, s, r, t, origin: int, targets) -> float:
    """Pointwise plug-in covariance gamma(r, t) of the normalized AJ estimator."""
    fit = AJFit(sample, s, max(r, t), origin, targets)
    lo, hi = min(r, t), max(r, t)
    mw, Y = fit._risk(None)
    F, _, _ = fit.factors(None)
    rows = fit._origin_rows(F)
    w, y = fit._event_weights(mw, Y)
    N = float(mw.sum())
    # backward pass computing h(u, lo) and h(u, hi) jointly
    H = np.zeros((fit.R, 2))
    active = [False, False]
    bounds = [lo, hi]
    out = 0.0
    for e in range(fit.uniq.size - 1, -1, -1):
        for c in (1, 0):
            if not active[c] and fit.uniq[e] <= bounds[c]:
                H[:, c] = fit._evec
                active[c] = True
        if active[0] and active[1]:
            for rr in fit._records_at(e):
                if w[rr] <= 0:
                    continue
                j, k = fit.rfrom[rr], fit.rto[rr]
                out += rows[e, j] ** 2 * (H[k, 0] - H[j, 0]) * (H[k, 1] - H[j, 1]) * (N * w[rr] / y[rr] ** 2)
        H = F[e] @ H
    return float(out)
