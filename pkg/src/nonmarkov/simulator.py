"""Simulation model with a state-dependent regime switch, plus exact truth.

The default three-state illness-death model (0 healthy, 1 ill, 2 dead) is
piecewise time-homogeneous: intensities follow ``base_intensities`` until
``switch_time``; from then on they follow ``switched_intensities`` if and
only if the subject occupies ``switch_state`` exactly at the switch, which
makes the process non-Markov.  Censoring is independent exponential.

Ground truth for the ill -> healthy transition probability conditional on
illness at s > switch_time is the exact two-component mixture over the state
occupied at the switch: with M_x the post-switch generator given state x
there, and weights w_x = [exp(B*switch)]_{init,x} [exp(M_x (s-switch))]_{x,ill},

    P(X(t)=healthy | X(s)=ill) = sum_x w_x [exp(M_x (t-s))]_{ill,healthy} / sum_x w_x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import Sample, StateSpace, SubjectPath, illness_death_space

HEALTHY, ILL, DEAD = 0, 1, 2


def _generator(l01, l02, l10, l12):
    return np.array([
        [-(l01 + l02), l01, l02],
        [l10, -(l10 + l12), l12],
        [0.0, 0.0, 0.0],
    ])


@dataclass(frozen=True)
class SwitchModel:
    """Piecewise-homogeneous intensity model with one state-dependent switch."""

    base_intensities: np.ndarray
    switched_intensities: np.ndarray
    switch_time: float = 4.0
    switch_state: int = ILL
    censor_rate: float = 0.04
    initial_state: int = HEALTHY

    def __post_init__(self):
        for name in ("base_intensities", "switched_intensities"):
            G = np.asarray(getattr(self, name), dtype=float)
            if G.shape[0] != G.shape[1]:
                raise ValidationError(f"{name} must be square")
            off = G.copy()
            np.fill_diagonal(off, 0.0)
            if np.any(off < 0) or np.any(np.abs(G.sum(axis=1)) > 1e-14):
                raise ValidationError(f"{name} is not a generator (rows must sum to 0)")
            object.__setattr__(self, name, G)
        if not self.switch_time > 0:
            raise ValidationError("switch_time must be positive")
        if self.censor_rate < 0:
            raise ValidationError("censor_rate must be nonnegative")

    @property
    def n_states(self) -> int:
        return self.base_intensities.shape[0]


def default_model() -> SwitchModel:
    """Illness-death model with recovery; healthy->ill halves after the switch."""
    return SwitchModel(
        base_intensities=_generator(l01=0.6, l02=0.02, l10=0.3, l12=0.1),
        switched_intensities=_generator(l01=0.3, l02=0.02, l10=0.3, l12=0.1),
    )


def markov_variant() -> SwitchModel:
    """Same intensities with the switch disabled: a time-homogeneous Markov model."""
    base = _generator(l01=0.6, l02=0.02, l10=0.3, l12=0.1)
    return SwitchModel(base_intensities=base, switched_intensities=base.copy())


def matrix_exp(G: np.ndarray, t: float) -> np.ndarray:
    """exp(G*t) by scaling and squaring of the truncated power series.

    The argument is scaled by 2**-8, the series sum(D^k / k!) is accumulated
    until the terms vanish, and the result is squared eight times.
    """
    if t < 0:
        raise ValidationError("time must be nonnegative")
    G = np.asarray(G, dtype=float)
    D = G * (t / 2.0 ** 8)
    out = np.eye(G.shape[0])
    term = np.eye(G.shape[0])
    for k in range(1, 201):
        term = term @ D / k
        out = out + term
        if np.max(np.abs(term)) < 1e-18:
            break
    for _ in range(8):
        out = out @ out
    return out


def _expm_curve(G: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """exp(G*dt) for an array of lags via eigendecomposition (shape (T, n, n))."""
    vals, vecs = np.linalg.eig(np.asarray(G, dtype=float))
    vinv = np.linalg.inv(vecs)
    dts = np.asarray(dts, dtype=float)
    E = np.exp(np.multiply.outer(dts, vals))  # (T, n)
    out = np.einsum("ij,tj,jk->tik", vecs, E, vinv)
    return np.ascontiguousarray(out.real)


def model_state_space(model: SwitchModel) -> StateSpace:
    off = model.base_intensities + model.switched_intensities
    edges = {(int(a), int(b)) for a, b in zip(*np.nonzero(off)) if a != b}
    return StateSpace(model.n_states, frozenset(edges))


def simulate_subject(model: SwitchModel, rng: np.random.Generator, horizon: float = 31.0) -> SubjectPath:
    """Draw one path: censoring first, then jumps regime by regime.

    Holding times are truncated at the switch and restarted there, which is
    exact for exponential holding times; the regime is decided once, from the
    state occupied at the switch.
    """
    censor = rng.exponential(1.0 / model.censor_rate) if model.censor_rate > 0 else math.inf
    censor = min(censor, horizon)
    times = [0.0]
    states = [model.initial_state]

    def run(G, t, state, stop):
        # Simulate on [t, stop); jumps landing at or past stop are discarded,
        # which is exact for exponential holding times.
        while True:
            rate = -G[state, state]
            if rate <= 0:
                return state
            t = t + rng.exponential(1.0 / rate)
            if t >= stop:
                return state
            u = rng.random() * rate
            state = int(np.searchsorted(np.cumsum(np.maximum(G[state], 0.0)), u, side="right"))
            times.append(t)
            states.append(state)

    st = run(model.base_intensities, 0.0, model.initial_state, min(model.switch_time, censor))
    if censor > model.switch_time:
        G = model.switched_intensities if st == model.switch_state else model.base_intensities
        run(G, model.switch_time, st, censor)
    return SubjectPath(np.array(times), np.array(states), censor_time=censor)


def simulate_sample(model: SwitchModel, n: int, seed, spawn_key=(), horizon: float = 31.0) -> Sample:
    """n independent subjects with per-subject substreams of (seed, spawn_key, i)."""
    if n < 1:
        raise ValidationError("need n >= 1")
    paths = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*spawn_key, i)))
        paths.append(simulate_subject(model, rng, horizon=horizon))
    return Sample(tuple(paths), model_state_space(model))


@dataclass(frozen=True)
class TruthOracle:
    """Exact transition functionals for a SwitchModel, conditional on illness at s."""

    model: SwitchModel
    s: float = 5.0
    _weights: np.ndarray = field(init=False, repr=False)
    _gens: tuple = field(init=False, repr=False)

    def __post_init__(self):
        m = self.model
        if not self.s > m.switch_time:
            raise ValidationError("oracle requires s > switch_time")
        at_switch = matrix_exp(m.base_intensities, m.switch_time)[m.initial_state]
        gens, weights = [], []
        for x in range(m.n_states):
            G = m.switched_intensities if x == m.switch_state else m.base_intensities
            w = at_switch[x] * matrix_exp(G, self.s - m.switch_time)[x, ILL]
            if w > 0:
                gens.append(G)
                weights.append(w)
        object.__setattr__(self, "_weights", np.asarray(weights))
        object.__setattr__(self, "_gens", tuple(gens))

    @property
    def ill_mass(self) -> float:
        """P(X(s) = ill)."""
        return float(self._weights.sum())

    @property
    def subgroup_fraction(self) -> float:
        """P(X(s) = ill, C > s)."""
        return self.ill_mass * math.exp(-self.model.censor_rate * self.s)

    def _mix_entry(self, ts, row, col) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < self.s):
            raise ValidationError("oracle defined for t >= s")
        acc = np.zeros(ts.size)
        for w, G in zip(self._weights, self._gens):
            acc += w * _expm_curve(G, ts - self.s)[:, row, col]
        return acc / self._weights.sum()

    def transition(self, t) -> float:
        """P(X(t) = healthy | X(s) = ill)."""
        return float(self._mix_entry(t, ILL, HEALTHY)[0])

    def transition_curve(self, ts) -> np.ndarray:
        return self._mix_entry(ts, ILL, HEALTHY)

    def survival(self, t) -> float:
        """P(still neither dead nor recovered-forever by t ...) -- here: alive."""
        return 1.0 - float(self._mix_entry(t, ILL, DEAD)[0])

    def survival_curve(self, ts) -> np.ndarray:
        return 1.0 - self._mix_entry(ts, ILL, DEAD)

    def elos(self, tau: float) -> float:
        """Expected time in the healthy state on [s, tau]: composite Simpson, step 1e-3."""
        if not tau > self.s:
            raise ValidationError("need tau > s")
        m = max(2, int(round((tau - self.s) / 1e-3)))
        m += m % 2
        ts = np.linspace(self.s, tau, m + 1)
        vals = self.transition_curve(ts)
        h = (tau - self.s) / m
        return float(h / 3.0 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-1:2].sum()))
