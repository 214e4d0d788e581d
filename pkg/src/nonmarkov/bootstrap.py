"""Classical bootstrap: resample subjects with replacement, recompute anything.

Replicate b draws its indices from an independent substream derived from
(seed, b), so parallel and serial runs produce bit-identical draws and the
container is ordered by replicate index, never by completion order.
Quantiles use linear interpolation of order statistics (type 7) throughout.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonMarkovError, NonpositiveSE, TooManyFailures, ValidationError
from .model import Sample


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    seed: int = 0
    parallel: bool = False
    max_failure_rate: float = 0.10

    def __post_init__(self):
        if self.B < 1:
            raise ValidationError("need B >= 1")


@dataclass(frozen=True)
class BootstrapDraws:
    """Per-replicate statistic values; ``failures`` counts excluded replicates."""

    values: np.ndarray
    failures: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))

    @property
    def B(self) -> int:
        return len(self.values) + self.failures


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for replicate ``index`` (hash of seed and index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def resample_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def resample(sample: Sample, rng: np.random.Generator) -> Sample:
    """Draw n subjects i.i.d. uniformly with replacement (duplicates allowed)."""
    idx = resample_indices(rng, sample.n)
    return Sample(
        tuple(sample.paths[i] for i in idx),
        sample.state_space,
        tuple(sample.subject_ids[i] for i in idx),
    )


def _run_replicate(args):
    sample, stat, seed, b = args
    rng = replicate_rng(seed, b)
    try:
        return b, stat(resample(sample, rng)), None
    except NonMarkovError as err:
        return b, None, err


def bootstrap_statistic(sample: Sample, stat: Callable[[Sample], object],
                        cfg: BootstrapConfig) -> BootstrapDraws:
    """Recompute ``stat`` on ``cfg.B`` resamples.

    Replicates whose statistic raises a package error (an empty subgroup
    after resampling, say) are excluded and counted; more than
    ``max_failure_rate`` of them aborts rather than silently biasing
    quantiles.
    """
    jobs = [(sample, stat, cfg.seed, b) for b in range(cfg.B)]
    if cfg.parallel:
        workers = max_workers()
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_replicate, jobs, chunksize=max(1, cfg.B // (8 * workers))))
    else:
        results = [_run_replicate(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    values = [v for _, v, err in results if err is None]
    failures = cfg.B - len(values)
    if failures > cfg.max_failure_rate * cfg.B:
        raise TooManyFailures(f"{failures}/{cfg.B} bootstrap replicates failed")
    return BootstrapDraws(np.asarray(values), failures=failures)


def percentile_ci(draws: BootstrapDraws, alpha: float):
    """Equal-tailed percentile interval from the raw draws."""
    v = np.asarray(draws.values, dtype=float)
    if v.size < 2:
        raise ValidationError("need at least two draws")
    return (float(np.quantile(v, alpha / 2)), float(np.quantile(v, 1 - alpha / 2)))


def bootstrap_t_ci(point: float, se: float, draws_t: BootstrapDraws, alpha: float):
    """Studentized interval (point - q_{1-a/2} se, point - q_{a/2} se)."""
    if not se > 0:
        raise NonpositiveSE("standard error must be positive")
    t = np.asarray(draws_t.values, dtype=float)
    return (float(point - np.quantile(t, 1 - alpha / 2) * se),
            float(point - np.quantile(t, alpha / 2) * se))


def sup_quantile(curve_draws: Sequence[np.ndarray] | BootstrapDraws, alpha: float) -> float:
    """(1-alpha) quantile of the per-replicate supremum over the shared grid."""
    values = curve_draws.values if isinstance(curve_draws, BootstrapDraws) else curve_draws
    sups = np.array([np.max(np.abs(np.atleast_1d(c))) for c in values])
    return float(np.quantile(sups, 1 - alpha))


def max_workers() -> int:
    """Worker cap: NONMARKOV_THREADS if set, else the CPU count."""
    env = os.environ.get("NONMARKOV_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"NONMARKOV_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1
