"""Autocorrelation, effective-sample diagnostics, and benchmark reports.

The effective sample factor inverts the finite-sample variance inflation of
a correlated chain,

    ESF = [1 + sum_j 2 (1 - j/m) rho_j]^-1,    ESS = m * ESF,

where the lag sum runs over an adaptive window: lags are included until the
first lag whose autocorrelation magnitude drops below 0.001 (or m/2 lags,
whichever comes first). Summing the full window instead is noise-dominated.
An ESF above 1 is meaningful: antithetic chains beat i.i.d. sampling.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .errors import ZeroVariance

ACF_CUTOFF = 0.001


@dataclass(frozen=True)
class ScalarSeries:
    """A monitored scalar chain, optionally with its CPU cost."""

    values: np.ndarray
    cpu_seconds: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size < 2:
            raise ValueError("a series needs at least two values")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DiagnosticsReport:
    acf: np.ndarray  # rho_1 .. rho_L
    esf: float
    ess: float
    ess_per_cpu: float | None = None


def _values(series):
    if isinstance(series, ScalarSeries):
        return series.values
    return ScalarSeries(series).values


def acf(series, max_lag):
    """Sample autocorrelations rho_1..rho_max_lag (FFT-based, biased)."""
    x = _values(series)
    m = x.size
    if not 0 < max_lag < m:
        raise ValueError("max_lag must be in [1, len(series))")
    centered = x - x.mean()
    c0 = float(centered @ centered)
    if c0 <= 0.0:
        raise ZeroVariance("series has zero variance")
    size = next_fast_len(2 * m)
    spectrum = np.fft.rfft(centered, size)
    autocov = np.fft.irfft(spectrum * np.conj(spectrum), size)[: max_lag + 1].real
    return autocov[1:] / autocov[0]


def esf(series):
    """Effective sample factor with the adaptive lag window."""
    x = _values(series)
    m = x.size
    rho = acf(x, max_lag=m // 2) if m > 3 else acf(x, max_lag=m - 1)
    below = np.nonzero(np.abs(rho) < ACF_CUTOFF)[0]
    window = rho[: below[0]] if below.size else rho
    lags = np.arange(1, window.size + 1)
    denom = 1.0 + 2.0 * float(np.sum((1.0 - lags / m) * window))
    if denom <= 0.0:
        denom = 1e-12
    return 1.0 / denom


def ess(series):
    """Effective sample size, m x ESF."""
    return _values(series).size * esf(series)


def diagnose(series, cpu_seconds=None, max_lag=None):
    """Bundle ACF/ESF/ESS (and ESS per CPU second) for one scalar chain."""
    if isinstance(series, ScalarSeries) and cpu_seconds is None:
        cpu_seconds = series.cpu_seconds
    x = _values(series)
    if max_lag is None:
        max_lag = min(100, x.size // 2)
    factor = esf(x)
    total = x.size * factor
    per_cpu = None
    if cpu_seconds is not None and cpu_seconds > 0:
        per_cpu = total / cpu_seconds
    return DiagnosticsReport(
        acf=acf(x, max_lag), esf=factor, ess=total, ess_per_cpu=per_cpu
    )


# -- benchmark harness -----------------------------------------------------


def hmc_sampler(travel_time=None, frame=None):
    """Benchmark runner factory for the exact-HMC chain."""
    from dataclasses import replace

    from .engine import run_chain

    def runner(model, n, burn_in, init, seed):
        changes = {}
        if travel_time is not None:
            changes["travel_time"] = travel_time
        if frame is not None:
            changes["frame"] = frame
        if changes:
            model = replace(model, **changes)
        return run_chain(model, n, burn_in=burn_in, init=init, seed=seed)

    return runner


def gibbs_sampler():
    """Benchmark runner factory for the Gibbs baseline."""
    from .gibbs import run_gibbs_chain

    def runner(model, n, burn_in, init, seed):
        return run_gibbs_chain(model, n, burn_in=burn_in, init=init, seed=seed)

    return runner


@dataclass(frozen=True)
class BenchmarkRow:
    sampler: str
    coordinate: int
    esf_median: float
    esf_q25: float
    esf_q75: float
    ess_per_cpu_median: float
    ess_per_cpu_q25: float
    ess_per_cpu_q75: float
    cpu_mean: float


@dataclass(frozen=True)
class BenchmarkTable:
    rows: tuple
    n_samples: int
    repeats: int

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "repeats": self.repeats,
            "rows": [
                {
                    "sampler": r.sampler,
                    "coordinate": r.coordinate,
                    "esf": {
                        "median": r.esf_median,
                        "q25": r.esf_q25,
                        "q75": r.esf_q75,
                    },
                    "ess_per_cpu": {
                        "median": r.ess_per_cpu_median,
                        "q25": r.ess_per_cpu_q25,
                        "q75": r.ess_per_cpu_q75,
                    },
                    "cpu_mean": r.cpu_mean,
                }
                for r in self.rows
            ],
        }

    def to_text(self):
        header = (
            f"{'sampler':<16} {'coord':>5} {'ESF med (q25/q75)':>26} "
            f"{'ESS/CPU med (q25/q75)':>30} {'cpu[s]':>8}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.sampler:<16} {r.coordinate:>5} "
                f"{r.esf_median:>10.4g} ({r.esf_q25:.3g}/{r.esf_q75:.3g})"
                f"{'':>2}"
                f"{r.ess_per_cpu_median:>14.4g} "
                f"({r.ess_per_cpu_q25:.4g}/{r.ess_per_cpu_q75:.4g})"
                f" {r.cpu_mean:>8.3g}"
            )
        return "\n".join(lines)


def _worker_count(repeats):
    env = os.environ.get("TMG_THREADS")
    if env:
        limit = max(1, int(env))
    else:
        limit = os.cpu_count() or 1
    return max(1, min(limit, repeats))


def benchmark(model, samplers, n, burn_in, repeats, seed, coords=None, init=None):
    """Median/quartile ESF and ESS-per-CPU across repeated runs.

    ``samplers`` is a sequence of ``(name, runner)`` pairs (see
    :func:`hmc_sampler`, :func:`gibbs_sampler`). CPU cost is the process
    time of each run's sampling loop only. Repeats may execute concurrently
    (capped by the TMG_THREADS environment variable); per-repeat seeds are
    fixed up front so results do not depend on scheduling.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    from .engine import find_interior_point

    if init is None:
        init = find_interior_point(model)
    if coords is None:
        coords = list(range(model.dim))
    run_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(repeats)]

    def one_run(args):
        runner, run_seed = args
        result = runner(model, n, burn_in, init, run_seed)
        esfs = [esf(result.samples[:, c]) for c in coords]
        return esfs, result.cpu_seconds

    rows = []
    for name, runner in samplers:
        jobs = [(runner, s) for s in run_seeds]
        workers = _worker_count(repeats)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(one_run, jobs))
        else:
            outcomes = [one_run(j) for j in jobs]
        cpu = np.array([c for _, c in outcomes])
        esf_mat = np.array([e for e, _ in outcomes])  # repeats x coords
        ess_per_cpu = n * esf_mat / np.maximum(cpu[:, None], 1e-12)
        for j, c in enumerate(coords):
            e_q = np.percentile(esf_mat[:, j], [25, 50, 75])
            p_q = np.percentile(ess_per_cpu[:, j], [25, 50, 75])
            rows.append(
                BenchmarkRow(
                    sampler=name,
                    coordinate=c,
                    esf_median=e_q[1],
                    esf_q25=e_q[0],
                    esf_q75=e_q[2],
                    ess_per_cpu_median=p_q[1],
                    ess_per_cpu_q25=p_q[0],
                    ess_per_cpu_q75=p_q[2],
                    cpu_mean=float(cpu.mean()),
                )
            )
    return BenchmarkTable(rows=tuple(rows), n_samples=n, repeats=repeats)
