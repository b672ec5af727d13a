"""Monte-Carlo replication studies: simulate, fit, and score against the truth.

Each replication draws a dataset from a scenario, runs a sampler, and
summarizes the posterior.  Aggregates are per true parameter: SRMSE, MAE,
coverage of the central credible interval and its mean width, plus the rate
at which the modal k equals the true k (unknown-k mode only).
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .chain import Chain
from .diagnostics import condition_on_modal_k, k_posterior, posterior_summary, write_json
from .errors import InvalidInputError, NumericFailureError, StudyFailureError
from .gibbs import McmcConfig, run_fixed_k
from .model import Dataset, PriorSpec, Scenario, _frozen, default_prior, simulate_dataset
from .rjmcmc import run_rj

MODES = ("fixed", "rj")
MAX_EXCLUDED_FRACTION = 0.05
METRIC_COLUMNS = ("SRMSE", "MAE", "Cov%", "Wid")

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# scenarios


def builtin_scenarios() -> list[Scenario]:
    """Heterogeneous and homogeneous five-component samples, and well-separated k=3 and k=5 scenarios."""
    sigma2 = (0.22, 1.95, 0.92, 0.74, 1.13)
    w = (0.17, 0.21, 0.34, 0.12, 0.16)
    return [
        Scenario(w, (-3.0, 0.0, 4.0, 11.0, 16.0), sigma2, 100, "heterogeneous"),
        Scenario(w, (0.0, 2.0, 4.0, 6.0, 8.0), sigma2, 100, "homogeneous"),
        Scenario((0.3, 0.4, 0.3), (-4.0, 0.0, 4.0), (1.0, 1.0, 1.0), 100, "k3"),
        Scenario((0.2,) * 5, (-8.0, -4.0, 0.0, 4.0, 8.0), (1.0,) * 5, 100, "k5"),
    ]


def scenario_by_name(name: str) -> Scenario:
    for scenario in builtin_scenarios():
        if scenario.label == name:
            return scenario
    known = ", ".join(s.label for s in builtin_scenarios())
    raise InvalidInputError(f"unknown scenario {name!r}; choose one of {known}")


# ---------------------------------------------------------------------------
# seeds


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replication_seeds(master_seed: int, r: int) -> tuple[int, int]:
    """(data seed, sampler seed) for replication ``r``, a pure function of the master seed."""
    base = _splitmix64(_splitmix64(master_seed & _MASK64) ^ (r & _MASK64))
    return base, _splitmix64(base)


# ---------------------------------------------------------------------------
# samplers


def run_sampler(data: Dataset, prior: PriorSpec, cfg: McmcConfig, mode: str, k: int) -> Chain:
    """Default sampler: Gibbs at ``k`` in fixed mode, reversible jump otherwise."""
    if mode == "fixed":
        return run_fixed_k(data, prior, k, cfg)
    return run_rj(data, prior, cfg)


@dataclass(frozen=True)
class OracleSampler:
    """Stub sampler whose every record is the true state; metrics must come out exact."""

    scenario: Scenario

    def __call__(self, data, prior, cfg, mode, k) -> Chain:
        truth = self.scenario.as_state()
        n = cfg.n_retained
        sweeps = cfg.burn_in + cfg.thin * np.arange(1, n + 1)
        return Chain((truth,) * n, _frozen(np.zeros(n)), _frozen(sweeps.astype(np.int64)), cfg, mode=mode)


Sampler = Callable[[Dataset, PriorSpec, McmcConfig, str, int], Chain]


# ---------------------------------------------------------------------------
# single replication


@dataclass(frozen=True)
class ReplicationResult:
    r: int
    data_seed: int
    sampler_seed: int
    modal_k: int | None = None
    mean: tuple[float, ...] | None = None
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    error: str | None = None

    @property
    def excluded(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class _Job:
    scenario: Scenario
    prior: PriorSpec | Mapping | None
    cfg: McmcConfig
    mode: str
    master_seed: int
    level: float
    sampler: Sampler


def _resolve_prior(prior, data: Dataset) -> PriorSpec:
    if isinstance(prior, PriorSpec):
        return prior
    return default_prior(data, **dict(prior or {}))


def _run_one(job: _Job, r: int) -> ReplicationResult:
    data_seed, sampler_seed = replication_seeds(job.master_seed, r)
    data, _ = simulate_dataset(job.scenario, data_seed)
    k = job.scenario.true_k
    try:
        prior = _resolve_prior(job.prior, data)
        cfg = McmcConfig(job.cfg.n_sweeps, job.cfg.burn_in, job.cfg.thin, sampler_seed)
        chain = job.sampler(data, prior, cfg, job.mode, k)
        _, mode_k = k_posterior(chain)
        if mode_k != k:
            return ReplicationResult(r, data_seed, sampler_seed, mode_k)
        summary = posterior_summary(condition_on_modal_k(chain), job.level)
    except NumericFailureError as exc:
        return ReplicationResult(r, data_seed, sampler_seed, error=str(exc))
    # drop beta: it has no true value to score against
    return ReplicationResult(
        r, data_seed, sampler_seed, mode_k,
        tuple(summary.mean[:-1].tolist()), tuple(summary.lower[:-1].tolist()), tuple(summary.upper[:-1].tolist()),
    )


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class MetricsTable:
    """Per-parameter study metrics plus the k-recovery rate.

    ``k_recovery_rate`` is None in fixed-k mode.  Parameter metrics are taken
    over the ``n_scored`` replications whose modal k equals the true k.
    """

    parameters: tuple[str, ...]
    srmse: tuple[float, ...]
    mae: tuple[float, ...]
    coverage: tuple[float, ...]
    width: tuple[float, ...]
    k_recovery_rate: float | None
    R: int
    n_scored: int
    excluded: tuple[int, ...] = ()
    exclusion_errors: tuple[str, ...] = ()
    mode: str = "rj"
    scenario: str = ""
    master_seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if any(not 0.0 <= c <= 100.0 for c in self.coverage if not math.isnan(c)):
            raise InvalidInputError("coverage must lie in [0, 100]")
        if any(w < 0 for w in self.width if not math.isnan(w)):
            raise InvalidInputError("interval widths must be non-negative")
        if self.k_recovery_rate is not None and not 0.0 <= self.k_recovery_rate <= 1.0:
            raise InvalidInputError("k recovery rate must lie in [0, 1]")

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)

    def row(self, name: str) -> dict:
        i = self.parameters.index(name)
        return dict(zip(METRIC_COLUMNS, (self.srmse[i], self.mae[i], self.coverage[i], self.width[i])))

    def sidecar(self) -> dict:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "R": self.R,
            "master_seed": self.master_seed,
            "k_recovery_rate": self.k_recovery_rate,
            "n_scored": self.n_scored,
            "exclusions": self.n_excluded,
            "excluded_replications": list(self.excluded),
            "exclusion_errors": list(self.exclusion_errors),
            **self.extra,
        }


def _mean(values) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def aggregate(scenario: Scenario, results, mode: str, R: int, master_seed: int = 0) -> MetricsTable:
    """Combine replication results into a :class:`MetricsTable`.

    The result depends only on the set of replications, not their order.
    """
    results = sorted(results, key=lambda res: res.r)
    kept = [res for res in results if not res.excluded]
    scored = [res for res in kept if res.mean is not None]
    truth = np.concatenate([scenario.true_w, scenario.true_mu, scenario.true_sigma2])
    names = tuple(f"{p}_{j}" for p in ("w", "mu", "sigma2") for j in range(1, scenario.true_k + 1))
    srmse, mae, coverage, width = [], [], [], []
    for i, t in enumerate(truth):
        err = [res.mean[i] - t for res in scored]
        srmse.append(math.sqrt(_mean([e * e for e in err])) if err else math.nan)
        mae.append(_mean([abs(e) for e in err]))
        hits = [100.0 if res.lower[i] <= t <= res.upper[i] else 0.0 for res in scored]
        coverage.append(_mean(hits))
        width.append(_mean([res.upper[i] - res.lower[i] for res in scored]))
    rate = None
    if mode == "rj":
        rate = sum(res.modal_k == scenario.true_k for res in kept) / len(kept) if kept else math.nan
    excluded = [res for res in results if res.excluded]
    return MetricsTable(
        names, tuple(srmse), tuple(mae), tuple(coverage), tuple(width), rate, R, len(scored),
        tuple(res.r for res in excluded), tuple(res.error for res in excluded),
        mode, scenario.label, master_seed,
    )


def run_replication_study(
    scenario: Scenario,
    prior: PriorSpec | Mapping | None,
    cfg: McmcConfig,
    R: int,
    mode: str = "rj",
    *,
    master_seed: int = 0,
    workers: int = 1,
    level: float = 0.95,
    sampler: Sampler = run_sampler,
) -> MetricsTable:
    """Run ``R`` independent replications and aggregate their metrics.

    ``prior`` is either a fixed :class:`PriorSpec` or overrides applied to the
    data-dependent defaults of each simulated dataset.  Replications that fail
    numerically are excluded and reported; more than 5% exclusions raise
    :class:`StudyFailureError` carrying the table.
    """
    if R < 1:
        raise InvalidInputError(f"R must be at least 1, got {R}")
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}, got {mode!r}")
    if workers < 1:
        raise InvalidInputError(f"workers must be positive, got {workers}")
    job = _Job(scenario, prior, cfg, mode, master_seed, level, sampler)
    if workers == 1 or R == 1:
        results = [_run_one(job, r) for r in range(1, R + 1)]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
            results = list(pool.map(_run_one, [job] * R, range(1, R + 1)))
    table = aggregate(scenario, results, mode, R, master_seed)
    if table.n_excluded > MAX_EXCLUDED_FRACTION * R:
        raise StudyFailureError(f"{table.n_excluded} of {R} replications failed numerically", table)
    return table


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# output files


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".17g")


def write_metrics_csv(path, table: MetricsTable) -> None:
    """One row per parameter with columns SRMSE, MAE, Cov%, Wid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("parameter",) + METRIC_COLUMNS)
        for i, name in enumerate(table.parameters):
            writer.writerow((name, _fmt(table.srmse[i]), _fmt(table.mae[i]), _fmt(table.coverage[i]), _fmt(table.width[i])))


def write_metrics(directory, table: MetricsTable, config: dict | None = None) -> None:
    """Write ``metrics.csv`` and the ``metrics.json`` sidecar into ``directory``."""
    write_metrics_csv(os.path.join(directory, "metrics.csv"), table)
    payload = table.sidecar()
    if config is not None:
        payload["config"] = config
    write_json(os.path.join(directory, "metrics.json"), payload)
