import json
import math
import random
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from rjmix import InvalidInputError, McmcConfig, NumericFailureError, Scenario, StudyFailureError
from rjmix.replication import (
    OracleSampler,
    ReplicationResult,
    aggregate,
    builtin_scenarios,
    replication_seeds,
    run_replication_study,
    scenario_by_name,
    write_metrics,
)

ONE = Scenario((1.0,), (1.5,), (1.0,), 10, "one")
SMALL = McmcConfig(300, 100, 2)


def _result(r, mu, lo=0.0, hi=0.0, modal_k=1):
    return ReplicationResult(r, 0, 0, modal_k, (1.0, mu, 1.0), (1.0, lo, 1.0), (1.0, hi, 1.0))


@dataclass(frozen=True)
class FailOnSeeds:
    """Oracle sampler that fails numerically for the listed sampler seeds."""

    scenario: Scenario
    seeds: frozenset

    def __call__(self, data, prior, cfg, mode, k):
        if cfg.seed in self.seeds:
            raise NumericFailureError("overflow", 1)
        return OracleSampler(self.scenario)(data, prior, cfg, mode, k)


def _failing(scenario, master, rs):
    return FailOnSeeds(scenario, frozenset(replication_seeds(master, r)[1] for r in rs))


class TestScenarios:
    def test_heterogeneous(self):
        s = scenario_by_name("heterogeneous")
        assert s.true_w.tolist() == [0.17, 0.21, 0.34, 0.12, 0.16]
        assert s.true_mu.tolist() == [-3, 0, 4, 11, 16]
        assert s.true_sigma2.tolist() == [0.22, 1.95, 0.92, 0.74, 1.13]
        assert s.n == 100

    def test_homogeneous(self):
        assert scenario_by_name("homogeneous").true_mu.tolist() == [0, 2, 4, 6, 8]

    def test_k3(self):
        s = scenario_by_name("k3")
        assert (s.true_w.tolist(), s.true_mu.tolist(), s.true_sigma2.tolist(), s.n) == (
            [0.3, 0.4, 0.3], [-4, 0, 4], [1, 1, 1], 100
        )

    def test_k3_is_well_separated(self):
        # Bayes classifier on the true parameters misclassifies under 5% of points
        s = scenario_by_name("k3")
        y = np.linspace(-12, 12, 48_001)
        dens = np.array([w * np.exp(-0.5 * (y - m) ** 2 / v) / math.sqrt(2 * math.pi * v)
                         for w, m, v in zip(s.true_w, s.true_mu, s.true_sigma2)])
        error = trapezoid(dens.sum(0) - dens.max(0), y)
        assert error < 0.05

    def test_unknown_name(self):
        with pytest.raises(InvalidInputError, match="heterogeneous"):
            scenario_by_name("nope")

    def test_labels_unique(self):
        labels = [s.label for s in builtin_scenarios()]
        assert len(labels) == len(set(labels)) == 4


class TestSeeds:
    def test_deterministic_and_distinct(self):
        assert replication_seeds(7, 3) == replication_seeds(7, 3)
        seeds = {replication_seeds(7, r) for r in range(1, 1_001)}
        assert len(seeds) == 1_000
        assert replication_seeds(7, 1) != replication_seeds(8, 1)

    def test_data_and_sampler_seeds_differ(self):
        data_seed, sampler_seed = replication_seeds(0, 1)
        assert data_seed != sampler_seed and 0 <= data_seed < 2**64


class TestAggregate:
    def test_srmse_example(self):
        table = aggregate(ONE, [_result(1, 1.0), _result(2, 2.0)], "fixed", 2)
        row = table.row("mu_1")
        assert row["SRMSE"] == 0.5 and row["MAE"] == 0.5

    def test_coverage_example(self):
        table = aggregate(ONE, [_result(1, 1.0, 0.0, 2.0), _result(2, 3.5, 3.0, 4.0)], "fixed", 2)
        row = table.row("mu_1")
        assert row["Cov%"] == 50.0 and row["Wid"] == 1.5

    def test_recovery_rate_counts_unscored(self):
        results = [_result(1, 1.5, modal_k=1), ReplicationResult(2, 0, 0, 2)]
        table = aggregate(ONE, results, "rj", 2)
        assert table.k_recovery_rate == 0.5 and table.n_scored == 1
        assert aggregate(ONE, results, "fixed", 2).k_recovery_rate is None

    @given(values=st.lists(st.floats(-10, 10), min_size=1, max_size=30), seed=st.integers(0, 1_000))
    @settings(max_examples=60, deadline=None)
    def test_order_independent_and_bounded(self, values, seed):
        results = [_result(r, v, v - 1, v + 1) for r, v in enumerate(values, start=1)]
        shuffled = results[:]
        random.Random(seed).shuffle(shuffled)
        a, b = aggregate(ONE, results, "rj", len(values)), aggregate(ONE, shuffled, "rj", len(values))
        assert a == b
        mean_error = abs(math.fsum(v - 1.5 for v in values) / len(values))
        assert a.row("mu_1")["SRMSE"] >= mean_error - 1e-12 and a.row("mu_1")["SRMSE"] >= 0

    def test_coverage_bounds_enforced(self):
        table = aggregate(ONE, [_result(1, 1.5, 1.0, 2.0)], "fixed", 1)
        assert 0 <= table.row("mu_1")["Cov%"] <= 100
        with pytest.raises(InvalidInputError):
            type(table)(("x",), (0.0,), (0.0,), (101.0,), (0.0,), None, 1, 1)


class TestStudy:
    @pytest.mark.parametrize("mode", ["fixed", "rj"])
    def test_oracle_stub_is_exact(self, mode):
        scenario = scenario_by_name("k3")
        table = run_replication_study(scenario, None, SMALL, 2, mode, sampler=OracleSampler(scenario))
        assert set(table.srmse) == {0.0} and set(table.mae) == {0.0}
        assert set(table.coverage) == {100.0} and set(table.width) == {0.0}
        assert table.k_recovery_rate == (1.0 if mode == "rj" else None)

    def test_exclusions_within_budget(self):
        scenario = scenario_by_name("k3")
        table = run_replication_study(scenario, None, SMALL, 20, "fixed", sampler=_failing(scenario, 0, [3]))
        assert table.excluded == (3,) and table.n_scored == 19
        assert table.sidecar()["exclusions"] == 1

    def test_too_many_exclusions(self):
        scenario = scenario_by_name("k3")
        with pytest.raises(StudyFailureError) as err:
            run_replication_study(scenario, None, SMALL, 10, "fixed", sampler=_failing(scenario, 0, [3]))
        assert err.value.table.excluded == (3,)

    def test_invalid_arguments(self):
        scenario = scenario_by_name("k3")
        with pytest.raises(InvalidInputError):
            run_replication_study(scenario, None, SMALL, 0)
        with pytest.raises(InvalidInputError):
            run_replication_study(scenario, None, SMALL, 1, "other")

    def test_pure_function_of_inputs_and_worker_count(self):
        scenario = scenario_by_name("k3")
        serial = run_replication_study(scenario, {"gamma": 4.0}, SMALL, 4, "rj", master_seed=5)
        again = run_replication_study(scenario, {"gamma": 4.0}, SMALL, 4, "rj", master_seed=5)
        parallel = run_replication_study(scenario, {"gamma": 4.0}, SMALL, 4, "rj", master_seed=5, workers=2)
        assert serial == again == parallel

    def test_written_files(self, tmp_path):
        scenario = scenario_by_name("k3")
        table = run_replication_study(scenario, None, SMALL, 2, "fixed", sampler=OracleSampler(scenario))
        write_metrics(tmp_path, table, {"R": 2})
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == "parameter,SRMSE,MAE,Cov%,Wid" and len(lines) == 1 + 9
        assert lines[1] == "w_1,0,0,100,0"
        side = json.loads((tmp_path / "metrics.json").read_text())
        assert side["R"] == 2 and side["config"] == {"R": 2} and side["k_recovery_rate"] is None
