import dataclasses
import math

import numpy as np
import pytest

from lrbridge.errors import DomainError, EmptyInputError, InputParseError
from lrbridge.experiments import (
    GRID_SCHEMA,
    GridCellResult,
    GridConfig,
    _cell_tasks,
    _run_cell,
    confidence_interval,
    derive_seed,
    parallel_map,
    run_grid,
    summarize,
)

SMALL = GridConfig(
    rho_values=(0.3, 0.7), cv_values=(2.0,), eta_values=(1.2, 2.0), reps_per_cell=2, n_potential=20_000, base_seed=5
)


def _square(x):
    return x * x


class TestSeeds:
    def test_deterministic_64_bit(self):
        s = derive_seed(0, 1, 2, 3, 4)
        assert s == derive_seed(0, 1, 2, 3, 4)
        assert 0 <= s < 2**64

    def test_distinct_keys(self):
        seeds = {derive_seed(0, i, j, k, r) for i in range(5) for j in range(5) for k in range(5) for r in range(5)}
        assert len(seeds) == 625

    def test_base_seed_matters(self):
        assert derive_seed(0, 1) != derive_seed(1, 1)


class TestHelpers:
    def test_parallel_map_order(self):
        assert parallel_map(_square, list(range(10)), 2) == [x * x for x in range(10)]
        assert parallel_map(_square, [3], 4) == [9]

    def test_confidence_interval(self):
        low, high, mean = confidence_interval([0.0, 10.0])
        # Student t with 1 df is Cauchy: quantile tan(pi (q - 1/2))
        half = math.tan(math.pi * 0.475) * math.sqrt(50) / math.sqrt(2)
        assert mean == 5.0
        # scipy's t quantile at 1 df is good to ~2e-11 relative
        assert (low, high) == pytest.approx((5 - half, 5 + half), rel=1e-9)

    def test_confidence_interval_errors(self):
        with pytest.raises(EmptyInputError):
            confidence_interval([1.0])
        with pytest.raises(DomainError):
            confidence_interval([1.0, 2.0], confidence=1.0)


class TestGridConfig:
    def test_defaults(self):
        c = GridConfig()
        assert c.n_simulations == 625
        assert c.n_potential == 1_000_000

    def test_round_trip(self):
        d = SMALL.to_dict()
        assert d["schema"] == GRID_SCHEMA
        assert GridConfig.from_dict(d) == SMALL

    @pytest.mark.parametrize(
        "data", [{"schema": "other/9"}, {"typo": 1}, {"reps_per_cell": 0}, [], {"rho_values": []}]
    )
    def test_from_dict_rejects(self, data):
        with pytest.raises((InputParseError, DomainError)):
            GridConfig.from_dict(data)


class TestRunGrid:
    def test_rows_and_order(self):
        results, summary = run_grid(SMALL)
        assert len(results) == SMALL.n_simulations == summary.n_cells
        assert [(r.rho, r.eta, r.rep) for r in results[:4]] == [(0.3, 1.2, 0), (0.3, 1.2, 1), (0.3, 2.0, 0), (0.3, 2.0, 1)]
        assert all(r.ok for r in results)
        assert len({r.seed for r in results}) == len(results)

    def test_parallelism_invariant(self):
        assert run_grid(SMALL, parallelism=1) == run_grid(SMALL, parallelism=2)

    def test_grid_extension_keeps_cell_streams(self):
        bigger = dataclasses.replace(SMALL, eta_values=(1.2, 2.0, 2.5))
        small_results, _ = run_grid(SMALL)
        big_results, _ = run_grid(bigger)
        big = {(r.rho, r.cv, r.eta, r.rep): r for r in big_results}
        assert all(big[(r.rho, r.cv, r.eta, r.rep)] == r for r in small_results)

    def test_failed_cells_are_recorded(self):
        cfg = GridConfig(
            rho_values=(0.5,), cv_values=(2.0,), eta_values=(1.2,), reps_per_cell=2,
            n_potential=20_000, min_converted=20_000, max_resample_attempts=2,
        )
        task = next(_cell_tasks(cfg))
        row = _run_cell(task)
        assert row.status == "failed" and not row.ok
        assert math.isnan(row.empirical_lr) and math.isnan(row.ape_percent)
        assert 0 < row.n_converted < 20_000
        with pytest.raises(EmptyInputError):
            run_grid(cfg)


class TestSummarize:
    def cell(self, rho, cv, eta, ape, status="ok"):
        return GridCellResult(rho, cv, eta, 0, 1, 1.0, 1.0, ape, 10, 0.5, status)

    def test_statistics(self):
        rows = [self.cell(0.2, 2.0, 1.2, 10.0), self.cell(0.2, 2.0, 2.0, 30.0), self.cell(0.7, 2.0, 1.2, 2.0),
                self.cell(0.7, 2.0, 2.0, float("nan"), "failed")]
        s = summarize(rows)
        assert s.median_ape == 10.0
        assert s.mean_ape == pytest.approx(14.0)
        assert s.per_slice_medians["rho=0.2"] == 20.0
        assert s.per_slice_medians["rho=0.7"] == 2.0
        assert s.per_slice_medians["eta=2.0"] == 30.0
        assert s.n_failed_cells == 1 and s.n_cells == 4

    def test_nan_never_leaks(self):
        rows = [self.cell(0.2, 2.0, 1.2, 5.0), self.cell(0.2, 2.0, 1.2, np.nan, "failed")]
        assert not math.isnan(summarize(rows).mean_ape)


class TestWorkedExamples:
    def test_constant_samples(self):
        assert confidence_interval([5, 5, 5, 5]) == (5.0, 5.0, 5.0)

    def test_interval_coverage(self):
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(1000):
            low, high, _ = confidence_interval(rng.normal(0, 1, 10))
            hits += low <= 0 <= high
        assert 930 <= hits <= 970

    def cells(self, apes):
        return [GridCellResult(0.5, 2.0, 1.2, i, i, 1.0, 1.0, a, 10, 0.5) for i, a in enumerate(apes)]

    def test_odd_median(self):
        s = summarize(self.cells([10.0, 20.0, 30.0]))
        assert (s.median_ape, s.mean_ape) == (20.0, 20.0)

    def test_even_median_is_midpoint(self):
        assert summarize(self.cells([10.0, 20.0])).median_ape == 15.0

    def test_single_cell_twice_identical(self):
        cfg = GridConfig(rho_values=(0.7,), cv_values=(2.0,), eta_values=(1.2,), reps_per_cell=1,
                         n_potential=50_000, base_seed=123)
        assert run_grid(cfg) == run_grid(cfg)
