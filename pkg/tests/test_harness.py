"""Tests for ensembles, phase cells, diagrams and the empirical threshold."""

import logging
import math

import numpy as np
import pytest

from weakthresh import harness
from weakthresh.harness import (
    EnsembleSpec,
    PhaseCell,
    SpecError,
    empirical_threshold,
    estimate_phase_diagram,
    round_half_up,
    run_cell,
    sample_instance,
    trial_stream,
)
from weakthresh.thresholds import beta_w_fundamental

BW = beta_w_fundamental(0.5).beta_w


class TestEnsembleSpec:
    def test_rounding(self):
        s = EnsembleSpec(10, 0.25, 0.05)
        assert (s.m, s.k) == (3, 1)
        assert round_half_up(2.5) == 3 and round_half_up(3.5) == 4

    def test_aliases(self):
        assert EnsembleSpec(10, 0.5, 0.1, "standard-normal").nonzero_law == "normal"

    @pytest.mark.parametrize(
        "kw",
        [
            dict(n=0, alpha=0.5, beta=0.1),
            dict(n=10, alpha=0.01, beta=0.0),
            dict(n=10, alpha=1.2, beta=0.1),
            dict(n=10, alpha=0.5, beta=0.6),
            dict(n=10, alpha=0.5, beta=-0.2),
            dict(n=10, alpha=0.5, beta=0.1, nonzero_law="cauchy"),
            dict(n=10, alpha=0.5, beta=0.1, master_seed=-1),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(SpecError):
            EnsembleSpec(**kw)


class TestSampling:
    def test_k_zero(self):
        inst = sample_instance(EnsembleSpec(50, 0.5, 0.0), 0)
        assert not inst.truth.any() and not inst.measurements.any()

    def test_bit_identical(self):
        spec = EnsembleSpec(60, 0.5, 0.1, master_seed=99)
        a, b = sample_instance(spec, 4), sample_instance(spec, 4)
        assert a.matrix.tobytes() == b.matrix.tobytes()
        assert a.truth.tobytes() == b.truth.tobytes()

    def test_streams_differ(self):
        spec = EnsembleSpec(60, 0.5, 0.1, master_seed=99)
        assert sample_instance(spec, 0).matrix.tobytes() != sample_instance(spec, 1).matrix.tobytes()
        a = trial_stream(1, 0.5, 0.1, 0).standard_normal()
        b = trial_stream(1, 0.5, 0.1 + 1e-16, 0).standard_normal()
        assert a != b

    def test_exact_sparsity(self):
        inst = sample_instance(EnsembleSpec(1000, 0.5, 0.1), 0)
        assert np.count_nonzero(inst.truth) == 100
        assert np.array_equal(inst.measurements, inst.matrix @ inst.truth)

    def test_rademacher(self):
        inst = sample_instance(EnsembleSpec(100, 0.5, 0.1, "rademacher"), 3)
        assert set(np.abs(inst.truth[inst.support])) == {1.0}

    def test_distribution(self):
        inst = sample_instance(EnsembleSpec(400, 0.5, 0.1), 0)
        a = inst.matrix.ravel()
        assert abs(a.mean()) < 0.02 and abs(a.std() - 1.0) < 0.02


class TestRunCell:
    def test_beta_zero(self):
        c = run_cell(EnsembleSpec(40, 0.5, 0.0), "bp", 5)
        assert c.successes == c.trials == 5

    def test_invalid_trials(self):
        with pytest.raises(ValueError):
            run_cell(EnsembleSpec(40, 0.5, 0.0), "bp", 0)

    def test_cell_invariant(self):
        with pytest.raises(ValueError):
            PhaseCell(0.5, 0.1, 3, 4, 0.0)

    def test_solver_errors_are_failures(self, monkeypatch, caplog):
        def boom(name, inst, options=None):
            raise RuntimeError("solver exploded")

        monkeypatch.setattr(harness, "solve", boom)
        with caplog.at_level(logging.WARNING):
            c = run_cell(EnsembleSpec(20, 0.5, 0.1), "bp", 3)
        assert c.successes == 0 and math.isnan(c.mean_rel_error)
        assert "solver exploded" in caplog.text

    def test_order_independent(self):
        spec = EnsembleSpec(40, 0.5, 0.2, master_seed=3)
        errors = [harness.run_trial(spec, "omp", t) for t in range(8)]
        a = harness._cell_from_errors(spec, errors)
        b = harness._cell_from_errors(spec, errors[::-1])
        assert a == b

    def test_separation_small(self):
        lo = run_cell(EnsembleSpec(200, 0.5, 0.7 * BW, master_seed=11), "bp", 30)
        hi = run_cell(EnsembleSpec(200, 0.5, 1.3 * BW, master_seed=11), "bp", 30)
        assert lo.success_rate >= 0.9 and hi.success_rate <= 0.1

    def test_success_rate_ordering(self):
        lo = run_cell(EnsembleSpec(200, 0.5, 0.5 * BW, master_seed=5), "bp", 400)
        hi = run_cell(EnsembleSpec(200, 0.5, 1.5 * BW, master_seed=5), "bp", 400)
        assert lo.successes > hi.successes + 300


class TestPhaseDiagram:
    def test_single_cell(self):
        spec = EnsembleSpec(30, 0.5, 0.1, master_seed=2)
        d = estimate_phase_diagram([0.5], [0.1], spec, "omp", 6)
        assert d.cells == [run_cell(spec, "omp", 6)]

    def test_empty_beta_row(self):
        d = estimate_phase_diagram([0.3, 0.5], [], EnsembleSpec(30, 0.5, 0.0), "bp", 2)
        assert d.cells == []

    def test_invalid_cell_recorded(self):
        d = estimate_phase_diagram([0.2], [0.0, 0.5], EnsembleSpec(30, 0.5, 0.0), "bp", 2)
        assert d.cells[1].successes == 0 and math.isnan(d.cells[1].mean_rel_error)
        assert d.cells[0].successes == 2

    def test_relative_grid(self):
        d = estimate_phase_diagram([0.5], [0.5], EnsembleSpec(30, 0.5, 0.0), "omp", 1, relative=True)
        assert d.cells[0].beta == 0.5 * BW

    def test_workers_do_not_change_results(self):
        args = ([0.3, 0.6], [0.05, 0.15], EnsembleSpec(40, 0.5, 0.0, master_seed=8), "bp", 4)
        a = estimate_phase_diagram(*args, workers=1)
        b = estimate_phase_diagram(*args, workers=3)
        assert a == b

    def test_grid_shape(self):
        d = estimate_phase_diagram([0.3, 0.6], [0.0, 0.05, 0.1], EnsembleSpec(20, 0.5, 0.0), "omp", 2)
        assert d.alpha_grid == [0.3, 0.6] and len(d.row(0.6)) == 3


class TestEmpiricalThreshold:
    def test_tol_guard(self):
        with pytest.raises(ValueError):
            empirical_threshold(0.5, "bp", 100, 5, 0.001)

    def test_degenerate_single_trial(self):
        r = empirical_threshold(0.5, "omp", 40, 1, 0.05)
        assert r.wide and r.lo <= r.beta_hat <= r.hi and r.probes

    def test_bracket_semantics(self):
        r = empirical_threshold(0.5, "bp", 100, 20, 0.02, master_seed=4)
        assert not r.non_monotone
        assert r.hi - r.lo <= 0.04 + 1e-12
        assert abs(r.beta_hat - BW) < 0.08

    def test_non_monotone_warning(self, monkeypatch, caplog):
        # the rate at 0.25 is far below the rate at 0.375, beyond binomial noise
        rates = {0.5: 0.0, 0.25: 0.55, 0.375: 1.0}

        def fake(spec, solver, trials, workers=1):
            r = rates.get(spec.beta, 0.0)
            return PhaseCell(spec.alpha, spec.beta, trials, round(r * trials), 0.0)

        monkeypatch.setattr(harness, "run_cell", fake)
        with caplog.at_level(logging.WARNING):
            r = empirical_threshold(0.5, "bp", 200, 100, 0.01)
        assert r.non_monotone and r.wide
        assert "non-monotone" in caplog.text
        assert r.lo == 0.25 and r.hi < 0.4
