"""
Tests for the numerical checks of the solved series against direct integration.
"""

import pytest
import numpy as np
import pandas as pd

# Add the parent directory to the path to import qpreduce modules
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from qpreduce.config import GOLDEN_OMEGA
from qpreduce.errors import IntegrationBudgetError
from qpreduce.model import ComplexMatrixField
from qpreduce.series import evaluate_mu, series_functions, solve_series
from qpreduce.verify import (conjugation_residual, conservation_drift, det_drift, fit_scaling_exponent,
                             fixed_point_defects_by_order, fixed_point_residual, fixed_point_table, halving_ratios,
                             integrate_auxiliary, integrate_full, reducibility_check, reducibility_scaling,
                             rotation_closed_form, scaling_gates, trajectory_frame, verify_table)


def golden_sparse():
    """g12,(1,0) = 1 and g21,(-1,0) = 1"""
    return ComplexMatrixField({(1, 0): [[0, 1], [0, 0]], (-1, 0): [[0, 0], [1, 0]]})


@pytest.fixture
def series():
    """Two-mode series to order 3 at lambda0 = 0.8"""
    return solve_series(golden_sparse(), GOLDEN_OMEGA, 0.8, 3)


class TestIntegrators:
    """Test cases for the RK4 integrators"""

    def test_unperturbed_rotation(self):
        """Test that eps = 0 reproduces exp(lambda A t)"""
        traj = integrate_full(0.8, 0.0, golden_sparse(), GOLDEN_OMEGA, np.eye(2), 10.0, 1e-3)
        expected = rotation_closed_form(0.8, traj.times)
        assert np.max(np.abs(traj.states - expected)) < 1e-10

    def test_fourth_order_convergence(self):
        """Test that halving the step cuts the error by about 16"""
        g = golden_sparse()
        reference = integrate_full(0.8, 0.05, g, GOLDEN_OMEGA, np.eye(2), 2.0, 0.05 / 8).states[-1]
        coarse = integrate_full(0.8, 0.05, g, GOLDEN_OMEGA, np.eye(2), 2.0, 0.05).states[-1]
        fine = integrate_full(0.8, 0.05, g, GOLDEN_OMEGA, np.eye(2), 2.0, 0.025).states[-1]
        ratio = np.max(np.abs(coarse - reference)) / np.max(np.abs(fine - reference))
        assert 12 <= ratio <= 20

    def test_determinant_preserved(self):
        """Test that the traceless flow keeps det x = 1"""
        traj = integrate_full(0.8, 1e-2, golden_sparse(), GOLDEN_OMEGA, np.eye(2), 10.0, 1e-3)
        assert det_drift(traj) < 1e-8

    def test_first_integral_preserved(self, series):
        """Test that H stays constant along the auxiliary flow"""
        eps = 1e-2
        a_fn, c_fn = series_functions(series, eps)
        psi0 = np.zeros(2)
        traj = integrate_auxiliary(eps, evaluate_mu(series, eps), 0.8, golden_sparse(), GOLDEN_OMEGA,
                                   complex(a_fn.evaluate(psi0)), complex(c_fn.evaluate(psi0)), 10.0, 1e-3)
        assert conservation_drift(traj) < 1e-9

    def test_step_budget(self):
        """Test that invalid steps and oversized grids raise"""
        with pytest.raises(IntegrationBudgetError):
            integrate_full(0.8, 0.0, golden_sparse(), GOLDEN_OMEGA, np.eye(2), 1.0, 0.0)
        with pytest.raises(IntegrationBudgetError):
            integrate_full(0.8, 0.0, golden_sparse(), GOLDEN_OMEGA, np.eye(2), 1e5, 1e-3)

    def test_trajectory_frame(self):
        """Test the dump layout of both trajectory kinds"""
        full = integrate_full(0.8, 0.0, golden_sparse(), GOLDEN_OMEGA, np.eye(2), 0.1, 0.01)
        assert list(trajectory_frame(full).columns) == ['t', 'x11', 'x12', 'x21', 'x22']
        aux = integrate_auxiliary(0.0, 0.0, 0.8, golden_sparse(), GOLDEN_OMEGA, 0j, 0.1 + 0j, 0.1, 0.01)
        frame = trajectory_frame(aux)
        assert list(frame.columns) == ['t', 'a_re', 'a_im', 'c_re', 'c_im']
        assert len(frame) == 11

    @pytest.mark.slow
    def test_long_horizon_drifts(self, series):
        """Test H and det drifts over T = 100"""
        eps = 1e-2
        traj = integrate_full(0.8 + evaluate_mu(series, eps), eps, golden_sparse(), GOLDEN_OMEGA, np.eye(2),
                              100.0, 1e-3)
        assert det_drift(traj) <= 1e-8
        a_fn, c_fn = series_functions(series, eps)
        psi0 = np.zeros(2)
        aux = integrate_auxiliary(eps, evaluate_mu(series, eps), 0.8, golden_sparse(), GOLDEN_OMEGA,
                                  complex(a_fn.evaluate(psi0)), complex(c_fn.evaluate(psi0)), 100.0, 1e-3)
        assert conservation_drift(aux) <= 1e-7


class TestConjugation:
    """Test cases for the conjugation residual and the fixed-point defects"""

    def test_zero_epsilon_residual(self, series):
        """Test that B = 1 at eps = 0 leaves no residual"""
        t_grid = np.linspace(0.0, 10.0, 51)
        assert conjugation_residual(series, 0.0, 0.8, golden_sparse(), GOLDEN_OMEGA, t_grid) == 0.0

    def test_first_order_truncation(self):
        """Test that the K = 1 defect halves by a factor 4"""
        short = solve_series(golden_sparse(), GOLDEN_OMEGA, 0.8, 1)
        big, _ = fixed_point_residual(short, 1e-2, 0.8, golden_sparse(), GOLDEN_OMEGA, (0, 0))
        small, _ = fixed_point_residual(short, 5e-3, 0.8, golden_sparse(), GOLDEN_OMEGA, (0, 0))
        assert abs(big) / abs(small) == pytest.approx(4.0, rel=1e-6)

    def test_zero_field_residual(self):
        """Test that the zero field has no fixed-point defect"""
        zero = ComplexMatrixField({})
        series = solve_series(zero, GOLDEN_OMEGA, 0.8, 2)
        assert fixed_point_residual(series, 1e-2, 0.8, zero, GOLDEN_OMEGA, (0, 0)) == (0j, 0j)

    def test_residual_scaling(self, series):
        """Test that the residual shrinks like eps^4"""
        t_grid = np.linspace(0.0, 10.0, 201)
        big = conjugation_residual(series, 0.05, 0.8, golden_sparse(), GOLDEN_OMEGA, t_grid)
        small = conjugation_residual(series, 0.025, 0.8, golden_sparse(), GOLDEN_OMEGA, t_grid)
        assert 8 <= big / small <= 32

    def test_counterterm_needed(self, series):
        """Test that dropping mu^(2) inflates the residual"""
        t_grid = np.linspace(0.0, 10.0, 201)
        with_mu = conjugation_residual(series, 0.05, 0.8, golden_sparse(), GOLDEN_OMEGA, t_grid)
        without = conjugation_residual(series, 0.05, 0.8, golden_sparse(), GOLDEN_OMEGA, t_grid, mu=0.0)
        assert without >= 10 * with_mu

    def test_defects_vanish_to_order_K(self, series):
        """Test that the eps^m defects vanish for m <= K"""
        for nu in ((-1, 0), (0, 0), (1, 0)):
            for m, d1, d2 in fixed_point_defects_by_order(series, golden_sparse(), nu):
                if m <= 3:
                    assert abs(d1) < 1e-12 and abs(d2) < 1e-12

    def test_defect_at_next_order(self, series):
        """Test that the zero mode carries the missing mu^(4)"""
        defects = {m: d1 for m, d1, _ in fixed_point_defects_by_order(series, golden_sparse(), (0, 0))}
        assert abs(defects[4]) == pytest.approx(1.0 / 0.6 ** 3)

    def test_fixed_point_residual(self, series):
        """Test the summed defect against its leading term"""
        d1, _ = fixed_point_residual(series, 1e-2, 0.8, golden_sparse(), GOLDEN_OMEGA, (0, 0))
        assert abs(d1) == pytest.approx(1e-8 / 0.6 ** 3, rel=1e-2)

    def test_fixed_point_table(self, series):
        """Test the per-mode table"""
        table = fixed_point_table(series, golden_sparse(), 1e-2)
        assert list(table.columns) == ['nu', 'defect_a', 'defect_c']
        assert '(0, 0)' in set(table['nu'])
        assert table['defect_a'].max() < 1e-6


class TestReducibility:
    """Test cases for the comparison with the integrated flow"""

    def test_fit_exponent(self):
        """Test the log-log slope on exact powers"""
        assert fit_scaling_exponent([1.0, 2.0, 4.0], [1.0, 16.0, 256.0]) == pytest.approx(4.0)

    def test_check_report(self, series):
        """Test the report fields of a single check"""
        report = reducibility_check(series, 1e-2, 0.8, golden_sparse(), GOLDEN_OMEGA, 2.0, 1e-3)
        assert report.deviation < 1e-6
        assert report.sup_norm >= 1.0
        assert report.extras['mu'] == pytest.approx(1e-4 / 0.6)

    def test_deviation_exponent(self, series):
        """Test that the deviation scales like eps^4"""
        reports, exponent = reducibility_scaling(series, (1e-2, 5e-3, 2.5e-3), 0.8, golden_sparse(),
                                                 GOLDEN_OMEGA, 10.0, 1e-3)
        assert len(reports) == 3
        assert exponent == pytest.approx(4.0, abs=0.5)
        assert all(r.exponent == exponent for r in reports)

    def test_verify_table(self, series):
        """Test the verify table layout and the fitted exponents"""
        frame = verify_table(series, golden_sparse(), (1e-2, 5e-3), 2.0, 1e-3)
        assert list(frame.columns) == ['epsilon', 'residual', 'deviation', 'drift', 'det_drift', 'sup_norm',
                                       'fitted_exponent', 'residual_exponent']
        assert frame['residual_exponent'].iloc[0] == pytest.approx(4.0, abs=0.5)
        assert frame['det_drift'].max() < 1e-8


def synthetic_table(power=4.0, drift=1e-9, det=1e-10, scale=3.0):
    """Verify table with residual and deviation exactly scale * eps^power"""
    eps = np.array([1e-2, 5e-3, 2.5e-3])
    frame = pd.DataFrame({'epsilon': eps, 'residual': scale * eps ** power,
                          'deviation': 0.5 * scale * eps ** power, 'drift': drift, 'det_drift': det,
                          'sup_norm': 1.0})
    frame['fitted_exponent'] = fit_scaling_exponent(frame['epsilon'], frame['deviation'])
    frame['residual_exponent'] = fit_scaling_exponent(frame['epsilon'], frame['residual'])
    return frame


class TestScalingGates:
    """Test cases for the pass/fail gates on the verify table"""

    def test_halving_ratios(self):
        """Test ratios of consecutive halved rows"""
        assert halving_ratios(synthetic_table()) == pytest.approx([16.0, 16.0])

    def test_halving_ratios_skip_other_steps(self):
        """Test that rows not related by halving are skipped"""
        frame = pd.DataFrame({'epsilon': [1e-2, 3e-3, 1.5e-3], 'residual': [1.0, 0.5, 0.1]})
        assert halving_ratios(frame) == pytest.approx([5.0])

    def test_pass(self):
        """Test that eps^4 scaling with small drifts passes at K = 3"""
        gates = scaling_gates(synthetic_table(), 3)
        assert gates['passed']
        assert gates['deviation_exponent'] == pytest.approx(4.0)
        assert gates['residual_ratios'] == pytest.approx([16.0, 16.0])

    def test_deviation_exponent_window(self):
        """Test that a cubic deviation fails the [3.5, 4.5] window"""
        frame = synthetic_table()
        frame['fitted_exponent'] = 3.0
        gates = scaling_gates(frame, 3)
        assert not gates['deviation_exponent_ok']
        assert not gates['passed']

    def test_residual_ratio_window(self):
        """Test that residual ratios of 4 under halving fail"""
        gates = scaling_gates(synthetic_table(power=2.0), 3)
        assert gates['residual_ratios'] == pytest.approx([4.0, 4.0])
        assert not gates['residual_ratio_ok']
        assert not gates['passed']

    def test_drift_gate(self):
        """Test that H drift above 1e-7 fails"""
        gates = scaling_gates(synthetic_table(drift=1e-6), 3)
        assert not gates['drift_ok']
        assert gates['det_drift_ok']
        assert not gates['passed']

    def test_det_drift_gate(self):
        """Test that det drift above 1e-8 fails"""
        assert not scaling_gates(synthetic_table(det=1e-7), 3)['passed']

    def test_trivial_field(self):
        """Test that a zero field only has to conserve"""
        frame = pd.DataFrame({'epsilon': [1e-2, 5e-3], 'residual': 0.0, 'deviation': 0.0, 'drift': 1e-12,
                              'det_drift': 0.0, 'sup_norm': 1.0, 'fitted_exponent': np.nan,
                              'residual_exponent': np.nan})
        assert scaling_gates(frame, 3, trivial=True)['passed']
        frame['drift'] = 1e-6
        assert not scaling_gates(frame, 3, trivial=True)['passed']

    @pytest.mark.slow
    def test_integrated_table_passes(self, series):
        """Test the gates on an integrated table over T = 10"""
        frame = verify_table(series, golden_sparse(), (1e-2, 5e-3, 2.5e-3), 10.0, 1e-3)
        gates = scaling_gates(frame, series.K)
        assert 3.5 <= gates['deviation_exponent'] <= 4.5
        assert gates['max_drift'] <= 1e-7
        assert gates['passed']


if __name__ == "__main__":
    pytest.main([__file__])
