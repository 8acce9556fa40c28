"""
Tests for the lambda0 scan, the excluded measure and the lambda0 -> lambda map.
"""

import pytest
import numpy as np

# Add the parent directory to the path to import qpreduce modules
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from qpreduce.config import GOLDEN_OMEGA
from qpreduce.errors import IntervalCollapse, ValidationError
from qpreduce.measure import (LambdaInterval, accepted_neighbors, constant_stability, estimate_margin,
                              fit_excluded_constant, image_monotone, image_slopes, interval_setup, lambda_image,
                              lambda_map, scan_lambda0, series_ceiling)
from qpreduce.model import ComplexMatrixField
from qpreduce.smalldiv import build_scale_system


def golden_sparse():
    """g12,(1,0) = 1 and g21,(-1,0) = 1"""
    return ComplexMatrixField({(1, 0): [[0, 1], [0, 0]], (-1, 0): [[0, 0], [1, 0]]})


def scan(C1, grid_size=10000):
    scales = build_scale_system(GOLDEN_OMEGA, 6, C1=C1)
    return scan_lambda0((0.6, 1.1), grid_size, scales, 64)


class TestScan:
    """Test cases for the grid scan of the Melnikov gate"""

    def test_report_layout(self):
        """Test the grid, the frame and the summary"""
        report = scan(0.1, grid_size=1000)
        assert len(report.grid) == 1000
        assert report.spacing == pytest.approx(5e-4)
        assert report.grid[0] == pytest.approx(0.6 + 2.5e-4)
        frame = report.to_frame()
        assert list(frame.columns) == ['lambda0', 'accepted', 'worst_nu', 'margin', 'lambda_image']
        summary = report.summary()
        assert summary['grid_size'] == 1000
        assert summary['rejected'] == report.n_rejected
        assert 'resonances_met' in summary

    def test_excluded_below_union(self):
        """Test that the grid estimate stays below the union of resonance intervals"""
        report = scan(4e-3)
        slack = report.spacing * report.extras['resonances_met']
        assert report.excluded_measure <= report.union_ceiling + slack

    def test_linear_in_C1(self):
        """Test that doubling C1 roughly doubles the excluded measure"""
        small = scan(4e-3).excluded_measure
        large = scan(8e-3).excluded_measure
        assert small > 0
        assert 1.4 <= large / small <= 2.6

    def test_fitted_constant(self):
        """Test that each measure sits within half of the fitted line"""
        C1_values = [2e-3, 4e-3, 8e-3]
        measures = [scan(C1).excluded_measure for C1 in C1_values]
        constant = fit_excluded_constant(C1_values, measures)
        assert constant > 0
        for C1, measure in zip(C1_values, measures):
            assert measure == pytest.approx(constant * C1, rel=0.5)

    def test_constant_stability_exact_line(self):
        """Test ratios of one on an exact line"""
        ratios, stable = constant_stability([1e-3, 2e-3, 4e-3], [2e-3, 4e-3, 8e-3], 2.0)
        assert ratios == pytest.approx([1.0, 1.0, 1.0])
        assert stable

    def test_constant_stability_outlier(self):
        """Test that one measure at twice the line is unstable"""
        C1_values = [1e-3, 2e-3, 4e-3]
        measures = [4e-3, 4e-3, 8e-3]
        constant = fit_excluded_constant(C1_values, measures)
        ratios, stable = constant_stability(C1_values, measures, constant)
        assert ratios[0] > 1.5
        assert not stable

    def test_constant_stability_no_exclusion(self):
        """Test that an empty excluded set counts as stable"""
        ratios, stable = constant_stability([1e-3, 2e-3], [0.0, 0.0], 0.0)
        assert list(ratios) == [1.0, 1.0]
        assert stable

    def test_scanned_constant_stable(self):
        """Test the fitted constant on scanned measures"""
        C1_values = [2e-3, 4e-3, 8e-3]
        measures = [scan(C1).excluded_measure for C1 in C1_values]
        constant = fit_excluded_constant(C1_values, measures)
        ratios, stable = constant_stability(C1_values, measures, constant)
        assert stable
        assert np.all((ratios >= 0.5) & (ratios <= 1.5))

    def test_series_ceiling(self):
        """Test that the ceiling equals C1 for two frequencies"""
        scales = build_scale_system(GOLDEN_OMEGA, 6, C1=4e-3)
        assert series_ceiling(scales) == pytest.approx(4e-3)

    def test_empty_interval(self):
        """Test that a reversed interval raises"""
        scales = build_scale_system(GOLDEN_OMEGA, 6, C1=0.1)
        with pytest.raises(ValidationError):
            scan_lambda0((1.1, 0.6), 1000, scales, 64)


class TestInterval:
    """Test cases for the shrunk lambda0 interval"""

    def test_shrink(self):
        """Test a0 = a + A eps^2 / C1 and b0 = b - A eps^2 / C1"""
        interval = interval_setup(0.6, 1.1, 1e-2, 1.0, 0.0, 0.1)
        assert interval.a0 == pytest.approx(0.601)
        assert interval.b0 == pytest.approx(1.099)
        assert interval.gap is None

    def test_shift_by_mu1(self):
        """Test that both ends move by -eps mu1"""
        interval = interval_setup(0.6, 1.1, 1e-2, 0.0, 0.5, 0.1)
        assert interval.a0 == pytest.approx(0.595)
        assert interval.b0 == pytest.approx(1.095)

    def test_zero_epsilon(self):
        """Test that eps = 0 keeps [a, b] and opens no gap"""
        interval = interval_setup(-1.0, 1.0, 0.0, 5.0, 0.3, 0.1)
        assert (interval.a0, interval.b0) == (-1.0, 1.0)
        assert interval.gap is None

    def test_collapse(self):
        """Test that an over-shrunk interval raises"""
        with pytest.raises(IntervalCollapse):
            interval_setup(0.6, 0.601, 0.1, 1.0, 0.0, 0.01)

    def test_origin_gap(self):
        """Test the gap of width |eps|^sigma around zero"""
        interval = interval_setup(-0.5, 0.5, 1e-2, 0.0, 0.0, 0.1, sigma=0.5)
        assert interval.gap == pytest.approx((-0.05, 0.05))
        assert interval.segments() == [(-0.5, -0.05), (0.05, 0.5)]
        assert interval.length == pytest.approx(0.9)

    def test_segments_without_gap(self):
        """Test the single segment"""
        assert LambdaInterval(0.2, 0.4).segments() == [(0.2, 0.4)]


class TestLambdaMap:
    """Test cases for mu(lambda0) and the image of the accepted set"""

    def test_margin(self):
        """Test A = max |mu| C1 / eps^2 on the two-mode field"""
        A = estimate_margin(golden_sparse(), GOLDEN_OMEGA, [0.7, 0.9], 1e-2, 3, 4e-3)
        assert A == pytest.approx(4e-3 / 0.4)

    def test_margin_zero_epsilon(self):
        """Test that eps = 0 needs no margin"""
        assert estimate_margin(golden_sparse(), GOLDEN_OMEGA, [0.7], 0.0, 3, 4e-3) == 0.0

    def test_margin_skips_small_divisors(self):
        """Test that a pre-scan point on the c resonance is skipped"""
        A = estimate_margin(golden_sparse(), GOLDEN_OMEGA, [0.5, 0.7], 1e-2, 3, 4e-3)
        assert A == pytest.approx(4e-3 / 0.4)

    def test_map_value_and_slope(self):
        """Test lambda = lambda0 + eps^2 / D and dmu/dlambda0 = -2 eps^2 / D^2"""
        result = lambda_map(0.8, 1e-2, golden_sparse(), GOLDEN_OMEGA, 3, C1=0.1)
        assert result.mu == pytest.approx(1e-4 / 0.6)
        assert result.lambda_value == pytest.approx(0.8 + 1e-4 / 0.6)
        assert result.dmu_dlambda0 == pytest.approx(-2e-4 / 0.36, rel=1e-4)
        assert abs(result.dmu_dlambda0) <= 0.1
        assert result.slope_constant == pytest.approx(0.1 * 2.0 / 0.36, rel=1e-4)

    def test_map_across_neighbors(self):
        """Test the difference quotient across two accepted neighbors"""
        result = lambda_map(0.8, 1e-2, golden_sparse(), GOLDEN_OMEGA, 3, C1=0.1, neighbors=(0.79, 0.81))
        assert result.mu == pytest.approx(1e-4 / 0.6)
        assert result.dmu_dlambda0 == pytest.approx(-2e-4 / (0.58 * 0.62), rel=1e-6)
        assert result.slope_constant == pytest.approx(0.1 * 2.0 / (0.58 * 0.62), rel=1e-6)

    def test_accepted_neighbors(self):
        """Test the nearest accepted points on each side"""
        report = scan(0.1, grid_size=1000)
        accepted = report.grid[report.accepted]
        below, above = accepted_neighbors(report, accepted[5])
        assert below == accepted[4]
        assert above == accepted[6]
        with pytest.raises(ValidationError):
            accepted_neighbors(report, 0.5)

    def test_map_at_accepted_point(self):
        """Test that the neighbor slope at a grid point is O(eps^2 / C1)"""
        report = scan(0.1, grid_size=1000)
        lam = float(report.grid[report.accepted][50])
        neighbors = accepted_neighbors(report, lam)
        result = lambda_map(lam, 1e-2, golden_sparse(), GOLDEN_OMEGA, 3, C1=0.1, neighbors=neighbors)
        D_low, D_high = 2.0 * neighbors[0] - 1.0, 2.0 * neighbors[1] - 1.0
        assert result.dmu_dlambda0 == pytest.approx(-2e-4 / (D_low * D_high), rel=1e-6)
        assert abs(result.dmu_dlambda0) <= 5.0 * 1e-4 / 0.1

    def test_image_slopes(self):
        """Test dmu/dlambda0 between consecutive image points against -2 eps^2 / (D D')"""
        report = scan(0.1, grid_size=1000)
        lambda_image(report, golden_sparse(), GOLDEN_OMEGA, 1e-2, 3, stride=50)
        slopes = image_slopes(report, 1e-2)
        assert list(slopes.columns) == ['lambda0_low', 'lambda0_high', 'dmu_dlambda0', 'slope_constant']
        assert len(slopes) >= 1
        expected = -2e-4 / ((2.0 * slopes['lambda0_low'] - 1.0) * (2.0 * slopes['lambda0_high'] - 1.0))
        assert slopes['dmu_dlambda0'].to_numpy() == pytest.approx(expected.to_numpy(), rel=1e-6)
        assert slopes['slope_constant'].max() <= 5.0

    def test_image_slopes_without_image(self):
        """Test an empty table before the image is computed"""
        assert image_slopes(scan(0.1, grid_size=1000), 1e-2).empty

    def test_map_zero_epsilon(self):
        """Test lambda = lambda0 at eps = 0"""
        result = lambda_map(0.8, 0.0, golden_sparse(), GOLDEN_OMEGA, 3, C1=0.1)
        assert result.lambda_value == 0.8
        assert result.dmu_dlambda0 == 0.0
        assert result.slope_constant is None

    def test_image_monotone(self):
        """Test that the image of the accepted points increases"""
        report = scan(0.1, grid_size=1000)
        image = lambda_image(report, golden_sparse(), GOLDEN_OMEGA, 1e-2, 3, stride=50)
        evaluated = image[~np.isnan(image)]
        assert len(evaluated) >= 2
        assert np.all(np.isnan(image[~report.accepted]))
        assert image_monotone(report)

    def test_monotone_without_image(self):
        """Test that a scan without an image counts as monotone"""
        assert image_monotone(scan(0.1, grid_size=1000))


if __name__ == "__main__":
    pytest.main([__file__])
