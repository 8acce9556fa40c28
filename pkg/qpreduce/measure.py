"""
Parameter scan over lambda0: the Melnikov gate on a grid, the measure of the
excluded set, and the map lambda0 -> lambda = lambda0 + mu(lambda0).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.linear_model import LinearRegression

from qpreduce.errors import IntervalCollapse, ReducibilityError, SmallDivisorViolation, ValidationError
from qpreduce.model import ComplexMatrixField
from qpreduce.series import DEFAULT_DIVISOR_FLOOR, evaluate_mu, solve_series
from qpreduce.smalldiv import ScaleSystem

logger = logging.getLogger(__name__)

CHUNK_SIZE = 256
DERIVATIVE_STEP = 1e-4
STABILITY_BAND = (0.5, 1.5)


@dataclass
class LambdaInterval:
    """Shrunk lambda0 interval with an optional gap around the origin"""
    a0: float
    b0: float
    gap: Optional[Tuple[float, float]] = None

    def segments(self) -> List[Tuple[float, float]]:
        if self.gap is None:
            return [(self.a0, self.b0)]
        lo, hi = self.gap
        out = []
        if self.a0 < lo:
            out.append((self.a0, min(lo, self.b0)))
        if hi < self.b0:
            out.append((max(hi, self.a0), self.b0))
        return out

    @property
    def length(self) -> float:
        return sum(b - a for a, b in self.segments())


@dataclass
class ScanReport:
    grid: np.ndarray
    accepted: np.ndarray
    worst_margin: np.ndarray
    worst_nu: np.ndarray
    C1: float
    spacing: float
    excluded_measure: float
    union_ceiling: float
    series_ceiling: float
    lambda_image: Optional[np.ndarray] = None
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(~self.accepted))

    def to_frame(self) -> pd.DataFrame:
        image = self.lambda_image if self.lambda_image is not None else np.full(len(self.grid), np.nan)
        return pd.DataFrame({
            'lambda0': self.grid,
            'accepted': self.accepted,
            'worst_nu': [str(tuple(int(v) for v in nu)) for nu in self.worst_nu],
            'margin': self.worst_margin,
            'lambda_image': image,
        })

    def summary(self) -> Dict:
        return {
            'grid_size': int(len(self.grid)),
            'C1': self.C1,
            'spacing': self.spacing,
            'rejected': self.n_rejected,
            'excluded_measure': self.excluded_measure,
            'union_ceiling': self.union_ceiling,
            'series_ceiling': self.series_ceiling,
            **self.extras,
        }


def _margins_chunk(lambdas: np.ndarray, frequencies: np.ndarray, thresholds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    margins = np.abs(frequencies[None, :] - 2.0 * lambdas[:, None]) - thresholds[None, :]
    index = np.argmin(margins, axis=1)
    return margins[np.arange(len(lambdas)), index], index


def series_ceiling(scales: ScaleSystem) -> float:
    """C1 sum_n 2^(n(d-1)) gamma_n"""
    n = np.arange(scales.n_max + 1)
    return float(scales.C1 * np.sum(2.0 ** (n * (scales.dimension - 1)) * scales.gamma))


def scan_lambda0(interval: Tuple[float, float], grid_size: int, scales: ScaleSystem, N_check: int,
                 jobs: int = 1) -> ScanReport:
    """Gate every cell center of the interval; excluded measure = spacing x rejected count"""
    a0, b0 = float(interval[0]), float(interval[1])
    if not a0 < b0:
        raise ValidationError(f"empty scan interval [{a0}, {b0}]")
    if grid_size < 1000:
        logger.warning(f"grid_size={grid_size} is too coarse for a meaningful measure estimate")
    spacing = (b0 - a0) / grid_size
    grid = a0 + spacing * (np.arange(grid_size) + 0.5)
    cat = scales.catalogue(N_check)

    chunks = [grid[i:i + CHUNK_SIZE] for i in range(0, grid_size, CHUNK_SIZE)]
    results = Parallel(n_jobs=jobs)(
        delayed(_margins_chunk)(chunk, cat.frequencies, cat.thresholds) for chunk in chunks
    )
    worst = np.concatenate([r[0] for r in results])
    index = np.concatenate([r[1] for r in results])
    accepted = worst > 0

    lo = (cat.frequencies - cat.thresholds) / 2.0
    hi = (cat.frequencies + cat.thresholds) / 2.0
    meets = (hi >= a0) & (lo <= b0)
    union = float(np.sum(cat.thresholds[meets]))

    report = ScanReport(grid=grid, accepted=accepted, worst_margin=worst, worst_nu=cat.momenta[index],
                        C1=scales.C1, spacing=spacing,
                        excluded_measure=spacing * int(np.count_nonzero(~accepted)),
                        union_ceiling=union, series_ceiling=series_ceiling(scales),
                        extras={'resonances_met': int(np.count_nonzero(meets))})
    logger.info(f"Scanned {grid_size} points on [{a0}, {b0}]: {report.n_rejected} rejected, "
                f"excluded measure {report.excluded_measure:.4e} (union ceiling {union:.4e})")
    return report


def fit_excluded_constant(C1_values: Sequence[float], measures: Sequence[float]) -> float:
    """Least-squares constant in measure = const x C1"""
    x = np.asarray(C1_values, dtype=float).reshape(-1, 1)
    y = np.asarray(measures, dtype=float)
    model = LinearRegression(fit_intercept=False).fit(x, y)
    return float(model.coef_[0])


def constant_stability(C1_values: Sequence[float], measures: Sequence[float], constant: float,
                       band: Tuple[float, float] = STABILITY_BAND) -> Tuple[np.ndarray, bool]:
    """measure / (constant x C1) per C1, and whether every ratio lies in the band"""
    C1 = np.asarray(C1_values, dtype=float)
    measures = np.asarray(measures, dtype=float)
    if not np.any(measures):
        return np.ones(len(C1)), True
    ratios = measures / (constant * C1) if constant > 0 else np.full(len(C1), np.nan)
    stable = bool(np.all((ratios >= band[0]) & (ratios <= band[1])))
    if not stable:
        logger.warning(f"⚠️ excluded-measure constant unstable: ratios {np.round(ratios, 3).tolist()}")
    return ratios, stable


def interval_setup(a: float, b: float, epsilon: float, A_margin: float, mu1: float, C1: float,
                   sigma: float = 0.5, gap_const: float = 1.0) -> LambdaInterval:
    """a0 = a - eps mu1 + A eps^2 / C1, b0 = b - eps mu1 - A eps^2 / C1, minus an origin gap"""
    if C1 <= 0:
        raise ValidationError(f"C1 must be positive, got {C1}")
    shift = epsilon * mu1
    margin = A_margin * epsilon ** 2 / C1
    a0, b0 = a - shift + margin, b - shift - margin
    if not a0 < b0:
        raise IntervalCollapse(f"interval [{a}, {b}] collapses at eps={epsilon} (margin {margin:.3e})")
    gap = None
    if a <= 0.0 <= b and epsilon != 0:
        half = 0.5 * gap_const * abs(epsilon) ** sigma
        gap = (-half, half)
    result = LambdaInterval(a0, b0, gap)
    if not result.segments():
        raise IntervalCollapse(f"origin gap covers the whole interval [{a0:.4g}, {b0:.4g}]")
    return result


def _mu_at(lambda0: float, g: ComplexMatrixField, omega, epsilon: float, K: int,
           divisor_floor: float) -> float:
    return evaluate_mu(solve_series(g, omega, lambda0, K, divisor_floor), epsilon)


def estimate_margin(g: ComplexMatrixField, omega, lambdas: Sequence[float], epsilon: float, K: int,
                    C1: float, divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> float:
    """A = max |mu - eps mu1| C1 / eps^2 over a pre-scan (points hitting a small divisor skipped)"""
    if epsilon == 0:
        return 0.0
    mu1 = (1j * g.coefficient(1, 1, (0,) * len(omega))).real
    worst = 0.0
    for lam in lambdas:
        try:
            mu = _mu_at(lam, g, omega, epsilon, K, divisor_floor)
        except SmallDivisorViolation:
            continue
        worst = max(worst, abs(mu - epsilon * mu1))
    return worst * C1 / epsilon ** 2


@dataclass
class LambdaMapResult:
    lambda0: float
    lambda_value: float
    mu: float
    dmu_dlambda0: float
    slope_constant: Optional[float] = None


def accepted_neighbors(report: ScanReport, lambda0: float) -> Tuple[float, float]:
    """Nearest accepted grid points strictly below and above lambda0"""
    grid = report.grid[report.accepted]
    below, above = grid[grid < lambda0], grid[grid > lambda0]
    if not len(below) or not len(above):
        raise ValidationError(f"lambda0={lambda0} has no accepted neighbor on both sides")
    return float(below[-1]), float(above[0])


def lambda_map(lambda0: float, epsilon: float, g: ComplexMatrixField, omega, K: int,
               C1: Optional[float] = None, neighbors: Optional[Tuple[float, float]] = None,
               step: float = DERIVATIVE_STEP,
               divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> LambdaMapResult:
    """
    lambda = lambda0 + mu(lambda0) and a central difference for dmu/dlambda0.

    The difference is taken across the accepted neighbors when given (see
    accepted_neighbors), otherwise across lambda0 -/+ step.
    """
    mu = _mu_at(lambda0, g, omega, epsilon, K, divisor_floor)
    down_at, up_at = neighbors if neighbors is not None else (lambda0 - step, lambda0 + step)
    up = _mu_at(up_at, g, omega, epsilon, K, divisor_floor)
    down = _mu_at(down_at, g, omega, epsilon, K, divisor_floor)
    slope = (up - down) / (up_at - down_at)
    constant = None
    if C1 is not None and epsilon != 0:
        constant = abs(slope) * C1 / epsilon ** 2
    return LambdaMapResult(lambda0, lambda0 + mu, mu, slope, constant)


def _image_point(lam: float, g, omega, epsilon, K, divisor_floor) -> float:
    try:
        return lam + _mu_at(lam, g, omega, epsilon, K, divisor_floor)
    except ReducibilityError as e:
        logger.warning(f"lambda image undefined at lambda0={lam:.6f}: {e}")
        return float('nan')


def lambda_image(report: ScanReport, g: ComplexMatrixField, omega, epsilon: float, K: int,
                 stride: int = 1, jobs: int = 1,
                 divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> np.ndarray:
    """lambda values on every stride-th accepted grid point (NaN elsewhere)"""
    image = np.full(len(report.grid), np.nan)
    indices = np.flatnonzero(report.accepted)[::max(stride, 1)]
    values = Parallel(n_jobs=jobs)(
        delayed(_image_point)(float(report.grid[i]), g, omega, epsilon, K, divisor_floor) for i in indices
    )
    image[indices] = values
    report.lambda_image = image
    return image


def image_slopes(report: ScanReport, epsilon: float) -> pd.DataFrame:
    """dmu/dlambda0 between consecutive evaluated image points, with |slope| C1 / eps^2"""
    columns = ['lambda0_low', 'lambda0_high', 'dmu_dlambda0', 'slope_constant']
    if report.lambda_image is None:
        return pd.DataFrame(columns=columns)
    index = np.flatnonzero(~np.isnan(report.lambda_image))
    lam = report.grid[index]
    mu = report.lambda_image[index] - lam
    slope = np.diff(mu) / np.diff(lam)
    constant = np.abs(slope) * report.C1 / epsilon ** 2 if epsilon != 0 else np.full(len(slope), np.nan)
    return pd.DataFrame({'lambda0_low': lam[:-1], 'lambda0_high': lam[1:], 'dmu_dlambda0': slope,
                         'slope_constant': constant}, columns=columns)


def image_monotone(report: ScanReport) -> bool:
    """lambda increases along the accepted grid points where it was evaluated"""
    if report.lambda_image is None:
        return True
    values = report.lambda_image[~np.isnan(report.lambda_image)]
    return bool(np.all(np.diff(values) > 0))
