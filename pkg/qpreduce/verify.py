"""
Numerical ground truth for the solved series.

Integrates the real system x' = (lambda A + eps f(omega t)) x and the complex
auxiliary system for (a, c) with fixed-step RK4, and measures how well the
truncated series conjugates the flow to its constant-coefficient form.

All matrix norms are the max absolute entry.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.linear_model import LinearRegression

from qpreduce.errors import IntegrationBudgetError, SmallDivisorViolation
from qpreduce.model import (A_REAL, D_COMPLEX, M, M_INV, ComplexMatrixField, Momentum, RealMatrixField,
                            base_solution, complex_reduce, first_integral, real_lift, zero_momentum)
from qpreduce.series import (DEFAULT_DIVISOR_FLOOR, FormalSeries, evaluate_beta, evaluate_mu,
                             order_sources, series_functions)

logger = logging.getLogger(__name__)

MAX_STEPS = 10 ** 7
DRIFT_TOLERANCE = 1e-7
DET_DRIFT_TOLERANCE = 1e-8

AnyField = Union[RealMatrixField, ComplexMatrixField]


@dataclass
class Trajectory:
    """Uniformly sampled solution; states are 2x2 matrices or (a, c) pairs"""
    times: np.ndarray
    states: np.ndarray
    h: float
    method: str = 'rk4'
    kind: str = 'full'

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class ReducibilityReport:
    epsilon: float
    deviation: float
    sup_norm: float
    exponent: Optional[float] = None
    extras: Dict[str, float] = field(default_factory=dict)


def _field_pair(f: AnyField) -> Tuple[RealMatrixField, ComplexMatrixField]:
    if isinstance(f, ComplexMatrixField):
        return real_lift(f), f
    return f, complex_reduce(f)


def _step_grid(T: float, h: float) -> Tuple[int, float]:
    if h <= 0 or T <= 0:
        raise IntegrationBudgetError(f"step and horizon must be positive (h={h}, T={T})")
    steps = int(np.ceil(T / h - 1e-9))
    if steps > MAX_STEPS:
        raise IntegrationBudgetError(f"T/h = {steps} exceeds the budget of {MAX_STEPS} steps")
    return steps, T / steps


def integrate_full(lam: float, epsilon: float, f: AnyField, omega, x0, T: float, h: float) -> Trajectory:
    """Classical RK4 for x' = (lam A + eps f(omega t)) x"""
    f_real, _ = _field_pair(f)
    omega = np.asarray(omega, dtype=float)
    steps, h = _step_grid(T, h)
    half_times = 0.5 * h * np.arange(2 * steps + 1)
    mats = lam * A_REAL + epsilon * f_real.evaluate_on_times(omega, half_times).real

    x = np.array(x0, dtype=float).reshape(2, 2)
    states = np.empty((steps + 1, 2, 2))
    states[0] = x
    for n in range(steps):
        A0, Am, A1 = mats[2 * n], mats[2 * n + 1], mats[2 * n + 2]
        k1 = A0 @ x
        k2 = Am @ (x + 0.5 * h * k1)
        k3 = Am @ (x + 0.5 * h * k2)
        k4 = A1 @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[n + 1] = x
    logger.debug(f"Full system integrated: {steps} steps, h={h:.3g}")
    return Trajectory(times=h * np.arange(steps + 1), states=states, h=h, kind='full')


def integrate_auxiliary(epsilon: float, mu: float, lambda0: float, g: AnyField, omega,
                        a0: complex, c0: complex, T: float, h: float) -> Trajectory:
    """RK4 for the (a, c) system"""
    _, g = _field_pair(g)
    omega = np.asarray(omega, dtype=float)
    steps, h = _step_grid(T, h)
    half_times = 0.5 * h * np.arange(2 * steps + 1)
    G = g.evaluate_on_times(omega, half_times)
    g11, g12, g21, g22 = (G[:, 0, 0].tolist(), G[:, 0, 1].tolist(), G[:, 1, 0].tolist(), G[:, 1, 1].tolist())
    imu = 1j * mu
    rot = -2j * lambda0

    def rhs(i, a, c):
        da = epsilon * g11[i] + imu + epsilon * (g11[i] * a + g12[i] * c) + imu * a
        dc = rot * c + epsilon * g21[i] + epsilon * (g21[i] * a + g22[i] * c) - imu * c
        return da, dc

    a, c = complex(a0), complex(c0)
    states = np.empty((steps + 1, 2), dtype=complex)
    states[0] = (a, c)
    for n in range(steps):
        i0, im, i1 = 2 * n, 2 * n + 1, 2 * n + 2
        ka1, kc1 = rhs(i0, a, c)
        ka2, kc2 = rhs(im, a + 0.5 * h * ka1, c + 0.5 * h * kc1)
        ka3, kc3 = rhs(im, a + 0.5 * h * ka2, c + 0.5 * h * kc2)
        ka4, kc4 = rhs(i1, a + h * ka3, c + h * kc3)
        a += (h / 6.0) * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        c += (h / 6.0) * (kc1 + 2.0 * kc2 + 2.0 * kc3 + kc4)
        states[n + 1] = (a, c)
    return Trajectory(times=h * np.arange(steps + 1), states=states, h=h, kind='auxiliary')


def conservation_drift(traj: Trajectory) -> float:
    """max_t |H(t) - H(0)| along an auxiliary trajectory"""
    H = first_integral(traj.states[:, 0], traj.states[:, 1])
    return float(np.max(np.abs(H - H[0])))


def det_drift(traj: Trajectory) -> float:
    """max_t |det x(t) - det x(0)| along a full trajectory"""
    dets = np.linalg.det(traj.states)
    return float(np.max(np.abs(dets - dets[0])))


def rotation_closed_form(lam: float, times) -> np.ndarray:
    """exp(lam A t) = cos(lam t) 1 + sin(lam t) A"""
    times = np.asarray(times, dtype=float)
    out = np.zeros(times.shape + (2, 2))
    cos, sin = np.cos(lam * times), np.sin(lam * times)
    out[..., 0, 0] = cos
    out[..., 1, 1] = cos
    out[..., 0, 1] = sin
    out[..., 1, 0] = -sin
    return out


def _beta_derivative(series: FormalSeries, epsilon: float, psi: np.ndarray) -> np.ndarray:
    a_fn, c_fn = series_functions(series, epsilon)
    da = a_fn.derivative_along(series.omega).evaluate(psi)
    dc = c_fn.derivative_along(series.omega).evaluate(psi)
    out = np.zeros(np.shape(da) + (2, 2), dtype=complex)
    out[..., 0, 0] = da
    out[..., 0, 1] = np.conj(dc)
    out[..., 1, 0] = dc
    out[..., 1, 1] = np.conj(da)
    return out


def conjugation_residual(series: FormalSeries, epsilon: float, lambda0: float, f: AnyField, omega,
                         t_grid, mu: Optional[float] = None) -> float:
    """max_t |B' + lambda0 [B, D] - (eps G + mu D) B| with B' taken term by term"""
    _, g = _field_pair(f)
    omega = np.asarray(omega, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    psi = np.multiply.outer(t_grid, omega)
    mu = evaluate_mu(series, epsilon) if mu is None else mu
    B = evaluate_beta(series, epsilon, psi)
    dB = _beta_derivative(series, epsilon, psi)
    G = g.evaluate(psi)
    R = dB + lambda0 * (B @ D_COMPLEX - D_COMPLEX @ B) - (epsilon * G + mu * D_COMPLEX) @ B
    return float(np.max(np.abs(R))) if R.size else 0.0


def _relevant_modes(series: FormalSeries, g: ComplexMatrixField, m: int) -> List[Momentum]:
    src = order_sources(series, g, m)
    modes = set(src.P1.support()) | set(src.P2.support()) | set(src.Sa.support()) | set(src.Sc.support())
    modes |= set(series.a_field(m).support()) | set(series.c_field(m).support())
    modes.add(zero_momentum(series.dimension))
    return sorted(modes)


def _fixed_point_defect(series: FormalSeries, g: ComplexMatrixField, m: int, nu: Momentum,
                        divisor_floor: float, src=None) -> Tuple[complex, complex]:
    src = src or order_sources(series, g, m)
    x = float(np.dot(series.omega, nu))
    if not any(nu):
        d1 = src.P1[nu] + 1j * series.mu_coeff(m) + 1j * src.Sa[nu]
    else:
        if abs(x) < divisor_floor:
            raise SmallDivisorViolation(nu, x, 1)
        d1 = series.a_field(m)[nu] - (-1j / x) * (src.P1[nu] + 1j * src.Sa[nu])
    x2 = x + 2.0 * series.lambda0
    rhs2 = src.P2[nu] - 1j * src.Sc[nu]
    if rhs2 != 0 and abs(x2) < divisor_floor:
        raise SmallDivisorViolation(nu, x2, 2)
    d2 = series.c_field(m)[nu] - ((-1j / x2) * rhs2 if rhs2 != 0 else 0j)
    return complex(d1), complex(d2)


def fixed_point_defects_by_order(series: FormalSeries, g: AnyField, nu: Momentum,
                                 divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> List[Tuple[int, complex, complex]]:
    """(m, D1, D2) coefficients of eps^m, m = 1..2K, of the fixed-point defect at nu"""
    _, g = _field_pair(g)
    nu = tuple(int(v) for v in nu)
    return [(m,) + _fixed_point_defect(series, g, m, nu, divisor_floor) for m in range(1, 2 * series.K + 1)]


def fixed_point_residual(series: FormalSeries, epsilon: float, lambda0: float, f: AnyField, omega,
                         nu: Momentum, divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> Tuple[complex, complex]:
    """Defect of u = g Phi(u) at mode nu for the truncated series (nu = 0 uses the mu equation)"""
    total1, total2 = 0j, 0j
    for m, d1, d2 in fixed_point_defects_by_order(series, f, nu, divisor_floor):
        total1 += epsilon ** m * d1
        total2 += epsilon ** m * d2
    return total1, total2


def fixed_point_table(series: FormalSeries, g: AnyField, epsilon: float,
                      divisor_floor: float = DEFAULT_DIVISOR_FLOOR) -> pd.DataFrame:
    """|D1|, |D2| per mode over every mode touched up to order 2K"""
    _, g = _field_pair(g)
    modes = sorted({nu for m in range(1, 2 * series.K + 1) for nu in _relevant_modes(series, g, m)})
    rows = []
    for nu in modes:
        d1, d2 = fixed_point_residual(series, epsilon, series.lambda0, g, series.omega, nu, divisor_floor)
        rows.append({'nu': str(nu), 'defect_a': abs(d1), 'defect_c': abs(d2)})
    return pd.DataFrame(rows, columns=['nu', 'defect_a', 'defect_c'])


def reducibility_check(series: FormalSeries, epsilon: float, lambda0: float, f: AnyField, omega,
                       T: float, h: float) -> ReducibilityReport:
    """Compare the integrated flow at lambda = lambda0 + mu with B(omega t) Y(t) B(0)^-1"""
    omega = np.asarray(omega, dtype=float)
    mu = evaluate_mu(series, epsilon)
    traj = integrate_full(lambda0 + mu, epsilon, f, omega, np.eye(2), T, h)
    psi = np.multiply.outer(traj.times, omega)
    B = evaluate_beta(series, epsilon, psi)
    Y = base_solution(lambda0, traj.times)
    predicted = B @ Y @ np.linalg.inv(B[0])
    z = M @ traj.states @ M_INV
    deviation = float(np.max(np.abs(z - predicted)))
    sup_norm = float(np.max(np.abs(traj.states)))
    logger.info(f"eps={epsilon:.3g}: deviation {deviation:.3e}, sup |x| = {sup_norm:.3f}")
    return ReducibilityReport(epsilon=epsilon, deviation=deviation, sup_norm=sup_norm,
                              extras={'mu': mu, 'det_drift': det_drift(traj)})


def fit_scaling_exponent(epsilons: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log(values) against log(eps)"""
    eps = np.log(np.abs(np.asarray(epsilons, dtype=float))).reshape(-1, 1)
    vals = np.log(np.asarray(values, dtype=float))
    model = LinearRegression().fit(eps, vals)
    return float(model.coef_[0])


def reducibility_scaling(series: FormalSeries, epsilons: Sequence[float], lambda0: float, f: AnyField,
                         omega, T: float, h: float, jobs: int = 1) -> Tuple[List[ReducibilityReport], float]:
    """Reports per eps (input order) and the fitted deviation exponent"""
    reports = Parallel(n_jobs=jobs)(
        delayed(reducibility_check)(series, eps, lambda0, f, omega, T, h) for eps in epsilons
    )
    exponent = fit_scaling_exponent(epsilons, [r.deviation for r in reports])
    for report in reports:
        report.exponent = exponent
    return list(reports), exponent


def _verify_row(series: FormalSeries, epsilon: float, f: AnyField, T: float, h: float) -> Dict[str, float]:
    omega = series.omega
    lambda0 = series.lambda0
    t_grid = np.linspace(0.0, T, 201)
    residual = conjugation_residual(series, epsilon, lambda0, f, omega, t_grid)
    report = reducibility_check(series, epsilon, lambda0, f, omega, T, h)
    a_fn, c_fn = series_functions(series, epsilon)
    psi0 = np.zeros(series.dimension)
    aux = integrate_auxiliary(epsilon, evaluate_mu(series, epsilon), lambda0, f, omega,
                              complex(a_fn.evaluate(psi0)), complex(c_fn.evaluate(psi0)), T, h)
    return {'epsilon': epsilon, 'residual': residual, 'deviation': report.deviation,
            'drift': conservation_drift(aux), 'det_drift': report.extras['det_drift'],
            'sup_norm': report.sup_norm}


def verify_table(series: FormalSeries, f: AnyField, epsilons: Sequence[float], T: float, h: float,
                 jobs: int = 1) -> pd.DataFrame:
    """One row per eps with residual, deviation and drifts; exponents fitted across rows"""
    rows = Parallel(n_jobs=jobs)(delayed(_verify_row)(series, eps, f, T, h) for eps in epsilons)
    frame = pd.DataFrame(rows, columns=['epsilon', 'residual', 'deviation', 'drift', 'det_drift', 'sup_norm'])
    nonzero = [e for e in epsilons if e != 0]
    if len(nonzero) >= 2 and (frame['deviation'] > 0).all():
        frame['fitted_exponent'] = fit_scaling_exponent(frame['epsilon'], frame['deviation'])
    else:
        frame['fitted_exponent'] = np.nan
    if len(nonzero) >= 2 and (frame['residual'] > 0).all():
        frame['residual_exponent'] = fit_scaling_exponent(frame['epsilon'], frame['residual'])
    else:
        frame['residual_exponent'] = np.nan
    return frame


def halving_ratios(frame: pd.DataFrame, column: str = 'residual') -> List[float]:
    """column(eps) / column(eps / 2) for consecutive rows whose eps halves"""
    ratios = []
    eps = frame['epsilon'].to_numpy(dtype=float)
    values = frame[column].to_numpy(dtype=float)
    for i in range(len(frame) - 1):
        if eps[i + 1] == 0 or not np.isclose(eps[i] / eps[i + 1], 2.0, rtol=1e-9):
            continue
        if values[i + 1] > 0:
            ratios.append(float(values[i] / values[i + 1]))
    return ratios


def _in_window(value: float, low: float, high: float) -> bool:
    return bool(np.isnan(value) or low <= value <= high)


def scaling_gates(frame: pd.DataFrame, K: int, trivial: bool = False) -> Dict[str, object]:
    """
    Pass/fail numbers of a verify table at series order K.

    Residual and deviation exponents must lie in [K + 0.5, K + 1.5], residual
    ratios under eps halving in [2^K, 2^(K + 2)], the H drift below 1e-7 and
    the det drift below 1e-8. A trivial field only has to conserve.
    """
    residual_exponent = float(frame['residual_exponent'].iloc[0])
    deviation_exponent = float(frame['fitted_exponent'].iloc[0])
    ratios = halving_ratios(frame)
    max_drift = float(frame['drift'].max())
    max_det_drift = float(frame['det_drift'].max())
    low, high = K + 0.5, K + 1.5
    gates = {
        'residual_exponent_ok': trivial or _in_window(residual_exponent, low, high),
        'deviation_exponent_ok': trivial or _in_window(deviation_exponent, low, high),
        'residual_ratio_ok': trivial or all(2.0 ** K <= r <= 2.0 ** (K + 2) for r in ratios),
        'drift_ok': max_drift <= DRIFT_TOLERANCE,
        'det_drift_ok': max_det_drift <= DET_DRIFT_TOLERANCE,
    }
    for name, ok in gates.items():
        if not ok:
            logger.warning(f"⚠️ {name} failed")
    return dict(residual_exponent=residual_exponent, deviation_exponent=deviation_exponent,
                residual_ratios=ratios, max_drift=max_drift, max_det_drift=max_det_drift,
                passed=bool(all(gates.values())), **gates)


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """Flat per-step table for the trajectory dump"""
    data = {'t': traj.times}
    if traj.kind == 'auxiliary':
        for name, column in (('a', 0), ('c', 1)):
            data[f'{name}_re'] = traj.states[:, column].real
            data[f'{name}_im'] = traj.states[:, column].imag
    else:
        for r in range(2):
            for s in range(2):
                data[f'x{r + 1}{s + 1}'] = traj.states[:, r, s]
    return pd.DataFrame(data)
