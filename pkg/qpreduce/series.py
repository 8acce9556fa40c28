"""
Order-by-order solver for the formal power series of B = 1 + beta and the
counterterm mu.

Order k of the conjugation equations reads, for the a (j=1) and c (j=2)
components,

    i (omega.nu) a_nu    = [P1 + i Sa]_nu                       (nu != 0)
    0                    = [P1]_0 + i mu_k + i [Sa]_0
    i (omega.nu + 2l0) c = [P2 - i Sc]_nu

with P_r = f_r1 * a^(k-1) + f_r2 * c^(k-1) (a^(0) = 1, c^(0) = 0) and
Sa = sum_{k1<k} mu^(k1) a^(k-k1). The free constant a^(k)_0 is fixed by
requiring the order-k first integral to vanish.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd

from qpreduce.errors import OrderError, SmallDivisorViolation
from qpreduce.model import (ComplexMatrixField, FourierField, Momentum, add_momenta,
                            zero_momentum)

logger = logging.getLogger(__name__)

DEFAULT_DIVISOR_FLOOR = 1e-8
REALITY_TOLERANCE = 1e-10


@dataclass
class OrderSlice:
    """Coefficients of a single order k"""
    k: int
    a: FourierField
    c: FourierField
    mu: complex
    dropped_mass: float = 0.0


@dataclass
class OrderSources:
    P1: FourierField
    P2: FourierField
    Sa: FourierField
    Sc: FourierField
    dropped_mass: float = 0.0


@dataclass
class FormalSeries:
    omega: np.ndarray
    lambda0: float
    n_f: int = 0
    slices: List[OrderSlice] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.slices)

    @property
    def dimension(self) -> int:
        return len(self.omega)

    def order(self, k: int) -> OrderSlice:
        if not 1 <= k <= self.K:
            raise OrderError(f"order {k} not available (series solved to K={self.K})")
        return self.slices[k - 1]

    def a_field(self, k: int) -> FourierField:
        """a^(k) with a^(0) = 1 and zero beyond K"""
        if k == 0:
            return FourierField({zero_momentum(self.dimension): 1.0}, self.dimension)
        if k < 0 or k > self.K:
            return FourierField({}, self.dimension)
        return self.slices[k - 1].a

    def c_field(self, k: int) -> FourierField:
        if k <= 0 or k > self.K:
            return FourierField({}, self.dimension)
        return self.slices[k - 1].c

    def mu_coeff(self, k: int) -> complex:
        if k <= 0 or k > self.K:
            return 0j
        return self.slices[k - 1].mu

    def a0(self, k: int) -> float:
        return float(self.order(k).a[zero_momentum(self.dimension)].real)

    def c0(self, k: int) -> complex:
        return self.order(k).c[zero_momentum(self.dimension)]

    def extended(self, piece: OrderSlice) -> 'FormalSeries':
        if piece.k != self.K + 1:
            raise OrderError(f"cannot append order {piece.k} to a series of order {self.K}")
        return replace(self, slices=self.slices + [piece])

    def truncated(self, K: int) -> 'FormalSeries':
        return replace(self, slices=self.slices[:K])

    def with_mu(self, k: int, value: complex) -> 'FormalSeries':
        """Copy with mu^(k) replaced"""
        slices = list(self.slices)
        slices[k - 1] = replace(slices[k - 1], mu=complex(value))
        return replace(self, slices=slices)

    def with_a0(self, k: int, value: complex) -> 'FormalSeries':
        """Copy with a^(k)_0 replaced"""
        slices = list(self.slices)
        coeffs = dict(slices[k - 1].a.coefficients)
        coeffs[zero_momentum(self.dimension)] = complex(value)
        slices[k - 1] = replace(slices[k - 1], a=FourierField(coeffs, self.dimension))
        return replace(self, slices=slices)

    def reality_defects(self) -> List[float]:
        """|Im mu^(k)| / max(1, |mu^(k)|) per order"""
        return [abs(s.mu.imag) / max(1.0, abs(s.mu)) for s in self.slices]

    def coefficient_records(self) -> List[Dict]:
        """{k, j, nu, re, im} with j=1 for a, j=2 for c and j=3 for mu"""
        records = []
        zero = list(zero_momentum(self.dimension))
        for s in self.slices:
            for j, comp in ((1, s.a), (2, s.c)):
                for nu, value in comp.coefficients.items():
                    records.append({'k': s.k, 'j': j, 'nu': list(nu), 're': value.real, 'im': value.imag})
            records.append({'k': s.k, 'j': 3, 'nu': zero, 're': s.mu.real, 'im': s.mu.imag})
        return records

    def summary_table(self) -> pd.DataFrame:
        rows = []
        for s in self.slices:
            c0 = self.c0(s.k)
            rows.append({
                'k': s.k,
                'mu_re': s.mu.real,
                'mu_im': s.mu.imag,
                'a0': self.a0(s.k),
                'c0_re': c0.real,
                'c0_im': c0.imag,
                'h_defect': h_defect(self, s.k),
                'dropped_mass': s.dropped_mass,
            })
        return pd.DataFrame(rows, columns=['k', 'mu_re', 'mu_im', 'a0', 'c0_re', 'c0_im',
                                           'h_defect', 'dropped_mass'])


def order_sources(series: FormalSeries, g: ComplexMatrixField, k: int,
                  radius: Optional[int] = None) -> OrderSources:
    """Convolution sources P1, P2 and counterterm sums Sa, Sc entering order k"""
    d = series.dimension
    a_prev, c_prev = series.a_field(k - 1), series.c_field(k - 1)
    dropped = 0.0
    sources = []
    for row in (1, 2):
        left, lost_left = g.entry(row, 1).convolve(a_prev, radius)
        right, lost_right = g.entry(row, 2).convolve(c_prev, radius)
        dropped += lost_left + lost_right
        sources.append(left + right)
    Sa = FourierField({}, d)
    Sc = FourierField({}, d)
    for k1 in range(1, k):
        mu = series.mu_coeff(k1)
        if mu == 0:
            continue
        Sa = Sa + series.a_field(k - k1).scaled(mu)
        Sc = Sc + series.c_field(k - k1).scaled(mu)
    return OrderSources(sources[0], sources[1], Sa, Sc, dropped)


def _divide(numerator: complex, divisor: float, nu: Momentum, component: int, floor: float) -> complex:
    """-i numerator / divisor; only active modes are gated"""
    if numerator == 0:
        return 0j
    if abs(divisor) < floor:
        raise SmallDivisorViolation(nu, divisor, component)
    return -1j * numerator / divisor


def _normalization(series: FormalSeries, k: int) -> float:
    """a^(k)_0 making the order-k first integral vanish"""
    total = 0j
    for k1 in range(1, k):
        k2 = k - k1
        a1, a2 = series.a_field(k1), series.a_field(k2)
        c1, c2 = series.c_field(k1), series.c_field(k2)
        for nu, value in a1.coefficients.items():
            total += value * a2[nu].conjugate()
        for nu, value in c1.coefficients.items():
            total -= value * c2[nu].conjugate()
    return -0.5 * total.real


def _solve_order(series: FormalSeries, g: ComplexMatrixField, k: int, divisor_floor: float,
                 radius: Optional[int]) -> OrderSlice:
    d = series.dimension
    zero = zero_momentum(d)
    omega = series.omega
    lambda0 = series.lambda0
    src = order_sources(series, g, k, radius)

    mu = 1j * (src.P1[zero] + 1j * src.Sa[zero])

    a_coeffs: Dict[Momentum, complex] = {}
    for nu in sorted(set(src.P1.support()) | set(src.Sa.support())):
        if nu == zero:
            continue
        numerator = src.P1[nu] + 1j * src.Sa[nu]
        a_coeffs[nu] = _divide(numerator, float(np.dot(omega, nu)), nu, 1, divisor_floor)
    if k > 1:
        a_coeffs[zero] = _normalization(series, k)

    c_coeffs: Dict[Momentum, complex] = {}
    for nu in sorted(set(src.P2.support()) | set(src.Sc.support())):
        numerator = src.P2[nu] - 1j * src.Sc[nu]
        c_coeffs[nu] = _divide(numerator, float(np.dot(omega, nu)) + 2.0 * lambda0, nu, 2, divisor_floor)

    if abs(mu.imag) > REALITY_TOLERANCE * max(1.0, abs(mu)):
        logger.warning(f"mu^({k}) has imaginary part {mu.imag:.3e}")
    if src.dropped_mass > 0:
        logger.info(f"Order {k}: truncation dropped mass {src.dropped_mass:.3e}")

    return OrderSlice(k=k, a=FourierField(a_coeffs, d), c=FourierField(c_coeffs, d), mu=complex(mu),
                      dropped_mass=src.dropped_mass)


def empty_series(g: ComplexMatrixField, omega, lambda0: float) -> FormalSeries:
    return FormalSeries(omega=np.asarray(omega, dtype=float), lambda0=float(lambda0), n_f=g.n_modes)


def solve_order_1(g: ComplexMatrixField, omega, lambda0: float,
                  divisor_floor: float = DEFAULT_DIVISOR_FLOOR, radius: Optional[int] = None) -> OrderSlice:
    """First order: a = -i f11/(omega.nu), c = -i f21/(omega.nu + 2 lambda0), mu = i f11,0"""
    return _solve_order(empty_series(g, omega, lambda0), g, 1, divisor_floor, radius)


def solve_order_k(series: FormalSeries, g: ComplexMatrixField, k: int,
                  divisor_floor: float = DEFAULT_DIVISOR_FLOOR, radius: Optional[int] = None) -> OrderSlice:
    """Order k from orders 1..k-1"""
    if k != series.K + 1:
        raise OrderError(f"order {k} requested but orders 1..{series.K} are available")
    return _solve_order(series, g, k, divisor_floor, radius)


def solve_series(g: ComplexMatrixField, omega, lambda0: float, K: int,
                 divisor_floor: float = DEFAULT_DIVISOR_FLOOR, radius: Optional[int] = None) -> FormalSeries:
    """Solve orders 1..K"""
    series = empty_series(g, omega, lambda0)
    for k in range(1, K + 1):
        series = series.extended(solve_order_k(series, g, k, divisor_floor, radius))
        logger.debug(f"Order {k}: mu = {series.mu_coeff(k):.6g}, "
                     f"{len(series.a_field(k))} a-modes, {len(series.c_field(k))} c-modes")
    return series


def first_integral_order(series: FormalSeries, k: int) -> FourierField:
    """Fourier coefficients of H^(k)"""
    a_k = series.a_field(k)
    H = a_k + a_k.conj_function()
    for k1 in range(1, k):
        k2 = k - k1
        aa, _ = series.a_field(k1).convolve(series.a_field(k2).conj_function())
        cc, _ = series.c_field(k1).convolve(series.c_field(k2).conj_function())
        H = H + aa - cc
    return H


def h_defect(series: FormalSeries, k: int) -> float:
    """max |H^(k)_nu| relative to the order-k coefficient scale"""
    H = first_integral_order(series, k)
    scale = max(1.0, series.a_field(k).max_abs(), series.c_field(k).max_abs())
    return H.max_abs() / scale


def series_functions(series: FormalSeries, epsilon: float) -> Tuple[FourierField, FourierField]:
    """a = sum eps^k a^(k), c = sum eps^k c^(k)"""
    a = FourierField({}, series.dimension)
    c = FourierField({}, series.dimension)
    for s in series.slices:
        a = a + s.a.scaled(epsilon ** s.k)
        c = c + s.c.scaled(epsilon ** s.k)
    return a, c


def evaluate_beta(series: FormalSeries, epsilon: float, psi) -> np.ndarray:
    """B(psi) = 1 + sum eps^k beta^(k)(psi), with b = conj(c) and d = conj(a)"""
    psi = np.asarray(psi, dtype=float)
    a_fn, c_fn = series_functions(series, epsilon)
    a = a_fn.evaluate(psi)
    c = c_fn.evaluate(psi)
    B = np.zeros(np.shape(a) + (2, 2), dtype=complex)
    B[..., 0, 0] = 1.0 + a
    B[..., 0, 1] = np.conj(c)
    B[..., 1, 0] = c
    B[..., 1, 1] = 1.0 + np.conj(a)
    return B


def evaluate_mu(series: FormalSeries, epsilon: float) -> float:
    """sum eps^k Re mu^(k)"""
    return float(sum(epsilon ** s.k * s.mu.real for s in series.slices))


def support_growth_check(series: FormalSeries, g: ComplexMatrixField) -> List[Tuple[int, int, Momentum]]:
    """(k, component, nu) entries lying outside the k-fold sumset of the field support"""
    support = set(g.support())
    allowed: Set[Momentum] = set(support)
    violations = []
    for k in range(1, series.K + 1):
        if k > 1:
            allowed = {add_momenta(x, m) for x in allowed for m in support}
        for j, comp in ((1, series.a_field(k)), (2, series.c_field(k))):
            for nu in comp.support():
                if nu not in allowed:
                    violations.append((k, j, nu))
    return violations
