"""
Small-divisor machinery: Bryuno sequences, dyadic scales, smooth cutoffs and
the Diophantine/Melnikov gates.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from qpreduce.errors import ConfigError, RationalDependence, ValidationError
from qpreduce.model import Momentum, l1_norm, momenta_in_ball

logger = logging.getLogger(__name__)

BETA = 0.25
CAUCHY_RATIO = 0.1


def _shell_minimum(omega: np.ndarray, lo: int, hi: int) -> float:
    """min |omega.nu| over lo < |nu|_1 <= hi"""
    d = len(omega)
    best = math.inf
    prefixes = itertools.product(range(-hi, hi + 1), repeat=d - 1)
    for prefix in prefixes:
        used = l1_norm(prefix)
        if used > hi:
            continue
        reach = hi - used
        last = np.arange(-reach, reach + 1)
        norms = used + np.abs(last)
        keep = (norms > lo) & (norms > 0)
        if not np.any(keep):
            continue
        last = last[keep]
        values = np.abs(float(np.dot(prefix, omega[:-1])) + last * omega[-1])
        zero = np.flatnonzero(values == 0.0)
        if len(zero):
            raise RationalDependence(tuple(prefix) + (int(last[zero[0]]),))
        best = min(best, float(values.min()))
    return best


def alpha_sequence(omega, n_max: int) -> List[float]:
    """alpha_n = min |omega.nu| over 0 < |nu|_1 <= 2^n, n = 0..n_max"""
    omega = np.asarray(omega, dtype=float)
    alphas: List[float] = []
    current = math.inf
    previous = 0
    for n in range(n_max + 1):
        radius = 2 ** n
        current = min(current, _shell_minimum(omega, previous, radius))
        alphas.append(current)
        previous = radius
    return alphas


def bryuno_partial(omega, n_max: int) -> float:
    """sum_{n <= n_max} 2^-n log(1/alpha_n)"""
    alphas = alpha_sequence(omega, n_max)
    return float(sum(2.0 ** (-n) * math.log(1.0 / a) for n, a in enumerate(alphas)))


def bryuno_table(omega, n_max: int) -> List[Tuple[int, float, float]]:
    """(n, alpha_n, partial Bryuno sum) rows"""
    alphas = alpha_sequence(omega, n_max)
    rows = []
    total = 0.0
    for n, a in enumerate(alphas):
        total += 2.0 ** (-n) * math.log(1.0 / a)
        rows.append((n, a, total))
    return rows


def scale_of(nu: Momentum) -> int:
    """Unique n >= 0 with 2^(n-1) < |nu|_1 <= 2^n"""
    norm = l1_norm(nu)
    if norm == 0:
        raise ValidationError("scale is undefined for the zero momentum")
    return (norm - 1).bit_length()


def _step(s):
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    mid = (s > 0.0) & (s < 1.0)
    if np.any(mid):
        sm = s[mid]
        left = np.exp(-1.0 / sm)
        right = np.exp(-1.0 / (1.0 - sm))
        out[mid] = left / (left + right)
    return out


def smooth_step(x, C1: float):
    """psi(x): 0 for |x| <= C1/2, 1 for |x| >= C1, smooth and monotone in |x| between"""
    if C1 <= 0:
        raise ValidationError(f"C1 must be positive, got {C1}")
    x = np.asarray(x, dtype=float)
    out = _step(2.0 * np.abs(x) / C1 - 1.0)
    return float(out) if out.ndim == 0 else out


def delta0(x, lambda0: float):
    """(1/2 (1/x^2 + 1/(x+2 lambda0)^2))^(-1/2), continuous with value 0 at the singular points"""
    x = np.asarray(x, dtype=float)
    y = x + 2.0 * lambda0
    denom = x * x + y * y
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(denom > 0, np.abs(x * y) * np.sqrt(2.0 / np.where(denom > 0, denom, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def rho0(x: float, lambda0: float) -> float:
    """0 if x + lambda0 >= 0 else lambda0"""
    return 0.0 if x + lambda0 >= 0 else lambda0


def delta0_bounds_defect(x, lambda0: float):
    """Amount by which min <= delta0 <= sqrt(2) min fails (0 when it holds)"""
    x = np.asarray(x, dtype=float)
    m = np.minimum(np.abs(x), np.abs(x + 2.0 * lambda0))
    d = np.asarray(delta0(x, lambda0))
    tol = 1e-14 * np.maximum(1.0, m)
    return np.maximum(0.0, np.maximum(m - d - tol, d - math.sqrt(2.0) * m - tol))


@dataclass
class ResonanceCatalogue:
    """Nonzero momenta up to N_check with omega.nu and gate thresholds"""
    momenta: np.ndarray
    frequencies: np.ndarray
    scales: np.ndarray
    thresholds: np.ndarray
    diophantine_ok: bool


@dataclass
class DivisorGateReport:
    accepted: bool
    worst_nu: Optional[Momentum]
    worst_margin: float


@dataclass
class ScaleSystem:
    """alpha_n, gamma_n, C0, C1 and the cutoff family built on them"""
    omega: np.ndarray
    alpha: np.ndarray
    C0: float
    gamma: np.ndarray
    C1: float
    n_max: int
    variant: str = 'primary'
    gamma_raw: Optional[np.ndarray] = None
    beta_param: float = BETA
    F0: Optional[float] = None
    kappa0: Optional[float] = None
    _catalogues: Dict[int, ResonanceCatalogue] = field(default_factory=dict, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return len(self.omega)

    def gamma_of(self, nu: Momentum) -> float:
        return float(self.gamma[scale_of(nu)])

    def psi_cutoff(self, n: int, y):
        """psi_n(y) = psi(y / (beta gamma_n))"""
        return smooth_step(np.asarray(y, dtype=float) / (self.beta_param * self.gamma[n]), self.C1)

    def chi_cutoff(self, n: int, y):
        return 1.0 - self.psi_cutoff(n, y)

    def window(self, n: int) -> Tuple[float, float]:
        """Delta0 range where psi_n is strictly between 0 and 1"""
        edge = self.C1 * self.beta_param * self.gamma[n]
        return 0.5 * edge, edge

    def catalogue(self, N_check: int) -> ResonanceCatalogue:
        if N_check > 2 ** self.n_max:
            raise ConfigError(f"N_check={N_check} exceeds 2^n_max={2 ** self.n_max}")
        if N_check not in self._catalogues:
            momenta = np.array(momenta_in_ball(N_check, self.dimension, include_zero=False), dtype=int)
            frequencies = momenta @ self.omega
            norms = np.abs(momenta).sum(axis=1)
            scales = np.array([(int(n) - 1).bit_length() for n in norms], dtype=int)
            thresholds = self.C1 * self.gamma[scales]
            ok = bool(np.all(np.abs(frequencies) >= thresholds))
            if not ok:
                logger.warning("Diophantine condition |omega.nu| > C1 gamma_n fails inside the catalogue")
            self._catalogues[N_check] = ResonanceCatalogue(momenta, frequencies, scales, thresholds, ok)
        return self._catalogues[N_check]


def build_scale_system(omega, n_max: int, C1: Optional[float] = None, epsilon: Optional[float] = None,
                       sigma: float = 0.5) -> ScaleSystem:
    """Compute alpha_n and C0 (primary or fallback variant) and fix C1"""
    omega = np.asarray(omega, dtype=float)
    d = len(omega)
    alpha = np.array(alpha_sequence(omega, n_max))
    n = np.arange(n_max + 1)

    terms = 2.0 ** (n * (d - 1)) * alpha
    partial = float(terms.sum())
    if terms[-1] <= CAUCHY_RATIO * partial:
        variant = 'primary'
        C0 = partial
        gamma_raw = alpha / C0
        gamma = gamma_raw.copy()
    else:
        variant = 'fallback'
        C0 = float((2.0 ** (n * (d - 2)) * alpha).sum())
        gamma_raw = alpha / C0
        gamma = gamma_raw * 2.0 ** (-n)
    logger.info(f"C0 = {C0:.6g} ({variant} variant, n_max={n_max})")

    if C1 is None:
        if epsilon is None:
            raise ConfigError("either C1 or epsilon is required to fix the cutoff constant")
        C1 = abs(epsilon) ** sigma
    if not 0 < C1 <= C0:
        raise ConfigError(f"C1={C1:.6g} must satisfy 0 < C1 <= C0={C0:.6g}")

    return ScaleSystem(omega=omega, alpha=alpha, C0=C0, gamma=gamma, C1=float(C1), n_max=n_max,
                       variant=variant, gamma_raw=gamma_raw)


def support_product(x, n: int, scales: ScaleSystem, lambda0: float):
    """Psi_n(x) = chi_0 ... chi_{n-1} psi_n evaluated at Delta0(x)"""
    if n < 0:
        raise ValidationError(f"scale must be non-negative, got {n}")
    y = delta0(x, lambda0)
    value = scales.psi_cutoff(n, y)
    for p in range(n):
        value = value * scales.chi_cutoff(p, y)
    return value


def support_product_pair(x, p: int, n: int, scales: ScaleSystem, lambda0: float):
    """Psi_{p,n}(x) = chi_p ... chi_{n-1} psi_n at Delta0(x)"""
    y = delta0(x, lambda0)
    value = scales.psi_cutoff(n, y)
    for q in range(p, n):
        value = value * scales.chi_cutoff(q, y)
    return value


def scale_weight(x, n: int, scales: ScaleSystem, lambda0: float):
    """Weight of scale n; the deepest scale takes the whole remainder below it"""
    if n < scales.n_max:
        return support_product(x, n, scales, lambda0)
    if n > scales.n_max:
        return 0.0 * np.asarray(x, dtype=float)
    y = delta0(x, lambda0)
    value = np.where(np.asarray(y) > 0, 1.0, 0.0)
    for p in range(scales.n_max):
        value = value * scales.chi_cutoff(p, y)
    return float(value) if np.ndim(value) == 0 else value


def window_bounds_defect(x: float, n: int, scales: ScaleSystem, lambda0: float) -> float:
    """Violation of 1/2 beta gamma_n C1 <= Delta0 <= beta gamma_{n-1} C1 where Psi_n != 0"""
    if n < 1 or support_product(x, n, scales, lambda0) == 0:
        return 0.0
    y = delta0(x, lambda0)
    low = 0.5 * scales.beta_param * scales.gamma[n] * scales.C1
    high = scales.beta_param * scales.gamma[n - 1] * scales.C1
    return float(max(0.0, low - y, y - high))


def melnikov_gate(lambda0: float, scales: ScaleSystem, N_check: int) -> DivisorGateReport:
    """Accept iff |omega.nu - 2 lambda0| > C1 gamma_n(nu) for all 0 < |nu|_1 <= N_check"""
    cat = scales.catalogue(N_check)
    margins = np.abs(cat.frequencies - 2.0 * lambda0) - cat.thresholds
    index = int(np.argmin(margins))
    worst = float(margins[index])
    return DivisorGateReport(accepted=worst > 0, worst_nu=tuple(int(v) for v in cat.momenta[index]),
                             worst_margin=worst)
