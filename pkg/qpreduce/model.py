"""
Fourier fields and the reduction of the real SL(2,R) problem to the complex
auxiliary system.

The real system is x' = (lambda A + eps f(omega t)) x with A = [[0, 1], [-1, 0]].
Conjugating by M = 1/2 [[1, -i], [1, i]] diagonalizes A to D = diag(i, -i) and
maps f to g = M f M^-1, which lives in the algebra of matrices with
g11 = conj(g22) and g12 = conj(g21) (as functions on the torus).

Momentum norm is the l1 norm throughout.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression

from qpreduce.errors import ValidationError

logger = logging.getLogger(__name__)

Momentum = Tuple[int, ...]

M = 0.5 * np.array([[1.0, -1.0j], [1.0, 1.0j]])
M_INV = np.array([[1.0, 1.0], [1.0j, -1.0j]])
A_REAL = np.array([[0.0, 1.0], [-1.0, 0.0]])
D_COMPLEX = np.diag([1.0j, -1.0j])

FIELD_TOLERANCE = 1e-12


def l1_norm(nu: Iterable[int]) -> int:
    return int(sum(abs(int(x)) for x in nu))


def zero_momentum(dimension: int) -> Momentum:
    return (0,) * dimension


def add_momenta(nu: Momentum, mu: Momentum) -> Momentum:
    return tuple(x + y for x, y in zip(nu, mu))


def negate(nu: Momentum) -> Momentum:
    return tuple(-x for x in nu)


def momenta_in_ball(radius: int, dimension: int, include_zero: bool = True) -> List[Momentum]:
    """All integer vectors with |nu|_1 <= radius, in lexicographic order"""
    out = []
    for nu in itertools.product(range(-radius, radius + 1), repeat=dimension):
        norm = l1_norm(nu)
        if norm > radius or (norm == 0 and not include_zero):
            continue
        out.append(tuple(nu))
    return out


def _as_momentum(nu: Iterable[int]) -> Momentum:
    return tuple(int(x) for x in nu)


@dataclass
class FourierField:
    """Scalar function on the torus as a sparse map nu -> complex coefficient"""
    coefficients: Dict[Momentum, complex] = field(default_factory=dict)
    dimension: int = 0

    def __post_init__(self):
        cleaned: Dict[Momentum, complex] = {}
        for nu in sorted(_as_momentum(k) for k in self.coefficients):
            value = complex(self.coefficients[nu])
            if value != 0:
                cleaned[nu] = value
        if cleaned:
            dims = {len(nu) for nu in cleaned}
            if len(dims) != 1 or (self.dimension and dims != {self.dimension}):
                raise ValidationError(f"inconsistent momentum dimensions {sorted(dims)}")
            self.dimension = dims.pop()
        self.coefficients = cleaned

    def __getitem__(self, nu: Iterable[int]) -> complex:
        return self.coefficients.get(_as_momentum(nu), 0j)

    def __len__(self) -> int:
        return len(self.coefficients)

    def support(self) -> List[Momentum]:
        return list(self.coefficients)

    @property
    def n_modes(self) -> int:
        """l1 radius of the support"""
        return max((l1_norm(nu) for nu in self.coefficients), default=0)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coefficients.values()), default=0.0)

    def conj_function(self) -> 'FourierField':
        """Coefficients of the pointwise complex conjugate: conj(c_{-nu}) at nu"""
        return FourierField({negate(nu): v.conjugate() for nu, v in self.coefficients.items()}, self.dimension)

    def scaled(self, factor: complex) -> 'FourierField':
        return FourierField({nu: factor * v for nu, v in self.coefficients.items()}, self.dimension)

    def __add__(self, other: 'FourierField') -> 'FourierField':
        out = dict(self.coefficients)
        for nu, v in other.coefficients.items():
            out[nu] = out.get(nu, 0j) + v
        return FourierField(out, self.dimension or other.dimension)

    def __sub__(self, other: 'FourierField') -> 'FourierField':
        return self + other.scaled(-1.0)

    def convolve(self, other: 'FourierField', radius: Optional[int] = None) -> Tuple['FourierField', float]:
        """Coefficients of the product of two functions; drops modes beyond radius"""
        out: Dict[Momentum, complex] = {}
        dropped = 0.0
        for nu1, v1 in self.coefficients.items():
            for nu2, v2 in other.coefficients.items():
                target = add_momenta(nu1, nu2)
                product = v1 * v2
                if radius is not None and l1_norm(target) > radius:
                    dropped += abs(product)
                    continue
                out[target] = out.get(target, 0j) + product
        return FourierField(out, self.dimension or other.dimension), dropped

    def to_arrays(self, dimension: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        d = self.dimension or dimension or 0
        if not self.coefficients:
            return np.zeros((0, d), dtype=int), np.zeros(0, dtype=complex)
        modes = np.array(list(self.coefficients), dtype=int)
        return modes, np.array(list(self.coefficients.values()), dtype=complex)

    def evaluate(self, psi: np.ndarray) -> np.ndarray:
        """Values at angles psi of shape (..., d)"""
        psi = np.asarray(psi, dtype=float)
        modes, coeffs = self.to_arrays(psi.shape[-1])
        if len(coeffs) == 0:
            return np.zeros(psi.shape[:-1], dtype=complex)
        return np.exp(1j * psi @ modes.T) @ coeffs

    def evaluate_on_times(self, omega: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Values along the linear flow psi = omega t"""
        times = np.asarray(times, dtype=float)
        modes, coeffs = self.to_arrays(len(omega))
        if len(coeffs) == 0:
            return np.zeros(times.shape, dtype=complex)
        frequencies = modes @ np.asarray(omega, dtype=float)
        return np.exp(1j * np.multiply.outer(times, frequencies)) @ coeffs

    def derivative_along(self, omega: np.ndarray) -> 'FourierField':
        """Time derivative along psi = omega t, i.e. multipliers i omega.nu"""
        omega = np.asarray(omega, dtype=float)
        return FourierField(
            {nu: 1j * float(np.dot(omega, nu)) * v for nu, v in self.coefficients.items()},
            self.dimension,
        )


@dataclass
class MatrixField:
    """Sparse map nu -> 2x2 complex coefficient matrix"""
    coefficients: Dict[Momentum, np.ndarray] = field(default_factory=dict)
    dimension: int = 0

    form = 'complex'

    def __post_init__(self):
        cleaned: Dict[Momentum, np.ndarray] = {}
        for key in sorted(_as_momentum(k) for k in self.coefficients):
            matrix = np.array(self.coefficients[key], dtype=complex).reshape(2, 2)
            if np.any(matrix != 0):
                cleaned[key] = matrix
        if cleaned:
            dims = {len(nu) for nu in cleaned}
            if len(dims) != 1 or (self.dimension and dims != {self.dimension}):
                raise ValidationError(f"inconsistent momentum dimensions {sorted(dims)}")
            self.dimension = dims.pop()
        self.coefficients = cleaned

    def __getitem__(self, nu: Iterable[int]) -> np.ndarray:
        value = self.coefficients.get(_as_momentum(nu))
        return np.zeros((2, 2), dtype=complex) if value is None else value.copy()

    def coefficient(self, j: int, jp: int, nu: Iterable[int]) -> complex:
        """Entry (j, jp) of the nu coefficient, 1-based"""
        value = self.coefficients.get(_as_momentum(nu))
        return 0j if value is None else complex(value[j - 1, jp - 1])

    def entry(self, j: int, jp: int) -> FourierField:
        return FourierField(
            {nu: m[j - 1, jp - 1] for nu, m in self.coefficients.items()}, self.dimension
        )

    def support(self) -> List[Momentum]:
        return list(self.coefficients)

    @property
    def n_modes(self) -> int:
        return max((l1_norm(nu) for nu in self.coefficients), default=0)

    def is_zero(self) -> bool:
        return not self.coefficients

    def _arrays(self, dimension: int) -> Tuple[np.ndarray, np.ndarray]:
        if not self.coefficients:
            return np.zeros((0, dimension), dtype=int), np.zeros((0, 2, 2), dtype=complex)
        modes = np.array(list(self.coefficients), dtype=int)
        return modes, np.stack(list(self.coefficients.values()))

    def evaluate(self, psi: np.ndarray) -> np.ndarray:
        """Matrix values at angles psi of shape (..., d)"""
        psi = np.asarray(psi, dtype=float)
        modes, mats = self._arrays(psi.shape[-1])
        if len(mats) == 0:
            return np.zeros(psi.shape[:-1] + (2, 2), dtype=complex)
        phases = np.exp(1j * psi @ modes.T)
        return np.einsum('...m,mij->...ij', phases, mats)

    def evaluate_on_times(self, omega: np.ndarray, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        modes, mats = self._arrays(len(omega))
        if len(mats) == 0:
            return np.zeros(times.shape + (2, 2), dtype=complex)
        frequencies = modes @ np.asarray(omega, dtype=float)
        phases = np.exp(1j * np.multiply.outer(times, frequencies))
        return np.einsum('...m,mij->...ij', phases, mats)

    def to_records(self) -> List[Dict[str, list]]:
        """Canonical JSON-lines records, lexicographic in nu"""
        records = []
        for nu, m in self.coefficients.items():
            flat = []
            for value in m.reshape(-1):
                flat.extend([float(value.real), float(value.imag)])
            records.append({'nu': list(nu), 'm': flat})
        return records

    def validate(self, tol: float = FIELD_TOLERANCE) -> 'MatrixField':
        raise NotImplementedError

    def _check_traceless(self, tol: float) -> None:
        for nu, m in self.coefficients.items():
            trace = m[0, 0] + m[1, 1]
            if abs(trace) > tol:
                raise ValidationError(f"coefficient at nu={nu} is not traceless: f11 + f22 = {trace:.3e}")


class RealMatrixField(MatrixField):
    """Real-valued sl(2,R) field; coefficient at -nu is the conjugate of the one at nu"""
    form = 'real'

    def validate(self, tol: float = FIELD_TOLERANCE) -> 'RealMatrixField':
        self._check_traceless(tol)
        for nu, m in self.coefficients.items():
            partner = self[negate(nu)]
            if np.max(np.abs(partner - m.conj())) > tol:
                raise ValidationError(f"reality violated at nu={nu}: f_(-nu) != conj(f_nu)")
        return self


class ComplexMatrixField(MatrixField):
    """Field in the complexified frame, g11 = conj(g22) and g12 = conj(g21) pointwise"""
    form = 'complex'

    def validate(self, tol: float = FIELD_TOLERANCE) -> 'ComplexMatrixField':
        self._check_traceless(tol)
        for nu, g in self.coefficients.items():
            partner = self[negate(nu)]
            if abs(g[0, 0] - partner[1, 1].conjugate()) > tol:
                raise ValidationError(f"symmetry violated at nu={nu}: g11,nu != conj(g22,-nu)")
            if abs(g[0, 1] - partner[1, 0].conjugate()) > tol:
                raise ValidationError(f"symmetry violated at nu={nu}: g12,nu != conj(g21,-nu)")
        return self

    def full_support(self) -> List[Momentum]:
        """Modes with any nonzero entry (symmetric under nu -> -nu for valid fields)"""
        return self.support()


@dataclass(frozen=True)
class AuxiliaryState:
    a: complex
    c: complex
    t: float = 0.0


def complex_reduce(f: RealMatrixField) -> ComplexMatrixField:
    """g_nu = M f_nu M^-1 for every mode"""
    f.validate()
    g = ComplexMatrixField({nu: M @ m @ M_INV for nu, m in f.coefficients.items()}, f.dimension)
    logger.debug(f"Reduced real field with {len(f.coefficients)} modes to complex frame")
    return g


def real_lift(g: ComplexMatrixField) -> RealMatrixField:
    """Inverse of complex_reduce: f_nu = M^-1 g_nu M"""
    g.validate()
    return RealMatrixField({nu: M_INV @ m @ M for nu, m in g.coefficients.items()}, g.dimension)


def base_solution(lambda0: float, t) -> np.ndarray:
    """diag(e^{i lambda0 t}, e^{-i lambda0 t}); vectorized over t"""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * lambda0 * t)
    out[..., 1, 1] = np.exp(-1j * lambda0 * t)
    return out


def auxiliary_rhs(state: AuxiliaryState, epsilon: float, mu: float, lambda0: float,
                  g: ComplexMatrixField, omega: np.ndarray) -> Tuple[complex, complex]:
    """Right-hand sides of the (a, c) system at psi = omega t"""
    G = g.evaluate(np.asarray(omega, dtype=float) * state.t)
    a, c = state.a, state.c
    da = epsilon * G[0, 0] + 1j * mu + epsilon * (G[0, 0] * a + G[0, 1] * c) + 1j * mu * a
    dc = -2j * lambda0 * c + epsilon * G[1, 0] + epsilon * (G[1, 0] * a + G[1, 1] * c) - 1j * mu * c
    return complex(da), complex(dc)


def first_integral(a, c):
    """H = a + a* + |a|^2 - |c|^2"""
    a = np.asarray(a)
    c = np.asarray(c)
    value = 2.0 * a.real + np.abs(a) ** 2 - np.abs(c) ** 2
    return float(value) if value.ndim == 0 else value


def in_m_group(B: np.ndarray, tol: float = 1e-12) -> bool:
    """B11 = conj(B22) and B12 = conj(B21)"""
    B = np.asarray(B)
    return bool(abs(B[0, 0] - np.conj(B[1, 1])) <= tol and abs(B[0, 1] - np.conj(B[1, 0])) <= tol)


def det_defect(B: np.ndarray) -> float:
    return float(abs(np.linalg.det(np.asarray(B)) - 1.0))


def decay_constants(f: MatrixField) -> Tuple[float, float]:
    """Fit |f_nu| <= F0 exp(-kappa0 |nu|); returns (F0, kappa0)"""
    if f.is_zero():
        return 0.0, 0.0
    norms = np.array([l1_norm(nu) for nu in f.coefficients], dtype=float)
    sizes = np.array([np.max(np.abs(m)) for m in f.coefficients.values()])
    kappa0 = 0.0
    if len(np.unique(norms)) >= 2:
        model = LinearRegression().fit(norms.reshape(-1, 1), np.log(sizes))
        kappa0 = max(0.0, -float(model.coef_[0]))
    F0 = float(np.max(sizes * np.exp(kappa0 * norms)))
    return F0, kappa0
