import logging
import math
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import PrivateAttr
from scipy import optimize
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly

from pharmonic.core.config import settings
from pharmonic.core.exceptions import (
    BracketFailureError,
    DegenerateStateError,
    IntegrationError,
    InvalidParameterError,
    MonotonicityError,
    SearchFailureError,
)
from pharmonic.schemas import ArrayModel, SpectralSummary, Vector

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-14
# step of the fourth-order difference applied to the conservative flux
CONSERVATIVE_STEP = 1e-3


def _check_pk(p: float, k: int) -> None:
    if not p > 1.0:
        raise InvalidParameterError(f"exponent p must exceed 1, got {p}")
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"mode k must be a positive integer, got {k}")


def beta_quadratic(p: float, k: int) -> Tuple[float, float, float]:
    """Coefficients (a, b, c) of a X^2 - b X + c = 0 whose root >= 1 is the exponent beta_k."""
    a = 2.0 * k - 1.0
    b = (p * k * k + (p - 2.0) * (2.0 * k - 1.0)) / (p - 1.0)
    return a, b, float(k * k)


def quadratic_residual(p: float, k: int, x: float) -> float:
    a, b, c = beta_quadratic(p, k)
    return a * x * x - b * x + c


def beta_closed_form(p: float, k: int) -> float:
    _check_pk(p, k)
    a, b, c = beta_quadratic(p, k)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        # rounding only: the discriminant vanishes exactly at k = 1
        logger.warning(f"Clamping negative discriminant {disc:.3e} to 0 for p={p}, k={k}")
        disc = 0.0
    q = 0.5 * (b + math.sqrt(disc))
    return q / a


def lambda_eig(n: int, beta: float, p: float) -> float:
    if n < 2:
        raise InvalidParameterError(f"dimension must be at least 2, got {n}")
    return beta * (n - 1.0 + (beta - 1.0) * (p - 1.0))


def ode_rhs(p: float, beta: float, omega: float, omega_prime: float) -> float:
    """omega'' of the planar spectral equation, solved for the second derivative."""
    lam = lambda_eig(2, beta, p)
    b2w2 = beta * beta * omega * omega
    wp2 = omega_prime * omega_prime
    den = b2w2 + (p - 1.0) * wp2
    if den < DENOMINATOR_FLOOR:
        raise DegenerateStateError(f"spectral ODE denominator {den:.3e} vanishes at (omega, omega')=({omega}, {omega_prime})")
    return -omega * (lam * (b2w2 + wp2) + (p - 2.0) * beta * beta * wp2) / den


def conservative_flux(p: float, beta: float, omega, omega_prime):
    """(beta^2 w^2 + w'^2)^{(p-2)/2} w', the quantity differentiated in the divergence form of the ODE."""
    q = beta * beta * np.square(omega) + np.square(omega_prime)
    return np.power(q, 0.5 * (p - 2.0)) * omega_prime


def conservative_source(p: float, beta: float, omega, omega_prime):
    q = beta * beta * np.square(omega) + np.square(omega_prime)
    return lambda_eig(2, beta, p) * np.power(q, 0.5 * (p - 2.0)) * omega


class OmegaProfile(ArrayModel):
    """Tabulated spectral profile with quintic Hermite interpolation.

    When `antiperiod` is set the table covers one antiperiod [0, T] and evaluation
    anywhere on the line uses w(theta + T) = -w(theta).
    """

    p: float
    beta: float
    grid: Vector
    omega: Vector
    omega_prime: Vector
    omega_second: Vector
    antiperiod: Optional[float] = None

    _interp: BPoly = PrivateAttr()
    _interp_d1: BPoly = PrivateAttr()
    _interp_d2: BPoly = PrivateAttr()

    def model_post_init(self, __context) -> None:
        table = np.column_stack([self.omega, self.omega_prime, self.omega_second])
        self._interp = BPoly.from_derivatives(self.grid, table)
        self._interp_d1 = self._interp.derivative(1)
        self._interp_d2 = self._interp.derivative(2)

    def _reduce(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.antiperiod is None:
            return theta, np.ones_like(theta)
        m = np.floor(theta / self.antiperiod)
        reduced = np.clip(theta - m * self.antiperiod, self.grid[0], self.grid[-1])
        sign = np.where(np.mod(m, 2.0) == 0.0, 1.0, -1.0)
        return reduced, sign

    def value(self, theta):
        reduced, sign = self._reduce(theta)
        return sign * self._interp(reduced)

    def derivative(self, theta):
        reduced, sign = self._reduce(theta)
        return sign * self._interp_d1(reduced)

    def second_derivative(self, theta):
        reduced, sign = self._reduce(theta)
        return sign * self._interp_d2(reduced)

    def evaluate(self, theta) -> Tuple[np.ndarray, np.ndarray]:
        return self.value(theta), self.derivative(theta)


class SpectralPair(ArrayModel):
    k: int
    p: float
    beta: float
    lambda2: float
    profile: OmegaProfile

    @property
    def antiperiod(self) -> float:
        return math.pi / self.k


def _solve(p: float, beta: float, theta_max: float, initial_slope: float = 1.0, t_eval=None, events=None,
           rtol: Optional[float] = None, atol: Optional[float] = None):
    rtol = settings.INTEGRATOR_RTOL if rtol is None else rtol
    atol = settings.INTEGRATOR_ATOL if atol is None else atol

    def rhs(_theta, y):
        return [y[1], ode_rhs(p, beta, y[0], y[1])]

    sol = solve_ivp(rhs, (0.0, theta_max), [0.0, initial_slope], method="DOP853", rtol=rtol,
                    atol=atol * abs(initial_slope), t_eval=t_eval, dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationError(f"spectral integration failed for p={p}, beta={beta}: {sol.message}")
    return sol


def integrate_omega(p: float, beta: float, theta_max: float, grid: Optional[Iterable[float]] = None,
                    initial_slope: float = 1.0, rtol: Optional[float] = None,
                    atol: Optional[float] = None) -> OmegaProfile:
    """Integrate from (w, w')(0) = (0, initial_slope) and sample the trajectory on `grid`."""
    if beta < 1.0:
        raise InvalidParameterError(f"beta must be >= 1, got {beta}")
    grid = np.linspace(0.0, theta_max, 257) if grid is None else np.asarray(list(grid), dtype=float)
    sol = _solve(p, beta, theta_max, initial_slope, t_eval=grid, rtol=rtol, atol=atol)
    omega, omega_prime = sol.y
    omega_second = np.array([ode_rhs(p, beta, w, wp) for w, wp in zip(omega, omega_prime)])
    return OmegaProfile(p=p, beta=beta, grid=grid, omega=omega, omega_prime=omega_prime, omega_second=omega_second)


def first_zero(p: float, beta: float) -> float:
    if beta < 1.0:
        raise InvalidParameterError(f"beta must be >= 1, got {beta}")

    def crossing(_theta, y):
        return y[0]

    crossing.terminal = True
    crossing.direction = -1

    limit = settings.ZERO_SEARCH_LIMIT
    sol = _solve(p, beta, limit, events=crossing)
    hits = sol.t_events[0]
    if hits.size == 0:
        raise SearchFailureError(f"no zero of omega before theta={limit:.6g} for p={p}, beta={beta}")
    return float(hits[0])


def _shoot(p: float, k: int) -> Tuple[float, List[Tuple[float, float]]]:
    _check_pk(p, k)
    target = math.pi / k
    path: List[Tuple[float, float]] = []

    def mismatch(beta: float) -> float:
        zero = first_zero(p, beta)
        path.append((beta, zero))
        return zero - target

    if mismatch(1.0) <= 0.0:
        # theta*(1) = pi already meets the target (k = 1)
        return 1.0, path

    upper = 2.0
    while mismatch(upper) > 0.0:
        upper *= 2.0
        if upper > settings.SHOOTING_MAX_BRACKET:
            raise BracketFailureError(f"no sign change for beta in [1, {settings.SHOOTING_MAX_BRACKET}] (p={p}, k={k})")

    beta = optimize.bisect(mismatch, 1.0, upper, xtol=settings.BISECTION_XTOL, rtol=4 * np.finfo(float).eps)

    ordered = sorted(path)
    for (b0, z0), (b1, z1) in zip(ordered, ordered[1:]):
        if b1 > b0 and not z1 < z0:
            raise MonotonicityError(f"first zero is not decreasing in beta: theta*({b0})={z0}, theta*({b1})={z1}")
    logger.debug(f"shooting p={p}, k={k}: beta={beta:.12f} after {len(path)} integrations")
    return float(beta), path


def beta_by_shooting(p: float, k: int) -> float:
    beta, _ = _shoot(p, k)
    return beta


def tabulate(p: float, k: int, m: Optional[int] = None) -> SpectralPair:
    _check_pk(p, k)
    m = settings.PROFILE_RESOLUTION if m is None else m
    if m < 64:
        raise InvalidParameterError(f"profile resolution must be at least 64, got {m}")

    beta = beta_closed_form(p, k)
    antiperiod = math.pi / k
    grid = np.linspace(0.0, antiperiod, m + 1)
    raw = integrate_omega(p, beta, antiperiod, grid)

    # the profile is even about the midpoint: mirror the first half onto the second
    omega = raw.omega.copy()
    omega_prime = raw.omega_prime.copy()
    omega_second = raw.omega_second.copy()
    for j in range(m // 2 + 1, m + 1):
        omega[j] = omega[m - j]
        omega_prime[j] = -omega_prime[m - j]
        omega_second[j] = omega_second[m - j]

    profile = OmegaProfile(p=p, beta=beta, grid=grid, omega=omega, omega_prime=omega_prime,
                           omega_second=omega_second, antiperiod=antiperiod)
    logger.info(f"Tabulated omega for p={p}, k={k}: beta={beta:.12g}, m={m}, raw endpoint {raw.omega[-1]:.2e}")
    return SpectralPair(k=k, p=p, beta=beta, lambda2=lambda_eig(2, beta, p), profile=profile)


def tabulate_grid(ps: Iterable[float], ks: Iterable[int], m: Optional[int] = None) -> Dict[Tuple[float, int], SpectralPair]:
    return {(p, k): tabulate(p, k, m) for p in ps for k in ks}


def profile_residuals(pair: SpectralPair, samples: int = 100, seed: int = 0) -> Dict[str, float]:
    """Consistency figures of a tabulated profile against a fresh integration over two antiperiods."""
    p, beta, period = pair.p, pair.beta, pair.antiperiod
    sol = _solve(p, beta, 2.0 * period)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, period, samples)

    fresh = sol.sol(theta)[0]
    fresh_shifted = sol.sol(theta + period)[0]
    table = pair.profile.value(theta)

    # divergence form: d/dtheta[flux] + source = 0 along the integrated trajectory
    h = CONSERVATIVE_STEP
    inner = np.clip(theta, 2.0 * h, 2.0 * period - 2.0 * h)

    def flux_at(shift):
        w, wp = sol.sol(inner + shift)
        return conservative_flux(p, beta, w, wp)

    d_flux = (8.0 * (flux_at(h) - flux_at(-h)) - (flux_at(2.0 * h) - flux_at(-2.0 * h))) / (12.0 * h)
    w0, wp0 = sol.sol(inner)
    conservative = d_flux + conservative_source(p, beta, w0, wp0)

    return {
        "quadratic": abs(quadratic_residual(p, pair.k, beta)),
        "endpoint": abs(float(sol.sol(period)[0])),
        "antiperiodic_overlap": float(np.max(np.abs(fresh_shifted + fresh))),
        "interpolation": float(np.max(np.abs(table - fresh))),
        "conservative_form": float(np.max(np.abs(conservative))),
    }


def spectral_summary(pair: SpectralPair, samples: int = 100, seed: int = 0) -> SpectralSummary:
    return SpectralSummary(p=pair.p, k=pair.k, beta=pair.beta, lambda2=pair.lambda2, antiperiod=pair.antiperiod,
                           residuals=profile_residuals(pair, samples, seed))
