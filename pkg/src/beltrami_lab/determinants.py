"""Zeta-regularized determinants, flat-torus oracles and Quillen norms.

Numerical backend
-----------------
For a spectrum {lambda_k} of Delta_j with zero modes removed, the heat trace
theta(t) = sum exp(-t lambda_k) is trusted for t >= t0 only.  Below t0 it is
replaced by its small-t expansion  A/(4 pi t) + c0 (+ c1 t),  A the area of
rho |dz + mu dzbar|^2.  Splitting the Mellin integral at t0 gives

    ln det' = A/(4 pi t0) - sum_k E1(lambda_k t0) - c0 (ln t0 + gamma_E) - c1 t0
    zeta(0) = c0

t0 is the smallest time at which the Weyl-law estimate of the missing tail,
A/(4 pi t) exp(-t Lambda), drops below ``tail_tol``; Lambda is the lowest
frozen-coefficient symbol value on the discarded Nyquist modes.  c0 (and c1)
are least-squares fits of theta(t) - A/(4 pi t) on [t0, window * t0].

Oracles
-------
For the flat torus of modulus tau and area A,
    ln det' Delta = ln A + ln Im(tau) + 4 ln|eta(tau)|
(``torus_exact_log_det``).  ``epstein_log_det`` computes the same number from
the Epstein zeta function of the lattice by Riemann's theta splitting, with
no reference to eta.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import exp1

from .beltrami import BeltramiField, modulus_of_constant, solve_beltrami
from .errors import ConfigError, KernelDimensionDrift, NumericalFailure
from .geometry import DifferentialWeight, MetricDensity, norm_jj
from .operators import LAPLACIAN_SCALE, build_laplacian, eigensystem, kernel_basis
from .torus_grid import Field, Grid, TorusModulus, integrate

log = logging.getLogger(__name__)

# Calibration offset between the numerical backend and the eta oracle at
# (tau = i, area = 1).  The conventions coincide, so it is frozen at zero.
ORACLE_OFFSET = 0.0
SECTION_SOLVE_N = 64


class Method(str, enum.Enum):
    numerical_heat_kernel = "numerical"
    torus_exact_oracle = "oracle"


@dataclass(frozen=True)
class HeatConfig:
    tail_tol: float = 1e-8
    window: float = 2.0
    n_window: int = 16
    # None: fit a linear term unless the operator has constant coefficients
    linear_term: bool | None = None
    fit_tol: float = 1e-3


@dataclass(frozen=True)
class SpectrumData:
    eigenvalues: np.ndarray
    n_zero: int
    grid_n: int | None
    area: float
    cutoff: float
    constant_coefficients: bool = False

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        if ev.size and ev[0] < -1e-9 * max(abs(ev[-1]), 1.0):
            raise ConfigError(f"spectrum has negative eigenvalue {ev[0]:.3e}")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[self.n_zero:]

    def scaled(self, k: float) -> "SpectrumData":
        return SpectrumData(
            self.eigenvalues * k, self.n_zero, self.grid_n, self.area / k, self.cutoff * k,
            self.constant_coefficients,
        )


@dataclass(frozen=True)
class ZetaDet:
    log_det: float
    zeta0: float
    t0: float
    c0: float
    c1: float
    fit_spread: float
    unstable: bool

    def __float__(self):
        return self.log_det


@dataclass(frozen=True)
class QuillenData:
    log_det_zeta: float
    log_l2_norm: float
    gamma: float
    method: Method
    j: int
    flags: tuple[str, ...] = ()


def flat_torus_spectrum(tau, area: float, kmax: int) -> SpectrumData:
    """Exact eigenvalues 4 pi^2 |m tau - k|^2 / (Im(tau) A) for |m|, |k| <= kmax."""
    tau = tau.tau if isinstance(tau, TorusModulus) else complex(tau)
    r = np.arange(-kmax, kmax + 1)
    m, k = np.meshgrid(r, r, indexing="ij")
    ev = 4 * np.pi**2 * np.abs(m * tau - k) ** 2 / (tau.imag * area)
    # smallest value on the boundary of the index box bounds the complete part
    edge = (np.abs(m) == kmax) | (np.abs(k) == kmax)
    return SpectrumData(ev.ravel(), 1, None, area, float(ev[edge].min()), True)


def symbol_cutoff(grid: Grid, mu: BeltramiField, rho: MetricDensity) -> float:
    """Lowest frozen-coefficient symbol of Delta over the discarded Nyquist modes."""
    m, k = grid.wavenumbers
    tau = grid.tau
    den = np.conj(tau) - tau
    nyq = ~grid.resolved
    ms, ks = np.broadcast_arrays(m, k)
    # Nyquist wavenumber taken as +n/2 on the boundary ring
    ms = np.where(ms == -grid.n // 2, grid.n // 2, ms)[nyq]
    ks = np.where(ks == -grid.n // 2, grid.n // 2, ks)[nyq]
    sz = 2j * np.pi * (np.conj(tau) * ms - ks) / den
    szb = 2j * np.pi * (ks - tau * ms) / den
    muv = mu.mu.flat()
    rhov = rho.rho.flat().real
    sym = np.abs(szb[None, :] - muv[:, None] * sz[None, :]) ** 2
    sym = LAPLACIAN_SCALE * sym / (rhov[:, None] * (1 - np.abs(muv[:, None]) ** 2) ** 2)
    return float(sym.min())


def _choose_t0(area: float, cutoff: float, tail_tol: float) -> float:
    def excess(t):
        return np.log(area / (4 * np.pi * t)) - t * cutoff - np.log(tail_tol)

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2
    lo = 1e-12
    return brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12)


def zeta_log_det(spec: SpectrumData, cfg: HeatConfig = HeatConfig()) -> ZetaDet:
    """ln det'_zeta from a truncated spectrum by the split Mellin transform."""
    lam = spec.nonzero
    if lam.size == 0:
        raise ConfigError("no nonzero eigenvalues")
    A = spec.area
    t0 = _choose_t0(A, spec.cutoff, cfg.tail_tol)
    linear = (not spec.constant_coefficients) if cfg.linear_term is None else cfg.linear_term
    ts = np.linspace(t0, cfg.window * t0, cfg.n_window)
    theta = np.exp(-np.outer(ts, lam)).sum(axis=1)
    resid = theta - A / (4 * np.pi * ts)
    if linear:
        design = np.column_stack([np.ones_like(ts), ts])
    else:
        design = np.ones((ts.size, 1))
    coef, *_ = np.linalg.lstsq(design, resid, rcond=None)
    c0 = float(coef[0])
    c1 = float(coef[1]) if linear else 0.0
    # stability: refit on each half of the window
    half = ts.size // 2
    subs = []
    for sl in (slice(0, half), slice(half, None)):
        cs, *_ = np.linalg.lstsq(design[sl], resid[sl], rcond=None)
        subs.append(cs[0])
    spread = float(abs(subs[0] - subs[1]))
    unstable = spread > cfg.fit_tol
    if unstable:
        log.warning("heat-trace fit unstable: c0 spread %.2e > %.1e", spread, cfg.fit_tol)
    log_det = (
        A / (4 * np.pi * t0)
        - float(np.sum(exp1(lam * t0)))
        - c0 * (np.log(t0) + np.euler_gamma)
        - c1 * t0
    )
    return ZetaDet(float(log_det), c0, float(t0), c0, c1, spread, unstable)


def log_abs_eta(tau) -> float:
    """ln|eta(tau)| from the q-product, q = exp(2 pi i tau)."""
    tau = tau.tau if isinstance(tau, TorusModulus) else complex(tau)
    q = np.exp(2j * np.pi * tau)
    # |q|^k < 1e-17 terminates the product
    kmax = int(np.ceil(40.0 / (2 * np.pi * tau.imag))) + 1
    k = np.arange(1, kmax + 1)
    return float(-np.pi * tau.imag / 12 + np.sum(np.log(np.abs(1 - q**k))))


def torus_exact_log_det(tau_prime, area: float) -> float:
    """ln det' of the flat-torus Laplacian via the Kronecker limit formula."""
    tau = tau_prime.tau if isinstance(tau_prime, TorusModulus) else TorusModulus(tau_prime).tau
    if area <= 0:
        raise ConfigError("area must be positive")
    return float(np.log(area) + np.log(tau.imag) + 4 * log_abs_eta(tau) + ORACLE_OFFSET)


def epstein_log_det(tau_prime, area: float, cutoff: float = 40.0) -> float:
    """Same determinant from the Epstein zeta function of the lattice.

    With Q(m, k) = |m tau - k|^2 / Im(tau) (unit determinant) the eigenvalues
    are 4 pi^2 Q / A, and Riemann's splitting of the theta integral at t = 1
    gives zeta_Q'(0) = -ln pi - gamma_E - 1 + sum' E1(pi Q) + sum' exp(-pi Q')/(pi Q'),
    Q' the inverse form |m + k tau|^2 / Im(tau).
    """
    tau = tau_prime.tau if isinstance(tau_prime, TorusModulus) else TorusModulus(tau_prime).tau
    t2 = tau.imag
    # Q and Q' share the trace (|tau|^2 + 1)/Im(tau); with unit determinant the
    # smaller eigenvalue bounds Q >= ev_min (m^2 + k^2) for both forms
    tr = (abs(tau) ** 2 + 1) / t2
    ev_min = 0.5 * (tr - np.sqrt(tr * tr - 4))
    M = int(np.ceil(np.sqrt(cutoff / (np.pi * ev_min)))) + 1
    r = np.arange(-M, M + 1)
    m, k = np.meshgrid(r, r, indexing="ij")
    m, k = m.ravel(), k.ravel()
    keep = (m != 0) | (k != 0)
    m, k = m[keep], k[keep]
    Q = np.abs(m * tau - k) ** 2 / t2
    Qinv = np.abs(m + k * tau) ** 2 / t2
    dzeta_q = (
        -np.log(np.pi) - np.euler_gamma - 1.0
        + float(np.sum(exp1(np.pi * Q)))
        + float(np.sum(np.exp(-np.pi * Qinv) / (np.pi * Qinv)))
    )
    # zeta_Delta(s) = (4 pi^2 / A)^(-s) zeta_Q(s), zeta_Q(0) = -1
    return float(-np.log(4 * np.pi**2 / area) - dzeta_q)


def operator_spectrum(j: int, mu: BeltramiField, rho: MetricDensity) -> tuple[SpectrumData, object]:
    """Spectrum of Delta_{j,mu} on the grid, with kernel count and symbol cutoff."""
    op = build_laplacian(j, mu, rho)
    eig = eigensystem(op)
    kb = kernel_basis(op, eig=eig)
    area = integrate(rho.rho * (1.0 - abs(mu.mu) ** 2)).real
    const = mu.is_constant and rho.is_constant
    spec = SpectrumData(eig.values, kb.dimension, mu.grid.n, area, symbol_cutoff(mu.grid, mu, rho), const)
    return spec, kb


def holomorphic_kernel_sections(j: int, mu: BeltramiField, sol=None) -> tuple[Field, Field]:
    """gamma = lam^j in Ker T_j and beta = lam^(1-j) in Ker T_{1-j}.

    lam is holomorphic in mu and independent of rho, and
    (dbar - mu d - j d mu) lam^j = j lam^j [(dbar - mu d) ln lam - d mu] = 0.
    """
    if mu.is_constant:
        one = mu.grid.constant(1.0)
        return one, one
    # the sections only enter through norms, so solve on a grid fine enough
    # for the fixed point to reach tolerance
    sol = sol or solve_beltrami(mu, oversample=max(1, -(-SECTION_SOLVE_N // mu.grid.n)))
    lam = sol.lam.values
    return Field(lam**j, mu.grid), Field(lam ** (1 - j), mu.grid)


def log_l2_norm(j: int, mu: BeltramiField, rho: MetricDensity, sol=None) -> float:
    """ln ||s||^2 = -ln det Gram(gamma) - ln det Gram(beta) (one section each on the torus)."""
    gamma, beta = holomorphic_kernel_sections(j, mu, sol)
    ng = norm_jj(gamma, DifferentialWeight(j, 0), rho, mu)
    nb = norm_jj(beta, DifferentialWeight(1 - j, 0), rho, mu)
    return float(-np.log(ng) - np.log(nb))


def quillen_gamma(
    j: int,
    mu: BeltramiField,
    rho: MetricDensity,
    method: Method | str = Method.numerical_heat_kernel,
    heat: HeatConfig = HeatConfig(),
    expected_kernel: int | None = 1,
) -> QuillenData:
    """Gamma = 1/2 (ln det'_zeta Delta_j + ln ||s||^2_L2) for the lam-power section.

    ``method='oracle'`` requires constant mu and rho and uses the eta formula
    on the image torus; ``'numerical'`` diagonalizes Delta_j on the grid.
    """
    method = Method(method)
    flags: list[str] = []
    if method is Method.torus_exact_oracle:
        if not (mu.is_constant and rho.is_constant):
            raise ConfigError("oracle method needs constant mu and constant rho")
        m0 = complex(mu.mu.values.flat[0])
        r0 = float(rho.rho.values.flat[0].real)
        tau_p = modulus_of_constant(m0, mu.grid.modulus)
        area = r0 * (1 - abs(m0) ** 2) * mu.grid.area
        ld = torus_exact_log_det(tau_p, area)
    else:
        spec, kb = operator_spectrum(j, mu, rho)
        if expected_kernel is not None and kb.dimension != expected_kernel:
            raise KernelDimensionDrift(f"dim Ker Delta_{j} = {kb.dimension}, expected {expected_kernel}")
        zd = zeta_log_det(spec, heat)
        if zd.unstable:
            flags.append("fit_unstable")
        ld = zd.log_det
    l2 = log_l2_norm(j, mu, rho)
    if not np.isfinite(ld + l2):
        raise NumericalFailure("non-finite Quillen data")
    return QuillenData(float(ld), l2, 0.5 * (ld + l2), method, int(j), tuple(flags))
