"""Local anomaly density, vertical Chern forms and the factorization checks.

Base-space derivatives are taken along explicit holomorphic families
mu_t = base + sum_k t_k nu_k by central differences in the complex parameter:

    d_t f      ~ [(f(t+h) - f(t-h)) - i (f(t+ih) - f(t-ih))] / (4h)
    d_tbar d_t f ~ [f(t+h) + f(t-h) + f(t+ih) + f(t-ih) - 4 f(t)] / (4h^2)

Both are O(h^2) and are combined with one Richardson halving, (4 D(h/2) - D(h)) / 3.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .beltrami import SOLVER_SUP_LIMIT, BeltramiField, QcSolution, solve_beltrami
from .determinants import HeatConfig, Method, quillen_gamma
from .errors import ConfigError, GridMismatch
from .geometry import MetricDensity, connection, d_Z, d_Zbar, rho_ZZ
from .torus_grid import Field, d_z, d_zbar, integrate

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-2
DEFAULT_AMPLITUDE = 0.3
# d_tbar d_t of the integrated density is the negative of the fiber integral
# of |d_t d_Zbar ln rho_ZZbar|^2 under the area form dzbar^dz/2i.
ORIENTATION_SIGN = -1.0


def c_j(j: int) -> int:
    """C_j = 6 j (j - 1) + 1."""
    if int(j) != j:
        raise ConfigError(f"j must be an integer, got {j}")
    j = int(j)
    return 6 * j * (j - 1) + 1


@dataclass(frozen=True)
class TwoFormSamples:
    """Coefficient of dzbar^dz / 2i sampled on the grid."""

    density: Field
    label: str

    def integral(self) -> float:
        return integrate(self.density).real


@dataclass
class DeformationFamily:
    """mu_t = base_mu + sum_k t_k nu_k, holomorphic in t."""

    directions: Sequence[Field]
    t: complex | Sequence[complex] = 0.0
    base_mu: Field | None = None
    step: float = DEFAULT_STEP
    sup_limit: float = SOLVER_SUP_LIMIT
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.directions, Field):
            self.directions = [self.directions]
        self.directions = list(self.directions)
        if not self.directions:
            raise ConfigError("a family needs at least one direction")
        if len(self.directions) > 2:
            raise ConfigError("families of dimension 1 or 2 only")
        g = self.directions[0].grid
        for f in self.directions[1:] + ([self.base_mu] if self.base_mu is not None else []):
            if f.grid != g:
                raise GridMismatch("family data on different grids")
        t = np.atleast_1d(np.asarray(self.t, dtype=complex))
        if t.size != len(self.directions):
            raise ConfigError("base point and directions differ in dimension")
        self.t = t
        if not self.step > 0:
            raise ConfigError("step must be positive")
        for p in self.stencil_points():
            s = self._mu_values(p).sup()
            if s >= self.sup_limit:
                raise ConfigError(f"sup|mu_t| = {s:.4g} on the stencil reaches {self.sup_limit}")

    @classmethod
    def single_mode(cls, grid, m: int, k: int, amplitude: float = DEFAULT_AMPLITUDE, t: complex = 0.0, **kw):
        return cls([grid.mode(m, k, amplitude)], t, **kw)

    @classmethod
    def constant(cls, grid, base: complex, t: complex = 0.0, **kw):
        """mu_t = base + t."""
        return cls([grid.constant(1.0)], t, base_mu=grid.constant(base), **kw)

    @property
    def grid(self):
        return self.directions[0].grid

    @property
    def dim(self) -> int:
        return len(self.directions)

    def _point(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=complex))
        if t.size != self.dim:
            raise ConfigError("parameter has wrong dimension")
        return t

    def _mu_values(self, t) -> Field:
        t = self._point(t)
        mu = self.base_mu if self.base_mu is not None else self.grid.constant(0.0)
        for tk, nu in zip(t, self.directions):
            mu = mu + tk * nu
        return mu

    def evaluate(self, t=None) -> BeltramiField:
        return BeltramiField(self._mu_values(self.t if t is None else t))

    def solve(self, t=None) -> QcSolution:
        t = self._point(self.t if t is None else t)
        key = tuple(np.round(t, 15))
        if key not in self._cache:
            self._cache[key] = solve_beltrami(self.evaluate(t), sup_limit=self.sup_limit)
        return self._cache[key]

    def stencil_points(self, t=None, h=None) -> list[np.ndarray]:
        t = self._point(self.t if t is None else t)
        h = self.step if h is None else h
        pts = [t]
        for k in range(self.dim):
            e = np.zeros(self.dim, dtype=complex)
            e[k] = 1.0
            pts += [t + h * e, t - h * e, t + 1j * h * e, t - 1j * h * e]
        return pts


def _shift(t: np.ndarray, d: complex, k: int = 0) -> np.ndarray:
    s = t.copy()
    s[k] += d
    return s


def d_t(f: Callable, t: np.ndarray, h: float, k: int = 0):
    """Central Wirtinger derivative d/dt_k (works for floats and Fields)."""
    re = f(_shift(t, h, k)) - f(_shift(t, -h, k))
    im = f(_shift(t, 1j * h, k)) - f(_shift(t, -1j * h, k))
    return (re - 1j * im) * (1.0 / (4 * h))


def d_tbar_d_t(f: Callable, t: np.ndarray, h: float, k: int = 0):
    """Five-point Laplacian / 4 in the complex parameter t_k."""
    s = f(_shift(t, h, k)) + f(_shift(t, -h, k)) + f(_shift(t, 1j * h, k)) + f(_shift(t, -1j * h, k))
    return (s - 4 * f(t)) * (1.0 / (4 * h * h))


def richardson(D: Callable[[float], object], h: float):
    """One halving for an O(h^2) stencil."""
    return (4 * D(h / 2) - D(h)) * (1.0 / 3.0)


def chi(rho: MetricDensity, mu: BeltramiField, R_hol: Field | None = None) -> TwoFormSamples:
    """Local anomaly density (coefficient of dzbar^dz / 2i).

    chi = mu (R_hol - R) + c.c.
          - (1 - |mu|^2)^(-1) [ |D mu|^2 - Re(conj(mu) (D mu)^2) ]
    with D mu = (d + Gamma) mu, Gamma = d ln rho, R = d Gamma - Gamma^2 / 2.
    """
    if rho.grid != mu.grid:
        raise GridMismatch("rho and mu on different grids")
    if R_hol is not None:
        if R_hol.grid != mu.grid:
            raise GridMismatch("R_hol on a different grid")
        if d_zbar(R_hol).sup() > 1e-8 * max(1.0, R_hol.sup()):
            raise ConfigError("R_hol must be holomorphic")
    conn = connection(rho, R_hol)
    m = mu.mu
    Dmu = d_z(m) + conn.Gamma * m
    proj = m * (conn.R_hol - conn.R_scalar)
    quad = abs(Dmu) ** 2 - (m.conj() * Dmu * Dmu).real
    dens = 2 * proj.real - quad / (1.0 - abs(m) ** 2)
    return TwoFormSamples(dens.real, "chi")


def integrated_chi(rho: MetricDensity, mu: BeltramiField, R_hol: Field | None = None) -> float:
    return chi(rho, mu, R_hol).integral()


def _psi(family: DeformationFamily, rho: MetricDensity, t) -> Field:
    """d_Zbar ln rho_ZZbar on the fiber over t."""
    sol = family.solve(t)
    mu = family.evaluate(t)
    log_r = Field(np.log(rho_ZZ(rho, sol).values.real), rho.grid)
    return d_Zbar(log_r, sol, mu)


@dataclass(frozen=True)
class C1Components:
    """Components of d dbar ln rho_ZZbar on the total space over t."""

    fiber: Field  # dZbar dZ
    mixed: Field  # dZbar dt: d_t d_Zbar ln rho_ZZbar
    mixed_bar: Field  # dtbar dZ

    @property
    def grid(self):
        return self.fiber.grid


def c1_vertical(family: DeformationFamily, t=None, rho: MetricDensity | None = None, step: float | None = None) -> C1Components:
    """Component fields of d dbar ln rho_ZZbar; d_t by Richardson-extrapolated differences at fixed z."""
    if family.dim != 1:
        raise ConfigError("c1_vertical needs a one-parameter family")
    rho = rho or MetricDensity.flat(family.grid)
    if rho.grid != family.grid:
        raise GridMismatch("rho and family on different grids")
    t = family._point(family.t if t is None else t)
    h = family.step if step is None else step
    sol = family.solve(t)
    mu = family.evaluate(t)
    log_r = Field(np.log(rho_ZZ(rho, sol).values.real), rho.grid)
    fiber = d_Z(d_Zbar(log_r, sol, mu), sol, mu)
    X = richardson(lambda s: d_t(lambda p: _psi(family, rho, p), t, s), h)
    # ln rho_ZZbar is real, so the dtbar dZ component is the conjugate
    return C1Components(fiber, X, X.conj())


def pushforward_c1_squared(family: DeformationFamily, rho: MetricDensity | None = None, t=None) -> float:
    """(1/2 pi^2) * fiber integral of |d_t d_Zbar ln rho_ZZbar|^2 in the Z measure."""
    rho = rho or MetricDensity.flat(family.grid)
    t = family._point(family.t if t is None else t)
    comp = c1_vertical(family, t, rho)
    sol = family.solve(t)
    mu = family.evaluate(t)
    jac = abs(sol.lam) ** 2 * (1.0 - abs(mu.mu) ** 2)
    return float(integrate(jac * abs(comp.mixed) ** 2).real / (2 * np.pi**2))


def chi_mixed_derivative(family: DeformationFamily, rho: MetricDensity, t=None, R_hol=None) -> float:
    """d_tbar d_t of the integrated density (Richardson-extrapolated)."""
    t = family._point(family.t if t is None else t)

    def f(p):
        return integrated_chi(rho, family.evaluate(p), R_hol)

    return float(np.real(richardson(lambda s: d_tbar_d_t(f, t, s), family.step)))


@dataclass(frozen=True)
class ChiIdentityReport:
    lhs: float  # pushforward of c1^2
    rhs: float  # orientation_sign * (1/2 pi^2) d_tbar d_t integral chi
    rhs_literal: float
    orientation_sign: float
    abs_gap: float
    rel_gap: float
    step: float

    def as_dict(self) -> dict:
        return asdict(self)

    def holds(self, rel_tol: float = 1e-2, abs_tol: float = 1e-8) -> bool:
        return self.abs_gap <= abs_tol or self.rel_gap <= rel_tol


def check_chi_identity(family: DeformationFamily, rho: MetricDensity | None = None, R_hol=None) -> ChiIdentityReport:
    """Compare the fiber integral of c1^2 with d_tbar d_t of the integrated density."""
    rho = rho or MetricDensity.flat(family.grid)
    lhs = pushforward_c1_squared(family, rho)
    literal = chi_mixed_derivative(family, rho, R_hol=R_hol) / (2 * np.pi**2)
    rhs = ORIENTATION_SIGN * literal
    gap = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel = gap / scale if scale > 0 else 0.0
    return ChiIdentityReport(lhs, rhs, literal, ORIENTATION_SIGN, gap, rel, family.step)


def bump(grid, amplitude: float = 0.1, width: float = 1.0) -> Field:
    """Smooth periodic bump amplitude * exp(-(sin^2 pi(x-1/2) + sin^2 pi(y-1/2)) / width^2)."""
    if width <= 0:
        raise ConfigError("bump width must be positive")
    return grid.from_function(
        lambda x, y: amplitude * np.exp(-(np.sin(np.pi * (x - 0.5)) ** 2 + np.sin(np.pi * (y - 0.5)) ** 2) / width**2)
    )


def factorization_functional(
    j: int,
    mu: BeltramiField,
    rho: MetricDensity,
    method: Method | str = Method.numerical_heat_kernel,
    heat: HeatConfig = HeatConfig(),
) -> dict:
    """F = Gamma(rho, mu) - Gamma(rho, 0) + (C_j / 12 pi) * pi_* chi, with its parts.

    pi_* chi is ORIENTATION_SIGN times the integral of the density under
    dzbar^dz / 2i, the same orientation in which ``check_chi_identity`` holds.
    """
    g_mu = quillen_gamma(j, mu, rho, method, heat)
    g_0 = quillen_gamma(j, BeltramiField.zero(mu.grid), rho, method, heat)
    ichi = integrated_chi(rho, mu)
    coef = c_j(j) / (12 * np.pi)
    return {
        "F": g_mu.gamma - g_0.gamma + coef * ORIENTATION_SIGN * ichi,
        "gamma_mu": g_mu.gamma,
        "gamma_0": g_0.gamma,
        "integrated_chi": ichi,
        "flags": sorted(set(g_mu.flags) | set(g_0.flags)),
    }


@dataclass(frozen=True)
class WeylReport:
    F_rho: float
    F_weyl: float
    delta_F: float
    # Weyl variation of Gamma(rho, mu) - Gamma(rho, 0) without the counterterm
    delta_uncorrected: float
    ratio: float
    # literal denominator |F(rho) - F(flat reference)|
    reference_deviation: float
    literal_ratio: float
    flags: tuple[str, ...] = ()

    def holds(self, tol: float = 0.05) -> bool:
        return self.ratio <= tol


def check_weyl_independence(
    j: int,
    mu: BeltramiField,
    rho: MetricDensity,
    sigma: Field,
    method: Method | str = Method.numerical_heat_kernel,
    heat: HeatConfig = HeatConfig(),
) -> WeylReport:
    """Compare F at rho and at exp(sigma) rho."""
    a = factorization_functional(j, mu, rho, method, heat)
    b = factorization_functional(j, mu, rho.weyl(sigma), method, heat)
    flat = MetricDensity.flat(mu.grid)
    ref = a if rho == flat else factorization_functional(j, mu, flat, method, heat)
    dF = b["F"] - a["F"]
    dU = (b["gamma_mu"] - b["gamma_0"]) - (a["gamma_mu"] - a["gamma_0"])
    ref_dev = abs(b["F"] - ref["F"])
    ratio = abs(dF) / abs(dU) if dU != 0 else np.inf
    literal = abs(dF) / ref_dev if ref_dev > 0 else np.inf
    flags = tuple(sorted(set(a["flags"]) | set(b["flags"])))
    return WeylReport(a["F"], b["F"], dF, dU, float(ratio), ref_dev, float(literal), flags)


@dataclass(frozen=True)
class FactorizationReport:
    j: int
    c_j: int
    coefficient: float
    method: str
    F: float
    mixed_derivative: float
    mixed_derivative_gamma: float
    mixed_derivative_counterterm: float
    step: float
    flags: tuple[str, ...] = ()
    weyl: WeylReport | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def check_factorization(
    j: int,
    family: DeformationFamily,
    rho: MetricDensity | None = None,
    method: Method | str = Method.torus_exact_oracle,
    sigma: Field | None = None,
    heat: HeatConfig = HeatConfig(),
) -> FactorizationReport:
    """Mixed t-derivative of F along the family; with ``sigma`` also the Weyl check at the base point.

    The stencil is the plain five-point one (no Richardson), matching the
    normalization in which the harmonicity tolerance is stated.
    """
    if family.dim != 1:
        raise ConfigError("check_factorization needs a one-parameter family")
    rho = rho or MetricDensity.flat(family.grid)
    method = Method(method)
    t = family.t
    h = family.step
    coef = c_j(j) / (12 * np.pi)
    flags: set[str] = set()
    g0 = quillen_gamma(j, BeltramiField.zero(family.grid), rho, method, heat)
    flags |= set(g0.flags)
    cache: dict = {}

    def parts(p):
        key = tuple(np.round(p, 15))
        if key not in cache:
            mu = family.evaluate(p)
            q = quillen_gamma(j, mu, rho, method, heat)
            flags.update(q.flags)
            cache[key] = (q.gamma - g0.gamma, coef * ORIENTATION_SIGN * integrated_chi(rho, mu))
        return cache[key]

    dg = float(d_tbar_d_t(lambda p: parts(p)[0], t, h))
    dc = float(d_tbar_d_t(lambda p: parts(p)[1], t, h))
    F = sum(parts(t))
    weyl = None
    if sigma is not None:
        weyl = check_weyl_independence(j, family.evaluate(t), rho, sigma, method, heat)
        flags |= set(weyl.flags)
    return FactorizationReport(
        int(j), c_j(j), coef, method.value, float(F), dg + dc, dg, dc, h, tuple(sorted(flags)), weyl
    )
