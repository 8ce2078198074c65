"""Metric data in the Beltrami parametrization ds^2 = rho |dz + mu dzbar|^2.

Conventions
-----------
* Integrals use the area form dzbar^dz / 2i (``torus_grid.integrate``).
* Both string actions are normalized as S = -1/2 * integral X d_Z d_Zbar X in
  the isothermal coordinate Z.  In the reference coordinate this equals
  1/2 * integral |(d - conj(mu) dbar) X|^2 / (1 - |mu|^2), whose mu-derivative
  at mu = 0 is the stress component -1/2 (d X)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beltrami import BeltramiField, QcSolution
from .errors import ConfigError, GridMismatch
from .torus_grid import Field, d_z, d_zbar, integrate


@dataclass(frozen=True)
class MetricDensity:
    rho: Field

    def __post_init__(self):
        if not self.rho.is_real(1e-12):
            raise ConfigError("rho must be real")
        if np.min(self.rho.values.real) <= 0:
            raise ConfigError("rho must be positive")

    @property
    def grid(self):
        return self.rho.grid

    @property
    def is_constant(self) -> bool:
        v = self.rho.values.real
        return bool(np.ptp(v) <= 1e-14 * abs(v.flat[0]))

    @classmethod
    def flat(cls, grid, value: float = 1.0) -> "MetricDensity":
        return cls(grid.constant(value))

    def power(self, p: float) -> Field:
        return Field(self.rho.values.real ** p, self.grid)

    def weyl(self, sigma: Field) -> "MetricDensity":
        """exp(sigma) * rho."""
        return MetricDensity(Field(np.exp(sigma.values.real) * self.rho.values.real, self.grid))


@dataclass(frozen=True)
class DifferentialWeight:
    """Conformal weight (j, j_bar) of a differential a (dZ)^j (dZbar)^j_bar."""

    j: float
    j_bar: float = 0

    def __post_init__(self):
        for v in (self.j, self.j_bar):
            if (2 * v) != int(2 * v):
                raise ConfigError(f"weights must be integers or half-integers, got {v}")


@dataclass(frozen=True)
class ConnectionData:
    Gamma: Field
    Gamma_bar: Field
    R_scalar: Field
    R_hol: Field


def connection(rho: MetricDensity, R_hol: Field | None = None) -> ConnectionData:
    """Gamma = d ln rho, Gamma_bar = dbar ln rho, R = d Gamma - Gamma^2 / 2.

    R_hol defaults to zero, which is a holomorphic projective connection on the
    torus since z is a global flat coordinate.
    """
    log_rho = Field(np.log(rho.rho.values.real), rho.grid)
    gamma = d_z(log_rho)
    gamma_bar = d_zbar(log_rho)
    R = d_z(gamma) - 0.5 * gamma * gamma
    if R_hol is None:
        R_hol = rho.grid.constant(0.0)
    return ConnectionData(gamma, gamma_bar, R, R_hol)


def _check(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch("inputs live on different grids")


def volume_density(rho: MetricDensity, mu: BeltramiField) -> Field:
    """sqrt(g) = rho (1 - |mu|^2)."""
    _check(rho.rho, mu.mu)
    return rho.rho * (1.0 - abs(mu.mu) ** 2)


def rho_ZZ(rho: MetricDensity, sol: QcSolution) -> Field:
    """Metric coefficient in the isothermal coordinate: rho / |lam|^2."""
    _check(rho.rho, sol.lam)
    lam2 = np.abs(sol.lam.values) ** 2
    if np.min(lam2) == 0:
        raise ConfigError("integrating factor vanishes")
    return Field(rho.rho.values.real / lam2, rho.grid)


def norm_jj(alpha: Field, w: DifferentialWeight, rho: MetricDensity, mu: BeltramiField) -> float:
    """Squared norm  integral (1 - |mu|^2) |alpha|^2 rho^(1 - j - j_bar)."""
    _check(alpha, rho.rho, mu.mu)
    dens = (1.0 - abs(mu.mu) ** 2) * abs(alpha) ** 2 * rho.power(1 - w.j - w.j_bar)
    return integrate(dens).real


def d_Zbar(f: Field, sol: QcSolution, mu: BeltramiField) -> Field:
    """(dbar - mu d) f / (conj(lam) (1 - |mu|^2))."""
    m = mu.mu
    return (d_zbar(f) - m * d_z(f)) / (sol.lam.conj() * (1.0 - abs(m) ** 2))


def d_Z(f: Field, sol: QcSolution, mu: BeltramiField) -> Field:
    """(d - conj(mu) dbar) f / (lam (1 - |mu|^2))."""
    m = mu.mu
    return (d_z(f) - m.conj() * d_zbar(f)) / (sol.lam * (1.0 - abs(m) ** 2))


def _require_real(X: Field):
    if not X.is_real(1e-12):
        raise ConfigError("string coordinate X must be real")


def action_z(X: Field, mu: BeltramiField) -> float:
    """String action in the reference coordinate, local in mu.

    After integrating the outer (dbar - d mu) by parts on the closed torus the
    integrand is |(d - conj(mu) dbar) X|^2 / (2 (1 - |mu|^2)); mu enters only
    pointwise, so the discrete functional is exactly symmetric in X.
    """
    _require_real(X)
    _check(X, mu.mu)
    m = mu.mu
    u = d_z(X) - m.conj() * d_zbar(X)
    return 0.5 * integrate(abs(u) ** 2 / (1.0 - abs(m) ** 2)).real


def action_Z(X: Field, sol: QcSolution, mu: BeltramiField) -> float:
    """String action -1/2 integral dZbar^dZ/2i X d_Z d_Zbar X in the Z coordinate.

    Evaluated on the reference grid with the Jacobian |lam|^2 (1 - |mu|^2).
    """
    _require_real(X)
    _check(X, sol.lam, mu.mu)
    jac = abs(sol.lam) ** 2 * (1.0 - abs(mu.mu) ** 2)
    inner = d_Z(d_Zbar(X, sol, mu), sol, mu)
    return (-0.5 * integrate(jac * X * inner)).real


def stress_tensor(X: Field) -> Field:
    """Theta = -1/2 (d X)^2, the mu-source at mu = 0."""
    _require_real(X)
    dX = d_z(X)
    return -0.5 * dX * dX
