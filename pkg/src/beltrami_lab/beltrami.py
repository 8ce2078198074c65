"""Quasiconformal coordinate and integrating factor for a Beltrami coefficient.

The solution of (d_zbar - mu d_z) Z = 0 is sought as

    Z = z + c * conj(z) + w,     w doubly periodic with zero mean,

so that d_z Z = 1 + d_z w and d_zbar Z = c + d_zbar w.  Each sweep sets
c = mean(mu (1 + d_z w)) and w = d_zbar^{-1}[mu (1 + d_z w) - c].  The map
d_z d_zbar^{-1} is unitary on mean-zero fields, so the sweep contracts with
rate sup|mu|.  The image lattice is spanned by 1 + c and tau + c conj(tau).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatch, NonConvergence, SupNormViolation
from .torus_grid import Field, TorusModulus, d_z, d_zbar, inverse_d_zbar, resample, restrict

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
# Spectral fixed-point iteration slows down as |mu| -> 1.
SOLVER_SUP_LIMIT = 0.7


@dataclass(frozen=True)
class BeltramiField:
    mu: Field

    def __post_init__(self):
        if not isinstance(self.mu, Field):
            raise ConfigError("mu must be a Field")
        if self.sup_norm >= 1.0:
            raise SupNormViolation(f"sup|mu| = {self.sup_norm:.4g} must be < 1")

    @property
    def sup_norm(self) -> float:
        return self.mu.sup()

    @property
    def grid(self):
        return self.mu.grid

    @property
    def is_constant(self) -> bool:
        v = self.mu.values
        return bool(np.max(np.abs(v - v.flat[0])) <= 1e-14)

    @classmethod
    def zero(cls, grid) -> "BeltramiField":
        return cls(grid.constant(0.0))

    @classmethod
    def constant(cls, grid, value: complex) -> "BeltramiField":
        return cls(grid.constant(value))


@dataclass(frozen=True)
class QcSolution:
    """Z = z + c conj(z) + w with integrating factor lam = d_z Z."""

    w: Field
    c: complex
    lam: Field
    residual: float
    iterations: int

    @property
    def grid(self):
        return self.w.grid

    @property
    def Z(self) -> np.ndarray:
        """Node samples of the (non-periodic) coordinate Z."""
        z = self.grid.z
        return z + self.c * np.conj(z) + self.w.values

    @property
    def image_modulus(self) -> TorusModulus:
        tau = self.grid.tau
        return TorusModulus((tau + self.c * np.conj(tau)) / (1 + self.c))

    def dZ_dz(self) -> Field:
        return 1.0 + d_z(self.w)

    def dZ_dzbar(self) -> Field:
        return self.c + d_zbar(self.w)


def _residuals(w: Field, c: complex, mu: Field) -> tuple[float, float]:
    # second entry is d_z of the first divided by lam: the integrating-factor
    # equation (dbar - mu d) ln lam = d mu
    r = c + d_zbar(w) - mu * (1.0 + d_z(w))
    lam = 1.0 + d_z(w)
    return r.sup(), (d_z(r) / lam).sup()


def solve_beltrami(
    mu: BeltramiField,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sup_limit: float = SOLVER_SUP_LIMIT,
    oversample: int = 1,
) -> QcSolution:
    """Solve (d_zbar - mu d_z) Z = 0 by the periodic fixed-point sweep.

    Sweeps stop once both sup|d_zbar Z - mu d_z Z| and the integrating-factor
    residual (see ``check_pfaff``) are below ``tol``.  Raises SupNormViolation
    if sup|mu| > sup_limit and NonConvergence after ``max_iter`` sweeps.

    On a coarse grid the residual stalls at the Nyquist content of
    mu (1 + d_z w).  With ``oversample`` > 1, mu is Fourier-interpolated to a
    grid that many times finer, solved there, and w, lam restricted back to
    the original nodes (the reported residual is the fine-grid one).
    """
    if mu.sup_norm > sup_limit * (1 + 1e-12):
        raise SupNormViolation(f"sup|mu| = {mu.sup_norm:.4g} exceeds solver limit {sup_limit}")
    if int(oversample) != oversample or oversample < 1:
        raise ConfigError("oversample must be a positive integer")
    if oversample > 1:
        fine = BeltramiField(resample(mu.mu, mu.grid.n * int(oversample)))
        sol = solve_beltrami(fine, tol, max_iter, sup_limit)
        g = mu.grid
        return QcSolution(restrict(sol.w, g), sol.c, restrict(sol.lam, g), sol.residual, sol.iterations)
    m = mu.mu
    w = m.grid.constant(0.0)
    c = 0.0j
    residual, pfaff = _residuals(w, c, m)
    it = 0
    while max(residual, pfaff) > tol and it < max_iter:
        rhs = m * (1.0 + d_z(w))
        c = rhs.mean()
        w = inverse_d_zbar(rhs - c)
        residual, pfaff = _residuals(w, c, m)
        it += 1
    if max(residual, pfaff) > tol:
        raise NonConvergence("Beltrami iteration did not reach tolerance", residual, it)
    lam = 1.0 + d_z(w)
    if np.min(np.abs(lam.values)) <= 0:
        raise NonConvergence("integrating factor vanishes", residual, it)
    log.debug("Beltrami solve: %d sweeps, residual %.2e, c=%s", it, residual, c)
    return QcSolution(w=w, c=complex(c), lam=lam, residual=residual, iterations=it)


def check_pfaff(sol: QcSolution, mu: BeltramiField) -> float:
    """max of sup|d_zbar Z - mu d_z Z| and sup|(d_zbar - mu d_z) ln lam - d_z mu|.

    The log-derivative is taken as (d_zbar lam - mu d_z lam) / lam, which
    avoids choosing a branch of ln lam.
    """
    if sol.grid != mu.grid:
        raise GridMismatch("solution and mu on different grids")
    m = mu.mu
    beltrami = (sol.dZ_dzbar() - m * sol.dZ_dz()).sup()
    lam = sol.lam
    integrating = ((d_zbar(lam) - m * d_z(lam)) / lam - d_z(m)).sup()
    return max(beltrami, integrating)


def modulus_of_constant(mu: complex, tau) -> TorusModulus:
    """Modulus of the image lattice of Z = z + mu conj(z)."""
    mu = complex(mu)
    if abs(mu) >= 1:
        raise SupNormViolation(f"|mu| = {abs(mu):.4g} must be < 1")
    tau = tau.tau if isinstance(tau, TorusModulus) else complex(tau)
    return TorusModulus((tau + mu * np.conj(tau)) / (1 + mu))
