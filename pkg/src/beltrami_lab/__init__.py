"""Beltrami parametrization of complex structures on a flat torus.

Spectral tools for quasiconformal coordinates, the deformed Cauchy-Riemann
operators T_{j,mu}, zeta-regularized determinants, Quillen norms and the
local anomaly functional chi.
"""

__version__ = "0.1.0"

from .torus_grid import Field, Grid, TorusModulus, d_z, d_zbar, integrate, make_grid
from .beltrami import BeltramiField, QcSolution, check_pfaff, modulus_of_constant, solve_beltrami
from .anomaly import c_j

__all__ = [
    "BeltramiField",
    "Field",
    "Grid",
    "QcSolution",
    "TorusModulus",
    "c_j",
    "check_pfaff",
    "d_z",
    "d_zbar",
    "integrate",
    "make_grid",
    "modulus_of_constant",
    "solve_beltrami",
]
