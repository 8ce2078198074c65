"""Dense matrices for the deformed operators T_{j,mu}, their adjoints and Laplacians.

T_{j,mu} = (1 - |mu|^2)^{-1} (dbar - mu d - j (d mu)) maps (j,0)- to
(j,1)-differentials written in the reference coordinate.  Inner products are
those of the metric rho |dz + mu dzbar|^2:

    domain   (j,0):  integral (1 - |mu|^2) rho^(1-j) conj(f) g
    codomain (j,1):  integral (1 - |mu|^2) rho^(-j)  conj(f) g

With these, the adjoint is T* = -rho^(j-1) conj(T_{1-j}) rho^(-j) exactly,
also on the grid.  The Laplacian is normalized as Delta_j = 4 T* T, so that
Delta_0 at mu = 0 is the Laplace-Beltrami operator -(4/rho) d dbar.

Eigenproblems are posed on the span of non-Nyquist Fourier modes, where the
node-basis derivative matrices are invertible off the constants: a Galerkin
generalized Hermitian problem  K c = lambda G c  with K = 4 B^H B,
B = W_cod^(1/2) T Q and G = Q^H W_dom Q.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .beltrami import BeltramiField
from .errors import AdjointMismatch, ConfigError, GridMismatch, IllSeparatedSpectrum
from .geometry import MetricDensity
from .torus_grid import Field, Grid, d_z, derivative_matrices, inner, resolved_mode_basis

# Delta_0 at mu = 0 equals -(4/rho) d dbar.
LAPLACIAN_SCALE = 4.0
MAX_EIGEN_N = 32
ADJOINT_TOL = 1e-8
KERNEL_REL_TOL = 1e-6


@lru_cache(maxsize=8)
def _matrices(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dz, dzb = derivative_matrices(grid)
    Q = resolved_mode_basis(grid)
    for a in (dz, dzb, Q):
        a.setflags(write=False)
    return dz, dzb, Q


@dataclass(frozen=True)
class WeightedOperator:
    """Node-basis matrix together with the inner-product weights of its spaces."""

    matrix: np.ndarray
    domain_weight: Field
    codomain_weight: Field
    j: int
    kind: str
    # T factor (with its own weights) kept so spectra can be computed from B^H B
    factor: "WeightedOperator | None" = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> Grid:
        return self.domain_weight.grid

    def apply(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise GridMismatch("field and operator on different grids")
        return Field(self.matrix @ f.flat(), self.grid)


@dataclass(frozen=True)
class KernelBasis:
    vectors: list[Field]
    j: int
    tol: float
    rayleigh: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.vectors)


def _check_inputs(j, mu: BeltramiField, rho: MetricDensity) -> Grid:
    if int(j) != j:
        raise ConfigError(f"only integer weights j are supported, got {j}")
    if mu.grid != rho.grid:
        raise GridMismatch("mu and rho on different grids")
    if mu.sup_norm >= 1:
        raise ConfigError("sup|mu| must be < 1")
    return mu.grid


def _weights(j: int, mu: BeltramiField, rho: MetricDensity) -> tuple[Field, Field]:
    one_minus = 1.0 - abs(mu.mu) ** 2
    return one_minus * rho.power(1 - j), one_minus * rho.power(-j)


def _T_matrix(j: int, mu: BeltramiField) -> np.ndarray:
    dz, dzb, _ = _matrices(mu.grid)
    m = mu.mu.flat()
    dmu = d_z(mu.mu).flat()
    pre = 1.0 / (1.0 - np.abs(m) ** 2)
    M = dzb - m[:, None] * dz
    M[np.diag_indices_from(M)] -= j * dmu
    return pre[:, None] * M


def build_T(j: int, mu: BeltramiField, rho: MetricDensity) -> WeightedOperator:
    _check_inputs(j, mu, rho)
    dom, cod = _weights(int(j), mu, rho)
    return WeightedOperator(_T_matrix(int(j), mu), dom, cod, int(j), "T")


def build_T_adjoint(j: int, mu: BeltramiField, rho: MetricDensity) -> WeightedOperator:
    """T*_{j,mu} = -rho^(j-1) conj(T_{1-j,mu}) rho^(-j), as a map codomain -> domain."""
    _check_inputs(j, mu, rho)
    j = int(j)
    dom, cod = _weights(j, mu, rho)
    left = rho.power(j - 1).flat()
    right = rho.power(-j).flat()
    M = -left[:, None] * np.conj(_T_matrix(1 - j, mu)) * right[None, :]
    return WeightedOperator(M, cod, dom, j, "T*")


def weighted_adjoint(op: WeightedOperator) -> np.ndarray:
    """Matrix adjoint with respect to the weighted domain/codomain products."""
    wd = op.domain_weight.flat().real
    wc = op.codomain_weight.flat().real
    return (op.matrix.conj().T * wc[None, :]) / wd[:, None]


def dealiased_basis(grid: Grid, band: int | None = None) -> np.ndarray:
    """Orthonormal node-space basis of modes with |m|, |k| <= band (default n // 3)."""
    band = grid.n // 3 if band is None else band
    m, k = grid.wavenumbers
    sel = (np.abs(m) <= band) & (np.abs(k) <= band)
    _, _, Q = _matrices(grid)
    return Q[:, sel[grid.resolved]]


def _adjoint_gap(analytic: np.ndarray, numeric: np.ndarray, P: np.ndarray) -> float:
    # Pseudo-spectral products obey the product rule only on resolved bands,
    # so the two forms of the adjoint are compared there.
    A = P.conj().T @ analytic @ P
    N = P.conj().T @ numeric @ P
    return float(np.linalg.norm(A - N, 2) / max(np.linalg.norm(N, 2), 1e-300))


def adjoint_mismatch(j: int, mu: BeltramiField, rho: MetricDensity, band: int | None = None) -> float:
    """Relative operator-norm gap between analytic and weighted-transpose adjoints.

    Measured on the span of Fourier modes |m|, |k| <= band (2/3 dealiasing by
    default).  At constant mu and rho the two agree on the whole grid.
    """
    T = build_T(j, mu, rho)
    analytic = build_T_adjoint(j, mu, rho).matrix
    return _adjoint_gap(analytic, weighted_adjoint(T), dealiased_basis(mu.grid, band))


def _check_size(grid: Grid):
    if grid.n > MAX_EIGEN_N:
        raise ConfigError(f"dense eigen-work is capped at n <= {MAX_EIGEN_N}, got n={grid.n}")


def build_laplacian(
    j: int, mu: BeltramiField, rho: MetricDensity, check_adjoint: bool = True
) -> WeightedOperator:
    """Delta_{j,mu} = 4 T* T, self-adjoint for the domain weight.

    With ``check_adjoint`` the analytic adjoint is compared with the
    weighted transpose (see ``adjoint_mismatch``) and AdjointMismatch raised
    beyond 1e-8.
    """
    grid = _check_inputs(j, mu, rho)
    _check_size(grid)
    T = build_T(j, mu, rho)
    Ts = build_T_adjoint(j, mu, rho)
    if check_adjoint:
        gap = _adjoint_gap(Ts.matrix, weighted_adjoint(T), dealiased_basis(grid))
        if gap > ADJOINT_TOL:
            raise AdjointMismatch(f"adjoint mismatch {gap:.3e} for j={j}")
    M = LAPLACIAN_SCALE * (Ts.matrix @ T.matrix)
    return WeightedOperator(M, T.domain_weight, T.domain_weight, int(j), "Delta", factor=T)


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    coefficients: np.ndarray  # Galerkin coefficients, G-orthonormal columns
    grid: Grid
    j: int

    def vector(self, i: int) -> Field:
        _, _, Q = _matrices(self.grid)
        return Field(Q @ self.coefficients[:, i], self.grid)


def eigensystem(op: WeightedOperator, vectors: bool = True) -> Eigensystem:
    """Eigenpairs of a Laplacian on the non-Nyquist Fourier span."""
    if op.kind != "Delta" or op.factor is None:
        raise ConfigError("eigensystem needs a Laplacian built by build_laplacian")
    grid = op.grid
    _check_size(grid)
    _, _, Q = _matrices(grid)
    dA = grid.cell_area
    wd = op.domain_weight.flat().real * dA
    wc = op.factor.codomain_weight.flat().real * dA
    B = np.sqrt(wc)[:, None] * (op.factor.matrix @ Q)
    K = LAPLACIAN_SCALE * (B.conj().T @ B)
    G = Q.conj().T @ (wd[:, None] * Q)
    K = 0.5 * (K + K.conj().T)
    G = 0.5 * (G + G.conj().T)
    if vectors:
        vals, vecs = sla.eigh(K, G)
    else:
        vals, vecs = sla.eigh(K, G, eigvals_only=True), None
    return Eigensystem(np.asarray(vals), vecs, grid, op.j)


def spectrum(op: WeightedOperator) -> np.ndarray:
    return eigensystem(op, vectors=False).values


def kernel_basis(op: WeightedOperator, tol: float | None = None, eig: Eigensystem | None = None) -> KernelBasis:
    """Domain-orthonormal basis of the numerical null space of a Laplacian.

    ``tol`` defaults to 1e-6 times the largest eigenvalue.  Raises
    IllSeparatedSpectrum if the first discarded eigenvalue is within 10*tol.
    """
    eig = eig or eigensystem(op)
    vals = eig.values
    if tol is None:
        tol = KERNEL_REL_TOL * float(vals[-1])
    keep = vals <= tol
    n_keep = int(keep.sum())
    if n_keep < len(vals) and vals[n_keep] < 10 * tol:
        raise IllSeparatedSpectrum(
            f"eigenvalue {vals[n_keep]:.3e} too close to kernel threshold {tol:.3e}"
        )
    vecs = [eig.vector(i) for i in range(n_keep)]
    return KernelBasis(vecs, op.j, float(tol), tuple(float(v) for v in vals[:n_keep]))


def gram_matrix(vectors: list[Field], weight: Field) -> np.ndarray:
    k = len(vectors)
    G = np.empty((k, k), dtype=complex)
    for a in range(k):
        for b in range(k):
            G[a, b] = inner(vectors[a], vectors[b], weight)
    return G


def kernel_dimension(j: int, mu: BeltramiField, rho: MetricDensity, tol: float | None = None) -> int:
    return kernel_basis(build_laplacian(j, mu, rho, check_adjoint=False), tol).dimension


def riemann_roch(j: int, mu: BeltramiField, rho: MetricDensity, genus: int = 1) -> dict:
    """Kernel dimensions N_j, N_{1-j} against the index (g-1)(2j-1)."""
    n_j = kernel_dimension(j, mu, rho)
    n_dual = kernel_dimension(1 - j, mu, rho)
    index = (genus - 1) * (2 * j - 1)
    return {
        "j": int(j),
        "N_j": n_j,
        "N_1mj": n_dual,
        "difference": n_j - n_dual,
        "index": index,
        "holds": n_j - n_dual == index,
    }
