"""Periodic spectral grid on the flat torus C / (Z + tau Z).

Nodes are z = x + tau*y with (x, y) = (a/n, b/n), a, b = 0..n-1.  Field values
are stored as complex (n, n) arrays indexed ``[a, b]``; flattening is row-major
in (a, b), so node ``a*n + b`` is (x_a, y_b).

Derivatives use numpy's FFT (forward kernel exp(-2 pi i k x)).  With
d/dx = d_z + d_zbar and d/dy = tau d_z + conj(tau) d_zbar one gets

    d_z    = (conj(tau) d_x - d_y) / (conj(tau) - tau)
    d_zbar = (d_y - tau d_x)       / (conj(tau) - tau)

The Nyquist rows/columns (k = -n/2) get multiplier 0 in both, which keeps
d_zbar(conj f) == conj(d_z f) exact and makes the derivative matrices
skew-adjoint partners: D_z^H = -D_zbar.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Number
from typing import Callable

import numpy as np

from .errors import ConfigError, GridMismatch


@dataclass(frozen=True)
class TorusModulus:
    tau: complex

    def __post_init__(self):
        tau = complex(self.tau)
        if not np.isfinite(tau.real) or not np.isfinite(tau.imag):
            raise ConfigError(f"tau must be finite, got {tau}")
        if tau.imag <= 0:
            raise ConfigError(f"Im(tau) must be positive, got tau={tau}")
        object.__setattr__(self, "tau", tau)

    @property
    def imag(self) -> float:
        return self.tau.imag


@dataclass(frozen=True)
class Grid:
    """Uniform n x n grid on the unit lattice square of a torus."""

    modulus: TorusModulus
    n: int

    def __post_init__(self):
        if not isinstance(self.modulus, TorusModulus):
            object.__setattr__(self, "modulus", TorusModulus(self.modulus))
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ConfigError(f"grid resolution must be an even integer >= 4, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def tau(self) -> complex:
        return self.modulus.tau

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def area(self) -> float:
        return self.modulus.imag

    @property
    def cell_area(self) -> float:
        """Quadrature weight of every node."""
        return self.modulus.imag / self.size

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.n) / self.n
        x, y = np.meshgrid(s, s, indexing="ij")
        x.setflags(write=False)
        y.setflags(write=False)
        return x, y

    @cached_property
    def z(self) -> np.ndarray:
        x, y = self.xy
        z = x + self.tau * y
        z.setflags(write=False)
        return z

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers (m, k) along x and y, broadcastable to (n, n)."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        return k[:, None], k[None, :]

    @cached_property
    def resolved(self) -> np.ndarray:
        """Boolean mask of Fourier modes excluding the Nyquist row/column."""
        mask = np.ones((self.n, self.n), dtype=bool)
        mask[self.n // 2, :] = False
        mask[:, self.n // 2] = False
        mask.setflags(write=False)
        return mask

    @cached_property
    def symbols(self) -> tuple[np.ndarray, np.ndarray]:
        """Fourier multipliers of d_z and d_zbar."""
        m, k = self.wavenumbers
        tau = self.tau
        den = np.conj(tau) - tau
        sz = 2j * np.pi * (np.conj(tau) * m - k) / den
        szb = 2j * np.pi * (k - tau * m) / den
        sz = np.where(self.resolved, sz, 0.0)
        szb = np.where(self.resolved, szb, 0.0)
        sz.setflags(write=False)
        szb.setflags(write=False)
        return sz, szb

    def field(self, values) -> "Field":
        return Field(values, self)

    def constant(self, value: complex = 1.0) -> "Field":
        return Field(np.full((self.n, self.n), value, dtype=complex), self)

    def from_function(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        """Sample ``f(x, y)`` on the lattice coordinates."""
        x, y = self.xy
        return Field(np.broadcast_to(f(x, y), (self.n, self.n)), self)

    def mode(self, m: int, k: int, amplitude: complex = 1.0) -> "Field":
        """amplitude * exp(2 pi i (m x + k y))."""
        x, y = self.xy
        return Field(amplitude * np.exp(2j * np.pi * (m * x + k * y)), self)


def make_grid(tau, n: int) -> Grid:
    modulus = tau if isinstance(tau, TorusModulus) else TorusModulus(tau)
    return Grid(modulus, n)


class Field(np.lib.mixins.NDArrayOperatorsMixin):
    """Immutable complex samples on a grid.

    Arithmetic and numpy ufuncs act sample-wise and return Fields; mixing
    Fields from different grids raises GridMismatch.
    """

    __slots__ = ("values", "grid")

    def __init__(self, values, grid: Grid):
        arr = np.array(values, dtype=complex)
        if arr.shape != (grid.n, grid.n):
            if arr.size == grid.size:
                arr = arr.reshape(grid.n, grid.n)
            else:
                raise ConfigError(f"expected {grid.size} samples, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("field samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "grid", grid)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        grid = self.grid
        args = []
        for x in inputs:
            if isinstance(x, Field):
                if x.grid != grid:
                    raise GridMismatch("fields live on different grids")
                args.append(x.values)
            elif isinstance(x, (Number, np.ndarray, np.generic)):
                args.append(x)
            else:
                return NotImplemented
        out = getattr(ufunc, method)(*args, **kwargs)
        if isinstance(out, tuple):
            return tuple(Field(o, grid) for o in out)
        if isinstance(out, np.ndarray) and out.shape == (grid.n, grid.n):
            return Field(out, grid)
        return out

    def __repr__(self):
        return f"Field(n={self.grid.n}, tau={self.grid.tau}, sup={self.sup():.3g})"

    @property
    def real(self) -> "Field":
        return Field(self.values.real, self.grid)

    @property
    def imag(self) -> "Field":
        return Field(self.values.imag, self.grid)

    def conj(self) -> "Field":
        return Field(np.conj(self.values), self.grid)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> complex:
        return complex(self.values.mean())

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def is_real(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.values.imag))) <= tol * max(1.0, self.sup())

    def same_grid(self, *others: "Field") -> None:
        for o in others:
            if o.grid != self.grid:
                raise GridMismatch("fields live on different grids")


def _apply(f: Field, symbol: np.ndarray) -> Field:
    return Field(np.fft.ifft2(symbol * np.fft.fft2(f.values)), f.grid)


def d_z(f: Field) -> Field:
    return _apply(f, f.grid.symbols[0])


def d_zbar(f: Field) -> Field:
    return _apply(f, f.grid.symbols[1])


def inverse_d_zbar(f: Field) -> Field:
    """Mean-zero periodic solution u of d_zbar u = f - mean(f) (Nyquist dropped)."""
    szb = f.grid.symbols[1]
    inv = np.zeros_like(szb)
    nz = szb != 0
    inv[nz] = 1.0 / szb[nz]
    return _apply(f, inv)


def integrate(f) -> complex:
    """Uniform-weight quadrature of f against the area form dzbar^dz / 2i."""
    return complex(f.values.sum() * f.grid.cell_area)


def inner(f: Field, g: Field, weight: Field | None = None) -> complex:
    """Weighted L2 product  integral of weight * conj(f) * g."""
    f.same_grid(g)
    prod = np.conj(f.values) * g.values
    if weight is not None:
        f.same_grid(weight)
        prod = prod * weight.values
    return complex(prod.sum() * f.grid.cell_area)


def resample(f: Field, n: int) -> Field:
    """Fourier interpolation of f onto the n x n grid of the same torus.

    Nyquist modes are dropped (they carry no derivative information); for
    n a multiple of f.grid.n the result agrees with f at the shared nodes up
    to that Nyquist content.
    """
    src = f.grid
    target = make_grid(src.modulus, n)
    if n == src.n:
        return f
    if n < src.n:
        raise ConfigError("resample only refines")
    coeffs = np.where(src.resolved, np.fft.fft2(f.values), 0.0) / src.size
    m, k = src.wavenumbers
    ms, ks = np.broadcast_arrays(m, k)
    big = np.zeros((n, n), dtype=complex)
    big[ms.astype(int) % n, ks.astype(int) % n] = coeffs
    return Field(np.fft.ifft2(big) * target.size, target)


def restrict(f: Field, grid: Grid) -> Field:
    """Samples of a fine-grid field at the nodes of a coarser grid."""
    if f.grid.modulus != grid.modulus or f.grid.n % grid.n:
        raise GridMismatch("grids are not nested")
    r = f.grid.n // grid.n
    return Field(f.values[::r, ::r], grid)


def random_trig_polynomial(grid: Grid, degree: int, rng: np.random.Generator, real: bool = True) -> Field:
    """Random trigonometric polynomial with |m|, |k| <= degree and unit-scale coefficients."""
    if 2 * degree >= grid.n:
        raise ConfigError(f"degree {degree} not resolvable on n={grid.n}")
    coeffs = np.zeros((grid.n, grid.n), dtype=complex)
    r = np.arange(-degree, degree + 1)
    for m in r:
        for k in r:
            coeffs[m % grid.n, k % grid.n] = rng.normal() + 1j * rng.normal()
    vals = np.fft.ifft2(coeffs) * grid.size
    if real:
        vals = vals.real
    return Field(vals, grid)


def derivative_matrices(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Dense node-basis matrices of d_z and d_zbar (size n^2 x n^2)."""
    N, n = grid.size, grid.n
    eye = np.eye(N, dtype=complex).reshape(N, n, n)
    sz, szb = grid.symbols
    fe = np.fft.fft2(eye)
    dz = np.fft.ifft2(sz * fe).reshape(N, N).T
    dzb = np.fft.ifft2(szb * fe).reshape(N, N).T
    return np.ascontiguousarray(dz), np.ascontiguousarray(dzb)


def resolved_mode_basis(grid: Grid) -> np.ndarray:
    """Orthonormal node-space basis of all Fourier modes except the Nyquist ones.

    Shape (n^2, (n-1)^2); column for mode (m, k) is exp(2 pi i (m x + k y)) / n.
    """
    m, k = grid.wavenumbers
    x, y = grid.xy
    ms, ks = np.broadcast_arrays(m, k)
    sel = grid.resolved
    phase = np.multiply.outer(x.reshape(-1), ms[sel]) + np.multiply.outer(y.reshape(-1), ks[sel])
    return np.exp(2j * np.pi * phase) / grid.n
