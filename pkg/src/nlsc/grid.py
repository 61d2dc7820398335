"""Radial grids, fields, model parameters and the discrete operator P_c.

The quadratic form of P_c = -Delta + c|x|^-2 is discretized in the
conjugated variable g = r^rho f, where rho is the indicial exponent.  With
nu = sqrt(lambda(d) + c) one has

    |f|^2_{Hdot^1_c} = omega * int_0^inf r^(1 + 2 nu) |g'(r)|^2 dr,

and the discrete form sums K_e |g_{e+1} - g_e|^2 over cell edges with the
exact harmonic-mean conductance of the weight r^(1 + 2 nu).  The form is
nonnegative by construction and vanishes on the indicial profile r^-rho,
so the discrete Hardy inequality holds without tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import gamma, isclose, pi, sqrt

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    CouplingOutOfRange,
    DimensionUnsupported,
    ExponentOutOfRange,
    GridTooCoarse,
)

__all__ = [
    "ModelParams",
    "RadialGrid",
    "Field",
    "build_grid",
    "mass",
    "h1c_seminorm_sq",
    "h1_seminorm_sq",
    "lp_norm",
    "energy",
    "apply_pc",
    "hardy_residual",
    "stiffness_bands",
    "interpolate",
    "resample",
    "tail_decay_exponent",
]

_REGIME_TOL = 1e-12


def _lambda(d: int) -> float:
    return ((d - 2) / 2) ** 2


def _check_coupling(d: int, c: float) -> None:
    if not np.isfinite(c) or c <= -_lambda(d):
        raise CouplingOutOfRange(f"c={c} must exceed -lambda({d})={-_lambda(d)}")


@dataclass(frozen=True)
class ModelParams:
    """Dimension, nonlinearity exponent and coupling with derived exponents.

    Parameters
    ----------
    d : int
        Spatial dimension, at least 3.
    alpha : float
        Power of the focusing nonlinearity |u|^alpha u.
    c : float
        Inverse-square coupling, strictly above -lambda(d).
    """

    d: int
    alpha: float
    c: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise DimensionUnsupported(f"d={self.d}; only d >= 3 is supported")
        object.__setattr__(self, "d", int(self.d))
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ExponentOutOfRange(f"alpha={self.alpha} must be positive")
        _check_coupling(self.d, self.c)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "c", float(self.c))

    @property
    def lambda_d(self) -> float:
        return _lambda(self.d)

    @property
    def nu(self) -> float:
        return sqrt(self.lambda_d + self.c)

    @property
    def rho(self) -> float:
        return (self.d - 2) / 2 - self.nu

    @property
    def beta(self) -> float:
        return 1.0 - 2.0 * self.rho / (self.d - 2)

    @property
    def gamma_c(self) -> float:
        return self.d / 2 - 2 / self.alpha

    @property
    def alpha_star(self) -> float:
        return 4.0 / self.d

    @property
    def alpha_upper(self) -> float:
        return 4.0 / (self.d - 2)

    @property
    def c_bar(self) -> float:
        return min(self.c, 0.0)

    @property
    def regime(self) -> str:
        """One of mass-critical, intercritical, energy-critical,
        mass-subcritical, energy-supercritical."""
        a = self.alpha
        if isclose(a, self.alpha_star, rel_tol=_REGIME_TOL):
            return "mass-critical"
        if isclose(a, self.alpha_upper, rel_tol=_REGIME_TOL):
            return "energy-critical"
        if a < self.alpha_star:
            return "mass-subcritical"
        if a > self.alpha_upper:
            return "energy-supercritical"
        return "intercritical"

    @property
    def sigma(self) -> float | None:
        """(4 - (d-2) alpha) / (d alpha - 4), defined for intercritical alpha."""
        if self.regime != "intercritical":
            return None
        return (4 - (self.d - 2) * self.alpha) / (self.d * self.alpha - 4)

    def with_c(self, c: float) -> "ModelParams":
        return replace(self, c=c)

    def with_alpha(self, alpha: float) -> "ModelParams":
        return replace(self, alpha=alpha)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RadialGrid:
    """Staggered radial mesh r_j = (j + 1/2) h, j = 0..n-1.

    Attributes
    ----------
    nodes : ndarray
        Node radii.
    weights : ndarray
        Quadrature weights omega r_j^(d-1) h for integrals over R^d.
    """

    d: int
    n: int
    h: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = (np.arange(self.n) + 0.5) * self.h
        object.__setattr__(self, "nodes", _readonly(r))
        w = self.surface_factor * r ** (self.d - 1) * self.h
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def r_max(self) -> float:
        return self.n * self.h

    @property
    def surface_factor(self) -> float:
        return 2 * pi ** (self.d / 2) / gamma(self.d / 2)


def build_grid(d: int, r_max: float, n: int) -> RadialGrid:
    """Build a staggered grid on (0, r_max] with n cells."""
    if int(d) != d or d < 3:
        raise DimensionUnsupported(f"d={d}; only d >= 3 is supported")
    if int(n) != n or n < 8:
        raise GridTooCoarse(f"n={n}; at least 8 nodes are required")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    return RadialGrid(int(d), int(n), float(r_max) / int(n))


@dataclass(frozen=True)
class Field:
    """Complex radial profile sampled on a grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "Field":
        return cls(grid, func(grid.nodes))

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "Field":
        return cls(grid, np.zeros(grid.n))

    def scaled(self, a: complex) -> "Field":
        return Field(self.grid, a * self.values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.values)


@lru_cache(maxsize=64)
def _conductance(d: int, n: int, h: float, nu: float) -> np.ndarray:
    # edge e joins node e to node e+1; the last edge reaches the Dirichlet ghost
    omega = 2 * pi ** (d / 2) / gamma(d / 2)
    left = (np.arange(n) + 0.5) * h
    right = left + h
    if nu > 0:
        integral = (left ** (-2 * nu) - right ** (-2 * nu)) / (2 * nu)
    else:
        integral = np.log(right / left)
    return _readonly(omega / integral)


def _form_data(grid: RadialGrid, nu: float):
    rho = (grid.d - 2) / 2 - nu
    return _conductance(grid.d, grid.n, grid.h, float(nu)), grid.nodes ** rho


def _quadratic_form(f: "Field", nu: float) -> float:
    k, s = _form_data(f.grid, nu)
    dg = np.diff(np.append(s * f.values, 0.0))
    return float(np.sum(k * np.abs(dg) ** 2))


def stiffness_bands(grid: RadialGrid, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the symmetric stiffness matrix A.

    The discrete form is f^H A f and the discrete operator is
    P_c = W^-1 A with W = diag(weights).
    """
    _check_coupling(grid.d, c)
    k, s = _form_data(grid, sqrt(_lambda(grid.d) + c))
    k_left = np.concatenate(([0.0], k[:-1]))
    diag = s * s * (k_left + k)
    off = -k[:-1] * s[:-1] * s[1:]
    return diag, off


def _apply_bands(diag, off, v):
    out = diag * v
    out[:-1] += off * v[1:]
    out[1:] += off * v[:-1]
    return out


def mass(f: Field) -> float:
    """Quadrature of |f|^2 over R^d."""
    return float(np.sum(f.grid.weights * np.abs(f.values) ** 2))


def h1c_seminorm_sq(f: Field, c: float) -> float:
    """Discrete int |grad f|^2 + c |x|^-2 |f|^2 dx."""
    _check_coupling(f.grid.d, c)
    return _quadratic_form(f, sqrt(_lambda(f.grid.d) + c))


def h1_seminorm_sq(f: Field) -> float:
    """Discrete Dirichlet energy, the c = 0 case."""
    return h1c_seminorm_sq(f, 0.0)


def hardy_residual(f: Field) -> float:
    """int |grad f|^2 - lambda(d) int |x|^-2 |f|^2, i.e. the form at c = -lambda."""
    return _quadratic_form(f, 0.0)


def lp_norm(f: Field, p: float) -> float:
    """(int |f|^p dx)^(1/p)."""
    if not p >= 1:
        raise ExponentOutOfRange(f"p={p} must be at least 1")
    return float(np.sum(f.grid.weights * np.abs(f.values) ** p)) ** (1.0 / p)


def energy(f: Field, params: ModelParams) -> float:
    """E_c(f) = 1/2 |f|^2_{Hdot^1_c} - |f|^{a+2}_{L^{a+2}} / (a + 2)."""
    a = params.alpha
    t = h1c_seminorm_sq(f, params.c)
    l = float(np.sum(f.grid.weights * np.abs(f.values) ** (a + 2)))
    return 0.5 * t - l / (a + 2)


def apply_pc(f: Field, c: float) -> Field:
    """Discrete P_c f = W^-1 A f with Dirichlet data at r_max."""
    diag, off = stiffness_bands(f.grid, c)
    return Field(f.grid, _apply_bands(diag, off, f.values) / f.grid.weights)


def interpolate(f: Field, x, rho: float = 0.0) -> np.ndarray:
    """Evaluate f off-grid by a cubic spline of r^rho f.

    Below the first node r^rho f is held constant, which reproduces the
    local behaviour r^-rho; beyond r_max the field is zero.
    """
    grid = f.grid
    r = np.append(grid.nodes, grid.r_max)
    g = np.append(grid.nodes ** rho * f.values, 0.0)
    spline = CubicSpline(r, g)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=complex)
    inside = (x > 0) & (x < grid.r_max)
    xi = x[inside]
    out[inside] = spline(np.maximum(xi, grid.nodes[0])) * xi ** (-rho)
    return out


def resample(f: Field, lam: complex = 1.0, mu: float = 1.0, rho: float = 0.0) -> Field:
    """Return lam * f(mu r) on the same grid."""
    return Field(f.grid, lam * interpolate(f, mu * f.grid.nodes, rho))


def tail_decay_exponent(f: Field) -> float:
    """Power-law decay exponent p of |f| ~ r^-p between 0.45 and 0.9 r_max.

    Returns inf when the field vanishes there.
    """
    grid = f.grid
    ia = int(0.45 * grid.n)
    ib = int(0.9 * grid.n)
    fa, fb = abs(f.values[ia]), abs(f.values[ib])
    if fb == 0 or fa == 0:
        return float("inf")
    return float(-np.log(fb / fa) / np.log(grid.nodes[ib] / grid.nodes[ia]))
