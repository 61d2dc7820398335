"""Virial potentials, the cutoff profile theta and localized virial bounds.

The cutoff derivative vartheta = theta' is

    2r                 on [0, 1]
    2[r - (r - 1)^3]   on (1, a],  a = 1 + 1/sqrt(3)
    quintic Hermite    on (a, 2)
    0                  on [2, inf)

The quintic matches value, slope and curvature at both ends, so vartheta is
C^2 and Delta^2 phi_R is bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import ConstructionFailed, RadiusOutOfRange, RegimeMismatch, ZeroField
from .grid import Field, ModelParams, RadialGrid, energy, h1c_seminorm_sq, mass

__all__ = [
    "CutoffProfile",
    "LocalizedWeight",
    "build_theta",
    "build_phi_r",
    "epsilon_bound",
    "positivity_margin",
    "virial_potential",
    "virial_first_derivative",
    "virial_second_derivative",
    "global_virial_rhs",
    "localized_constants",
    "localized_virial_bound",
    "masscrit_virial_bound",
    "radial_sobolev_check",
    "export_weight",
]

A_BREAK = 1.0 + 1.0 / sqrt(3.0)
_SEG = 2.0 - A_BREAK


def _quintic_basis(x):
    """Hermite basis on [0, 1] with zero data at x = 1.

    Returns h0 (value 1 at 0) and h2 (curvature 1 at 0) with their first
    three derivatives and antiderivatives.
    """
    h0 = 1 - 10 * x**3 + 15 * x**4 - 6 * x**5
    h0_1 = -30 * x**2 + 60 * x**3 - 30 * x**4
    h0_2 = -60 * x + 180 * x**2 - 120 * x**3
    h0_3 = -60 + 360 * x - 360 * x**2
    h0_i = x - 2.5 * x**4 + 3 * x**5 - x**6
    h2 = 0.5 * x**2 - 1.5 * x**3 + 1.5 * x**4 - 0.5 * x**5
    h2_1 = x - 4.5 * x**2 + 6 * x**3 - 2.5 * x**4
    h2_2 = 1 - 9 * x + 18 * x**2 - 10 * x**3
    h2_3 = -9 + 36 * x - 30 * x**2
    h2_i = x**3 / 6 - 0.375 * x**4 + 0.3 * x**5 - x**6 / 12
    return (h0, h0_1, h0_2, h0_3, h0_i), (h2, h2_1, h2_2, h2_3, h2_i)


@dataclass(frozen=True)
class CutoffProfile:
    """theta and its derivatives as vectorized functions of r >= 0."""

    a_value: float
    a_curv: float
    plateau: float

    def _pieces(self, r):
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros((5,) + r.shape)  # theta, vt, vt', vt'', vt'''
        m1 = r <= 1
        out[0][m1] = r[m1] ** 2
        out[1][m1] = 2 * r[m1]
        out[2][m1] = 2.0
        m2 = (r > 1) & (r <= A_BREAK)
        y = r[m2] - 1
        out[0][m2] = r[m2] ** 2 - y**4 / 2
        out[1][m2] = 2 * (r[m2] - y**3)
        out[2][m2] = 2 - 6 * y**2
        out[3][m2] = -12 * y
        out[4][m2] = -12.0
        m3 = (r > A_BREAK) & (r < 2)
        x = (r[m3] - A_BREAK) / _SEG
        b0, b2 = _quintic_basis(x)
        va, ca, L = self.a_value, self.a_curv * _SEG**2, _SEG
        theta_a = A_BREAK**2 - (A_BREAK - 1) ** 4 / 2
        out[0][m3] = theta_a + L * (va * b0[4] + ca * b2[4])
        out[1][m3] = va * b0[0] + ca * b2[0]
        out[2][m3] = (va * b0[1] + ca * b2[1]) / L
        out[3][m3] = (va * b0[2] + ca * b2[2]) / L**2
        out[4][m3] = (va * b0[3] + ca * b2[3]) / L**3
        m4 = r >= 2
        out[0][m4] = self.plateau
        return out[:, 0] if scalar else out

    def theta(self, r):
        return self._pieces(r)[0]

    def vartheta(self, r):
        return self._pieces(r)[1]

    def vartheta_prime(self, r):
        return self._pieces(r)[2]

    def derivatives(self, r):
        """(theta, vartheta, vartheta', vartheta'', vartheta''') at r."""
        return tuple(self._pieces(r))


def build_theta(samples: int = 20001) -> CutoffProfile:
    """Construct the cutoff and verify vartheta' < 0 on (a, 2).

    Raises
    ------
    ConstructionFailed
        If the sign condition or theta'' <= 2 fails on the dense sample.
    """
    va = 2 * (A_BREAK - 1 / (3 * sqrt(3.0)))
    ca = -12 / sqrt(3.0)
    theta_a = A_BREAK**2 - (A_BREAK - 1) ** 4 / 2
    b0, b2 = _quintic_basis(1.0)
    plateau = theta_a + _SEG * (va * b0[4] + ca * _SEG**2 * b2[4])
    prof = CutoffProfile(va, ca, float(plateau))
    r = np.linspace(A_BREAK, 2.0, samples)[1:-1]
    if np.any(prof.vartheta_prime(r) >= 0):
        raise ConstructionFailed("vartheta' is not negative on (1 + 1/sqrt3, 2)")
    rr = np.linspace(0, 3, samples)
    if np.any(prof.vartheta_prime(rr) > 2 + 1e-12):
        raise ConstructionFailed("theta'' exceeds 2")
    return prof


@dataclass(frozen=True)
class LocalizedWeight:
    """phi_R = R^2 theta(r/R) sampled on a grid with its defect weights.

    Attributes
    ----------
    dphi : ndarray
        phi_R'.
    chi1, chi2 : ndarray
        2 - phi_R'' and 2d - Delta phi_R.
    psi : ndarray
        2 - phi_R'/r.
    bilap : ndarray
        Delta^2 phi_R.
    bilap_sup, chi2_sup : float
        sup over r > R of |Delta^2 phi_R| and chi2, from a dense sample.
    """

    R: float
    grid: RadialGrid
    phi: np.ndarray
    dphi: np.ndarray
    chi1: np.ndarray
    chi2: np.ndarray
    psi: np.ndarray
    bilap: np.ndarray
    bilap_sup: float = float("nan")
    chi2_sup: float = float("nan")

    @property
    def values(self) -> np.ndarray:
        return self.phi


def _rescaled(profile: CutoffProfile, R: float, r: np.ndarray, d: int):
    s = r / R
    th, vt, vt1, vt2, vt3 = profile.derivatives(s)
    lap = vt1 + (d - 1) * vt / s
    lap1 = vt2 + (d - 1) * (vt1 / s - vt / s**2)
    lap2 = vt3 + (d - 1) * (vt2 / s - 2 * vt1 / s**2 + 2 * vt / s**3)
    return {
        "phi": R**2 * th,
        "dphi": R * vt,
        "ddphi": vt1,
        "lap": lap,
        "bilap": (lap2 + (d - 1) * lap1 / s) / R**2,
    }


def build_phi_r(profile: CutoffProfile, R: float, grid: RadialGrid) -> LocalizedWeight:
    """Sample phi_R and its defect weights on the grid."""
    if not R > 1:
        raise RadiusOutOfRange(f"R={R} must exceed 1")
    d = grid.d
    r = grid.nodes
    q = _rescaled(profile, R, r, d)
    chi1 = 2 - q["ddphi"]
    chi2 = 2 * d - q["lap"]
    psi = 2 - q["dphi"] / r
    inner = r <= R
    chi1[inner] = 0.0
    chi2[inner] = 0.0
    psi[inner] = 0.0
    for name, arr in (("chi1", chi1), ("chi2", chi2), ("2 - phi'/r", psi)):
        if np.min(arr) < -1e-12:
            raise ConstructionFailed(f"{name} is negative: {np.min(arr):.3e}")
    arrays = [q["phi"], q["dphi"], chi1, chi2, psi, q["bilap"]]
    for a in arrays:
        a.setflags(write=False)
    # sups over all r > R, independent of how far the grid reaches
    dense = R * np.linspace(1.0, 3.0, 20001)[1:]
    qd = _rescaled(profile, R, dense, d)
    bilap_sup = float(np.max(np.abs(qd["bilap"])))
    chi2_sup = float(np.max(2 * d - qd["lap"]))
    return LocalizedWeight(float(R), grid, *arrays, bilap_sup, chi2_sup)


def epsilon_bound(d: int) -> float:
    """Admissible epsilon bound (d + 2)(1 + (d - 1)/(3 sqrt 3))^(-d/2)."""
    return (d + 2) * (1 + (d - 1) / (3 * sqrt(3.0))) ** (-d / 2)


def positivity_margin(
    weight: LocalizedWeight, d: int, eps: float, r_upper: float | None = None
) -> float:
    """min over nodes R < r (<= r_upper) of chi1 - (eps/(d+2)) chi2^(d/2)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    r = weight.grid.nodes
    sel = r > weight.R
    if r_upper is not None:
        sel &= r <= r_upper
    if not np.any(sel):
        raise ValueError("no nodes in the sampled range")
    vals = weight.chi1[sel] - eps / (d + 2) * weight.chi2[sel] ** (d / 2)
    return float(np.min(vals))


def _weight_arrays(u: Field, weight):
    if isinstance(weight, LocalizedWeight):
        return weight.phi, weight.dphi
    vals = np.asarray(weight, dtype=float)
    if vals.shape != (u.grid.n,):
        raise ValueError("weight must be sampled on the field's grid")
    return vals, np.gradient(vals, u.grid.nodes)


def _dr(u: Field) -> np.ndarray:
    # centered differences, Dirichlet ghost at r_max, even reflection at 0
    v = u.values
    h = u.grid.h
    ext = np.concatenate(([v[0]], v, [0.0]))
    return (ext[2:] - ext[:-2]) / (2 * h)


def virial_potential(u: Field, weight) -> float:
    """V = int weight |u|^2 dx."""
    vals, _ = _weight_arrays(u, weight)
    return float(np.sum(u.grid.weights * vals * np.abs(u.values) ** 2))


def virial_first_derivative(u: Field, weight) -> float:
    """V' = 2 int weight'(r) Im(conj(u) u_r) dx."""
    _, dvals = _weight_arrays(u, weight)
    cur = np.imag(np.conj(u.values) * _dr(u))
    return float(2 * np.sum(u.grid.weights * dvals * cur))


def virial_second_derivative(u: Field, params: ModelParams, weight: LocalizedWeight) -> float:
    """Radial localized virial identity evaluated by quadrature.

    -int Delta^2 phi |u|^2 + 4 int phi'' |u_r|^2 + 4c int phi'/r^3 |u|^2
    - (2a/(a+2)) int Delta phi |u|^(a+2)
    """
    d, a, c = params.d, params.alpha, params.c
    w = u.grid.weights
    r = u.grid.nodes
    dens = np.abs(u.values) ** 2
    ddphi = 2 - weight.chi1
    lap = 2 * d - weight.chi2
    return float(
        -np.sum(w * weight.bilap * dens)
        + 4 * np.sum(w * ddphi * np.abs(_dr(u)) ** 2)
        + 4 * c * np.sum(w * weight.dphi / r**3 * dens)
        - 2 * a / (a + 2) * np.sum(w * lap * np.abs(u.values) ** (a + 2))
    )


def global_virial_rhs(u: Field, params: ModelParams) -> float:
    """8 |u|^2_{Hdot^1_c} - (4 d a/(a+2)) |u|^(a+2)_{L^(a+2)}."""
    d, a = params.d, params.alpha
    lp = float(np.sum(u.grid.weights * np.abs(u.values) ** (a + 2)))
    return 8 * h1c_seminorm_sq(u, params.c) - 4 * d * a / (a + 2) * lp


def radial_sobolev_check(u: Field, c: float = 0.0) -> float:
    """sup r^((d-1)/2)|u| / (|u|^(1/2)_{L^2} |u|^(1/2)_{Hdot^1_c})."""
    m = mass(u)
    if m == 0:
        raise ZeroField("radial Sobolev ratio of the zero field")
    t = h1c_seminorm_sq(u, c)
    top = np.max(u.grid.nodes ** ((u.grid.d - 1) / 2) * np.abs(u.values))
    return float(top / (m * t) ** 0.25)


def localized_constants(u: Field, params: ModelParams, weight: LocalizedWeight) -> dict:
    """Explicit constants of the localized bound.

    A1 = M (R^2 sup|Delta^2 phi_R| + 8 |min(c, 0)|) controls the R^-2 term and
    A2 = (2a/(a+2)) sup chi2 K^a M^(1 + a/4), with K the radial Sobolev ratio
    of u, controls the R^(-(d-1)a/2) |u|^(a/2)_{Hdot^1_c} term.
    """
    a = params.alpha
    m = mass(u)
    a1 = m * (weight.R**2 * weight.bilap_sup + 8 * abs(params.c_bar))
    k = radial_sobolev_check(u, params.c) if m > 0 else 0.0
    a2 = 2 * a / (a + 2) * weight.chi2_sup * k**a * m ** (1 + a / 4)
    return {"A1": a1, "A2": a2}


def localized_virial_bound(
    u: Field,
    params: ModelParams,
    weight: LocalizedWeight,
    constant: float | None = None,
) -> float:
    """Upper bound for d^2/dt^2 V_{phi_R} of a radial solution.

    global_virial_rhs + A1 R^-2 + A2 R^(-(d-1)a/2) |u|^(a/2)_{Hdot^1_c};
    a scalar ``constant`` replaces both A1 and A2.
    """
    R, d, a = weight.R, params.d, params.alpha
    if constant is None:
        k = localized_constants(u, params, weight)
        a1, a2 = k["A1"], k["A2"]
    else:
        a1 = a2 = float(constant)
    t = h1c_seminorm_sq(u, params.c)
    return global_virial_rhs(u, params) + a1 * R**-2 + a2 * R ** (-(d - 1) * a / 2) * t ** (a / 4)


def masscrit_virial_bound(
    u: Field,
    params: ModelParams,
    weight: LocalizedWeight,
    eps: float,
    constant: float | None = None,
) -> float:
    """Mass-critical localized bound

    16 E - 4 int_{r>R} (chi1 - eps/(d+2) chi2^(d/2)) |u_r|^2
    + C (R^-2 + eps R^-2 + eps^(-2/(d-2)) R^-2),

    with C = A1 + A2 |u|^(a/2)_{Hdot^1_c} unless ``constant`` is given.
    Returns +inf at eps = 0.
    """
    if params.regime != "mass-critical":
        raise RegimeMismatch("mass-critical bound requires alpha = 4/d")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return float("inf")
    d, R = params.d, weight.R
    e = energy(u, params)
    kern = weight.chi1 - eps / (d + 2) * weight.chi2 ** (d / 2)
    outer = u.grid.nodes > R
    middle = 4 * float(np.sum((u.grid.weights * kern * np.abs(_dr(u)) ** 2)[outer]))
    if constant is None:
        k = localized_constants(u, params, weight)
        t = h1c_seminorm_sq(u, params.c)
        constant = k["A1"] + k["A2"] * t ** (params.alpha / 4)
    return 16 * e - middle + constant * (1 + eps + eps ** (-2 / (d - 2))) * R**-2


def export_weight(weight: LocalizedWeight, path) -> None:
    """Write columns r, phi_R, chi1, chi2."""
    data = np.column_stack([weight.grid.nodes, weight.phi, weight.chi1, weight.chi2])
    np.savetxt(path, data, fmt="%.17e", header="r phi_R chi1 chi2")
