"""Closed-form solutions and special initial data.

For a ground state Q of -P_c Q - Q + Q^(a+1) = 0 the standing wave is
e^(it) Q, and in the mass-critical case

    u_T(t, r) = |t - T|^(-d/2) exp(i r^2/(4(t - T)) - i/(t - T)) Q(r/|t - T|)

solves i u_t - P_c u = -|u|^a u for t < T and blows up at T.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.optimize import brentq

from .errors import ConstructionFailed, InvalidBump, RegimeMismatch, SingularTime
from .grid import Field, ModelParams, RadialGrid, energy, h1c_seminorm_sq, interpolate
from .groundstate import GroundState

__all__ = [
    "BlowupDatum",
    "standing_wave",
    "pseudo_conformal",
    "default_bump",
    "positive_energy_blowup_data",
    "momentum_moment",
    "second_moment",
    "variance_zero_time",
]


def standing_wave(gs: GroundState, t: float) -> Field:
    """e^(it) Q."""
    return gs.profile.scaled(np.exp(1j * t))


def pseudo_conformal(gs: GroundState, T: float, t: float) -> Field:
    """Sample the pseudo-conformal blowup solution u_T(t) on the ground-state grid."""
    p = gs.params
    if p.regime != "mass-critical":
        raise RegimeMismatch("pseudo-conformal solutions need alpha = 4/d")
    s = t - T
    if s == 0:
        raise SingularTime("pseudo-conformal solution sampled at its blowup time")
    grid = gs.profile.grid
    r = grid.nodes
    q = interpolate(gs.profile, r / abs(s), p.rho)
    phase = np.exp(1j * r**2 / (4 * s) - 1j / s)
    return Field(grid, abs(s) ** (-p.d / 2) * phase * q)


def default_bump(grid: RadialGrid, r0: float = 2.0) -> Field:
    """exp(-1/(1 - (r/r0)^2)) on r < r0, zero elsewhere."""
    r = grid.nodes
    x = (r / r0) ** 2
    vals = np.zeros(grid.n)
    inside = x < 1
    vals[inside] = np.exp(-1.0 / (1.0 - x[inside]))
    return Field(grid, vals)


def momentum_moment(u: Field) -> float:
    """Im int conj(u) x . grad u dx for radial u."""
    v = u.values
    ext = np.concatenate(([v[0]], v, [0.0]))
    ur = (ext[2:] - ext[:-2]) / (2 * u.grid.h)
    return float(np.sum(u.grid.weights * u.grid.nodes * np.imag(np.conj(v) * ur)))


def second_moment(u: Field) -> float:
    """|x u|^2_{L^2}."""
    return float(np.sum(u.grid.weights * u.grid.nodes**2 * np.abs(u.values) ** 2))


def variance_zero_time(u0: Field, params: ModelParams) -> float | None:
    """First positive root of 8 E t^2 + 4 I t + |x u0|^2 (mass-critical), if any."""
    e = energy(u0, params)
    i = momentum_moment(u0)
    c = second_moment(u0)
    roots = np.roots([8 * e, 4 * i, c]) if e != 0 else np.array([-c / (4 * i)])
    roots = roots[np.isreal(roots)].real
    roots = roots[roots > 0]
    return float(roots.min()) if roots.size else None


@dataclass(frozen=True)
class BlowupDatum:
    """Positive-energy datum lambda psi(mu x) with its diagnostics.

    ``abcd`` holds A, B, C, D of psi; ``margin`` is
    D^2/C - 2(A - lambda^a B / mu^2) and ``datum_margin`` is
    (Im int conj(u) x.grad u)^2 - 2 E |x u|^2 evaluated on the field itself.
    """

    field: Field
    target_energy: float
    lambda_: float
    mu: float
    abcd: dict
    eps: float
    margin: float
    datum_margin: float
    momentum: float
    zero_time: float | None


def positive_energy_blowup_data(
    params: ModelParams,
    target_E: float,
    bump: Field,
    rel_tol: float = 1e-9,
) -> BlowupDatum:
    """Construct radial data of prescribed positive energy whose variance
    reaches zero in finite time.

    psi = e^(-i r^2) bump; eps is half of min(A, D^2/(2C)); lambda and mu
    solve lambda^a B / mu^2 = A - eps and eps lambda^2 mu^(2-d) = E.  The
    amplitude is then refined by a root solve so the discrete energy of the
    resampled field equals ``target_E``.
    """
    if params.regime != "mass-critical":
        raise RegimeMismatch("the construction needs alpha = 4/d")
    if not target_E > 0:
        raise ValueError("target_E must be positive")
    vals = bump.values
    if np.any(np.abs(vals.imag) > 0):
        raise InvalidBump("bump must be real valued")
    tail = vals[int(0.9 * bump.grid.n):]
    if np.any(tail != 0):
        raise InvalidBump("bump must vanish near r_max")
    if not np.any(vals != 0):
        raise InvalidBump("bump must be nonzero")

    d, a = params.d, params.alpha
    grid = bump.grid
    r = grid.nodes
    theta = vals.real
    psi = Field(grid, np.exp(-1j * r**2) * theta)
    A = 0.5 * h1c_seminorm_sq(psi, params.c)
    B = float(np.sum(grid.weights * np.abs(theta) ** (a + 2))) / (a + 2)
    C = second_moment(psi)
    D = 2 * float(np.sum(grid.weights * r**2 * theta**2))
    eps = 0.5 * min(A, D**2 / (2 * C))
    ratio = B / (A - eps)
    lam0 = (target_E / (eps * ratio ** ((2 - d) / 2))) ** (d / 4)
    mu = sqrt(lam0**a * ratio)

    base = interpolate(Field(grid, theta), mu * r) * np.exp(-1j * (mu * r) ** 2)

    def energy_gap(lam):
        return energy(Field(grid, lam * base), params) - target_E

    lo, hi = 0.5 * lam0, 2.0 * lam0
    if energy_gap(lo) * energy_gap(hi) > 0:
        raise ConstructionFailed("no amplitude reproduces the target energy")
    # energy is concave in lambda past its maximum; pick the root near lam0
    lam = brentq(energy_gap, lo, hi, xtol=1e-15, rtol=rel_tol * 1e-3)
    u0 = Field(grid, lam * base)
    e = energy(u0, params)
    if abs(e - target_E) > 1e-6 * target_E:
        raise ConstructionFailed(f"energy {e} misses target {target_E}")
    margin = D**2 / C - 2 * (A - lam**a * B / mu**2)
    mom = momentum_moment(u0)
    datum_margin = mom**2 - 2 * e * second_moment(u0)
    return BlowupDatum(
        field=u0,
        target_energy=target_E,
        lambda_=float(lam),
        mu=float(mu),
        abcd={"A": A, "B": B, "C": C, "D": D},
        eps=eps,
        margin=float(margin),
        datum_margin=float(datum_margin),
        momentum=mom,
        zero_time=variance_zero_time(u0, params),
    )
