"""Ground states, sharp constants and thresholds.

Shooting is done in the conjugated variable g = r^rho Q, which removes the
singular indicial behaviour at the origin:

    g'' + (1 + 2 nu)/r g' - g + r^(-rho alpha) |g|^alpha g = 0,
    g(0) = a, g'(0) = 0.

Beyond the radius where the overshooting and undershooting orbits separate,
the profile is continued by the decaying solution r^(-(d-2)/2) K_nu(r) of the
linearized equation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import gamma, pi, sqrt

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solveh_banded
from scipy.special import beta as beta_fn
from scipy.special import kv

from .errors import (
    NotConverged,
    NotSquareIntegrable,
    RegimeMismatch,
    ShootingBracketFailed,
    TailNotResolved,
    ZeroField,
)
from .grid import (
    Field,
    ModelParams,
    RadialGrid,
    _apply_bands,
    _check_coupling,
    _form_data,
    build_grid,
    h1c_seminorm_sq,
    mass,
    resample,
    stiffness_bands,
    tail_decay_exponent,
)

__all__ = [
    "GroundState",
    "Thresholds",
    "SobolevConstants",
    "shoot_ground_state",
    "ground_state_from_profile",
    "pohozaev_residual",
    "elliptic_residual",
    "gn_constant",
    "gn_constant_from_mass",
    "thresholds",
    "weinstein_value",
    "maximize_weinstein",
    "explicit_w",
    "w_closed_form_norm",
    "sobolev_constants",
    "export_profile",
    "summary_record",
]

SHOOT_R0 = 1e-6
SHOOT_REND = 40.0
DEFAULT_RMAX = 30.0
DEFAULT_N = 4000



def _lp_power(f: Field, p: float) -> float:
    return float(np.sum(f.grid.weights * np.abs(f.values) ** p))


@dataclass(frozen=True)
class GroundState:
    """A soliton profile with its norm table and constants.

    Attributes
    ----------
    norms : dict
        ``mass``, ``h1c_sq`` and ``l_alpha_plus_2`` (the latter is the
        integral of |Q|^(alpha+2), not its root).
    radial_flag : bool
        True when the profile is the radial maximizer Q_{c,rad} for c > 0.
    branch : str
        How the profile was obtained (``shooting``, ``ascent``, ``given``).
    """

    params: ModelParams
    profile: Field
    norms: dict
    c_gn: float
    radial_flag: bool
    pohozaev_residuals: tuple
    branch: str = "shooting"
    amplitude: float = float("nan")


def _norm_table(f: Field, params: ModelParams) -> dict:
    return {
        "mass": mass(f),
        "h1c_sq": h1c_seminorm_sq(f, params.c),
        "l_alpha_plus_2": _lp_power(f, params.alpha + 2),
    }


def _pohozaev_factors(params: ModelParams) -> tuple[float, float]:
    d, a = params.d, params.alpha
    k = 4 - (d - 2) * a
    return k / (d * a), k / (2 * (a + 2))


def gn_constant_from_mass(params: ModelParams, q_mass: float) -> float:
    """C_GN from the ground-state mass |Q|^2_{L^2}."""
    d, a = params.d, params.alpha
    k = 4 - (d - 2) * a
    if k <= 0:
        raise RegimeMismatch("Gagliardo-Nirenberg constant needs alpha < 4/(d-2)")
    return 2 * (a + 2) / k * (k / (d * a)) ** (d * a / 4) / q_mass ** (a / 2)


def _residuals_from_norms(params: ModelParams, norms: dict) -> tuple[float, float]:
    k1, k2 = _pohozaev_factors(params)
    m = norms["mass"]
    return (
        abs(m - k1 * norms["h1c_sq"]) / m,
        abs(m - k2 * norms["l_alpha_plus_2"]) / m,
    )


def ground_state_from_profile(
    profile: Field,
    params: ModelParams,
    radial_flag: bool = False,
    branch: str = "given",
) -> GroundState:
    """Wrap an arbitrary profile; no acceptance gate is applied."""
    norms = _norm_table(profile, params)
    if norms["mass"] == 0:
        raise ZeroField("ground-state profile is zero")
    res = _residuals_from_norms(params, norms)
    c_gn = gn_constant_from_mass(params, norms["mass"])
    return GroundState(params, profile, norms, c_gn, radial_flag, res, branch)


# -- shooting -----------------------------------------------------------------


class _Shooter:
    def __init__(self, params: ModelParams, r_end: float):
        self.nu = params.nu
        self.rho = params.rho
        self.alpha = params.alpha
        self.r_end = r_end
        p = 1 + 2 * self.nu
        ra = -self.rho * self.alpha

        def rhs(r, y):
            g, gp = y
            return [gp, -p / r * gp + g - r**ra * abs(g) ** self.alpha * g]

        def crossing(r, y):
            return y[0]

        def turning(r, y):
            return y[1]

        crossing.terminal = True
        turning.terminal = True
        turning.direction = 1
        self._rhs = rhs
        self._events = [crossing, turning]

    def start(self, a: float):
        r0, nu, al = SHOOT_R0, self.nu, self.alpha
        s = 2 - self.rho * al
        g = a + a * r0**2 / (2 * (2 + 2 * nu)) - a ** (al + 1) * r0**s / (s * (s + 2 * nu))
        gp = a * r0 / (2 + 2 * nu) - a ** (al + 1) * r0 ** (s - 1) / (s + 2 * nu)
        return [g, gp]

    def run(self, a: float):
        sol = solve_ivp(
            self._rhs,
            (SHOOT_R0, self.r_end),
            self.start(a),
            method="DOP853",
            rtol=1e-12,
            atol=1e-14,
            events=self._events,
            dense_output=True,
        )
        if sol.t_events[0].size:
            return "over", sol
        if sol.t_events[1].size:
            return "under", sol
        return ("over" if sol.y[0, -1] < 0 else "under"), sol

    def bracket(self, lo=0.1, hi=1.0, max_expand=80):
        for _ in range(max_expand):
            if self.run(hi)[0] == "over":
                break
            hi *= 2
        else:
            raise ShootingBracketFailed("no overshooting amplitude found")
        for _ in range(max_expand):
            if self.run(lo)[0] == "under":
                break
            lo /= 2
        else:
            raise ShootingBracketFailed("no undershooting amplitude found")
        return lo, hi

    def bisect(self, rel_tol=1e-13):
        lo, hi = self.bracket()
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if self.run(mid)[0] == "over":
                hi = mid
            else:
                lo = mid
        return lo, hi


def _splice_profile(shooter: _Shooter, lo: float, hi: float, grid: RadialGrid, d: int):
    _, so = shooter.run(hi)
    _, su = shooter.run(lo)
    r_top = min(so.t[-1], su.t[-1])
    rr = np.linspace(10 * SHOOT_R0, r_top, 20000)
    go, gu = so.sol(rr)[0], su.sol(rr)[0]
    agree = np.abs(go - gu) < 1e-4 * np.abs(go + gu) / 2
    r_match = (rr[np.argmin(agree) - 1] if not agree.all() else rr[-1]) * 0.9
    rho, nu = shooter.rho, shooter.nu
    r = grid.nodes
    inner = np.minimum(r, r_match)
    g_in = 0.5 * (so.sol(inner)[0] + su.sol(inner)[0])
    g_m = 0.5 * (so.sol(r_match)[0] + su.sol(r_match)[0])
    q_m = r_match ** (-rho) * g_m
    hd = (d - 2) / 2
    with np.errstate(under="ignore"):
        tail = q_m * (r ** (-hd) * kv(nu, r)) / (r_match ** (-hd) * kv(nu, r_match))
    q = np.where(r < r_match, r ** (-rho) * g_in, tail)
    return q, r_match


def shoot_ground_state(
    params: ModelParams,
    grid: RadialGrid | None = None,
    radial_only: bool = True,
    tol: float = 1e-4,
    r_end: float = SHOOT_REND,
) -> GroundState:
    """Shoot for the positive decaying solution of -P_c Q - Q + Q^(a+1) = 0.

    Parameters
    ----------
    params : ModelParams
        Requires alpha < 4/(d-2).
    grid : RadialGrid, optional
        Working grid; defaults to r_max=30, n=4000.
    radial_only : bool
        For c > 0 the unconstrained ground state is not attained; with
        ``radial_only=False`` the Q_0 branch (c_bar = 0) is returned instead
        of the radial maximizer Q_{c,rad}.
    tol : float
        Acceptance gate on both Pohozaev residuals.

    Raises
    ------
    NotConverged
        If a Pohozaev residual exceeds ``tol``.
    """
    if params.alpha >= params.alpha_upper * (1 - 1e-12):
        raise RegimeMismatch("energy-critical ground state is W_c; use explicit_w")
    if grid is None:
        grid = build_grid(params.d, DEFAULT_RMAX, DEFAULT_N)
    if grid.d != params.d:
        raise ValueError("grid dimension differs from params.d")
    radial_flag = params.c > 0 and radial_only
    p = params if (radial_only or params.c <= 0) else params.with_c(params.c_bar)
    shooter = _Shooter(p, r_end)
    lo, hi = shooter.bisect()
    q, _ = _splice_profile(shooter, lo, hi, grid, p.d)
    gs = ground_state_from_profile(Field(grid, q), p, radial_flag, "shooting")
    gs = GroundState(
        gs.params, gs.profile, gs.norms, gs.c_gn, gs.radial_flag,
        gs.pohozaev_residuals, gs.branch, 0.5 * (lo + hi),
    )
    if max(gs.pohozaev_residuals) > tol:
        raise NotConverged(f"Pohozaev residuals {gs.pohozaev_residuals} exceed {tol}")
    return gs


def pohozaev_residual(gs: GroundState) -> tuple[float, float]:
    """Relative mismatches of the two Pohozaev identities.

    Raises
    ------
    NotSquareIntegrable
        If the profile tail decays too slowly to be in L^2.
    """
    f, p = gs.profile, gs.params
    if 2 * tail_decay_exponent(f) <= p.d + 0.1:
        raise NotSquareIntegrable("profile tail is not square integrable")
    return _residuals_from_norms(p, _norm_table(f, p))


def elliptic_residual(gs: GroundState) -> float:
    """|P_c Q + Q - |Q|^a Q|_{L^2} / |Q|_{L^2} in the weak discrete sense."""
    f, p = gs.profile, gs.params
    diag, off = stiffness_bands(f.grid, p.c)
    w = f.grid.weights
    v = f.values
    res = _apply_bands(diag, off, v) / w + v - np.abs(v) ** p.alpha * v
    return sqrt(float(np.sum(w * np.abs(res) ** 2)) / mass(f))


def gn_constant(gs: GroundState) -> float:
    """C_GN from the ground-state mass."""
    return gn_constant_from_mass(gs.params, gs.norms["mass"])


# -- Weinstein functional -----------------------------------------------------


def weinstein_value(f: Field, params: ModelParams) -> float:
    """J_c(f) = |f|^(a+2)_{L^(a+2)} / (|f|^((4-(d-2)a)/2)_{L^2} |f|^(da/2)_{Hdot^1_c})."""
    d, a = params.d, params.alpha
    m = mass(f)
    if m == 0:
        raise ZeroField("Weinstein functional of the zero field")
    t = h1c_seminorm_sq(f, params.c)
    l = _lp_power(f, a + 2)
    return l / (m ** ((4 - (d - 2) * a) / 4) * t ** (d * a / 4))


def maximize_weinstein(
    params: ModelParams,
    init: Field,
    max_iters: int = 5000,
    rel_tol: float = 1e-10,
) -> tuple[Field, float]:
    """Preconditioned projected ascent of J_c on |f|_{L^2} = |f|_{Hdot^1_c} = 1.

    The iterate is first brought to the slice by the two-parameter rescaling
    lambda f(mu r).  Each step maximizes |f|^(a+2)_{L^(a+2)} along the
    (W + A)^-1 preconditioned gradient projected against both constraints,
    then returns to the slice along (W + A)^-1 A f and by amplitude.

    Returns
    -------
    (Field, float)
        The maximizer on the slice and J_c at it.
    """
    if mass(init) == 0:
        raise ZeroField("ascent needs a nonzero initial field")
    grid, a = init.grid, params.alpha
    w = grid.weights
    diag, off = stiffness_bands(grid, params.c)
    bands = np.zeros((2, grid.n))
    bands[0, 1:] = off
    bands[1] = w + diag

    def s_inv(v):
        return solveh_banded(bands, v)

    def op(v):
        return _apply_bands(diag, off, v)

    m0, t0 = mass(init), h1c_seminorm_sq(init, params.c)
    mu = sqrt(m0 / t0)
    lam = sqrt(mu**params.d / m0)
    f = np.abs(resample(init, lam, mu, params.rho).values)

    def retract(v):
        q = s_inv(op(v))
        av, aq = op(v), op(q)
        coeffs = [
            q @ aq - np.sum(w * q * q),
            2 * (q @ av) - 2 * np.sum(w * q * v),
            v @ av - np.sum(w * v * v),
        ]
        roots = np.roots(coeffs)
        roots = roots[np.abs(roots.imag) < 1e-12].real
        b = roots[np.argmin(np.abs(roots))] if roots.size else 0.0
        v = np.abs(v + b * q)
        return v / sqrt(np.sum(w * v * v))

    f = retract(f)
    obj = np.sum(w * f ** (a + 2))
    tau = 1.0
    for _ in range(max_iters):
        g_l = (a + 2) * w * f ** (a + 1)
        g_m = 2 * w * f
        g_t = 2 * op(f)
        p_l, p_m, p_t = s_inv(g_l), s_inv(g_m), s_inv(g_t)
        gram = np.array([[p_m @ g_m, p_m @ g_t], [p_t @ g_m, p_t @ g_t]])
        coef = np.linalg.solve(gram, np.array([p_l @ g_m, p_l @ g_t]))
        direction = p_l - coef[0] * p_m - coef[1] * p_t
        while True:
            cand = retract(f + tau * direction)
            new = np.sum(w * cand ** (a + 2))
            if new > obj:
                break
            tau *= 0.5
            if tau < 1e-16:
                out = Field(grid, f)
                return out, weinstein_value(out, params)
        gain = (new - obj) / obj
        f, obj = cand, new
        tau *= 2
        if gain < rel_tol:
            out = Field(grid, f)
            return out, weinstein_value(out, params)
    raise NotConverged(f"Weinstein ascent did not converge in {max_iters} iterations")


# -- energy-critical profile --------------------------------------------------


def explicit_w(params: ModelParams, grid: RadialGrid) -> Field:
    """Sample W_c = [d(d-2)beta^2]^((d-2)/4) [r^(beta-1)/(1 + r^(2 beta))]^((d-2)/2)."""
    _check_coupling(params.d, params.c)
    d, b = params.d, params.beta
    r = grid.nodes
    amp = (d * (d - 2) * b * b) ** ((d - 2) / 4)
    return Field(grid, amp * (r ** (b - 1) / (1 + r ** (2 * b))) ** ((d - 2) / 2))


def w_closed_form_norm(params: ModelParams) -> float:
    """|W_c|^2_{Hdot^1_c} = |W_c|^(2d/(d-2))_{L^(2d/(d-2))} in closed form."""
    d, b = params.d, params.beta
    omega = 2 * pi ** (d / 2) / gamma(d / 2)
    return omega * (d * (d - 2) * b * b) ** (d / 2) * beta_fn(d / 2, d / 2) / (2 * b)


def _power_tail(density: np.ndarray, r: np.ndarray, r_end: float) -> float:
    # integral from r_end to infinity of a density decaying like r^-q
    ia, ib = int(0.45 * r.size), int(0.95 * r.size)
    da, db = density[ia], density[ib]
    if da <= 0 or db <= 0:
        return 0.0
    q = -np.log(db / da) / np.log(r[ib] / r[ia])
    if q <= 1 + 1e-3:
        raise TailNotResolved(f"tail exponent {q:.4f} is not integrable")
    amp = db * r[ib] ** q
    return float(amp * r_end ** (1 - q) / (q - 1))


def _tail_corrected_norms(f: Field, params: ModelParams) -> tuple:
    grid = f.grid
    r, h, w = grid.nodes, grid.h, grid.weights
    p_star = _p_star(params)
    lp_density = w * np.abs(f.values) ** p_star / h
    lp = float(np.sum(w * np.abs(f.values) ** p_star))
    lp_ok = True
    try:
        lp += _power_tail(lp_density, r, grid.r_max)
    except TailNotResolved:
        lp_ok = False
    # interior edges only: the Dirichlet jump at r_max is a truncation artefact
    k, s = _form_data(grid, params.nu)
    dg = np.diff(s * f.values)
    edge = k[:-1] * np.abs(dg) ** 2
    edge_r = r[:-1] + h / 2
    t = float(np.sum(edge))
    t_ok = True
    try:
        t += _power_tail(edge / h, edge_r, r[-1])
    except TailNotResolved:
        t_ok = False
    return (t if t_ok else None), (lp if lp_ok else None)


def _p_star(params: ModelParams) -> float:
    return 2 * params.d / (params.d - 2)


@dataclass(frozen=True)
class SobolevConstants:
    """C_SE evaluated by independent routes.

    ``from_h1c``, ``from_lp`` and ``from_energy`` are grid quadratures with a
    power-law tail correction; any of them is None when its tail is not
    resolved.  ``value`` is the closed form.
    """

    value: float
    from_h1c: float | None
    from_lp: float | None
    from_energy: float | None
    c_used: float
    radial: bool

    def spread(self) -> float:
        vals = [v for v in (self.from_h1c, self.from_lp, self.from_energy) if v is not None]
        vals.append(self.value)
        return (max(vals) - min(vals)) / self.value


def sobolev_constants(
    params: ModelParams,
    grid: RadialGrid | None = None,
    radial: bool = False,
    tol: float = 1e-3,
) -> SobolevConstants:
    """Sharp Sobolev constant C_SE(c) = |W_{c_bar}|^(-2/d)_{Hdot^1_{c_bar}}.

    With ``radial=True`` and c > 0 the radial constant from W_c is returned.

    Raises
    ------
    TailNotResolved
        If no grid route converges.
    NotConverged
        If the routes disagree by more than ``tol``.
    """
    d = params.d
    p = params.with_alpha(params.alpha_upper)
    if not (radial and p.c > 0):
        p = p.with_c(p.c_bar)
    if grid is None:
        grid = build_grid(d, 200.0, 20000)
    w_field = explicit_w(p, grid)
    t, lp = _tail_corrected_norms(w_field, p)
    closed = w_closed_form_norm(p) ** (-1.0 / d)
    from_t = t ** (-1.0 / d) if t is not None else None
    from_lp = lp ** (-1.0 / d) if lp is not None else None
    from_e = None
    if t is not None and lp is not None:
        e = 0.5 * t - lp / _p_star(p)
        from_e = (d * e) ** (-1.0 / d) if e > 0 else None
    if from_t is None and from_lp is None:
        raise TailNotResolved("no norm of W converges on this grid")
    out = SobolevConstants(closed, from_t, from_lp, from_e, p.c, radial and params.c > 0)
    if out.spread() > tol:
        raise NotConverged(f"Sobolev routes disagree by {out.spread():.2e}")
    return out


# -- thresholds ---------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    """Regime thresholds.  Accessing a quantity undefined in the regime raises
    RegimeMismatch."""

    regime: str
    c_bar: float
    radial: bool
    c_gn: float | None = None
    _h: float | None = field(default=None, repr=False)
    _k: float | None = field(default=None, repr=False)
    _q_mass: float | None = field(default=None, repr=False)
    _w_energy: float | None = field(default=None, repr=False)
    _w_h1c: float | None = field(default=None, repr=False)
    c_se: float | None = None

    def _get(self, name, value):
        if value is None:
            raise RegimeMismatch(f"{name} is undefined in the {self.regime} regime")
        return value

    @property
    def h_c(self) -> float:
        return self._get("H(c)", self._h)

    @property
    def k_c(self) -> float:
        return self._get("K(c)", self._k)

    @property
    def q_mass(self) -> float:
        return self._get("q_mass", self._q_mass)

    @property
    def w_energy(self) -> float:
        return self._get("E(W)", self._w_energy)

    @property
    def w_h1c(self) -> float:
        return self._get("|W|_{Hdot^1_c}", self._w_h1c)

    def as_dict(self) -> dict:
        out = {"regime": self.regime, "c_bar": self.c_bar, "radial": self.radial}
        for key, val in (
            ("c_gn", self.c_gn), ("h_c", self._h), ("k_c", self._k),
            ("q_mass", self._q_mass), ("w_energy", self._w_energy),
            ("w_h1c", self._w_h1c), ("c_se", self.c_se),
        ):
            if val is not None:
                out[key] = val
        return out


def kinetic_threshold(params: ModelParams, c_gn: float) -> float:
    """K(c) = [(d a / (2 (a+2))) C_GN]^(-2/(d a - 4))."""
    d, a = params.d, params.alpha
    if params.regime != "intercritical":
        raise RegimeMismatch("K(c) is defined for intercritical alpha only")
    return (d * a / (2 * (a + 2)) * c_gn) ** (-2.0 / (d * a - 4))


def energy_threshold(params: ModelParams, k_c: float) -> float:
    """H(c) = ((d a - 4) / (2 d a)) K(c)^2."""
    d, a = params.d, params.alpha
    if params.regime != "intercritical":
        raise RegimeMismatch("H(c) is defined for intercritical alpha only")
    return (d * a - 4) / (2 * d * a) * k_c**2


def thresholds(
    params: ModelParams,
    grid: RadialGrid | None = None,
    radial: bool = False,
    gs: GroundState | None = None,
) -> Thresholds:
    """Thresholds of the regime selected by alpha.

    The ground state is that of c_bar = min(c, 0); with ``radial=True`` and
    c > 0 the radial maximizer Q_{c,rad} (or W_c) is used instead.
    """
    regime = params.regime
    use_rad = radial and params.c > 0
    c_used = params.c if use_rad else params.c_bar
    if regime == "energy-critical":
        pe = params.with_c(c_used)
        n_w = w_closed_form_norm(pe)
        return Thresholds(
            regime, params.c_bar, use_rad,
            _w_energy=n_w / params.d, _w_h1c=sqrt(n_w), c_se=n_w ** (-1.0 / params.d),
        )
    if regime not in ("mass-critical", "intercritical"):
        raise RegimeMismatch(f"no thresholds in the {regime} regime")
    if gs is None:
        gs = shoot_ground_state(params.with_c(c_used), grid, radial_only=True)
    c_gn = gn_constant(gs)
    if regime == "mass-critical":
        return Thresholds(regime, params.c_bar, use_rad, c_gn, _q_mass=sqrt(gs.norms["mass"]))
    k_c = kinetic_threshold(params, c_gn)
    return Thresholds(
        regime, params.c_bar, use_rad, c_gn, _h=energy_threshold(params, k_c), _k=k_c
    )


# -- export -------------------------------------------------------------------


def export_profile(f: Field, path) -> None:
    """Write columns r, Re f, Im f."""
    data = np.column_stack([f.grid.nodes, f.values.real, f.values.imag])
    np.savetxt(path, data, fmt="%.17e", header="r re im")


def summary_record(gs: GroundState) -> dict:
    p = gs.params
    return {
        "d": p.d,
        "alpha": p.alpha,
        "c": p.c,
        "branch": gs.branch,
        "radial_flag": bool(gs.radial_flag),
        "amplitude": gs.amplitude,
        "norms": {k: float(v) for k, v in gs.norms.items()},
        "c_gn": gs.c_gn,
        "pohozaev_residuals": [float(x) for x in gs.pohozaev_residuals],
        "grid": {"r_max": gs.profile.grid.r_max, "n": gs.profile.grid.n},
    }


def write_summary(gs: GroundState, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary_record(gs), fh, indent=2, sort_keys=True)
