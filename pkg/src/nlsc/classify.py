"""Global-existence versus blowup decision rules and the sweep harness."""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import sqrt

import numpy as np

from .dynamics import (
    BLOWUP_DETECTED,
    GLOBAL_SO_FAR,
    UNRESOLVED,
    EvolveControls,
    evolve,
)
from .errors import InconsistentInput, RegimeMismatch, SweepContradiction
from .grid import Field, ModelParams, build_grid, energy, h1c_seminorm_sq, mass
from .groundstate import Thresholds, explicit_w, shoot_ground_state, thresholds

__all__ = [
    "GLOBAL",
    "BLOWUP",
    "INDETERMINATE",
    "Geometry",
    "Verdict",
    "SweepReport",
    "f_func",
    "g_func",
    "classify",
    "energy_critical_coupling_floor",
    "sweep",
    "SWEEP_COLUMNS",
]

GLOBAL = "GlobalGuaranteed"
BLOWUP = "BlowupGuaranteed"
INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class Geometry:
    """Structural facts about the datum used by the blowup rules."""

    radial: bool = True
    has_xu_l2: bool = True

    @property
    def admits_blowup_argument(self) -> bool:
        return self.radial or self.has_xu_l2


@dataclass(frozen=True)
class Verdict:
    """Prediction with the rule that fired and the slack of each comparison.

    Every margin is positive when its hypothesis holds.
    """

    prediction: str
    rule_fired: str
    margins: dict = field(default_factory=dict)


def f_func(x, params: ModelParams, c_gn: float):
    """f(x) = x^2/2 - C_GN x^(d a/2) / (a + 2)."""
    if params.regime != "intercritical":
        raise RegimeMismatch("f is defined for intercritical alpha")
    a = params.alpha
    x = np.asarray(x, dtype=float)
    out = 0.5 * x**2 - c_gn / (a + 2) * x ** (params.d * a / 2)
    return float(out) if out.ndim == 0 else out


def g_func(y, params: ModelParams, c_se: float):
    """g(y) = y^2/2 - C_SE^(a+2) y^(a+2) / (a + 2) with a = 4/(d-2)."""
    if params.regime != "energy-critical":
        raise RegimeMismatch("g is defined for the energy-critical exponent")
    p = params.alpha + 2
    y = np.asarray(y, dtype=float)
    out = 0.5 * y**2 - c_se**p / p * y**p
    return float(out) if out.ndim == 0 else out


def energy_critical_coupling_floor(d: int) -> float:
    """Coupling above which the energy-critical blowup rules apply."""
    lam = ((d - 2) / 2) ** 2
    return -(d * d + 4 * d) / (d + 2) ** 2 * lam


def classify(
    u0: Field,
    params: ModelParams,
    th: Thresholds,
    geometry: Geometry | None = None,
    tol: float = 1e-3,
    energy_tol: float = 1e-3,
) -> Verdict:
    """Apply the regime's sufficient conditions to u0.

    Comparisons within relative ``tol`` of a threshold are Indeterminate.
    The energy counts as negative only below ``-energy_tol |u0|^2_{Hdot^1_c}``,
    which absorbs the discretization error of E(Q) = 0.

    Raises
    ------
    RegimeMismatch
        If the thresholds belong to another regime.
    InconsistentInput
        Energy-critical data claiming E < E(W) with |u0| equal to |W|.
    """
    geometry = geometry or Geometry()
    if th.regime != params.regime:
        raise RegimeMismatch(f"thresholds are {th.regime}, data are {params.regime}")
    m = mass(u0)
    t = h1c_seminorm_sq(u0, params.c)
    e = energy(u0, params)
    geo = geometry.admits_blowup_argument
    neg_slack = -e / t - energy_tol
    neg = neg_slack > 0

    if params.regime == "mass-critical":
        q = th.q_mass
        norm = sqrt(m)
        margins = {"mass": (q - norm) / q, "negative_energy": neg_slack}
        if norm < q * (1 - tol):
            return Verdict(GLOBAL, "mass-critical:below-ground-state-mass", margins)
        if neg and geo:
            return Verdict(BLOWUP, "mass-critical:negative-energy", margins)
        return Verdict(INDETERMINATE, "mass-critical:no-hypothesis", margins)

    if params.regime == "intercritical":
        s = params.sigma
        em = e * m**s
        km = sqrt(t) * m ** (s / 2)
        h, k = th.h_c, th.k_c
        margins = {
            "energy": (h - em) / h,
            "kinetic_below": (k - km) / k,
            "kinetic_above": (km - k) / k,
            "negative_energy": neg_slack,
        }
        if neg and geo:
            return Verdict(BLOWUP, "intercritical:negative-energy", margins)
        if em < h * (1 - tol):
            if km < k * (1 - tol):
                return Verdict(GLOBAL, "intercritical:below-ground-state", margins)
            if km > k * (1 + tol) and geo:
                return Verdict(BLOWUP, "intercritical:above-ground-state", margins)
        return Verdict(INDETERMINATE, "intercritical:threshold-or-above", margins)

    if params.regime == "energy-critical":
        w_e, w_n = th.w_energy, th.w_h1c
        norm = sqrt(t)
        floor = energy_critical_coupling_floor(params.d)
        margins = {
            "energy": (w_e - e) / w_e,
            "kinetic_above": (norm - w_n) / w_n,
            "negative_energy": neg_slack,
            "coupling": params.c - floor,
        }
        below = e < w_e * (1 - tol)
        if below and abs(norm - w_n) <= tol * w_n:
            raise InconsistentInput("E < E(W) and |u0| = |W| cannot hold together")
        if params.c <= floor:
            return Verdict(INDETERMINATE, "energy-critical:coupling-too-negative", margins)
        if neg and geo:
            return Verdict(BLOWUP, "energy-critical:negative-energy", margins)
        if below and norm > w_n * (1 + tol) and geo:
            return Verdict(BLOWUP, "energy-critical:above-ground-state", margins)
        return Verdict(INDETERMINATE, "energy-critical:no-hypothesis", margins)

    raise RegimeMismatch(f"no decision rules in the {params.regime} regime")


# -- sweep --------------------------------------------------------------------

SWEEP_COLUMNS = [
    "d", "alpha", "c", "family", "value", "mass", "energy", "h1c_sq",
    "prediction", "rule", "simulated", "t_est", "t_final", "h1c_ratio_max",
    "energy_drift_max", "agreement", "branch",
]


@dataclass(frozen=True)
class SweepReport:
    """Rows in config order plus provenance and contradictions."""

    rows: tuple
    provenance: dict
    contradictions: tuple = ()

    def counts(self) -> dict:
        out = {}
        for row in self.rows:
            key = f"{row['prediction']}/{row['simulated']}"
            out[key] = out.get(key, 0) + 1
        return dict(sorted(out.items()))

    def summary(self) -> dict:
        return {
            "config_digest": self.provenance.get("config_digest"),
            "grid": self.provenance.get("grid"),
            "rows": len(self.rows),
            "counts": self.counts(),
            "contradictions": [dict(r) for r in self.contradictions],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            wr.writeheader()
            for row in self.rows:
                wr.writerow({k: _fmt(row.get(k)) for k in SWEEP_COLUMNS})

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@lru_cache(maxsize=32)
def _cached_ground_state(d, alpha, c, r_max, n, tol):
    return shoot_ground_state(ModelParams(d, alpha, c), build_grid(d, r_max, n), tol=tol)


def _expand(config: dict) -> list:
    tasks = []
    defaults = config.get("defaults", {})
    for cell in config.get("cells", []):
        spec = {**defaults, **cell}
        for d in _as_list(spec["d"]):
            for alpha in _as_list(spec["alpha"]):
                for c in _as_list(spec["c"]):
                    for value in _as_list(spec["values"]):
                        tasks.append({**spec, "d": int(d), "alpha": float(alpha),
                                      "c": float(c), "value": float(value)})
    return tasks


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _build_datum(task, params, grid):
    family = task.get("family", "lambda_q")
    c_bar = params.c_bar
    if family == "lambda_q":
        if params.regime == "energy-critical":
            base = explicit_w(params.with_c(c_bar), grid)
            return base.scaled(task["value"]), "explicit_w"
        gs = _cached_ground_state(params.d, params.alpha, c_bar, grid.r_max, grid.n,
                                  float(task.get("gs_tol", 1e-3)))
        return gs.profile.scaled(task["value"]), f"shooting(c={c_bar})"
    if family == "gaussian":
        width = float(task.get("width", 1.0))
        r = grid.nodes
        return Field(grid, task["value"] * np.exp(-(r / width) ** 2)), "none"
    raise ValueError(f"unknown data family {family!r}")


def _run_task(task: dict) -> dict:
    params = ModelParams(task["d"], task["alpha"], task["c"])
    grid = build_grid(params.d, float(task.get("r_max", 30.0)), int(task.get("n", 2000)))
    u0, branch = _build_datum(task, params, grid)
    gs = None
    if params.regime in ("mass-critical", "intercritical"):
        gs = _cached_ground_state(params.d, params.alpha, params.c_bar, grid.r_max, grid.n,
                                  float(task.get("gs_tol", 1e-3)))
    th = thresholds(params, grid, gs=gs)
    verdict = classify(u0, params, th, Geometry(radial=True, has_xu_l2=True))
    controls = EvolveControls(
        dt0=float(task.get("dt0", 4e-3)),
        t_end=float(task.get("t_end", 10.0)),
        blowup_h1_factor=float(task.get("blowup_h1_factor", 1e3)),
        energy_drift_cap=float(task.get("energy_drift_cap", 1e-4)),
        snapshot_stride=int(task.get("snapshot_stride", 25)),
    )
    traj = evolve(u0, params, controls)
    h = traj["h1c_sq"]
    sim = traj.verdict.kind
    agree = _agreement(verdict.prediction, sim, float(np.max(h) / h[0]))
    return {
        "d": params.d,
        "alpha": params.alpha,
        "c": params.c,
        "family": task.get("family", "lambda_q"),
        "value": task["value"],
        "mass": mass(u0),
        "energy": energy(u0, params),
        "h1c_sq": float(h[0]),
        "prediction": verdict.prediction,
        "rule": verdict.rule_fired,
        "simulated": sim,
        "t_est": traj.verdict.t_est,
        "t_final": float(traj.times[-1]),
        "h1c_ratio_max": float(np.max(h) / h[0]),
        "energy_drift_max": float(np.max(traj.energy_drift())),
        "agreement": agree,
        "branch": branch,
    }


def _agreement(prediction: str, simulated: str, h1_ratio: float) -> bool:
    if prediction == GLOBAL:
        return simulated != BLOWUP_DETECTED and h1_ratio <= 10.0
    if prediction == BLOWUP:
        return simulated != GLOBAL_SO_FAR
    return True


def sweep(config: dict, workers: int = 1, raise_on_contradiction: bool = True) -> SweepReport:
    """Classify and simulate every cell of a sweep specification.

    ``config`` holds optional ``defaults`` and a list of ``cells``; each cell
    gives d, alpha, c (scalars or lists), a data ``family`` (``lambda_q`` or
    ``gaussian``), its ``values``, and optionally r_max, n, dt0, t_end,
    width, gs_tol (Pohozaev gate at sweep resolution, default 1e-3).
    Rows keep the input order regardless of ``workers``.

    Raises
    ------
    SweepContradiction
        If a guaranteed prediction is contradicted; the exception carries the
        first offending row and the full report.
    """
    tasks = _expand(config)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    grids = sorted({(t.get("r_max", 30.0), t.get("n", 2000)) for t in tasks})
    provenance = {
        "config_digest": config_digest(config),
        "grid": [{"r_max": float(r), "n": int(n)} for r, n in grids],
    }
    bad = tuple(r for r in rows if not r["agreement"])
    report = SweepReport(tuple(rows), provenance, bad)
    if bad and raise_on_contradiction:
        exc = SweepContradiction(f"{len(bad)} contradicted prediction(s)", bad[0])
        exc.report = report
        raise exc
    return report


__all__ += ["config_digest", "UNRESOLVED"]
